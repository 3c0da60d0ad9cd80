//! Randomization-test engines.
//!
//! Every engine scores the observed exposure and `M` resampled exposures with
//! the same statistic; resample `m` draws from stream `[m]` of the sampling
//! handle, so results do not depend on how the loop is scheduled.

mod analytic;
mod cpt;
mod pipeline;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioners::{MaxwayDistribution, SufficientStats, Transform, XLaw};
use crate::data::LabeledData;
use crate::error::{push_flag, Flag, MaxwayError, Result};
use crate::rng::RngHandle;
use crate::statistics::{StatContext, StatSpec};

pub use analytic::{analytic_pvalue_d0, analytic_pvalue_inner_product, std_normal_cdf};
pub use cpt::{cpt_chains, run_cpt};
pub use pipeline::{
    default_k, run_engine, run_maxway_in, run_maxway_out, run_model_xy, run_sassl_maxway, ArtifactCache, EngineInputs,
    EngineKind, EnginePipeline, Overrides,
};

/// Stream reserved for the forest-importance statistic.
pub(crate) const RF_STREAM: u64 = u64::MAX;

/// `(1 + #{resampled ≥ observed}) / (M + 1)` kept as an exact fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PValue {
    pub numerator: u64,
    pub denominator: u64,
}

impl PValue {
    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

pub fn pvalue_from_stats(observed: f64, resampled: &[f64]) -> Result<PValue> {
    if resampled.is_empty() {
        return Err(MaxwayError::InvalidConfig("at least one resample is needed".into()));
    }
    let count = resampled.iter().filter(|&&t| t >= observed).count() as u64;
    Ok(PValue { numerator: 1 + count, denominator: resampled.len() as u64 + 1 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrtResult {
    pub engine: String,
    pub p_value: f64,
    pub p_exact: PValue,
    pub m: usize,
    pub observed_stat: f64,
    pub resampled_stats: Vec<f64>,
    pub seed_path: RngHandle,
    #[serde(default)]
    pub flags: Vec<Flag>,
}

impl CrtResult {
    fn from_stats(engine: &str, observed: f64, resampled: Vec<f64>, rng: &RngHandle, flags: Vec<Flag>) -> Result<Self> {
        let p = pvalue_from_stats(observed, &resampled)?;
        Ok(CrtResult {
            engine: engine.to_string(),
            p_value: p.value(),
            p_exact: p,
            m: resampled.len(),
            observed_stat: observed,
            resampled_stats: resampled,
            seed_path: rng.clone(),
            flags,
        })
    }

    pub fn add_flags(&mut self, flags: &[Flag]) {
        for f in flags {
            push_flag(&mut self.flags, f.clone());
        }
    }
}

/// Scores `observed` and `m` vectors produced by `draw(stream [i])`.
pub fn resample_and_score<F>(
    engine: &str,
    observed: &Array1<f64>,
    draw: F,
    ctx: &StatContext,
    stat: &StatSpec,
    m: usize,
    rng: &RngHandle,
) -> Result<CrtResult>
where
    F: Fn(&RngHandle) -> Array1<f64> + Sync,
{
    if m == 0 {
        return Err(MaxwayError::InvalidConfig("M must be at least 1".into()));
    }
    let (t_obs, f_obs) = ctx.evaluate(stat, observed)?;
    let scored: Vec<(f64, Option<Flag>)> = (0..m)
        .into_par_iter()
        .map(|i| ctx.evaluate(stat, &draw(&rng.derive(&[i as u64]))))
        .collect::<Result<_>>()?;
    let mut flags = Vec::new();
    for f in f_obs.into_iter().chain(scored.iter().filter_map(|(_, f)| f.clone())) {
        push_flag(&mut flags, f);
    }
    CrtResult::from_stats(engine, t_obs, scored.into_iter().map(|(t, _)| t).collect(), rng, flags)
}

/// Model-X CRT: resamples `x` from `law`, its conditional law given `Z`.
pub fn run_modelx_crt(data: &LabeledData, law: &XLaw, ctx: &StatContext, stat: &StatSpec, m: usize, rng: &RngHandle) -> Result<CrtResult> {
    if law.n() != data.n() {
        return Err(MaxwayError::DimensionMismatch(format!("law covers {} rows, data has {}", law.n(), data.n())));
    }
    resample_and_score("modelx", &data.x, |h| law.draw(&mut h.rng()), ctx, stat, m, rng)
}

/// Maxway CRT on prepared inputs: transforms `x`, then resamples it from
/// `dist` given the test-row `(g, h)` in `stats`.
///
/// `center` is subtracted from the (transformed) exposure to form `ε_x`.
#[allow(clippy::too_many_arguments)]
pub fn run_maxway_core(
    data: &LabeledData,
    stats: &SufficientStats,
    transform: &Transform,
    dist: &MaxwayDistribution,
    center: &Array1<f64>,
    stat: &StatSpec,
    m: usize,
    rng: &RngHandle,
) -> Result<CrtResult> {
    if stats.n() != data.n() {
        return Err(MaxwayError::DimensionMismatch(format!("stats cover {} rows, data has {}", stats.n(), data.n())));
    }
    let r = transform.apply(&data.x, &data.z)?;
    let law = dist.law(stats)?;
    let ctx = StatContext::new(data.y.clone(), stats.eps_y(&data.y), center.clone(), stats.z_top(), rng.derive(&[RF_STREAM]))?;
    let mut res = resample_and_score("maxway", &r, |h| law.draw(&mut h.rng()), &ctx, stat, m, rng)?;
    res.add_flags(dist.flags());
    Ok(res)
}
