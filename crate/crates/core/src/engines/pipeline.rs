//! End-to-end engines: learn `g`, the exposure model and the Maxway
//! distribution from the available data, then run the test.
//!
//! Streams relative to the engine handle: `[0]` resampling, `[1]` the `g`
//! learner, `[2]` the exposure model, `[3]` the Maxway adjustment.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{run_cpt, run_maxway_core, run_modelx_crt, CrtResult, RF_STREAM};
use crate::conditioners::{
    fit_g, fit_maxway, fit_x_model, is_binary, GLearner, GModel, LearnerConfig, MaxwayConfig, MaxwayDistribution,
    MaxwayFamily, Training, VarianceSource, XFamily, XLaw, XModel, VARIANCE_FLOOR,
};
use crate::data::{LabeledData, SurrogateData, UnlabeledData};
use crate::error::{push_flag, Flag, MaxwayError, Result};
use crate::rng::RngHandle;
use crate::statistics::{StatContext, StatSpec};

const SAMPLING: u64 = 0;
const G_STREAM: u64 = 1;
const X_STREAM: u64 = 2;
const ADJUST_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    Modelx,
    MaxwayIn,
    MaxwayOut,
    TransformedMaxway,
    SasslMaxway,
    Cpt,
    ModelXy,
}

impl EngineKind {
    pub const ALL: [EngineKind; 7] = [
        EngineKind::Modelx,
        EngineKind::MaxwayIn,
        EngineKind::MaxwayOut,
        EngineKind::TransformedMaxway,
        EngineKind::SasslMaxway,
        EngineKind::Cpt,
        EngineKind::ModelXy,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EngineKind::Modelx => "modelx",
            EngineKind::MaxwayIn => "maxway_in",
            EngineKind::MaxwayOut => "maxway_out",
            EngineKind::TransformedMaxway => "transformed_maxway",
            EngineKind::SasslMaxway => "sassl_maxway",
            EngineKind::Cpt => "cpt",
            EngineKind::ModelXy => "model_xy",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for EngineKind {
    type Err = MaxwayError;

    fn from_str(s: &str) -> Result<Self> {
        EngineKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| MaxwayError::InvalidConfig(format!("unknown engine `{s}`")))
    }
}

/// `⌈2 ln p⌉`, kept within `[1, p]`.
pub fn default_k(p: usize) -> usize {
    ((2.0 * (p as f64).ln()).ceil() as usize).clamp(1, p.max(1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnginePipeline {
    pub kind: EngineKind,
    pub g_learner: GLearner,
    pub x_family: XFamily,
    pub stat: StatSpec,
    /// Top covariates carried in `g`; `None` uses [`default_k`].
    pub k: Option<usize>,
    pub m: usize,
    pub maxway: MaxwayConfig,
    pub learners: LearnerConfig,
    /// Pair-swap proposals per CPT chain; `None` uses `50·n`.
    pub mcmc_steps: Option<usize>,
}

impl Default for EnginePipeline {
    fn default() -> Self {
        EnginePipeline {
            kind: EngineKind::MaxwayIn,
            g_learner: GLearner::Lasso,
            x_family: XFamily::GaussianLinear,
            stat: StatSpec::D0,
            k: None,
            m: 1000,
            maxway: MaxwayConfig::default(),
            learners: LearnerConfig::default(),
            mcmc_steps: None,
        }
    }
}

impl EnginePipeline {
    pub fn new(kind: EngineKind) -> Self {
        EnginePipeline { kind, ..Default::default() }
    }

    pub fn resolved_k(&self, p: usize) -> Result<usize> {
        let k = self.k.unwrap_or_else(|| default_k(p));
        if k == 0 || k > p {
            return Err(MaxwayError::InvalidConfig(format!("k={k} must lie in 1..={p}")));
        }
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(MaxwayError::InvalidConfig("M must be at least 1".into()));
        }
        if self.k == Some(0) {
            return Err(MaxwayError::InvalidConfig("k must be at least 1".into()));
        }
        if !(self.maxway.clip > 0.0 && self.maxway.clip < 0.5) {
            return Err(MaxwayError::InvalidConfig(format!("clip {} must lie in (0, 0.5)", self.maxway.clip)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EngineInputs<'a> {
    pub test: &'a LabeledData,
    pub unlabeled: Option<&'a UnlabeledData>,
    pub holdout: Option<&'a LabeledData>,
    pub surrogate: Option<&'a SurrogateData>,
}

impl<'a> EngineInputs<'a> {
    pub fn new(test: &'a LabeledData) -> Self {
        EngineInputs { test, unlabeled: None, holdout: None, surrogate: None }
    }
}

/// Fixed components replacing learned ones (used by simulation oracles).
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub g: Option<GModel>,
    pub x_model: Option<XModel>,
    /// Known noise variance of `X | Z` for the model-X resampler.
    pub x_noise_var: Option<f64>,
    pub dist: Option<MaxwayDistribution>,
}

/// Learned `g` and exposure models shared by engines run on the same inputs
/// with the same handle.
#[derive(Debug, Default)]
pub struct ArtifactCache {
    g: Mutex<HashMap<String, Arc<GModel>>>,
    x: Mutex<HashMap<String, Arc<XModel>>>,
}

impl ArtifactCache {
    fn get_or<T, F>(map: &Mutex<HashMap<String, Arc<T>>>, key: String, make: F) -> Result<Arc<T>>
    where
        F: FnOnce() -> Result<T>,
    {
        if let Some(v) = map.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(v.clone());
        }
        let v = Arc::new(make()?);
        map.lock().unwrap_or_else(|e| e.into_inner()).insert(key, v.clone());
        Ok(v)
    }
}

struct Ctx<'a> {
    pipe: &'a EnginePipeline,
    ov: &'a Overrides,
    cache: Option<&'a ArtifactCache>,
    rng: &'a RngHandle,
}

impl Ctx<'_> {
    fn g_model(&self, role: &str, y: &Array1<f64>, z: &Array2<f64>, training: Training) -> Result<Arc<GModel>> {
        if let Some(g) = &self.ov.g {
            return Ok(Arc::new(g.clone()));
        }
        let k = self.pipe.resolved_k(z.ncols())?;
        let rng = self.rng.derive(&[G_STREAM]);
        let make = || fit_g(self.pipe.g_learner, y, z, k, &self.pipe.learners, training, &rng);
        match self.cache {
            Some(c) => {
                let key = format!(
                    "{role}|{:?}|{k}|{}|{:?}",
                    self.pipe.g_learner,
                    serde_json::to_string(&self.pipe.learners).unwrap_or_default(),
                    rng
                );
                ArtifactCache::get_or(&c.g, key, make)
            }
            None => make().map(Arc::new),
        }
    }

    fn x_model(&self, role: &str, data: &UnlabeledData, family: XFamily) -> Result<Arc<XModel>> {
        if let Some(x) = &self.ov.x_model {
            return Ok(Arc::new(x.clone()));
        }
        let rng = self.rng.derive(&[X_STREAM]);
        let make = || fit_x_model(data, family, &self.pipe.learners, &rng);
        match self.cache {
            Some(c) => {
                let key = format!(
                    "{role}|{family:?}|{}|{:?}",
                    serde_json::to_string(&self.pipe.learners).unwrap_or_default(),
                    rng
                );
                ArtifactCache::get_or(&c.x, key, make)
            }
            None => make().map(Arc::new),
        }
    }

    /// Maxway test of `test.x` given `g` and the exposure model `xm`, whose
    /// adjustment is learned on `exp_train`.
    fn maxway(&self, label: &str, test: &LabeledData, g: &GModel, xm: &XModel, exp_train: &UnlabeledData) -> Result<CrtResult> {
        let stats_t = g.evaluate(&test.z)?.with_h(xm.h(&test.z)?)?;
        let transform = xm.transform();
        let dist = match &self.ov.dist {
            Some(d) => d.clone(),
            None => {
                let stats_u = g.evaluate(&exp_train.z)?.with_h(xm.h(&exp_train.z)?)?;
                let r_u = transform.apply(&exp_train.x, &exp_train.z)?;
                let r_t = transform.apply(&test.x, &test.z)?;
                let family = if xm.residualize { MaxwayFamily::Gaussian } else { MaxwayFamily::Bernoulli };
                fit_maxway(&r_u, &stats_u, family, &self.pipe.maxway, Some((&r_t, &stats_t)), &self.rng.derive(&[ADJUST_STREAM]))?
            }
        };
        let center = xm.center(&test.z)?;
        let mut res = run_maxway_core(test, &stats_t, &transform, &dist, &center, &self.pipe.stat, self.pipe.m, &self.rng.derive(&[SAMPLING]))?;
        res.engine = label.to_string();
        res.add_flags(g.flags());
        res.add_flags(xm.fit.flags());
        Ok(res)
    }

    /// Resampling law of `x` given `Z` for the model-X style engines.
    fn x_law(&self, xm: &XModel, test: &LabeledData, exp_train: &UnlabeledData) -> Result<XLaw> {
        let mean = xm.mean(&test.z)?;
        if xm.family.is_binary() {
            let c = self.pipe.maxway.clip;
            return Ok(XLaw::Bernoulli { prob: mean.mapv(|p| p.clamp(c, 1.0 - c)) });
        }
        let var = match (self.ov.x_noise_var, self.pipe.maxway.variance_source) {
            (Some(v), _) => v,
            (None, VarianceSource::LabeledTest) => (&test.x - &mean).mapv(|e| e * e).mean().unwrap_or(0.0),
            (None, VarianceSource::Unlabeled) => (&exp_train.x - &xm.mean(&exp_train.z)?).mapv(|e| e * e).mean().unwrap_or(0.0),
        };
        Ok(XLaw::Gaussian { mean, sd: var.max(VARIANCE_FLOOR).sqrt() })
    }

    fn modelx_like(&self, inputs: &EngineInputs<'_>) -> Result<CrtResult> {
        let test = inputs.test;
        let own;
        let (exp_train, role) = match inputs.unlabeled {
            Some(u) => (u, "unlabeled-x"),
            None => {
                own = UnlabeledData { x: test.x.clone(), z: test.z.clone(), x_binary: test.x_binary };
                (&own, "test-x")
            }
        };
        let family = self.pipe.x_family.matching(test.x_binary || (self.pipe.x_family.is_binary() && is_binary(&test.x)));
        let xm = self.x_model(role, exp_train, family)?;
        let g = self.g_model("test-y", &test.y, &test.z, Training::InSample)?;
        let stats = g.evaluate(&test.z)?;
        let sampling = self.rng.derive(&[SAMPLING]);
        let ctx = StatContext::new(test.y.clone(), stats.eps_y(&test.y), xm.mean(&test.z)?, stats.z_top(), sampling.derive(&[RF_STREAM]))?;
        let law = self.x_law(&xm, test, exp_train)?;
        let mut res = match self.pipe.kind {
            EngineKind::Cpt => {
                let steps = self.pipe.mcmc_steps.unwrap_or(50 * test.n());
                run_cpt(test, &law, &ctx, &self.pipe.stat, self.pipe.m, steps, &sampling)?
            }
            _ => run_modelx_crt(test, &law, &ctx, &self.pipe.stat, self.pipe.m, &sampling)?,
        };
        res.engine = self.pipe.kind.label().to_string();
        res.add_flags(g.flags());
        res.add_flags(xm.fit.flags());
        Ok(res)
    }

    fn exposure_family(&self, binary: bool) -> XFamily {
        self.pipe.x_family.matching(binary)
    }

    fn model_xy(&self, test: &LabeledData, for_x: &UnlabeledData, for_y: &UnlabeledData) -> Result<CrtResult> {
        let x_bin = test.x_binary || is_binary(&test.x) && self.pipe.x_family.is_binary();
        let y_bin = is_binary(&test.y);
        let g1 = self.g_model("ydir-g", &for_y.x, &for_y.z, Training::Holdout)?;
        let xm1 = self.x_model("ydir-x", for_x, self.exposure_family(x_bin))?;
        let fwd = self.maxway("model_xy", test, &g1, &xm1, for_x)?;
        let swapped = test.swapped(y_bin);
        let g2 = self.g_model("xdir-g", &for_x.x, &for_x.z, Training::Holdout)?;
        let xm2 = self.x_model("xdir-x", for_y, self.exposure_family(y_bin))?;
        let rev = self.maxway("model_xy", &swapped, &g2, &xm2, for_y)?;
        let flag = Flag::SubPValues { forward: fwd.p_value, reverse: rev.p_value };
        let mut out = if rev.p_value > fwd.p_value { rev } else { fwd };
        push_flag(&mut out.flags, flag);
        Ok(out)
    }
}

/// Runs the engine described by `pipe` on `inputs`.
///
/// Missing unlabeled data falls back to the test rows' own `(x, Z)`.
pub fn run_engine(
    pipe: &EnginePipeline,
    inputs: &EngineInputs<'_>,
    overrides: &Overrides,
    cache: Option<&ArtifactCache>,
    rng: &RngHandle,
) -> Result<CrtResult> {
    pipe.validate()?;
    let test = inputs.test;
    let p = test.p();
    for (what, z) in [
        ("unlabeled", inputs.unlabeled.map(|u| &u.z)),
        ("holdout", inputs.holdout.map(|h| &h.z)),
        ("surrogate", inputs.surrogate.map(|s| &s.z)),
    ] {
        if let Some(z) = z {
            crate::data::check_same_p(what, z, p)?;
        }
    }
    let cx = Ctx { pipe, ov: overrides, cache, rng };
    let own_x = UnlabeledData { x: test.x.clone(), z: test.z.clone(), x_binary: test.x_binary };
    let (x_train, x_role) = match inputs.unlabeled {
        Some(u) => (u, "unlabeled-x"),
        None => (&own_x, "test-x"),
    };
    let x_bin = test.x_binary || (pipe.x_family.is_binary() && is_binary(&test.x));
    let family = pipe.x_family.matching(x_bin);
    let label = pipe.kind.label();
    match pipe.kind {
        EngineKind::Modelx | EngineKind::Cpt => cx.modelx_like(inputs),
        EngineKind::MaxwayIn | EngineKind::TransformedMaxway => {
            let g = cx.g_model("test-y", &test.y, &test.z, Training::InSample)?;
            let mut xm = (*cx.x_model(x_role, x_train, family)?).clone();
            if pipe.kind == EngineKind::TransformedMaxway {
                xm = xm.residualized();
            }
            cx.maxway(label, test, &g, &xm, x_train)
        }
        EngineKind::MaxwayOut => {
            let hold = inputs.holdout.ok_or_else(|| MaxwayError::InvalidConfig("maxway_out needs holdout data".into()))?;
            let g = cx.g_model("holdout-y", &hold.y, &hold.z, Training::Holdout)?;
            let xm = cx.x_model(x_role, x_train, family)?;
            cx.maxway(label, test, &g, &xm, x_train)
        }
        EngineKind::SasslMaxway => {
            let surr = inputs.surrogate.ok_or_else(|| MaxwayError::InvalidConfig("sassl_maxway needs surrogate data".into()))?;
            let g = cx.g_model("surrogate-s", &surr.s, &surr.z, Training::Surrogate)?;
            let su = surr.as_unlabeled();
            let fam = pipe.x_family.matching(surr.x_binary || x_bin);
            let xm = cx.x_model("surrogate-x", &su, fam)?;
            cx.maxway(label, test, &g, &xm, &su)
        }
        EngineKind::ModelXy => {
            let y_bin = is_binary(&test.y);
            let for_y = match inputs.holdout {
                Some(h) => h.y_as_unlabeled(y_bin),
                None => test.y_as_unlabeled(y_bin),
            };
            cx.model_xy(test, x_train, &for_y)
        }
    }
}

pub fn run_maxway_in(test: &LabeledData, unlab: &UnlabeledData, pipe: &EnginePipeline, rng: &RngHandle) -> Result<CrtResult> {
    let pipe = EnginePipeline { kind: EngineKind::MaxwayIn, ..pipe.clone() };
    let inputs = EngineInputs { unlabeled: Some(unlab), ..EngineInputs::new(test) };
    run_engine(&pipe, &inputs, &Overrides::default(), None, rng)
}

pub fn run_maxway_out(
    test: &LabeledData,
    holdout: &LabeledData,
    unlab: &UnlabeledData,
    pipe: &EnginePipeline,
    rng: &RngHandle,
) -> Result<CrtResult> {
    let pipe = EnginePipeline { kind: EngineKind::MaxwayOut, ..pipe.clone() };
    let inputs = EngineInputs { unlabeled: Some(unlab), holdout: Some(holdout), ..EngineInputs::new(test) };
    run_engine(&pipe, &inputs, &Overrides::default(), None, rng)
}

pub fn run_sassl_maxway(test: &LabeledData, surr: &SurrogateData, pipe: &EnginePipeline, rng: &RngHandle) -> Result<CrtResult> {
    let pipe = EnginePipeline { kind: EngineKind::SasslMaxway, ..pipe.clone() };
    let inputs = EngineInputs { surrogate: Some(surr), ..EngineInputs::new(test) };
    run_engine(&pipe, &inputs, &Overrides::default(), None, rng)
}

/// Maxway test in both directions (`x` given `y` and `y` given `x`),
/// reporting the larger p-value. `unlab_for_y` holds extra `(y, Z)` rows
/// with `y` in the exposure slot; without it the test rows are used.
pub fn run_model_xy(
    test: &LabeledData,
    unlab_for_x: &UnlabeledData,
    unlab_for_y: Option<&UnlabeledData>,
    pipe: &EnginePipeline,
    rng: &RngHandle,
) -> Result<CrtResult> {
    pipe.validate()?;
    let ov = Overrides::default();
    let cx = Ctx { pipe, ov: &ov, cache: None, rng };
    let own = test.y_as_unlabeled(is_binary(&test.y));
    cx.model_xy(test, unlab_for_x, unlab_for_y.unwrap_or(&own))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn toy(n: usize, nu: usize, seed: u64) -> (LabeledData, UnlabeledData) {
        let mut r = RngHandle::new(seed).rng();
        let p = 8;
        let mut gen = |rows: usize| {
            let z = Array2::from_shape_fn((rows, p), |_| r.sample::<f64, _>(StandardNormal));
            let x = Array1::from_shape_fn(rows, |i| 0.8 * z[[i, 0]] + r.sample::<f64, _>(StandardNormal));
            let y = Array1::from_shape_fn(rows, |i| 0.8 * z[[i, 0]] - 0.5 * z[[i, 1]] + r.sample::<f64, _>(StandardNormal));
            (y, x, z)
        };
        let (y, x, z) = gen(n);
        let (_, xu, zu) = gen(nu);
        (LabeledData::new(y, x, z, false).unwrap(), UnlabeledData::new(xu, zu, false).unwrap())
    }

    #[test]
    fn default_k_natural_log() {
        assert_eq!(default_k(100), 10);
        assert_eq!(default_k(500), 13);
        assert_eq!(default_k(1), 1);
        assert_eq!(default_k(2), 2);
    }

    #[test]
    fn engine_labels_round_trip() {
        for k in EngineKind::ALL {
            assert_eq!(k.label().parse::<EngineKind>().unwrap(), k);
        }
        assert!("maxway".parse::<EngineKind>().is_err());
    }

    #[test]
    fn holdout_equal_to_test_matches_in_sample() {
        let (test, unlab) = toy(60, 80, 1);
        let pipe = EnginePipeline { m: 49, ..Default::default() };
        let a = run_maxway_in(&test, &unlab, &pipe, &RngHandle::new(5)).unwrap();
        let b = run_maxway_out(&test, &test, &unlab, &pipe, &RngHandle::new(5)).unwrap();
        assert_eq!(a.p_exact, b.p_exact);
        assert_eq!(a.resampled_stats, b.resampled_stats);
    }

    #[test]
    fn engines_are_deterministic_and_exact() {
        let (test, unlab) = toy(50, 60, 2);
        for kind in [EngineKind::Modelx, EngineKind::MaxwayIn, EngineKind::TransformedMaxway, EngineKind::Cpt, EngineKind::ModelXy] {
            let pipe = EnginePipeline { kind, m: 19, mcmc_steps: Some(200), ..Default::default() };
            let inputs = EngineInputs { unlabeled: Some(&unlab), ..EngineInputs::new(&test) };
            let a = run_engine(&pipe, &inputs, &Overrides::default(), None, &RngHandle::new(3)).unwrap();
            let cache = ArtifactCache::default();
            let b = run_engine(&pipe, &inputs, &Overrides::default(), Some(&cache), &RngHandle::new(3)).unwrap();
            assert_eq!(a, b, "{kind}");
            assert_eq!(a.engine, kind.label());
            assert_eq!(super::super::pvalue_from_stats(a.observed_stat, &a.resampled_stats).unwrap(), a.p_exact);
            assert_eq!(a.p_exact.denominator, 20);
        }
    }

    #[test]
    fn model_xy_reports_max_and_is_symmetric() {
        let (test, unlab) = toy(60, 60, 4);
        let (_, unlab_y_src) = toy(60, 60, 5);
        let for_y = UnlabeledData::new(unlab_y_src.x.clone(), unlab_y_src.z.clone(), false).unwrap();
        let pipe = EnginePipeline { m: 29, ..Default::default() };
        let a = run_model_xy(&test, &unlab, Some(&for_y), &pipe, &RngHandle::new(8)).unwrap();
        let Some(Flag::SubPValues { forward, reverse }) = a.flags.iter().find(|f| matches!(f, Flag::SubPValues { .. })).cloned() else {
            panic!("missing sub p-values")
        };
        assert_eq!(a.p_value, forward.max(reverse));
        let b = run_model_xy(&test.swapped(false), &for_y, Some(&unlab), &pipe, &RngHandle::new(8)).unwrap();
        assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn maxway_out_requires_holdout() {
        let (test, unlab) = toy(30, 30, 6);
        let inputs = EngineInputs { unlabeled: Some(&unlab), ..EngineInputs::new(&test) };
        let pipe = EnginePipeline { kind: EngineKind::MaxwayOut, m: 9, ..Default::default() };
        assert!(matches!(run_engine(&pipe, &inputs, &Overrides::default(), None, &RngHandle::new(0)), Err(MaxwayError::InvalidConfig(_))));
    }

    #[test]
    fn sassl_runs_with_uninformative_surrogate() {
        let (test, unlab) = toy(40, 100, 7);
        let mut r = RngHandle::new(70).rng();
        let s = Array1::from_shape_fn(100, |_| r.sample::<f64, _>(StandardNormal));
        let surr = SurrogateData::new(s, unlab.x.clone(), unlab.z.clone(), false).unwrap();
        let pipe = EnginePipeline { m: 19, ..Default::default() };
        let res = run_sassl_maxway(&test, &surr, &pipe, &RngHandle::new(1)).unwrap();
        assert!(res.p_value > 0.0 && res.p_value <= 1.0);
    }

    #[test]
    fn binary_exposure_pipeline() {
        let mut r = RngHandle::new(9).rng();
        let (n, p) = (80, 6);
        let z = Array2::from_shape_fn((n, p), |_| r.sample::<f64, _>(StandardNormal));
        let x = Array1::from_shape_fn(n, |i| if r.random::<f64>() < crate::learners::expit(z[[i, 0]]) { 1.0 } else { 0.0 });
        let y = Array1::from_shape_fn(n, |i| z[[i, 0]] + r.sample::<f64, _>(StandardNormal));
        let test = LabeledData::new(y, x, z, true).unwrap();
        for kind in [EngineKind::Modelx, EngineKind::MaxwayIn] {
            let pipe = EnginePipeline { kind, x_family: XFamily::Logistic, m: 19, ..Default::default() };
            let res = run_engine(&pipe, &EngineInputs::new(&test), &Overrides::default(), None, &RngHandle::new(2)).unwrap();
            assert!(res.resampled_stats.iter().all(|t| t.is_finite()));
        }
    }
}
