//! Replicated simulation experiments over an `N` or `γ` grid.
//!
//! Replication `r` at grid point `g` draws from stream `[g, r]` of the master
//! seed: `[g, r, 0]` seeds the batch, `[g, r, 1]` the surrogate and
//! `[g, r, 2]` is handed to every engine, so engines are compared on the same
//! data.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::array;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioners::{GModel, MaxwayDistribution, XFamily, XModel};
use crate::engines::{run_engine, ArtifactCache, CrtResult, EngineInputs, EngineKind, EnginePipeline, Overrides};
use crate::error::{push_flag, Flag, MaxwayError, Result};
use crate::rng::RngHandle;
use crate::simgen::{exact_residual_law, gen_surrogate, generate_batch, oracle_g_coef, ConfigKind, GeneratedBatch, SimConfig, SurrogateModel};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XModelChoice {
    #[default]
    Learned,
    /// The true `E[X | Z]`, with the true noise variance for Gaussian exposures.
    Oracle,
    /// The true linear model with `shift` added to each nonzero coefficient.
    Perturbed { shift: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GChoice {
    #[default]
    Learned,
    /// `g = E[Y | Z]` with no top covariates.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustChoice {
    #[default]
    Learned,
    /// Exact Gaussian law of the residual given an oracle `g`.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineEntry {
    /// Label in reports; defaults to the engine kind.
    #[serde(default)]
    pub name: Option<String>,
    pub pipeline: EnginePipeline,
    #[serde(default)]
    pub x_model: XModelChoice,
    #[serde(default)]
    pub g: GChoice,
    #[serde(default)]
    pub adjustment: AdjustChoice,
}

impl EngineEntry {
    pub fn new(pipeline: EnginePipeline) -> Self {
        EngineEntry { name: None, pipeline, x_model: XModelChoice::Learned, g: GChoice::Learned, adjustment: AdjustChoice::Learned }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.pipeline.kind.label().to_string())
    }

    fn overrides(&self, batch: &GeneratedBatch) -> Result<Overrides> {
        let truth = &batch.truth;
        let mut ov = Overrides::default();
        let family = match truth.config {
            ConfigKind::LogisticLinear => XFamily::Logistic,
            _ => XFamily::GaussianLinear,
        };
        let x_coef = match &self.x_model {
            XModelChoice::Learned => None,
            XModelChoice::Oracle => Some(
                truth.beta_x.clone().ok_or_else(|| MaxwayError::InvalidConfig("oracle x-model needs a linear X | Z".into()))?,
            ),
            XModelChoice::Perturbed { shift } => Some(truth.perturbed_x_coef(*shift)?),
        };
        if let Some(c) = &x_coef {
            ov.x_model = Some(XModel::linear(family, c.clone()));
            if !family.is_binary() {
                ov.x_noise_var = Some(1.0);
            }
        }
        if self.g == GChoice::Oracle {
            ov.g = Some(GModel::oracle_linear(oracle_g_coef(truth)?));
        }
        if self.adjustment == AdjustChoice::Exact {
            let (Some(c), GChoice::Oracle, ConfigKind::GaussianLinear) = (&x_coef, self.g, truth.config) else {
                return Err(MaxwayError::InvalidConfig(
                    "exact adjustment needs a fixed linear x-model, an oracle g and Gaussian X | Z".into(),
                ));
            };
            let (coef, tau2) = exact_residual_law(truth, c, &oracle_g_coef(truth)?)?;
            ov.dist = Some(MaxwayDistribution::gaussian_linear(array![coef], tau2));
        }
        Ok(ov)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sweep {
    #[serde(rename = "N_grid")]
    NGrid(Vec<usize>),
    #[serde(rename = "gamma_grid")]
    GammaGrid(Vec<f64>),
}

impl Sweep {
    pub fn len(&self) -> usize {
        match self {
            Sweep::NGrid(v) => v.len(),
            Sweep::GammaGrid(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Sweep::NGrid(v) => v.iter().map(|&n| n as f64).collect(),
            Sweep::GammaGrid(v) => v.clone(),
        }
    }

    pub fn axis(&self) -> &'static str {
        match self {
            Sweep::NGrid(_) => "N",
            Sweep::GammaGrid(_) => "gamma",
        }
    }

    fn apply(&self, base: &SimConfig, g: usize) -> SimConfig {
        let mut c = base.clone();
        match self {
            Sweep::NGrid(v) => c.n_unlabeled = v[g],
            Sweep::GammaGrid(v) => c.gamma = v[g],
        }
        c
    }
}

fn default_alpha() -> f64 {
    0.05
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub sim: SimConfig,
    pub engines: Vec<EngineEntry>,
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub sweep: Sweep,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Surrogate labels drawn for the unlabeled rows.
    #[serde(default)]
    pub surrogate: Option<SurrogateModel>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(MaxwayError::InvalidConfig("reps must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(MaxwayError::InvalidConfig(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if self.sweep.is_empty() {
            return Err(MaxwayError::InvalidConfig("sweep grid is empty".into()));
        }
        if self.engines.is_empty() {
            return Err(MaxwayError::InvalidConfig("no engines".into()));
        }
        if self.parallelism == 0 {
            return Err(MaxwayError::InvalidConfig("parallelism must be at least 1".into()));
        }
        let mut names: Vec<String> = self.engines.iter().map(EngineEntry::label).collect();
        names.sort();
        names.dedup();
        if names.len() != self.engines.len() {
            return Err(MaxwayError::InvalidConfig("engine names must be distinct".into()));
        }
        for e in &self.engines {
            e.pipeline.validate()?;
            if e.pipeline.kind == EngineKind::SasslMaxway && self.surrogate.is_none() {
                return Err(MaxwayError::InvalidConfig("sassl_maxway needs a surrogate model in the plan".into()));
            }
            if e.pipeline.kind == EngineKind::MaxwayOut && self.sim.n_holdout == 0 {
                return Err(MaxwayError::InvalidConfig("maxway_out needs n_holdout > 0".into()));
            }
        }
        for g in 0..self.sweep.len() {
            self.sweep.apply(&self.sim, g).validate()?;
        }
        Ok(())
    }

    pub fn imperfect_surrogate(&self) -> bool {
        self.surrogate.as_ref().is_some_and(SurrogateModel::is_imperfect)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub engine: String,
    pub grid_index: usize,
    pub grid_value: f64,
    pub rejection_rate: f64,
    pub std_error: f64,
    /// One entry per replication; `None` for failed ones.
    pub p_values: Vec<Option<f64>>,
    pub failures: usize,
    pub elapsed_secs: f64,
    /// Distinct flags raised across replications.
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub engine: String,
    pub grid_index: usize,
    pub rep: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub plan: ExperimentPlan,
    pub version: String,
    pub cells: Vec<CellReport>,
    /// `[grid][rep]` fingerprints of the generated batches.
    pub batch_hashes: Vec<Vec<String>>,
    pub failures: Vec<FailureRecord>,
    pub flags: Vec<Flag>,
}

/// `sqrt(r(1 − r)/reps)`.
pub fn std_error(rate: f64, reps: usize) -> f64 {
    if reps == 0 {
        return 0.0;
    }
    (rate * (1.0 - rate) / reps as f64).sqrt()
}

struct RepOutcome {
    hash: String,
    results: Vec<(std::result::Result<CrtResult, String>, f64)>,
}

fn run_rep(plan: &ExperimentPlan, g: usize, r: usize) -> RepOutcome {
    let rep = RngHandle::new(plan.master_seed).derive(&[g as u64, r as u64]);
    let fail_all = |msg: String| RepOutcome {
        hash: String::new(),
        results: plan.engines.iter().map(|_| (Err(msg.clone()), 0.0)).collect(),
    };
    let cfg = SimConfig { seed: rep.child(0), ..plan.sweep.apply(&plan.sim, g) };
    let batch = match generate_batch(&cfg) {
        Ok(b) => b,
        Err(e) => return fail_all(format!("data generation: {e}")),
    };
    let surrogate = match &plan.surrogate {
        Some(m) => match gen_surrogate(&batch, m, &rep.child(1)) {
            Ok(s) => Some(s),
            Err(e) => return fail_all(format!("surrogate generation: {e}")),
        },
        None => None,
    };
    let inputs = EngineInputs {
        test: &batch.labeled,
        unlabeled: Some(&batch.unlabeled),
        holdout: batch.holdout.as_ref(),
        surrogate: surrogate.as_ref(),
    };
    let cache = ArtifactCache::default();
    let engine_rng = rep.child(2);
    let imperfect = plan.imperfect_surrogate();
    let results = plan
        .engines
        .iter()
        .map(|e| {
            let t0 = Instant::now();
            let out = e
                .overrides(&batch)
                .and_then(|ov| run_engine(&e.pipeline, &inputs, &ov, Some(&cache), &engine_rng))
                .map(|mut res| {
                    if imperfect && e.pipeline.kind == EngineKind::SasslMaxway {
                        push_flag(&mut res.flags, Flag::ImperfectSurrogate);
                    }
                    res
                })
                .map_err(|err| err.to_string());
            (out, t0.elapsed().as_secs_f64())
        })
        .collect();
    RepOutcome { hash: batch.hash(), results }
}

/// Runs every replication of `plan`; deterministic for any `parallelism`.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ExperimentReport> {
    plan.validate()?;
    let grid = plan.sweep.values();
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..plan.reps).map(move |r| (g, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.parallelism)
        .build()
        .map_err(|e| MaxwayError::InvalidConfig(format!("thread pool: {e}")))?;
    let outcomes: Vec<RepOutcome> = pool.install(|| jobs.par_iter().map(|&(g, r)| run_rep(plan, g, r)).collect());

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    let mut batch_hashes = vec![Vec::with_capacity(plan.reps); grid.len()];
    for (&(g, _), o) in jobs.iter().zip(&outcomes) {
        batch_hashes[g].push(o.hash.clone());
    }
    for (g, &value) in grid.iter().enumerate() {
        for (ei, e) in plan.engines.iter().enumerate() {
            let name = e.label();
            let mut p_values = Vec::with_capacity(plan.reps);
            let mut flags = Vec::new();
            let mut elapsed = 0.0;
            for r in 0..plan.reps {
                let (res, secs) = &outcomes[g * plan.reps + r].results[ei];
                elapsed += secs;
                match res {
                    Ok(res) => {
                        p_values.push(Some(res.p_value));
                        for f in &res.flags {
                            push_flag(&mut flags, f.clone());
                        }
                    }
                    Err(msg) => {
                        p_values.push(None);
                        failures.push(FailureRecord { engine: name.clone(), grid_index: g, rep: r, message: msg.clone() });
                    }
                }
            }
            let ok: Vec<f64> = p_values.iter().flatten().copied().collect();
            let rate = if ok.is_empty() { 0.0 } else { ok.iter().filter(|&&p| p <= plan.alpha).count() as f64 / ok.len() as f64 };
            cells.push(CellReport {
                engine: name,
                grid_index: g,
                grid_value: value,
                rejection_rate: rate,
                std_error: std_error(rate, ok.len()),
                failures: plan.reps - ok.len(),
                p_values,
                elapsed_secs: elapsed,
                flags,
            });
        }
    }
    let mut flags = Vec::new();
    if plan.imperfect_surrogate() {
        flags.push(Flag::ImperfectSurrogate);
    }
    Ok(ExperimentReport {
        plan: plan.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        cells,
        batch_hashes,
        failures,
        flags,
    })
}

impl ExperimentReport {
    pub fn cell(&self, engine: &str, grid_index: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.engine == engine && c.grid_index == grid_index)
    }

    pub fn engines(&self) -> Vec<String> {
        self.plan.engines.iter().map(EngineEntry::label).collect()
    }

    pub fn failure_count(&self) -> usize {
        self.failures.len()
    }

    /// Tidy CSV with columns `engine,grid_value,rep,p_value`; failed
    /// replications carry `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("engine,grid_value,rep,p_value\n");
        for c in &self.cells {
            for (r, p) in c.p_values.iter().enumerate() {
                let pv = p.map_or_else(|| "NA".to_string(), |v| format!("{v}"));
                let _ = writeln!(out, "{},{},{},{}", c.engine, c.grid_value, r, pv);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| MaxwayError::InvalidConfig(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| MaxwayError::InvalidConfig(format!("report: {e}")))
    }

    /// `γ` value of every grid point.
    fn gammas(&self) -> Vec<f64> {
        match &self.plan.sweep {
            Sweep::GammaGrid(v) => v.clone(),
            Sweep::NGrid(v) => vec![self.plan.sim.gamma; v.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedCurve {
    pub engine: String,
    pub gamma: Vec<f64>,
    pub raw_power: Vec<f64>,
    pub adjusted_power: Vec<f64>,
    /// Empirical rejection rate of the engine at `γ = 0`.
    pub null_rejection: f64,
}

/// Rejects `p` when at most `⌊αR⌋` of the `R` null p-values are `≤ p`, so
/// the recalibrated test rejects at most a fraction `α` of the null runs.
pub fn recalibrated_rejection(null: &[f64], alt: &[f64], alpha: f64) -> f64 {
    if alt.is_empty() {
        return 0.0;
    }
    let mut sorted = null.to_vec();
    sorted.sort_by(f64::total_cmp);
    let budget = (alpha * sorted.len() as f64 + 1e-9).floor() as usize;
    let hits = alt.iter().filter(|&&p| sorted.partition_point(|&q| q <= p) <= budget).count();
    hits as f64 / alt.len() as f64
}

/// Power of each engine after recalibrating its threshold on `null_report`.
pub fn adjusted_power(report: &ExperimentReport, null_report: &ExperimentReport) -> Result<Vec<AdjustedCurve>> {
    let Sweep::GammaGrid(gammas) = &report.plan.sweep else {
        return Err(MaxwayError::GridMismatch("power curves need a gamma sweep".into()));
    };
    if report.engines() != null_report.engines() {
        return Err(MaxwayError::GridMismatch(format!(
            "engines differ: {:?} vs {:?}",
            report.engines(),
            null_report.engines()
        )));
    }
    let null_g = null_report
        .gammas()
        .iter()
        .position(|&g| g == 0.0)
        .ok_or_else(|| MaxwayError::GridMismatch("null report has no gamma = 0 grid point".into()))?;
    let alpha = report.plan.alpha;
    let mut curves = Vec::new();
    for name in report.engines() {
        let nc = null_report.cell(&name, null_g).ok_or_else(|| MaxwayError::GridMismatch(format!("null report lacks {name}")))?;
        let null: Vec<f64> = nc.p_values.iter().flatten().copied().collect();
        let mut raw = Vec::new();
        let mut adj = Vec::new();
        for g in 0..gammas.len() {
            let c = report.cell(&name, g).ok_or_else(|| MaxwayError::GridMismatch(format!("report lacks {name} at grid {g}")))?;
            let alt: Vec<f64> = c.p_values.iter().flatten().copied().collect();
            raw.push(c.rejection_rate);
            adj.push(recalibrated_rejection(&null, &alt, alpha));
        }
        let null_rej = if null.is_empty() { 0.0 } else { null.iter().filter(|&&p| p <= alpha).count() as f64 / null.len() as f64 };
        curves.push(AdjustedCurve { engine: name, gamma: gammas.clone(), raw_power: raw, adjusted_power: adj, null_rejection: null_rej });
    }
    Ok(curves)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curve {
    Type1VsN,
    PowerVsGamma,
}

/// Plot-ready CSV `engine,x_value,y_value,se`, plus `adjusted_power` when a
/// null report is given for a power curve.
pub fn curve_csv(report: &ExperimentReport, curve: Curve, null_report: Option<&ExperimentReport>) -> Result<String> {
    match (curve, &report.plan.sweep) {
        (Curve::Type1VsN, Sweep::NGrid(_)) | (Curve::PowerVsGamma, Sweep::GammaGrid(_)) => {}
        (Curve::Type1VsN, _) => return Err(MaxwayError::GridMismatch("type1-vs-N needs an N sweep".into())),
        (Curve::PowerVsGamma, _) => return Err(MaxwayError::GridMismatch("power-vs-gamma needs a gamma sweep".into())),
    }
    let adjusted = match null_report {
        Some(n) if curve == Curve::PowerVsGamma => Some(adjusted_power(report, n)?),
        _ => None,
    };
    let mut out = String::from("engine,x_value,y_value,se");
    if adjusted.is_some() {
        out.push_str(",adjusted_power");
    }
    out.push('\n');
    for name in report.engines() {
        let curve_adj = adjusted.as_ref().and_then(|a| a.iter().find(|c| c.engine == name));
        for c in report.cells.iter().filter(|c| c.engine == name) {
            let _ = write!(out, "{},{},{},{}", c.engine, c.grid_value, c.rejection_rate, c.std_error);
            if let Some(a) = curve_adj {
                let _ = write!(out, ",{}", a.adjusted_power[c.grid_index]);
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Text table of rejection rates with standard errors.
pub fn summary_table(report: &ExperimentReport) -> String {
    let mut out = format!("{:<24}{:>12}{:>12}{:>10}{:>8}\n", "engine", report.plan.sweep.axis(), "rejection", "se", "fail");
    for c in &report.cells {
        let _ = writeln!(out, "{:<24}{:>12}{:>12.4}{:>10.4}{:>8}", c.engine, c.grid_value, c.rejection_rate, c.std_error, c.failures);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::HForm;

    fn small_plan(engines: Vec<EngineEntry>, reps: usize) -> ExperimentPlan {
        ExperimentPlan {
            sim: SimConfig { p: 12, n: 40, n_unlabeled: 40, h_form: HForm::Linear, ..Default::default() },
            engines,
            reps,
            alpha: 0.05,
            sweep: Sweep::NGrid(vec![40]),
            parallelism: 1,
            master_seed: 11,
            surrogate: None,
        }
    }

    fn pipe(kind: EngineKind) -> EnginePipeline {
        EnginePipeline { kind, m: 19, ..Default::default() }
    }

    #[test]
    fn single_rep_echoes_p_value() {
        let plan = small_plan(vec![EngineEntry::new(pipe(EngineKind::MaxwayIn))], 1);
        let rep = run_plan(&plan).unwrap();
        assert_eq!(rep.cells.len(), 1);
        let c = &rep.cells[0];
        assert!(c.rejection_rate == 0.0 || c.rejection_rate == 1.0);
        assert_eq!(c.p_values.len(), 1);
        assert_eq!(c.std_error, 0.0);
        assert_eq!(rep.failure_count(), 0);
    }

    #[test]
    fn std_error_formula() {
        assert_eq!(std_error(0.2, 100), (0.2f64 * 0.8 / 100.0).sqrt());
        assert_eq!(std_error(0.0, 10), 0.0);
    }

    #[test]
    fn invalid_plans_rejected() {
        let mut plan = small_plan(vec![EngineEntry::new(pipe(EngineKind::Modelx))], 0);
        assert!(run_plan(&plan).is_err());
        plan.reps = 1;
        plan.sweep = Sweep::GammaGrid(vec![]);
        assert!(run_plan(&plan).is_err());
        plan.sweep = Sweep::NGrid(vec![40]);
        plan.engines.push(EngineEntry::new(pipe(EngineKind::Modelx)));
        assert!(run_plan(&plan).is_err());
        plan.engines.pop();
        plan.engines.push(EngineEntry::new(pipe(EngineKind::SasslMaxway)));
        assert!(run_plan(&plan).is_err());
    }

    #[test]
    fn oracle_overrides_build() {
        let plan = small_plan(
            vec![
                EngineEntry { x_model: XModelChoice::Oracle, ..EngineEntry::new(pipe(EngineKind::Modelx)) },
                EngineEntry {
                    x_model: XModelChoice::Perturbed { shift: 0.3 },
                    g: GChoice::Oracle,
                    adjustment: AdjustChoice::Exact,
                    ..EngineEntry::new(pipe(EngineKind::MaxwayIn))
                },
            ],
            2,
        );
        let rep = run_plan(&plan).unwrap();
        assert_eq!(rep.failure_count(), 0, "{:?}", rep.failures);
        let bad = small_plan(vec![EngineEntry { adjustment: AdjustChoice::Exact, ..EngineEntry::new(pipe(EngineKind::MaxwayIn)) }], 1);
        let rep = run_plan(&bad).unwrap();
        assert_eq!(rep.failure_count(), 1);
        assert_eq!(rep.cells[0].failures, 1);
    }

    #[test]
    fn recalibration_matches_brute_force() {
        let mut r = RngHandle::new(5).rng();
        use rand::Rng;
        for _ in 0..200 {
            let nn = r.random_range(1..40);
            let na = r.random_range(1..40);
            let null: Vec<f64> = (0..nn).map(|_| (r.random_range(1..21) as f64) / 20.0).collect();
            let alt: Vec<f64> = (0..na).map(|_| (r.random_range(1..21) as f64) / 20.0).collect();
            let alpha = [0.05, 0.1, 0.2][r.random_range(0..3)];
            // brute force: largest threshold t among candidate values whose
            // null rejection fraction stays within α; reject p ≤ t
            let mut cands: Vec<f64> = null.iter().chain(alt.iter()).copied().collect();
            cands.push(0.0);
            let frac = |t: f64| null.iter().filter(|&&q| q <= t).count() as f64 / nn as f64;
            let t = cands.iter().copied().filter(|&t| frac(t) <= alpha + 1e-12).fold(f64::NEG_INFINITY, f64::max);
            let expect = alt.iter().filter(|&&p| p <= t).count() as f64 / na as f64;
            assert_eq!(recalibrated_rejection(&null, &alt, alpha), expect);
        }
    }

    #[test]
    fn recalibration_trivial_cases() {
        let null: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let alt: Vec<f64> = (1..=10).map(|i| i as f64 / 100.0).collect();
        let raw = alt.iter().filter(|&&p| p <= 0.05).count() as f64 / 10.0;
        assert_eq!(recalibrated_rejection(&null, &alt, 0.05), raw);
        let high: Vec<f64> = vec![0.5; 20];
        assert_eq!(recalibrated_rejection(&high, &[0.4, 0.3], 0.05), 1.0);
    }
}
