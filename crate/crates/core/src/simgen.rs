//! Simulation designs with known conditional laws.
//!
//! Streams relative to `SimConfig::seed`: `[0]` design draws (ν and the index
//! sets), `[1]` labeled rows, `[2]` unlabeled rows, `[3]` holdout rows.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{LabeledData, SurrogateData, UnlabeledData};
use crate::error::{MaxwayError, Result};
use crate::learners::expit;
use crate::rng::RngHandle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfigKind {
    #[serde(rename = "I")]
    GaussianLinear,
    #[serde(rename = "II")]
    LogisticLinear,
    #[serde(rename = "III")]
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HForm {
    Linear,
    LinearPlusInteraction,
    Config3Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SurrogateModel {
    /// `S = Y + N(0, sd²)`.
    NoisyCopy { sd: f64 },
    /// `S | Y ~ Poisson(1)` for `Y ≤ 0` and `Poisson(rate_ratio)` for `Y > 0`.
    ThresholdCount { rate_ratio: f64 },
    /// `S = Y + leak_coef·Z₁ + N(0, 0.25)`; depends on `Z` beyond `Y`.
    Imperfect { leak_coef: f64 },
}

impl SurrogateModel {
    pub fn is_imperfect(&self) -> bool {
        matches!(self, SurrogateModel::Imperfect { leak_coef } if *leak_coef != 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub config: ConfigKind,
    pub p: usize,
    pub eta: f64,
    pub gamma: f64,
    pub h_form: HForm,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_unlabeled: usize,
    /// Labeled holdout rows; 0 for none.
    pub n_holdout: usize,
    pub seed: RngHandle,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            config: ConfigKind::GaussianLinear,
            p: 500,
            eta: 0.0,
            gamma: 0.0,
            h_form: HForm::Linear,
            n: 250,
            n_unlabeled: 250,
            n_holdout: 0,
            seed: RngHandle::new(0),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        match self.config {
            ConfigKind::Nonlinear if self.p != 40 => {
                return Err(MaxwayError::BadP { p: self.p, requirement: "configuration III uses p = 40".into() })
            }
            ConfigKind::GaussianLinear | ConfigKind::LogisticLinear if self.p < 6 => {
                return Err(MaxwayError::BadP { p: self.p, requirement: "need p ≥ 6 for the five shared signals".into() })
            }
            _ => {}
        }
        if (self.h_form == HForm::Config3Nonlinear) != (self.config == ConfigKind::Nonlinear) {
            return Err(MaxwayError::InvalidConfig("h_form config3_nonlinear goes with configuration III only".into()));
        }
        if self.n < 2 {
            return Err(MaxwayError::InvalidConfig("n must be at least 2".into()));
        }
        Ok(())
    }

    pub fn rho(&self) -> f64 {
        match self.config {
            ConfigKind::Nonlinear => 0.2,
            _ => 0.5,
        }
    }

    /// Size of each of the two confounder index sets: 25, or less when p is small.
    pub fn index_set_size(&self) -> usize {
        25.min(self.p.saturating_sub(5) / 2)
    }
}

/// Everything needed to rebuild the exact conditional laws of a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub config: ConfigKind,
    pub rho: f64,
    pub gamma: f64,
    pub h_form: HForm,
    /// ν over all p coordinates (0 where unused).
    pub nu: Vec<f64>,
    /// 0-based indices.
    pub i1: Vec<usize>,
    pub i2: Vec<usize>,
    /// Linear predictor coefficients of `X` (Gaussian mean or logit); configurations I and II.
    pub beta_x: Option<Array1<f64>>,
    /// `Y`'s `Z` part, without `γh(X, Z)`; configurations I and II.
    pub beta_y: Option<Array1<f64>>,
}

impl Truth {
    /// `E[X | Z]`.
    pub fn x_mean(&self, z: &Array2<f64>) -> Array1<f64> {
        match (self.config, &self.beta_x) {
            (ConfigKind::GaussianLinear, Some(b)) => z.dot(b),
            (ConfigKind::LogisticLinear, Some(b)) => z.dot(b).mapv(expit),
            _ => Array1::from_iter(z.outer_iter().map(|r| config3_x_mean(r.as_slice().unwrap_or(&r.to_vec())))),
        }
    }

    /// `E[Y | X, Z] − γh(X, Z)`.
    pub fn y_base(&self, z: &Array2<f64>) -> Array1<f64> {
        match &self.beta_y {
            Some(b) => z.dot(b),
            None => Array1::from_iter(z.outer_iter().map(|r| config3_y_base(r.as_slice().unwrap_or(&r.to_vec())))),
        }
    }

    pub fn h(&self, x: f64, z: &[f64]) -> f64 {
        match self.h_form {
            HForm::Linear => x,
            HForm::LinearPlusInteraction => x + x * z[..5].iter().sum::<f64>(),
            HForm::Config3Nonlinear => {
                let ind = indicators(z);
                (0.5 * x * x + (std::f64::consts::PI * (x - 1.0) / 4.0).sin()) * (ind(1) + ind(2))
            }
        }
    }

    /// `β_x` with `shift` added to every nonzero coefficient.
    pub fn perturbed_x_coef(&self, shift: f64) -> Result<Array1<f64>> {
        let b = self.beta_x.as_ref().ok_or_else(|| MaxwayError::InvalidConfig("no linear X model in this configuration".into()))?;
        Ok(b.mapv(|v| if v != 0.0 { v + shift } else { 0.0 }))
    }
}

/// `I_j` (1-based) for configuration III.
fn indicators(z: &[f64]) -> impl Fn(usize) -> f64 + '_ {
    move |j: usize| {
        let v = z[j - 1];
        let on = match j {
            1 => v > 0.0,
            2 => v > 0.5,
            3 => v > -0.5,
            4 => v.abs() > 1.0,
            _ => v > 0.0,
        };
        if on {
            1.0
        } else {
            0.0
        }
    }
}

pub fn config3_x_mean(z: &[f64]) -> f64 {
    let i = indicators(z);
    0.5 * (i(1) + i(3))
        + 0.4 * (i(2) + i(4) + i(1) * i(4) + i(2) * i(3))
        + 0.15 * ((21..=24).map(&i).sum::<f64>() + i(21) * i(22) + i(23) * i(24))
}

pub fn config3_y_base(z: &[f64]) -> f64 {
    let i = indicators(z);
    0.5 * (i(1) + i(4) + i(1) * i(4) + i(2) * i(3))
        + 0.4 * (i(2) + i(3))
        + 0.15 * ((31..=34).map(&i).sum::<f64>() + i(31) * i(32) + i(33) * i(34))
}

/// `Σ_ij = ρ^|i−j|`.
pub fn ar_covariance(p: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| rho.powi((i as i32 - j as i32).abs()))
}

fn cholesky_factor(p: usize, rho: f64) -> Result<Array2<f64>> {
    let s = ar_covariance(p, rho);
    let m = DMatrix::from_fn(p, p, |i, j| s[[i, j]]);
    let l = m.cholesky().ok_or_else(|| MaxwayError::InvalidConfig("covariance is not positive definite".into()))?.l();
    Ok(Array2::from_shape_fn((p, p), |(i, j)| l[(i, j)]))
}

/// `rows` draws of `N(0, Σ)` via `Σ = LLᵀ`.
fn sample_z(l: &Array2<f64>, rows: usize, rng: &mut impl Rng) -> Array2<f64> {
    let p = l.nrows();
    let w = Array2::from_shape_fn((rows, p), |_| rng.sample::<f64, _>(StandardNormal));
    w.dot(&l.t())
}

/// O(p) per row sampler for the AR(ρ) covariance; the same map as the
/// Cholesky route applied to the same standard normals.
pub fn sample_ar_sequential(w: &Array2<f64>, rho: f64) -> Array2<f64> {
    let s = (1.0 - rho * rho).sqrt();
    let mut z = w.clone();
    for mut row in z.outer_iter_mut() {
        for j in 1..row.len() {
            row[j] = rho * row[j - 1] + s * row[j];
        }
    }
    z
}

fn draw_truth(cfg: &SimConfig) -> Truth {
    let mut r = cfg.seed.derive(&[0]).rng();
    let p = cfg.p;
    let mut nu = vec![0.0; p];
    let (mut i1, mut i2) = (Vec::new(), Vec::new());
    let (mut beta_x, mut beta_y) = (None, None);
    if cfg.config != ConfigKind::Nonlinear {
        let m = cfg.index_set_size();
        // 2m distinct indices from {5..p-1}; first m form I₁
        let picks = sample(&mut r, p - 5, 2 * m).into_vec();
        i1 = picks[..m].iter().map(|&v| v + 5).collect();
        i2 = picks[m..].iter().map(|&v| v + 5).collect();
        i1.sort_unstable();
        i2.sort_unstable();
        for v in nu.iter_mut() {
            *v = if r.random::<bool>() { 1.0 } else { -1.0 };
        }
        let mut bx = Array1::zeros(p);
        let mut by = Array1::zeros(p);
        for j in 0..5 {
            bx[j] = 0.3 * nu[j];
            by[j] = 0.3 * nu[j];
        }
        for &l in &i1 {
            bx[l] = cfg.eta * nu[l];
        }
        for &l in &i2 {
            by[l] = cfg.eta * nu[l];
        }
        let used: Vec<usize> = (0..5).chain(i1.iter().copied()).chain(i2.iter().copied()).collect();
        for (j, v) in nu.iter_mut().enumerate() {
            if !used.contains(&j) {
                *v = 0.0;
            }
        }
        beta_x = Some(bx);
        beta_y = Some(by);
    }
    Truth { config: cfg.config, rho: cfg.rho(), gamma: cfg.gamma, h_form: cfg.h_form, nu, i1, i2, beta_x, beta_y }
}

struct Rows {
    y: Array1<f64>,
    x: Array1<f64>,
    z: Array2<f64>,
}

fn draw_rows(truth: &Truth, l: &Array2<f64>, rows: usize, rng: &RngHandle) -> Rows {
    let mut r = rng.rng();
    let z = sample_z(l, rows, &mut r);
    let mx = truth.x_mean(&z);
    let x = match truth.config {
        ConfigKind::LogisticLinear => mx.mapv(|pr| if r.random::<f64>() < pr { 1.0 } else { 0.0 }),
        _ => mx.mapv(|m| m + r.sample::<f64, _>(StandardNormal)),
    };
    let base = truth.y_base(&z);
    let y = Array1::from_iter((0..rows).map(|i| {
        let zi = z.row(i);
        let eff = if truth.gamma != 0.0 { truth.gamma * truth.h(x[i], zi.as_slice().unwrap_or(&zi.to_vec())) } else { 0.0 };
        eff + base[i] + r.sample::<f64, _>(StandardNormal)
    }));
    Rows { y, x, z }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedBatch {
    pub labeled: LabeledData,
    pub unlabeled: UnlabeledData,
    pub holdout: Option<LabeledData>,
    pub truth: Truth,
    /// Latent responses of the unlabeled rows (for surrogate generation).
    pub unlabeled_y: Array1<f64>,
}

impl GeneratedBatch {
    /// Fingerprint of the data content, used to check batch pairing.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        let mut feed = |v: &mut dyn Iterator<Item = f64>| {
            for a in v {
                h.update(a.to_le_bytes());
            }
        };
        feed(&mut self.labeled.y.iter().copied());
        feed(&mut self.labeled.x.iter().copied());
        feed(&mut self.labeled.z.iter().copied());
        feed(&mut self.unlabeled.x.iter().copied());
        feed(&mut self.unlabeled.z.iter().copied());
        if let Some(hd) = &self.holdout {
            feed(&mut hd.y.iter().chain(hd.x.iter()).chain(hd.z.iter()).copied());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn generate(cfg: &SimConfig) -> Result<GeneratedBatch> {
    cfg.validate()?;
    let truth = draw_truth(cfg);
    let l = cholesky_factor(cfg.p, truth.rho)?;
    let binary = cfg.config == ConfigKind::LogisticLinear;
    let lab = draw_rows(&truth, &l, cfg.n, &cfg.seed.derive(&[1]));
    let unl = draw_rows(&truth, &l, cfg.n_unlabeled, &cfg.seed.derive(&[2]));
    let holdout = if cfg.n_holdout > 0 {
        let h = draw_rows(&truth, &l, cfg.n_holdout, &cfg.seed.derive(&[3]));
        Some(LabeledData::new(h.y, h.x, h.z, binary)?)
    } else {
        None
    };
    Ok(GeneratedBatch {
        labeled: LabeledData::new(lab.y, lab.x, lab.z, binary)?,
        unlabeled: UnlabeledData { x: unl.x, z: unl.z, x_binary: binary },
        holdout,
        truth,
        unlabeled_y: unl.y,
    })
}

fn expect_kind(cfg: &SimConfig, kind: ConfigKind) -> Result<()> {
    if cfg.config != kind {
        return Err(MaxwayError::InvalidConfig(format!("expected configuration {kind:?}, got {:?}", cfg.config)));
    }
    Ok(())
}

/// Gaussian linear `X | Z` and `Y | Z`.
pub fn gen_config1(cfg: &SimConfig) -> Result<GeneratedBatch> {
    expect_kind(cfg, ConfigKind::GaussianLinear)?;
    generate(cfg)
}

/// Logistic linear `X | Z`, Gaussian linear `Y | Z`.
pub fn gen_config2(cfg: &SimConfig) -> Result<GeneratedBatch> {
    expect_kind(cfg, ConfigKind::LogisticLinear)?;
    generate(cfg)
}

/// Indicator-based non-linear `X | Z` and `Y | Z`.
pub fn gen_config3(cfg: &SimConfig) -> Result<GeneratedBatch> {
    expect_kind(cfg, ConfigKind::Nonlinear)?;
    generate(cfg)
}

pub fn generate_batch(cfg: &SimConfig) -> Result<GeneratedBatch> {
    generate(cfg)
}

/// Surrogate labels for the unlabeled rows of `batch`.
pub fn gen_surrogate(batch: &GeneratedBatch, model: &SurrogateModel, rng: &RngHandle) -> Result<SurrogateData> {
    let mut r = rng.rng();
    let y = &batch.unlabeled_y;
    let z = &batch.unlabeled.z;
    let s = match model {
        SurrogateModel::NoisyCopy { sd } => y.mapv(|v| v + sd * r.sample::<f64, _>(StandardNormal)),
        SurrogateModel::ThresholdCount { rate_ratio } => {
            if !(*rate_ratio > 0.0) {
                return Err(MaxwayError::InvalidConfig("rate_ratio must be positive".into()));
            }
            let lo = Poisson::new(1.0).map_err(|e| MaxwayError::InvalidConfig(e.to_string()))?;
            let hi = Poisson::new(*rate_ratio).map_err(|e| MaxwayError::InvalidConfig(e.to_string()))?;
            y.mapv(|v| if v > 0.0 { hi.sample(&mut r) } else { lo.sample(&mut r) })
        }
        SurrogateModel::Imperfect { leak_coef } => Array1::from_iter(
            y.iter().zip(z.column(0)).map(|(v, z1)| v + leak_coef * z1 + 0.5 * r.sample::<f64, _>(StandardNormal)),
        ),
    };
    SurrogateData::new(s, batch.unlabeled.x.clone(), z.clone(), batch.unlabeled.x_binary)
}

/// Coefficients of `E[Y | Z]` when it is linear in `Z`.
pub fn oracle_g_coef(truth: &Truth) -> Result<Array1<f64>> {
    let by = truth.beta_y.as_ref().ok_or_else(|| MaxwayError::InvalidConfig("no linear Y model in this configuration".into()))?;
    if truth.gamma == 0.0 {
        return Ok(by.clone());
    }
    match (truth.config, truth.h_form, &truth.beta_x) {
        (ConfigKind::GaussianLinear, HForm::Linear, Some(bx)) => Ok(by + &(bx * truth.gamma)),
        _ => Err(MaxwayError::InvalidConfig("E[Y | Z] is not linear in Z for this design".into())),
    }
}

/// Exact law of `r = x − Zγ` given `g = Zβ` for Gaussian `X | Z` with unit
/// noise: `r | g ~ N(c·g, τ²)`. Returns `(c, τ²)`.
pub fn exact_residual_law(truth: &Truth, gamma_used: &Array1<f64>, g_coef: &Array1<f64>) -> Result<(f64, f64)> {
    let (Some(bx), by) = (&truth.beta_x, g_coef) else {
        return Err(MaxwayError::InvalidConfig("exact residual law needs linear X and Y models".into()));
    };
    if truth.config != ConfigKind::GaussianLinear {
        return Err(MaxwayError::InvalidConfig("exact residual law needs Gaussian X | Z".into()));
    }
    let s = ar_covariance(bx.len(), truth.rho);
    let delta = bx - gamma_used;
    let sb = s.dot(by);
    let var_g = by.dot(&sb);
    let cov = delta.dot(&sb);
    let var_r = 1.0 + delta.dot(&s.dot(&delta));
    if var_g <= 0.0 {
        return Ok((0.0, var_r));
    }
    let c = cov / var_g;
    Ok((c, var_r - c * cov))
}

/// Marginal variance of `X` for configuration I.
pub fn config1_x_variance(truth: &Truth) -> Option<f64> {
    let b = truth.beta_x.as_ref()?;
    let s = ar_covariance(b.len(), truth.rho);
    Some(1.0 + b.dot(&s.dot(b)))
}

/// Rows of `z` stacked with a column of ones in front (utility for tests and oracles).
pub fn with_intercept(z: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate![Axis(1), Array2::ones((z.nrows(), 1)), z.view()]
}
