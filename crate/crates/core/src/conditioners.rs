//! Sufficient statistics `g(Z)`, `h(Z)`, the exposure transform and the fitted
//! Maxway distribution of the (transformed) exposure given `(g, h)`.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{SurrogateData, UnlabeledData};
use crate::error::{push_flag, Flag, MaxwayError, Result};
use crate::learners::{
    expit, fit_forest, fit_lasso, fit_logistic_lowdim_with_offset, fit_ols_reduced, independent_columns, top_k_features,
    Family, FittedModel, ForestConfig, ForestTask, LassoConfig, LinearFit,
};
use crate::rng::RngHandle;

pub const VARIANCE_FLOOR: f64 = 1e-8;
pub const DEFAULT_CLIP: f64 = 1e-6;
const LOWDIM_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GLearner {
    Lasso,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XFamily {
    GaussianLinear,
    Logistic,
    ForestGaussian,
    ForestBinary,
}

impl XFamily {
    pub fn is_binary(self) -> bool {
        matches!(self, XFamily::Logistic | XFamily::ForestBinary)
    }

    /// Family of the same learner kind for an exposure of the given type.
    pub fn matching(self, binary: bool) -> XFamily {
        match (self, binary) {
            (XFamily::GaussianLinear | XFamily::Logistic, false) => XFamily::GaussianLinear,
            (XFamily::GaussianLinear | XFamily::Logistic, true) => XFamily::Logistic,
            (XFamily::ForestGaussian | XFamily::ForestBinary, false) => XFamily::ForestGaussian,
            (XFamily::ForestGaussian | XFamily::ForestBinary, true) => XFamily::ForestBinary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Training {
    InSample,
    Holdout,
    Unlabeled,
    Surrogate,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub learner: String,
    pub top_k: Vec<usize>,
    pub training: Training,
}

/// How the first column of `g` maps to the mean of `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredScale {
    Response,
    Logit,
}

/// `g(Z)` and `h(Z)` evaluated on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub g: Array2<f64>,
    pub h: Array2<f64>,
    pub pred_scale: PredScale,
    pub provenance: Provenance,
}

impl SufficientStats {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }

    pub fn with_h(mut self, h: Array2<f64>) -> Result<Self> {
        if h.nrows() != self.g.nrows() {
            return Err(MaxwayError::DimensionMismatch(format!("g has {} rows, h has {}", self.g.nrows(), h.nrows())));
        }
        self.h = h;
        Ok(self)
    }

    /// Fitted mean of `y` implied by the prediction column.
    pub fn y_mean(&self) -> Array1<f64> {
        if self.g.ncols() == 0 {
            return Array1::zeros(self.n());
        }
        let pred = self.g.column(0);
        match self.pred_scale {
            PredScale::Response => pred.to_owned(),
            PredScale::Logit => pred.mapv(expit),
        }
    }

    pub fn eps_y(&self, y: &Array1<f64>) -> Array1<f64> {
        y - &self.y_mean()
    }

    /// The raw top-k covariate columns carried in `g`.
    pub fn z_top(&self) -> Array2<f64> {
        if self.g.ncols() <= 1 {
            return Array2::zeros((self.n(), 0));
        }
        self.g.slice(ndarray::s![.., 1..]).to_owned()
    }

    /// `[g, h]` as one feature matrix.
    pub fn features(&self) -> Array2<f64> {
        concatenate![Axis(1), self.g, self.h]
    }
}

/// A trained map `Z ↦ g(Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GModel {
    pub model: FittedModel,
    pub top_k: Vec<usize>,
    pub pred_scale: PredScale,
    pub provenance: Provenance,
}

impl GModel {
    /// Fixed linear predictor `Zβ` with no extra columns.
    pub fn oracle_linear(beta: Array1<f64>) -> GModel {
        GModel {
            model: FittedModel::Linear(LinearFit::new(0.0, beta, Family::Gaussian)),
            top_k: Vec::new(),
            pred_scale: PredScale::Response,
            provenance: Provenance { learner: "oracle".into(), top_k: Vec::new(), training: Training::Oracle },
        }
    }

    pub fn prediction(&self, z: &Array2<f64>) -> Result<Array1<f64>> {
        match (&self.model, self.pred_scale) {
            (FittedModel::Linear(f), PredScale::Logit) => f.linear_predictor(z),
            (m, _) => m.predict(z),
        }
    }

    pub fn evaluate(&self, z: &Array2<f64>) -> Result<SufficientStats> {
        let pred = self.prediction(z)?;
        let top = z.select(Axis(1), &self.top_k);
        let g = concatenate![Axis(1), pred.insert_axis(Axis(1)), top];
        Ok(SufficientStats { g, h: Array2::zeros((z.nrows(), 0)), pred_scale: self.pred_scale, provenance: self.provenance.clone() })
    }

    pub fn flags(&self) -> &[Flag] {
        self.model.flags()
    }
}

pub fn is_binary(v: &Array1<f64>) -> bool {
    v.iter().all(|&a| a == 0.0 || a == 1.0)
}

/// Learner settings shared by the g, h and Maxway fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub lasso: LassoConfig,
    pub forest: ForestConfig,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig { lasso: LassoConfig::default(), forest: ForestConfig::default() }
    }
}

/// Trains `g`: the learner's prediction of `train_y` from `Z` followed by the
/// `k` highest-ranked covariates.
pub fn fit_g(
    learner: GLearner,
    train_y: &Array1<f64>,
    train_z: &Array2<f64>,
    k: usize,
    cfg: &LearnerConfig,
    training: Training,
    rng: &RngHandle,
) -> Result<GModel> {
    let p = train_z.ncols();
    if k > p {
        return Err(MaxwayError::InvalidConfig(format!("k={k} exceeds p={p}")));
    }
    let binary = is_binary(train_y);
    let (model, pred_scale, name) = match learner {
        GLearner::Lasso => {
            let family = if binary { Family::Logistic } else { Family::Gaussian };
            let fit = fit_lasso(train_z, train_y, family, &cfg.lasso, rng)?;
            let scale = if binary { PredScale::Logit } else { PredScale::Response };
            (FittedModel::Linear(fit.fit), scale, "lasso")
        }
        GLearner::Forest => {
            let task = if binary { ForestTask::Classification } else { ForestTask::Regression };
            let fit = fit_forest(train_z, train_y, task, &cfg.forest, rng)?;
            (FittedModel::Forest(fit), PredScale::Response, "forest")
        }
    };
    let top_k = top_k_features(&model, k)?;
    let provenance = Provenance { learner: name.into(), top_k: top_k.clone(), training };
    Ok(GModel { model, top_k, pred_scale, provenance })
}

pub fn build_g_lasso(train_y: &Array1<f64>, train_z: &Array2<f64>, eval_z: &Array2<f64>, k: usize, rng: &RngHandle) -> Result<SufficientStats> {
    fit_g(GLearner::Lasso, train_y, train_z, k, &LearnerConfig::default(), Training::Holdout, rng)?.evaluate(eval_z)
}

pub fn build_g_forest(train_y: &Array1<f64>, train_z: &Array2<f64>, eval_z: &Array2<f64>, k: usize, rng: &RngHandle) -> Result<SufficientStats> {
    fit_g(GLearner::Forest, train_y, train_z, k, &LearnerConfig::default(), Training::Holdout, rng)?.evaluate(eval_z)
}

/// `g` learned from the surrogate `s` in place of the label.
pub fn build_g_surrogate(
    surr: &SurrogateData,
    eval_z: &Array2<f64>,
    k: usize,
    learner: GLearner,
    cfg: &LearnerConfig,
    rng: &RngHandle,
) -> Result<SufficientStats> {
    fit_g(learner, &surr.s, &surr.z, k, cfg, Training::Surrogate, rng)?.evaluate(eval_z)
}

/// Exposure transform `R(X, Z)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Identity,
    ResidualLinear { intercept: f64, coef: Array1<f64> },
    ResidualModel(Box<FittedModel>),
}

impl Transform {
    pub fn apply(&self, x: &Array1<f64>, z: &Array2<f64>) -> Result<Array1<f64>> {
        match self {
            Transform::Identity => Ok(x.clone()),
            Transform::ResidualLinear { intercept, coef } => {
                if coef.len() != z.ncols() {
                    return Err(MaxwayError::DimensionMismatch(format!("transform has {} coefficients, Z has {} columns", coef.len(), z.ncols())));
                }
                Ok(x - &(z.dot(coef) + *intercept))
            }
            Transform::ResidualModel(m) => Ok(x - &m.predict(z)?),
        }
    }
}

/// A fitted model of `X | Z` together with the transform and `h` it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct XModel {
    pub family: XFamily,
    pub fit: FittedModel,
    /// Work with `x − E[X|Z]` (empty `h`) instead of `x` (`h` from the fit).
    pub residualize: bool,
}

impl XModel {
    pub fn new(family: XFamily, fit: FittedModel) -> Self {
        XModel { family, fit, residualize: !family.is_binary() }
    }

    /// Linear `X | Z` model with the given coefficients and no intercept.
    pub fn linear(family: XFamily, coef: Array1<f64>) -> Self {
        let fam = if family.is_binary() { Family::Logistic } else { Family::Gaussian };
        XModel::new(family, FittedModel::Linear(LinearFit::new(0.0, coef, fam)))
    }

    pub fn residualized(mut self) -> Self {
        self.residualize = true;
        self
    }

    /// `E[X | Z]`.
    pub fn mean(&self, z: &Array2<f64>) -> Result<Array1<f64>> {
        self.fit.predict(z)
    }

    pub fn transform(&self) -> Transform {
        if !self.residualize {
            return Transform::Identity;
        }
        match &self.fit {
            FittedModel::Linear(f) if f.family == Family::Gaussian => {
                Transform::ResidualLinear { intercept: f.intercept, coef: f.coef.clone() }
            }
            m => Transform::ResidualModel(Box::new(m.clone())),
        }
    }

    pub fn apply(&self, x: &Array1<f64>, z: &Array2<f64>) -> Result<Array1<f64>> {
        self.transform().apply(x, z)
    }

    /// `h(Z)`: empty for residualized exposures, else the linear predictor
    /// (logistic) or fitted probability (forest).
    pub fn h(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        if self.residualize {
            return Ok(Array2::zeros((z.nrows(), 0)));
        }
        let col = match &self.fit {
            FittedModel::Linear(f) => f.linear_predictor(z)?,
            FittedModel::Forest(f) => f.predict(z)?,
        };
        Ok(col.insert_axis(Axis(1)))
    }

    /// Centering used for `ε_x` on the transformed scale.
    pub fn center(&self, z: &Array2<f64>) -> Result<Array1<f64>> {
        if self.residualize {
            Ok(Array1::zeros(z.nrows()))
        } else {
            self.mean(z)
        }
    }
}

/// Fits the exposure model on unlabeled data and derives `h` (on that data)
/// and the transform.
pub fn build_h_and_transform(
    unlab: &UnlabeledData,
    family: XFamily,
    cfg: &LearnerConfig,
    rng: &RngHandle,
) -> Result<(Array2<f64>, Transform, XModel)> {
    let model = fit_x_model(unlab, family, cfg, rng)?;
    let h = model.h(&unlab.z)?;
    Ok((h, model.transform(), model))
}

pub fn fit_x_model(unlab: &UnlabeledData, family: XFamily, cfg: &LearnerConfig, rng: &RngHandle) -> Result<XModel> {
    if family.is_binary() && !is_binary(&unlab.x) {
        let row = unlab.x.iter().position(|&v| v != 0.0 && v != 1.0).unwrap_or(0);
        return Err(MaxwayError::BadBinary { field: "x".into(), row, value: unlab.x[row] });
    }
    let fit = match family {
        XFamily::GaussianLinear => FittedModel::Linear(fit_lasso(&unlab.z, &unlab.x, Family::Gaussian, &cfg.lasso, rng)?.fit),
        XFamily::Logistic => FittedModel::Linear(fit_lasso(&unlab.z, &unlab.x, Family::Logistic, &cfg.lasso, rng)?.fit),
        XFamily::ForestGaussian => FittedModel::Forest(fit_forest(&unlab.z, &unlab.x, ForestTask::Regression, &cfg.forest, rng)?),
        XFamily::ForestBinary => FittedModel::Forest(fit_forest(&unlab.z, &unlab.x, ForestTask::Classification, &cfg.forest, rng)?),
    };
    Ok(XModel::new(family, fit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSource {
    LabeledTest,
    Unlabeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HRole {
    Predictor,
    Offset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustLearner {
    Linear,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxwayFamily {
    Gaussian,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaxwayConfig {
    pub adjust: AdjustLearner,
    pub variance_source: VarianceSource,
    pub h_role: HRole,
    pub clip: f64,
    pub forest: ForestConfig,
}

impl Default for MaxwayConfig {
    fn default() -> Self {
        MaxwayConfig {
            adjust: AdjustLearner::Linear,
            variance_source: VarianceSource::LabeledTest,
            h_role: HRole::Predictor,
            clip: DEFAULT_CLIP,
            forest: ForestConfig::default(),
        }
    }
}

/// Fitted law of the (transformed) exposure given `(g, h)`.
#[derive(Debug, Clone, PartialEq)]
pub enum MaxwayDistribution {
    GaussianOnG { mean_model: FittedModel, sigma2: f64, flags: Vec<Flag> },
    BernoulliOnGh { prob_model: FittedModel, h_offset: bool, clip: f64, flags: Vec<Flag> },
}

impl MaxwayDistribution {
    /// `N(c·g₁, τ²)` with no intercept; the exact law when `g` is a single
    /// linear predictor jointly Gaussian with the transformed exposure.
    pub fn gaussian_linear(coef: Array1<f64>, sigma2: f64) -> Self {
        MaxwayDistribution::GaussianOnG {
            mean_model: FittedModel::Linear(LinearFit::new(0.0, coef, Family::Gaussian)),
            sigma2,
            flags: Vec::new(),
        }
    }

    pub fn flags(&self) -> &[Flag] {
        match self {
            MaxwayDistribution::GaussianOnG { flags, .. } | MaxwayDistribution::BernoulliOnGh { flags, .. } => flags,
        }
    }

    /// Per-row law on the dataset described by `stats`.
    pub fn law(&self, stats: &SufficientStats) -> Result<XLaw> {
        match self {
            MaxwayDistribution::GaussianOnG { mean_model, sigma2, .. } => {
                Ok(XLaw::Gaussian { mean: mean_model.predict(&stats.features())?, sd: sigma2.sqrt() })
            }
            MaxwayDistribution::BernoulliOnGh { prob_model, h_offset, clip, .. } => {
                let prob = if *h_offset {
                    let FittedModel::Linear(f) = prob_model else {
                        return Err(MaxwayError::InvalidConfig("h offset requires a logistic adjustment".into()));
                    };
                    let eta = f.linear_predictor(&stats.g)? + &offset_column(stats)?;
                    eta.mapv(expit)
                } else {
                    prob_model.predict(&stats.features())?
                };
                Ok(XLaw::Bernoulli { prob: prob.mapv(|p| p.clamp(*clip, 1.0 - *clip)) })
            }
        }
    }
}

fn offset_column(stats: &SufficientStats) -> Result<Array1<f64>> {
    match stats.h.ncols() {
        1 => Ok(stats.h.column(0).to_owned()),
        c => Err(MaxwayError::InvalidConfig(format!("h offset needs exactly one h column, found {c}"))),
    }
}

fn fit_logistic_reduced(x: &Array2<f64>, y: &Array1<f64>, offset: Option<&Array1<f64>>) -> Result<LinearFit> {
    let keep = independent_columns(x, true);
    let sub = fit_logistic_lowdim_with_offset(&x.select(Axis(1), &keep), y, offset, LOWDIM_MAX_ITER)?;
    let mut coef = Array1::zeros(x.ncols());
    for (c, &j) in sub.coef.iter().zip(&keep) {
        coef[j] = *c;
    }
    let mut flags = sub.flags.clone();
    if keep.len() < x.ncols() {
        let dropped = (0..x.ncols()).filter(|j| !keep.contains(j)).collect();
        push_flag(&mut flags, Flag::CollinearColumnsDropped { columns: dropped });
    }
    Ok(LinearFit { coef, flags, ..sub })
}

/// Fits the Maxway distribution of `r_or_x` on the training stats.
///
/// For the Gaussian family the residual variance is taken from `test`
/// (transformed exposure and stats on the labeled test rows) when the
/// variance source asks for it and `test` is given.
pub fn fit_maxway(
    r_or_x: &Array1<f64>,
    stats: &SufficientStats,
    family: MaxwayFamily,
    cfg: &MaxwayConfig,
    test: Option<(&Array1<f64>, &SufficientStats)>,
    rng: &RngHandle,
) -> Result<MaxwayDistribution> {
    if r_or_x.len() != stats.n() {
        return Err(MaxwayError::DimensionMismatch(format!("exposure has {} rows, stats {}", r_or_x.len(), stats.n())));
    }
    let feats = stats.features();
    match family {
        MaxwayFamily::Gaussian => {
            let mean_model = match cfg.adjust {
                AdjustLearner::Linear => FittedModel::Linear(fit_ols_reduced(&feats, r_or_x, true)?),
                AdjustLearner::Forest => FittedModel::Forest(fit_forest(&feats, r_or_x, ForestTask::Regression, &cfg.forest, rng)?),
            };
            let (rv, fv) = match (cfg.variance_source, test) {
                (VarianceSource::LabeledTest, Some((r, s))) => (r.clone(), s.features()),
                _ => (r_or_x.clone(), feats),
            };
            let resid = &rv - &mean_model.predict(&fv)?;
            let raw = resid.mapv(|e| e * e).mean().unwrap_or(0.0);
            let mut flags = mean_model.flags().to_vec();
            let sigma2 = if raw < VARIANCE_FLOOR || !raw.is_finite() {
                push_flag(&mut flags, Flag::VarianceFloorHit);
                VARIANCE_FLOOR
            } else {
                raw
            };
            Ok(MaxwayDistribution::GaussianOnG { mean_model, sigma2, flags })
        }
        MaxwayFamily::Bernoulli => {
            if !is_binary(r_or_x) {
                let row = r_or_x.iter().position(|&v| v != 0.0 && v != 1.0).unwrap_or(0);
                return Err(MaxwayError::BadBinary { field: "x".into(), row, value: r_or_x[row] });
            }
            let h_offset = cfg.h_role == HRole::Offset && cfg.adjust == AdjustLearner::Linear;
            let prob_model = match cfg.adjust {
                AdjustLearner::Linear if h_offset => {
                    FittedModel::Linear(fit_logistic_reduced(&stats.g, r_or_x, Some(&offset_column(stats)?))?)
                }
                AdjustLearner::Linear => FittedModel::Linear(fit_logistic_reduced(&feats, r_or_x, None)?),
                AdjustLearner::Forest => {
                    FittedModel::Forest(fit_forest(&feats, r_or_x, ForestTask::Classification, &cfg.forest, rng)?)
                }
            };
            let flags = prob_model.flags().to_vec();
            Ok(MaxwayDistribution::BernoulliOnGh { prob_model, h_offset, clip: cfg.clip, flags })
        }
    }
}

/// Independent per-row law of an exposure vector.
#[derive(Debug, Clone, PartialEq)]
pub enum XLaw {
    Gaussian { mean: Array1<f64>, sd: f64 },
    Bernoulli { prob: Array1<f64> },
}

impl XLaw {
    pub fn n(&self) -> usize {
        match self {
            XLaw::Gaussian { mean, .. } => mean.len(),
            XLaw::Bernoulli { prob } => prob.len(),
        }
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Array1<f64> {
        match self {
            XLaw::Gaussian { mean, sd } => mean.mapv(|m| m + sd * rng.sample::<f64, _>(StandardNormal)),
            XLaw::Bernoulli { prob } => prob.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 }),
        }
    }

    /// Log density (up to a constant shared by all rows) of value `v` at row `i`.
    pub fn log_density(&self, i: usize, v: f64) -> f64 {
        match self {
            XLaw::Gaussian { mean, sd } => {
                let d = (v - mean[i]) / sd;
                -0.5 * d * d
            }
            XLaw::Bernoulli { prob } => {
                if v == 1.0 {
                    prob[i].ln()
                } else {
                    (1.0 - prob[i]).ln()
                }
            }
        }
    }

    /// Log density ratio of exchanging the values `a` (row `i`) and `b` (row `j`).
    pub fn swap_log_ratio(&self, i: usize, j: usize, a: f64, b: f64) -> f64 {
        match self {
            XLaw::Gaussian { mean, sd } => -(a - b) * (mean[i] - mean[j]) / (sd * sd),
            _ => self.log_density(i, b) + self.log_density(j, a) - self.log_density(i, a) - self.log_density(j, b),
        }
    }
}

/// `m` independent draws; draw `i` uses stream `[i]` of `rng`.
pub fn sample_maxway(dist: &MaxwayDistribution, stats: &SufficientStats, m: usize, rng: &RngHandle) -> Result<Vec<Array1<f64>>> {
    let law = dist.law(stats)?;
    Ok((0..m).map(|i| law.draw(&mut rng.derive(&[i as u64]).rng())).collect())
}
