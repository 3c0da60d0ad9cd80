//! Supervised learners used to build sufficient statistics, exposure models
//! and the random-forest test statistic.

mod forest;
mod lasso;
mod logistic;
mod ols;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Flag, MaxwayError, Result};

pub use forest::{fit_forest, ForestConfig, ForestFit, ForestTask, Tree};
pub use lasso::{
    fit_lasso, fit_lasso_fixed, lambda_max, lasso_kkt_violation, lasso_objective_trace, CvRule,
    LambdaSelection, LassoConfig, LassoFit,
};
pub use logistic::{fit_logistic_lowdim, fit_logistic_lowdim_with_offset};
pub use ols::{fit_ols, fit_ols_reduced, independent_columns, solve_least_squares};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Logistic,
}

/// Linear or generalized linear fit on the original feature scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub coef: Array1<f64>,
    pub family: Family,
    /// Penalty level; 0 for unpenalized fits.
    pub lambda: f64,
    /// Mean squared residual for Gaussian fits.
    pub sigma2: Option<f64>,
    #[serde(default)]
    pub flags: Vec<Flag>,
}

impl LinearFit {
    pub fn new(intercept: f64, coef: Array1<f64>, family: Family) -> Self {
        LinearFit { intercept, coef, family, lambda: 0.0, sigma2: None, flags: Vec::new() }
    }

    pub fn linear_predictor(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.coef.len() {
            return Err(MaxwayError::DimensionMismatch(format!(
                "model has {} features, input has {}",
                self.coef.len(),
                x.ncols()
            )));
        }
        Ok(x.dot(&self.coef) + self.intercept)
    }

    /// Mean response: the linear predictor, or its expit for logistic fits.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        let eta = self.linear_predictor(x)?;
        Ok(match self.family {
            Family::Gaussian => eta,
            Family::Logistic => eta.mapv(expit),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedModel {
    Linear(LinearFit),
    Forest(ForestFit),
}

impl FittedModel {
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        match self {
            FittedModel::Linear(f) => f.predict(x),
            FittedModel::Forest(f) => f.predict(x),
        }
    }

    /// Feature scores used for ranking: `|coef|` or impurity importance.
    pub fn feature_scores(&self) -> Vec<f64> {
        match self {
            FittedModel::Linear(f) => f.coef.iter().map(|c| c.abs()).collect(),
            FittedModel::Forest(f) => f.importance.to_vec(),
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::Linear(f) => f.coef.len(),
            FittedModel::Forest(f) => f.n_features,
        }
    }

    pub fn flags(&self) -> &[Flag] {
        match self {
            FittedModel::Linear(f) => &f.flags,
            FittedModel::Forest(f) => &f.flags,
        }
    }
}

/// Shorthand for [`FittedModel::predict`].
pub fn predict(fit: &FittedModel, x: &Array2<f64>) -> Result<Array1<f64>> {
    fit.predict(x)
}

/// Indices of the `k` largest scores; ties go to the lower index.
pub fn top_k_by_score(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps ascending index order among equal scores
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    idx.truncate(k.min(scores.len()));
    idx
}

pub fn top_k_features(fit: &FittedModel, k: usize) -> Result<Vec<usize>> {
    let p = fit.n_features();
    if k > p {
        return Err(MaxwayError::InvalidConfig(format!("k={k} exceeds the {p} features")));
    }
    Ok(top_k_by_score(&fit.feature_scores(), k))
}

pub fn expit(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn affine_prediction() {
        let fit = LinearFit::new(1.0, array![2.0], Family::Gaussian);
        assert_eq!(fit.predict(&array![[3.0]]).unwrap(), array![7.0]);
    }

    #[test]
    fn logistic_null_prediction_is_half() {
        let fit = LinearFit::new(0.0, array![0.0, 0.0], Family::Logistic);
        let p = fit.predict(&array![[1.0, -4.0], [0.3, 9.0]]).unwrap();
        assert_eq!(p, array![0.5, 0.5]);
    }

    #[test]
    fn prediction_checks_columns() {
        let fit = LinearFit::new(0.0, array![1.0, 2.0], Family::Gaussian);
        assert!(matches!(fit.predict(&array![[1.0]]), Err(MaxwayError::DimensionMismatch(_))));
    }

    #[test]
    fn top_k_magnitude_and_ties() {
        let m = FittedModel::Linear(LinearFit::new(0.0, array![0.1, -3.0, 2.0], Family::Gaussian));
        assert_eq!(top_k_features(&m, 2).unwrap(), vec![1, 2]);
        let z = FittedModel::Linear(LinearFit::new(0.0, array![0.0, 0.0, 0.0], Family::Gaussian));
        assert_eq!(top_k_features(&z, 2).unwrap(), vec![0, 1]);
        assert_eq!(top_k_by_score(&[0.5, 0.5, 0.0], 1), vec![0]);
        assert!(top_k_features(&z, 4).is_err());
    }

    #[test]
    fn expit_is_stable() {
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(-800.0) >= 0.0 && expit(800.0) <= 1.0);
        assert!((logit(expit(1.3)) - 1.3).abs() < 1e-12);
    }
}
