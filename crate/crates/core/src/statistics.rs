//! Test statistics evaluated on `(y, x-or-r, g(Z), h(Z))`.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Flag, MaxwayError, Result};
use crate::learners::{fit_forest, solve_least_squares, ForestConfig, ForestTask};
use crate::rng::RngHandle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StatSpec {
    /// `|ε_yᵀ ε_x|`
    D0,
    /// Main effect plus averaged squared interaction coefficients.
    #[serde(rename = "dI")]
    DI {
        #[serde(default)]
        intercept: bool,
    },
    /// `|xᵀy|` on the raw exposure and response.
    InnerProduct,
    /// Forest importance of the `ε_x` column.
    RfImportance {
        #[serde(default)]
        config: ForestConfig,
    },
}

impl StatSpec {
    pub fn label(&self) -> &'static str {
        match self {
            StatSpec::D0 => "d0",
            StatSpec::DI { .. } => "dI",
            StatSpec::InnerProduct => "inner_product",
            StatSpec::RfImportance { .. } => "rf",
        }
    }

    pub fn di() -> Self {
        StatSpec::DI { intercept: false }
    }

    pub fn rf() -> Self {
        StatSpec::RfImportance { config: ForestConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPair {
    pub eps_y: Array1<f64>,
    pub eps_x: Array1<f64>,
}

impl ResidualPair {
    pub fn new(eps_y: Array1<f64>, eps_x: Array1<f64>) -> Result<Self> {
        if eps_y.len() != eps_x.len() {
            return Err(MaxwayError::DimensionMismatch(format!(
                "eps_y has {} entries, eps_x has {}",
                eps_y.len(),
                eps_x.len()
            )));
        }
        for (name, v) in [("eps_y", &eps_y), ("eps_x", &eps_x)] {
            if let Some(row) = v.iter().position(|a| !a.is_finite()) {
                return Err(MaxwayError::NonFinite { field: name.into(), row });
            }
        }
        Ok(ResidualPair { eps_y, eps_x })
    }
}

pub fn stat_d0(res: &ResidualPair) -> f64 {
    res.eps_y.dot(&res.eps_x).abs()
}

pub fn stat_inner_product(y: &Array1<f64>, x: &Array1<f64>) -> f64 {
    y.dot(x).abs()
}

/// d_I without intercept; see [`stat_di_with`].
pub fn stat_di(res: &ResidualPair, z_top: &Array2<f64>) -> Result<(f64, Option<Flag>)> {
    stat_di_with(res, z_top, false)
}

/// Regresses `ε_y` on `(ε_x, ε_x ⊙ Z_top)` and returns `β₁² + mean(β₂..β_{k+1})²`.
/// A rank-deficient design is solved by a tiny ridge and flagged.
pub fn stat_di_with(res: &ResidualPair, z_top: &Array2<f64>, intercept: bool) -> Result<(f64, Option<Flag>)> {
    let n = res.eps_x.len();
    let k = z_top.ncols();
    if k == 0 {
        return Err(MaxwayError::InvalidConfig("dI needs at least one top column".into()));
    }
    if z_top.nrows() != n {
        return Err(MaxwayError::DimensionMismatch(format!("Z_top has {} rows, residuals {n}", z_top.nrows())));
    }
    let cols = k + 1 + usize::from(intercept);
    let mut design = Array2::zeros((n, cols));
    for i in 0..n {
        let e = res.eps_x[i];
        design[[i, 0]] = e;
        for j in 0..k {
            design[[i, j + 1]] = e * z_top[[i, j]];
        }
        if intercept {
            design[[i, k + 1]] = 1.0;
        }
    }
    let (beta, flag) = match solve_least_squares(&design, &res.eps_y) {
        Ok(b) => (b, None),
        Err(MaxwayError::RankDeficient { .. }) => (ridge_solve(&design, &res.eps_y, k + 1), Some(Flag::RankDeficientFallback)),
        Err(e) => return Err(e),
    };
    let inter: f64 = (1..=k).map(|j| beta[j] * beta[j]).sum::<f64>() / k as f64;
    Ok((beta[0] * beta[0] + inter, flag))
}

fn ridge_solve(design: &Array2<f64>, y: &Array1<f64>, scale_cols: usize) -> Array1<f64> {
    let (n, c) = design.dim();
    let a = DMatrix::from_fn(n, c, |i, j| design[[i, j]]);
    let mut gram = a.tr_mul(&a);
    let penalty = (1e-8 * gram.trace() / scale_cols as f64).max(1e-300);
    for j in 0..c {
        gram[(j, j)] += penalty;
    }
    let rhs = a.tr_mul(&DVector::from_iterator(n, y.iter().copied()));
    let sol = gram
        .clone()
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .unwrap_or_else(|| gram.lu().solve(&rhs).unwrap_or_else(|| DVector::zeros(c)));
    Array1::from_iter(sol.iter().copied())
}

/// Impurity importance of `ε_x` in a regression forest of `ε_y` on `(ε_x, Z_top)`.
pub fn stat_rf_importance(res: &ResidualPair, z_top: &Array2<f64>, config: &ForestConfig, rng: &RngHandle) -> Result<f64> {
    let n = res.eps_x.len();
    if z_top.nrows() != n {
        return Err(MaxwayError::DimensionMismatch(format!("Z_top has {} rows, residuals {n}", z_top.nrows())));
    }
    let mut design = Array2::zeros((n, z_top.ncols() + 1));
    design.column_mut(0).assign(&res.eps_x);
    design.slice_mut(ndarray::s![.., 1..]).assign(z_top);
    let fit = fit_forest(&design, &res.eps_y, ForestTask::Regression, config, rng)?;
    Ok(fit.importance[0])
}

/// Everything a statistic needs besides the exposure vector being scored.
///
/// `eps_x` for a candidate vector `v` is `v − center`.
#[derive(Debug, Clone)]
pub struct StatContext {
    pub y: Array1<f64>,
    pub eps_y: Array1<f64>,
    pub center: Array1<f64>,
    pub z_top: Array2<f64>,
    /// Stream shared by every forest-importance evaluation.
    pub rf_rng: RngHandle,
}

impl StatContext {
    pub fn new(y: Array1<f64>, eps_y: Array1<f64>, center: Array1<f64>, z_top: Array2<f64>, rf_rng: RngHandle) -> Result<Self> {
        let n = y.len();
        if eps_y.len() != n || center.len() != n || z_top.nrows() != n {
            return Err(MaxwayError::DimensionMismatch("statistic inputs must share rows".into()));
        }
        Ok(StatContext { y, eps_y, center, z_top, rf_rng })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn residuals(&self, v: &Array1<f64>) -> ResidualPair {
        ResidualPair { eps_y: self.eps_y.clone(), eps_x: v - &self.center }
    }

    pub fn evaluate(&self, stat: &StatSpec, v: &Array1<f64>) -> Result<(f64, Option<Flag>)> {
        if v.len() != self.n() {
            return Err(MaxwayError::DimensionMismatch(format!("exposure has {} entries, expected {}", v.len(), self.n())));
        }
        match stat {
            StatSpec::D0 => {
                let t: f64 = self.eps_y.iter().zip(v.iter().zip(&self.center)).map(|(e, (a, c))| e * (a - c)).sum();
                Ok((t.abs(), None))
            }
            StatSpec::InnerProduct => Ok((stat_inner_product(&self.y, v), None)),
            StatSpec::DI { intercept } => stat_di_with(&self.residuals(v), &self.z_top, *intercept),
            StatSpec::RfImportance { config } => Ok((stat_rf_importance(&self.residuals(v), &self.z_top, config, &self.rf_rng)?, None)),
        }
    }

    pub fn restrict_top(&self, k: usize) -> StatContext {
        let k = k.min(self.z_top.ncols());
        let idx: Vec<usize> = (0..k).collect();
        StatContext { z_top: self.z_top.select(Axis(1), &idx), ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gauss(n: usize, r: &mut impl Rng) -> Array1<f64> {
        Array1::from_iter((0..n).map(|_| r.sample::<f64, _>(StandardNormal)))
    }

    #[test]
    fn d0_arithmetic() {
        let res = ResidualPair::new(array![1.0, 2.0], array![3.0, -1.0]).unwrap();
        assert_eq!(stat_d0(&res), 1.0);
        let zero = ResidualPair::new(array![1.0, 2.0], array![0.0, 0.0]).unwrap();
        assert_eq!(stat_d0(&zero), 0.0);
    }

    #[test]
    fn d0_matches_naive_sum() {
        let mut r = RngHandle::new(4).rng();
        let (a, b) = (gauss(100, &mut r), gauss(100, &mut r));
        let mut naive = 0.0;
        for i in 0..100 {
            naive += a[i] * b[i];
        }
        let t = stat_d0(&ResidualPair::new(a.clone(), b.clone()).unwrap());
        assert!((t - naive.abs()).abs() <= 1e-12 * naive.abs());
        assert!((stat_inner_product(&a, &b) - naive.abs()).abs() <= 1e-12 * naive.abs());
        assert_eq!(stat_d0(&ResidualPair::new(-&a, -&b).unwrap()), t);
        assert!((stat_d0(&ResidualPair::new(a, -2.5 * &b).unwrap()) - 2.5 * t).abs() < 1e-10 * t);
    }

    #[test]
    fn inner_product_basics() {
        assert_eq!(stat_inner_product(&array![1.0, 1.0], &array![1.0, 1.0]), 2.0);
        assert_eq!(stat_inner_product(&array![1.0, -1.0], &array![1.0, 1.0]), 0.0);
    }

    #[test]
    fn di_exact_main_effect() {
        let ex = array![1.0, -1.0, 1.0, -1.0];
        let res = ResidualPair::new(2.0 * &ex, ex).unwrap();
        // interaction columns ε_x⊙Z equal (1,1,-1,-1), orthogonal to ε_x
        let z = array![[1.0], [-1.0], [-1.0], [1.0]];
        let (t, flag) = stat_di(&res, &z).unwrap();
        assert!((t - 4.0).abs() < 1e-12);
        assert!(flag.is_none());
    }

    #[test]
    fn di_orthogonal_response_is_zero() {
        let ex = array![1.0, 1.0, 1.0, 1.0];
        let z = array![[1.0], [-1.0], [1.0], [-1.0]];
        let ey = array![1.0, 1.0, -1.0, -1.0];
        let (t, _) = stat_di(&ResidualPair::new(ey, ex).unwrap(), &z).unwrap();
        assert!(t.abs() < 1e-10);
    }

    #[test]
    fn di_matches_normal_equations() {
        let mut r = RngHandle::new(11).rng();
        let (n, k) = (50, 3);
        let ex = gauss(n, &mut r);
        let ey = gauss(n, &mut r);
        let z = Array2::from_shape_fn((n, k), |_| r.sample::<f64, _>(StandardNormal));
        let mut d = vec![vec![0.0; k + 1]; n];
        for i in 0..n {
            d[i][0] = ex[i];
            for j in 0..k {
                d[i][j + 1] = ex[i] * z[[i, j]];
            }
        }
        // Gauss–Jordan on DᵀD β = Dᵀε_y
        let c = k + 1;
        let mut m = vec![vec![0.0; c + 1]; c];
        for a in 0..c {
            for b in 0..c {
                m[a][b] = (0..n).map(|i| d[i][a] * d[i][b]).sum();
            }
            m[a][c] = (0..n).map(|i| d[i][a] * ey[i]).sum();
        }
        for col in 0..c {
            for row in 0..c {
                if row != col {
                    let f = m[row][col] / m[col][col];
                    for cc in 0..=c {
                        m[row][cc] -= f * m[col][cc];
                    }
                }
            }
        }
        let beta: Vec<f64> = (0..c).map(|j| m[j][c] / m[j][j]).collect();
        let oracle = beta[0] * beta[0] + beta[1..].iter().map(|b| b * b).sum::<f64>() / k as f64;
        let (t, _) = stat_di(&ResidualPair::new(ey, ex).unwrap(), &z).unwrap();
        assert!((t - oracle).abs() < 1e-8);
    }

    #[test]
    fn di_rank_deficient_falls_back() {
        let ex = array![1.0, 0.0, 1.0, 0.0, 1.0];
        let z = array![[1.0], [2.0], [1.0], [3.0], [1.0]];
        let ey = array![0.5, 0.1, 0.4, -0.2, 0.6];
        let (t, flag) = stat_di(&ResidualPair::new(ey, ex).unwrap(), &z).unwrap();
        assert!(t.is_finite() && t >= 0.0);
        assert_eq!(flag, Some(Flag::RankDeficientFallback));
    }

    #[test]
    fn di_needs_top_columns() {
        let res = ResidualPair::new(array![1.0, 2.0, 3.0], array![1.0, 0.0, 1.0]).unwrap();
        assert!(stat_di(&res, &Array2::zeros((3, 0))).is_err());
    }

    #[test]
    fn rf_constant_response_is_zero() {
        let mut r = RngHandle::new(2).rng();
        let res = ResidualPair::new(Array1::from_elem(40, 1.0), gauss(40, &mut r)).unwrap();
        let z = Array2::from_shape_fn((40, 2), |_| r.sample::<f64, _>(StandardNormal));
        let cfg = ForestConfig { n_trees: 10, ..Default::default() };
        assert_eq!(stat_rf_importance(&res, &z, &cfg, &RngHandle::new(0)).unwrap(), 0.0);
    }

    #[test]
    fn rf_importance_deterministic_and_dominant() {
        let mut hits = 0;
        for seed in 0..20u64 {
            let mut r = RngHandle::new(100 + seed).rng();
            let ex = gauss(200, &mut r);
            let z = Array2::from_shape_fn((200, 3), |_| r.sample::<f64, _>(StandardNormal));
            let res = ResidualPair::new(ex.clone(), ex).unwrap();
            let cfg = ForestConfig { n_trees: 30, ..Default::default() };
            let a = stat_rf_importance(&res, &z, &cfg, &RngHandle::new(seed)).unwrap();
            let b = stat_rf_importance(&res, &z, &cfg, &RngHandle::new(seed)).unwrap();
            assert_eq!(a, b);
            if a > 0.5 {
                hits += 1;
            }
        }
        assert!(hits >= 18, "{hits}");
    }

    #[test]
    fn context_matches_free_functions() {
        let mut r = RngHandle::new(8).rng();
        let n = 30;
        let y = gauss(n, &mut r);
        let ey = gauss(n, &mut r);
        let center = gauss(n, &mut r);
        let z = Array2::from_shape_fn((n, 2), |_| r.sample::<f64, _>(StandardNormal));
        let ctx = StatContext::new(y.clone(), ey.clone(), center.clone(), z.clone(), RngHandle::new(1)).unwrap();
        let v = gauss(n, &mut r);
        let res = ResidualPair::new(ey, &v - &center).unwrap();
        let (t, _) = ctx.evaluate(&StatSpec::D0, &v).unwrap();
        assert!((t - stat_d0(&res)).abs() < 1e-12);
        assert_eq!(ctx.evaluate(&StatSpec::InnerProduct, &v).unwrap().0, stat_inner_product(&y, &v));
        assert_eq!(ctx.evaluate(&StatSpec::di(), &v).unwrap().0, stat_di(&res, &z).unwrap().0);
    }

    #[test]
    fn spec_serde_round_trip() {
        for s in [StatSpec::D0, StatSpec::di(), StatSpec::InnerProduct, StatSpec::rf()] {
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<StatSpec>(&j).unwrap(), s);
        }
        assert_eq!(serde_json::from_str::<StatSpec>(r#"{"kind":"dI"}"#).unwrap(), StatSpec::di());
    }
}
