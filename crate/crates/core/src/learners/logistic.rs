use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

use super::{expit, Family, LinearFit};
use crate::error::{Flag, MaxwayError, Result};

const GRAD_TOL: f64 = 1e-6;
const DIVERGED: f64 = 1e3;
/// Intercept reported when every label is identical.
const SATURATED_LOGIT: f64 = 27.6;

fn log_lik(y: &[f64], eta: &[f64]) -> f64 {
    y.iter()
        .zip(eta)
        .map(|(&yi, &e)| {
            let sp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - sp
        })
        .sum()
}

/// Unpenalized logistic regression with intercept, fitted by Newton/IRLS.
pub fn fit_logistic_lowdim(x: &Array2<f64>, y: &Array1<f64>, max_iter: usize) -> Result<LinearFit> {
    fit_logistic_lowdim_with_offset(x, y, None, max_iter)
}

/// As [`fit_logistic_lowdim`], with a fixed offset added to the linear predictor.
pub fn fit_logistic_lowdim_with_offset(
    x: &Array2<f64>,
    y: &Array1<f64>,
    offset: Option<&Array1<f64>>,
    max_iter: usize,
) -> Result<LinearFit> {
    let (n, p) = x.dim();
    if y.len() != n || offset.is_some_and(|o| o.len() != n) {
        return Err(MaxwayError::DimensionMismatch("logistic design, labels and offset must share rows".into()));
    }
    if let Some(row) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(MaxwayError::BadBinary { field: "y".into(), row, value: y[row] });
    }
    let yv = y.to_vec();
    let ones = yv.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        let b0 = if ones == n { SATURATED_LOGIT } else { -SATURATED_LOGIT };
        return Ok(LinearFit {
            intercept: b0,
            coef: Array1::zeros(p),
            family: Family::Logistic,
            lambda: 0.0,
            sigma2: None,
            flags: vec![Flag::Separation],
        });
    }
    let off: Vec<f64> = offset.map(|o| o.to_vec()).unwrap_or_else(|| vec![0.0; n]);
    let a = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { x[[i, j - 1]] });
    let yvec = DVector::from_vec(yv.clone());
    let mut beta = DVector::zeros(p + 1);
    let eta_of = |b: &DVector<f64>| -> Vec<f64> { (&a * b).iter().zip(&off).map(|(e, o)| e + o).collect() };
    let mut eta = eta_of(&beta);
    let mut ll = log_lik(&yv, &eta);
    let mut converged = false;
    let mut diverged = false;
    for _ in 0..max_iter {
        let mu: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let resid = &yvec - DVector::from_vec(mu.clone());
        let grad = a.tr_mul(&resid);
        if grad.amax() <= GRAD_TOL {
            converged = true;
            break;
        }
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        let mut h = DMatrix::zeros(p + 1, p + 1);
        for i in 0..n {
            let row = a.row(i);
            h.ger(w[i], &row.transpose(), &row.transpose(), 1.0);
        }
        let step = match h.clone().cholesky() {
            Some(c) => c.solve(&grad),
            None => {
                let ridge = 1e-10 * h.trace().max(1e-300);
                match (h + DMatrix::identity(p + 1, p + 1) * ridge).cholesky() {
                    Some(c) => c.solve(&grad),
                    None => {
                        diverged = true;
                        break;
                    }
                }
            }
        };
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let eta_c = eta_of(&cand);
            let ll_c = log_lik(&yv, &eta_c);
            if ll_c >= ll - 1e-12 * ll.abs() {
                beta = cand;
                eta = eta_c;
                ll = ll_c;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
        if beta.amax() > DIVERGED {
            diverged = true;
            break;
        }
    }
    let fitted_perfectly = yv.iter().zip(&eta).all(|(&yi, &e)| (yi - expit(e)).abs() < 1e-6);
    let mut flags = Vec::new();
    if diverged || fitted_perfectly {
        flags.push(Flag::Separation);
    } else if !converged {
        let mu: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let gap = a.tr_mul(&(&yvec - DVector::from_vec(mu))).amax();
        if beta.amax() > 20.0 {
            flags.push(Flag::Separation);
        } else {
            return Err(MaxwayError::NoConvergence { iterations: max_iter, gap });
        }
    }
    Ok(LinearFit {
        intercept: beta[0],
        coef: Array1::from_iter(beta.iter().skip(1).copied()),
        family: Family::Logistic,
        lambda: 0.0,
        sigma2: None,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::logit;
    use crate::rng::RngHandle;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// One-dimensional MLE by golden-section search on the log-likelihood.
    fn grid_mle_intercept(y: &[f64]) -> f64 {
        let ll = |b: f64| log_lik(y, &vec![b; y.len()]);
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if ll(a) > ll(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn independent_labels_give_logit_of_rate() {
        let mut r = RngHandle::new(4).rng();
        let n = 400;
        let x = Array2::from_shape_fn((n, 1), |_| r.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |_| if r.random::<f64>() < 0.5 { 1.0 } else { 0.0 });
        let f = fit_logistic_lowdim(&x, &y, 50).unwrap();
        let ybar = y.mean().unwrap();
        let oracle = grid_mle_intercept(y.as_slice().unwrap());
        assert!((oracle - logit(ybar)).abs() < 1e-6);
        // with an independent covariate the fit stays near the intercept-only MLE
        assert!((f.intercept - oracle).abs() < 0.05, "{} vs {}", f.intercept, oracle);
        assert!(f.coef[0].abs() < 0.25);
        assert!(f.flags.is_empty());
    }

    #[test]
    fn intercept_only_matches_mle_oracle() {
        let y = Array1::from_vec(vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
        let x = Array2::zeros((7, 0));
        let f = fit_logistic_lowdim(&x, &y, 50).unwrap();
        assert!((f.intercept - grid_mle_intercept(y.as_slice().unwrap())).abs() < 1e-6);
    }

    #[test]
    fn constant_labels_flag_separation() {
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let f = fit_logistic_lowdim(&x, &Array1::ones(10), 50).unwrap();
        assert!(f.flags.contains(&Flag::Separation));
        assert!(f.intercept > 20.0);
    }

    #[test]
    fn separable_design_flags_separation() {
        let xs = [-3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 3.0];
        let x = Array2::from_shape_fn((8, 1), |(i, _)| xs[i]);
        let y = Array1::from_iter(xs.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }));
        let f = fit_logistic_lowdim(&x, &y, 100).unwrap();
        assert!(f.flags.contains(&Flag::Separation));
    }

    #[test]
    fn stationary_point_gradient() {
        let mut r = RngHandle::new(6).rng();
        let n = 200;
        let x = Array2::from_shape_fn((n, 3), |_| r.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |i| if r.random::<f64>() < expit(x[[i, 0]] - 0.5 * x[[i, 2]]) { 1.0 } else { 0.0 });
        let f = fit_logistic_lowdim(&x, &y, 50).unwrap();
        let mu = f.predict(&x).unwrap();
        let res = &y - &mu;
        assert!(res.sum().abs() <= 1e-6);
        for j in 0..3 {
            assert!(x.column(j).dot(&res).abs() <= 1e-6);
        }
    }

    #[test]
    fn offset_is_respected() {
        let mut r = RngHandle::new(2).rng();
        let n = 300;
        let h = Array1::from_shape_fn(n, |_| r.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |i| if r.random::<f64>() < expit(h[i]) { 1.0 } else { 0.0 });
        let x = Array2::zeros((n, 0));
        let f = fit_logistic_lowdim_with_offset(&x, &y, Some(&h), 50).unwrap();
        assert!(f.intercept.abs() < 0.3);
    }
}
