use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};

use super::{Family, LinearFit};
use crate::error::{Flag, MaxwayError, Result};

const RANK_TOL: f64 = 1e-10;

/// Columns that are (numerically) linear combinations of earlier columns,
/// found by modified Gram–Schmidt with reorthogonalization.
fn dependent_columns(a: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for j in 0..a.ncols() {
        let orig = a.column(j).into_owned();
        let norm0 = orig.norm();
        let mut v = orig;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v -= q * c;
            }
        }
        let nv = v.norm();
        if norm0 == 0.0 || nv <= RANK_TOL * norm0.max(1e-300) {
            bad.push(j);
        } else {
            basis.push(v / nv);
        }
    }
    bad
}

/// Least-squares coefficients of `y` on the columns of `a` via Householder QR.
pub fn solve_least_squares(a: &Array2<f64>, y: &Array1<f64>) -> Result<Array1<f64>> {
    let (n, k) = a.dim();
    if y.len() != n {
        return Err(MaxwayError::DimensionMismatch(format!("design has {n} rows, y has {}", y.len())));
    }
    if k > n {
        return Err(MaxwayError::RankDeficient { columns: (n..k).collect() });
    }
    let m = DMatrix::from_fn(n, k, |i, j| a[[i, j]]);
    let bad = dependent_columns(&m);
    if !bad.is_empty() {
        return Err(MaxwayError::RankDeficient { columns: bad });
    }
    let qr = m.qr();
    let rhs = qr.q().transpose() * DVector::from_iterator(n, y.iter().copied());
    let r = qr.r();
    let sol = r
        .solve_upper_triangular(&rhs)
        .ok_or(MaxwayError::RankDeficient { columns: Vec::new() })?;
    Ok(Array1::from_iter(sol.iter().copied()))
}

/// Indices of the columns of `x` kept after dropping those that are linear
/// combinations of earlier columns (and of the intercept when requested).
pub fn independent_columns(x: &Array2<f64>, intercept: bool) -> Vec<usize> {
    let (n, p) = x.dim();
    let off = usize::from(intercept);
    let m = DMatrix::from_fn(n, p + off, |i, j| if j < off { 1.0 } else { x[[i, j - off]] });
    let bad = dependent_columns(&m);
    (0..p).filter(|j| !bad.contains(&(j + off))).collect()
}

/// OLS after dropping dependent columns; dropped columns get coefficient 0.
pub fn fit_ols_reduced(x: &Array2<f64>, y: &Array1<f64>, intercept: bool) -> Result<LinearFit> {
    let keep = independent_columns(x, intercept);
    if keep.len() == x.ncols() {
        return fit_ols(x, y, intercept);
    }
    let sub = fit_ols(&x.select(ndarray::Axis(1), &keep), y, intercept)?;
    let mut coef = Array1::zeros(x.ncols());
    for (c, &j) in sub.coef.iter().zip(&keep) {
        coef[j] = *c;
    }
    let dropped: Vec<usize> = (0..x.ncols()).filter(|j| !keep.contains(j)).collect();
    Ok(LinearFit { coef, flags: vec![Flag::CollinearColumnsDropped { columns: dropped }], ..sub })
}

/// Ordinary least squares, optionally with an intercept column.
pub fn fit_ols(x: &Array2<f64>, y: &Array1<f64>, intercept: bool) -> Result<LinearFit> {
    let (n, p) = x.dim();
    let design = if intercept {
        let mut d = Array2::ones((n, p + 1));
        d.slice_mut(ndarray::s![.., 1..]).assign(x);
        d
    } else {
        x.clone()
    };
    let beta = solve_least_squares(&design, y).map_err(|e| match e {
        // report offending columns in the caller's indexing
        MaxwayError::RankDeficient { columns } if intercept => MaxwayError::RankDeficient {
            columns: columns.into_iter().filter(|&c| c > 0).map(|c| c - 1).collect(),
        },
        other => other,
    })?;
    let (b0, coef) = if intercept {
        (beta[0], beta.slice(ndarray::s![1..]).to_owned())
    } else {
        (0.0, beta)
    };
    let fitted = x.dot(&coef) + b0;
    let sigma2 = (y - &fitted).mapv(|r| r * r).sum() / n as f64;
    Ok(LinearFit { intercept: b0, coef, family: Family::Gaussian, lambda: 0.0, sigma2: Some(sigma2), flags: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Normal equations solved by Gauss–Jordan elimination with partial pivoting.
    fn normal_equations(a: &Array2<f64>, y: &Array1<f64>) -> Vec<f64> {
        let k = a.ncols();
        let ata = a.t().dot(a);
        let aty = a.t().dot(y);
        let mut m: Vec<Vec<f64>> = (0..k).map(|i| {
            let mut row: Vec<f64> = ata.row(i).to_vec();
            row.push(aty[i]);
            row
        }).collect();
        for c in 0..k {
            let piv = (c..k).max_by(|&i, &j| m[i][c].abs().partial_cmp(&m[j][c].abs()).unwrap()).unwrap();
            m.swap(c, piv);
            for r in 0..k {
                if r != c {
                    let f = m[r][c] / m[c][c];
                    for cc in c..=k {
                        m[r][cc] -= f * m[c][cc];
                    }
                }
            }
        }
        (0..k).map(|i| m[i][k] / m[i][i]).collect()
    }

    #[test]
    fn reduced_fit_drops_collinear_columns() {
        let x = array![[1.0, 2.0, 0.5], [2.0, 4.0, -1.0], [3.0, 6.0, 2.0], [4.0, 8.0, 0.0], [5.0, 10.0, 1.0]];
        let y = array![1.0, 2.0, 2.5, 4.0, 5.5];
        assert_eq!(independent_columns(&x, true), vec![0, 2]);
        let fit = fit_ols_reduced(&x, &y, true).unwrap();
        assert_eq!(fit.coef[1], 0.0);
        let direct = fit_ols(&x.select(ndarray::Axis(1), &[0, 2]), &y, true).unwrap();
        assert!((fit.coef[0] - direct.coef[0]).abs() < 1e-12 && (fit.intercept - direct.intercept).abs() < 1e-12);
        assert!(matches!(&fit.flags[0], Flag::CollinearColumnsDropped { columns } if columns == &vec![1]));
    }

    #[test]
    fn exact_fit() {
        let f = fit_ols(&array![[1.0], [2.0], [3.0]], &array![2.0, 4.0, 6.0], false).unwrap();
        assert!((f.coef[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn orthogonal_response() {
        let f = fit_ols(&array![[1.0], [-1.0], [1.0], [-1.0]], &array![1.0, 1.0, -1.0, -1.0], false).unwrap();
        assert!(f.coef[0].abs() < 1e-14);
    }

    #[test]
    fn matches_normal_equations_and_residuals_orthogonal() {
        let mut r = RngHandle::new(8).rng();
        let x = Array2::from_shape_fn((20, 3), |_| r.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(20, |_| r.sample::<f64, _>(StandardNormal));
        let f = fit_ols(&x, &y, true).unwrap();
        let mut aug = Array2::ones((20, 4));
        aug.slice_mut(ndarray::s![.., 1..]).assign(&x);
        let oracle = normal_equations(&aug, &y);
        assert!((f.intercept - oracle[0]).abs() < 1e-8);
        for j in 0..3 {
            assert!((f.coef[j] - oracle[j + 1]).abs() < 1e-8);
        }
        let res = &y - &(x.dot(&f.coef) + f.intercept);
        let scale = y.dot(&y).sqrt();
        for j in 0..3 {
            assert!(x.column(j).dot(&res).abs() / (scale * x.column(j).dot(&x.column(j)).sqrt()) < 1e-8);
        }
    }

    #[test]
    fn rank_deficiency_reports_column() {
        let x = array![[1.0, 2.0, 0.5], [2.0, 4.0, 0.1], [3.0, 6.0, 0.7], [4.0, 8.0, 0.2]];
        let e = fit_ols(&x, &array![1.0, 2.0, 3.0, 4.0], true).unwrap_err();
        assert_eq!(e, MaxwayError::RankDeficient { columns: vec![1] });
    }
}
