//! Infinite-M p-values for a `N(μ_x, 1)` coordinatewise resampler.

use ndarray::Array1;
use libm::erfc;

use crate::error::{MaxwayError, Result};

pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / std::f64::consts::SQRT_2)
}

fn check_len(a: &Array1<f64>, b: &Array1<f64>, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(MaxwayError::DimensionMismatch(format!("{what}: {} vs {} entries", a.len(), b.len())));
    }
    Ok(())
}

/// Limit p-value of `T = |xᵀy|` when `x^(m) ~ N(μ_x, I)`.
pub fn analytic_pvalue_inner_product(y: &Array1<f64>, x: &Array1<f64>, mu_x: &Array1<f64>) -> Result<f64> {
    check_len(y, x, "y and x")?;
    check_len(y, mu_x, "y and mu_x")?;
    let norm = y.dot(y).sqrt();
    if norm == 0.0 {
        return Err(MaxwayError::ZeroNormY);
    }
    let t = x.dot(y).abs();
    let shift = mu_x.dot(y);
    Ok((std_normal_cdf((-shift - t) / norm) + std_normal_cdf((shift - t) / norm)).min(1.0))
}

/// Limit p-value of `T = |(x − μ_x)ᵀ(y − μ_y)|` when `x^(m) ~ N(μ_x, I)`.
pub fn analytic_pvalue_d0(y: &Array1<f64>, x: &Array1<f64>, mu_x: &Array1<f64>, mu_y: &Array1<f64>) -> Result<f64> {
    check_len(y, x, "y and x")?;
    check_len(y, mu_x, "y and mu_x")?;
    check_len(y, mu_y, "y and mu_y")?;
    let ey = y - mu_y;
    let norm = ey.dot(&ey).sqrt();
    if norm == 0.0 {
        return Err(MaxwayError::ZeroNormResidual);
    }
    let t = (x - mu_x).dot(&ey).abs();
    Ok((2.0 * std_normal_cdf(-t / norm)).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        let q = std_normal_cdf(1.959963984540054);
        assert!((q - 0.975).abs() < 1e-12, "{q:e}");
        assert!((std_normal_cdf(-3.0) - 0.0013498980316301).abs() < 1e-14);
    }

    #[test]
    fn centered_inner_product() {
        let y = array![1.0, -1.0];
        let x = array![1.0, 1.0];
        let zero = array![0.0, 0.0];
        assert_eq!(analytic_pvalue_inner_product(&y, &x, &zero).unwrap(), 1.0);
        let x2 = array![2.0, 0.5];
        let p = analytic_pvalue_inner_product(&y, &x2, &zero).unwrap();
        let expect = 2.0 * std_normal_cdf(-1.5 / 2f64.sqrt());
        assert!((p - expect).abs() < 1e-15);
        assert_eq!(analytic_pvalue_inner_product(&zero, &x2, &zero), Err(MaxwayError::ZeroNormY));
    }

    #[test]
    fn d0_orthogonal_and_scale_free() {
        let y = array![1.0, 2.0, 0.0];
        let mu_y = array![0.0, 1.0, 0.0];
        let mu_x = array![0.5, 0.5, 0.5];
        let x = array![1.5, -0.5, 4.0];
        // (x−μ_x) = (1,−1,3.5), (y−μ_y) = (1,1,0)
        assert_eq!(analytic_pvalue_d0(&y, &x, &mu_x, &mu_y).unwrap(), 1.0);
        let x2 = array![2.0, 0.0, 1.0];
        let a = analytic_pvalue_d0(&y, &x2, &mu_x, &mu_y).unwrap();
        let y3 = &mu_y + &((&y - &mu_y) * 3.7);
        let b = analytic_pvalue_d0(&y3, &x2, &mu_x, &mu_y).unwrap();
        assert!((a - b).abs() < 1e-14, "{a:e} {b:e}");
        assert_eq!(analytic_pvalue_d0(&mu_y, &x2, &mu_x, &mu_y), Err(MaxwayError::ZeroNormResidual));
    }
}
