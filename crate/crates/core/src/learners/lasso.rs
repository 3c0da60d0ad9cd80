//! L1-penalized Gaussian and logistic regression.
//!
//! Features are standardized internally (mean 0, `1/n` variance 1) and the
//! objective is `(1/2n)‖y − Xβ‖² + λ‖β‖₁` (Gaussian) or
//! `−(1/n)·loglik + λ‖β‖₁` (logistic), with an unpenalized intercept.
//! Coefficients are reported on the original scale. The Gaussian solver is
//! cyclic coordinate descent with covariance updates; the logistic solver
//! wraps weighted coordinate descent in a proximal-Newton loop.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{expit, logit, Family, LinearFit};
use crate::error::{push_flag, Flag, MaxwayError, Result};
use crate::rng::RngHandle;

const PROB_CLIP: f64 = 1e-5;
const MIN_WEIGHT: f64 = 1e-5;
const DEV_RATIO_MAX: f64 = 0.999;
const DEV_RATIO_STEP: f64 = 1e-5;
/// Coordinate sweeps before the Gaussian solver switches to an active-set search.
const STALL_SWEEPS: usize = 40;
const LOGISTIC_STALL_SWEEPS: usize = 15;
const CV_TOL: f64 = 1e-7;
const CV_NEWTON_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvRule {
    /// Minimal mean CV loss; ties go to the larger penalty.
    Min,
    /// Largest penalty within one standard error of the minimum.
    OneSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoConfig {
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// Explicit decreasing grid; overrides `n_lambda`/`lambda_min_ratio`.
    pub lambda_grid: Option<Vec<f64>>,
    pub folds: usize,
    pub rule: CvRule,
    /// Coordinate-change tolerance on the standardized scale.
    pub tol: f64,
    /// Coordinate sweeps allowed per penalty level.
    pub max_sweeps: usize,
    /// Logistic only: stop Newton steps once coefficients move less than this.
    pub newton_tol: f64,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            lambda_grid: None,
            folds: 10,
            rule: CvRule::Min,
            tol: 1e-10,
            max_sweeps: 200_000,
            newton_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub grid: Vec<f64>,
    pub folds: usize,
    pub chosen: f64,
    pub chosen_index: usize,
    pub cv_losses: Vec<f64>,
    pub cv_se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub fit: LinearFit,
    pub selection: LambdaSelection,
}

/// Standardized copy of the non-constant columns, stored column-major.
struct Design {
    n: usize,
    p_total: usize,
    kept: Vec<usize>,
    dropped: Vec<usize>,
    means: Vec<f64>,
    sds: Vec<f64>,
    cols: Vec<Vec<f64>>,
}

impl Design {
    fn new(x: &Array2<f64>, rows: &[usize]) -> Design {
        let n = rows.len();
        let p_total = x.ncols();
        let mut kept = Vec::new();
        let mut dropped = Vec::new();
        let mut means = Vec::new();
        let mut sds = Vec::new();
        let mut cols = Vec::new();
        for j in 0..p_total {
            let col: Vec<f64> = rows.iter().map(|&i| x[[i, j]]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if !(sd > 1e-12 * (1.0 + mean.abs())) {
                dropped.push(j);
                continue;
            }
            kept.push(j);
            means.push(mean);
            sds.push(sd);
            cols.push(col.iter().map(|v| (v - mean) / sd).collect());
        }
        Design { n, p_total, kept, dropped, means, sds, cols }
    }

    fn p(&self) -> usize {
        self.kept.len()
    }

    /// Back-transforms standardized coefficients to `(intercept, coef)`.
    fn original_scale(&self, b0: f64, beta: &[f64]) -> (f64, Array1<f64>) {
        let mut coef = Array1::zeros(self.p_total);
        let mut intercept = b0;
        for (k, &j) in self.kept.iter().enumerate() {
            let c = beta[k] / self.sds[k];
            coef[j] = c;
            intercept -= c * self.means[k];
        }
        (intercept, coef)
    }
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Gaussian path with covariance updates
// ---------------------------------------------------------------------------

struct GaussianState<'a> {
    d: &'a Design,
    gram: Vec<f64>,
    c: Vec<f64>,
    yy: f64,
    y_mean: f64,
    beta: Vec<f64>,
    /// Gradient `c − Gβ`.
    r: Vec<f64>,
}

impl<'a> GaussianState<'a> {
    fn new(d: &'a Design, y: &[f64]) -> Self {
        let n = d.n as f64;
        let p = d.p();
        let y_mean = y.iter().sum::<f64>() / n;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let yy = yc.iter().map(|v| v * v).sum::<f64>() / n;
        let c: Vec<f64> = d.cols.iter().map(|col| dot(col, &yc) / n).collect();
        let mut gram = vec![0.0; p * p];
        for a in 0..p {
            for b in a..p {
                let g = dot(&d.cols[a], &d.cols[b]) / n;
                gram[a * p + b] = g;
                gram[b * p + a] = g;
            }
        }
        GaussianState { d, gram, r: c.clone(), c, yy, y_mean, beta: vec![0.0; p] }
    }

    /// Fraction of the null residual sum of squares explained.
    fn dev_ratio(&self) -> f64 {
        let quad: f64 = self.beta.iter().zip(self.c.iter().zip(&self.r)).map(|(b, (c, r))| b * (c + r)).sum();
        quad / self.yy
    }

    fn objective(&self, lambda: f64) -> f64 {
        let quad: f64 = self.beta.iter().zip(self.c.iter().zip(&self.r)).map(|(b, (c, r))| b * (c + r)).sum();
        let l1: f64 = self.beta.iter().map(|b| b.abs()).sum();
        0.5 * self.yy - 0.5 * quad + lambda * l1
    }

    fn update(&mut self, j: usize, lambda: f64) -> f64 {
        let p = self.d.p();
        let gjj = self.gram[j * p + j];
        let old = self.beta[j];
        let new = soft(self.r[j] + gjj * old, lambda) / gjj;
        let delta = new - old;
        if delta != 0.0 {
            self.beta[j] = new;
            let col = &self.gram[j * p..(j + 1) * p];
            for (rk, gk) in self.r.iter_mut().zip(col) {
                *rk -= gk * delta;
            }
        }
        delta.abs()
    }

    fn solve(&mut self, lambda: f64, cfg: &LassoConfig, mut trace: Option<&mut Vec<f64>>) -> Result<()> {
        let p = self.d.p();
        let mut active: Vec<usize> =
            (0..p).filter(|&j| self.beta[j] != 0.0 || self.r[j].abs() > lambda).collect();
        let mut sweeps = 0usize;
        loop {
            loop {
                let mut max_delta = 0.0f64;
                for &j in &active {
                    max_delta = max_delta.max(self.update(j, lambda));
                }
                sweeps += 1;
                // slow coordinate progress: finish with an exact active-set search
                let exact = sweeps == STALL_SWEEPS && max_delta >= cfg.tol && self.feature_sign(lambda);
                if let Some(t) = trace.as_deref_mut() {
                    t.push(self.objective(lambda));
                }
                if exact {
                    return Ok(());
                }
                if max_delta < cfg.tol {
                    break;
                }
                if sweeps >= cfg.max_sweeps {
                    return Err(MaxwayError::NoConvergence { iterations: sweeps, gap: max_delta });
                }
            }
            let mut added = false;
            for j in 0..p {
                if self.beta[j] == 0.0 && self.r[j].abs() > lambda && !active.contains(&j) {
                    active.push(j);
                    added = true;
                }
            }
            if !added {
                return Ok(());
            }
        }
    }

    fn feature_sign(&mut self, lambda: f64) -> bool {
        let q = Quadratic { p: self.d.p(), gram: &self.gram, c: &self.c, max_support: self.d.n };
        feature_sign(&q, &mut self.beta, &mut self.r, lambda)
    }

    fn original(&self) -> (f64, Array1<f64>) {
        self.d.original_scale(self.y_mean, &self.beta)
    }
}

/// `½βᵀGβ − cᵀβ` over `p` coordinates.
struct Quadratic<'q> {
    p: usize,
    gram: &'q [f64],
    c: &'q [f64],
    /// Supports this large are treated as rank deficient.
    max_support: usize,
}

impl Quadratic<'_> {
    /// Objective plus penalty for coefficients `vals` on `idx`, zero elsewhere.
    fn value_on(&self, idx: &[usize], vals: &[f64], lambda: f64) -> f64 {
        let p = self.p;
        let mut f = 0.0;
        for (u, &ju) in idx.iter().enumerate() {
            let gb: f64 = idx.iter().zip(vals).map(|(&jv, &bv)| self.gram[ju * p + jv] * bv).sum();
            f += vals[u] * (0.5 * gb - self.c[ju]) + lambda * vals[u].abs();
        }
        f
    }

    fn gradient(&self, beta: &[f64], r: &mut [f64]) {
        let p = self.p;
        let nz: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        for j in 0..p {
            r[j] = self.c[j] - nz.iter().map(|&l| self.gram[j * p + l] * beta[l]).sum::<f64>();
        }
    }
}

/// Feature-sign search from `beta`; `r` receives the gradient `c − Gβ`.
/// Returns `true` once the optimality conditions hold; `false` leaves a
/// valid iterate whose objective is no worse than the start.
fn feature_sign(q: &Quadratic, beta: &mut [f64], r: &mut [f64], lambda: f64) -> bool {
    let p = q.p;
    let slack = 1e-12 * (1.0 + lambda);
    for _ in 0..20 * p + 100 {
        q.gradient(beta, r);
        let mut active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        let mut signs: Vec<f64> = active.iter().map(|&j| beta[j].signum()).collect();
        let stationary = active.iter().all(|&j| (r[j] - lambda * beta[j].signum()).abs() <= 1e-9 * (1.0 + lambda));
        if stationary {
            let best = (0..p).filter(|&j| beta[j] == 0.0).max_by(|&a, &b| r[a].abs().total_cmp(&r[b].abs()));
            match best {
                Some(j) if r[j].abs() > lambda + slack => {
                    active.push(j);
                    signs.push(r[j].signum());
                }
                _ => return true,
            }
        }
        let k = active.len();
        if k >= q.max_support {
            return false;
        }
        let mut a = vec![0.0; k * k];
        let mut rhs = vec![0.0; k];
        for (u, &ju) in active.iter().enumerate() {
            for (v, &jv) in active.iter().enumerate() {
                a[u * k + v] = q.gram[ju * p + jv];
            }
            rhs[u] = q.c[ju] - lambda * signs[u];
        }
        let Some(target) = cholesky_solve(&a, &rhs, k) else {
            return false;
        };
        let start: Vec<f64> = active.iter().map(|&j| beta[j]).collect();
        // candidates: the target and every sign change along the segment
        let mut cands: Vec<(f64, Option<usize>)> = vec![(1.0, None)];
        for u in 0..k {
            if start[u] != 0.0 && target[u].signum() != start[u].signum() {
                cands.push((start[u] / (start[u] - target[u]), Some(u)));
            }
        }
        let mut best_val = q.value_on(&active, &start, lambda);
        let mut best_pt: Option<Vec<f64>> = None;
        for &(t, zeroed) in &cands {
            let mut pt: Vec<f64> = start.iter().zip(&target).map(|(s0, t1)| s0 + t * (t1 - s0)).collect();
            if let Some(u) = zeroed {
                pt[u] = 0.0;
            }
            let val = q.value_on(&active, &pt, lambda);
            if val < best_val {
                best_val = val;
                best_pt = Some(pt);
            }
        }
        let Some(pt) = best_pt else {
            return false;
        };
        for (&j, &b) in active.iter().zip(&pt) {
            beta[j] = b;
        }
    }
    q.gradient(beta, r);
    false
}

/// Solves `A x = b` for symmetric positive definite `A` (row-major); `None`
/// when `A` is numerically singular.
fn cholesky_solve(a: &[f64], b: &[f64], k: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(k, k, a);
    let diag_max = m.diagonal().max();
    let chol = m.cholesky()?;
    if chol.l_dirty().diagonal().iter().any(|&l| !(l * l > 1e-10 * diag_max)) {
        return None;
    }
    Some(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.as_chunks::<4>();
    let (cb, rb) = b[..a.len()].as_chunks::<4>();
    for (x, y) in ca.iter().zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

// ---------------------------------------------------------------------------
// Logistic path: proximal Newton outer loop, weighted coordinate descent inside
// ---------------------------------------------------------------------------

struct LogisticState<'a> {
    d: &'a Design,
    y: Vec<f64>,
    b0: f64,
    beta: Vec<f64>,
    eta: Vec<f64>,
    null_nll: f64,
}

impl<'a> LogisticState<'a> {
    fn new(d: &'a Design, y: &[f64]) -> Self {
        let ybar = y.iter().sum::<f64>() / d.n as f64;
        let b0 = logit(ybar.clamp(PROB_CLIP, 1.0 - PROB_CLIP));
        let mut s = LogisticState { d, y: y.to_vec(), b0, beta: vec![0.0; d.p()], eta: vec![b0; d.n], null_nll: 0.0 };
        s.null_nll = s.objective_at(&s.eta, &s.beta, 0.0);
        s
    }

    fn dev_ratio(&self) -> f64 {
        1.0 - self.objective_at(&self.eta, &self.beta, 0.0) / self.null_nll
    }

    fn objective_at(&self, eta: &[f64], beta: &[f64], lambda: f64) -> f64 {
        let nll: f64 = self
            .y
            .iter()
            .zip(eta)
            .map(|(&y, &e)| {
                // log(1 + e^e) − y·e, computed stably
                let sp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
                sp - y * e
            })
            .sum::<f64>()
            / self.d.n as f64;
        nll + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    fn solve(&mut self, lambda: f64, cfg: &LassoConfig, mut trace: Option<&mut Vec<f64>>) -> Result<()> {
        let n = self.d.n;
        let nf = n as f64;
        let p = self.d.p();
        let mut sweeps = 0usize;
        let mut obj = self.objective_at(&self.eta, &self.beta, lambda);
        // inexact Newton: early quadratic subproblems are solved loosely
        let mut inner_tol = 1e-3f64.max(cfg.tol);
        for _outer in 0..100 {
            let prob: Vec<f64> = self.eta.iter().map(|&e| expit(e)).collect();
            let w: Vec<f64> = prob.iter().map(|&q| (q * (1.0 - q)).max(MIN_WEIGHT)).collect();
            let sw: f64 = w.iter().sum();
            // weighted working residual w·(z − η) = y − prob
            let mut wr: Vec<f64> = (0..n).map(|i| self.y[i] - prob[i]).collect();
            let cols = &self.d.cols;
            // w·x and the curvature v, filled in as columns become active
            let mut wx: Vec<Vec<f64>> = vec![Vec::new(); p];
            let mut v = vec![0.0; p];
            let activate = |j: usize, wx: &mut Vec<Vec<f64>>, v: &mut Vec<f64>| {
                wx[j] = cols[j].iter().zip(&w).map(|(x, wi)| x * wi).collect();
                v[j] = dot(&wx[j], &cols[j]) / nf;
            };
            let beta_old = self.beta.clone();
            let b0_old = self.b0;
            let mut beta = self.beta.clone();
            let mut b0 = self.b0;
            let mut in_active: Vec<bool> = beta.iter().map(|&b| b != 0.0).collect();
            let mut active: Vec<usize> = (0..p).filter(|&j| in_active[j]).collect();
            for &j in &active {
                activate(j, &mut wx, &mut v);
            }
            let mut inner = 0usize;
            'quad: loop {
                loop {
                    let mut max_change = 0.0f64;
                    for &j in &active {
                        let old = beta[j];
                        let new = soft(dot(&cols[j], &wr) / nf + v[j] * old, lambda) / v[j];
                        let delta = new - old;
                        if delta != 0.0 {
                            beta[j] = new;
                            for (ri, xi) in wr.iter_mut().zip(&wx[j]) {
                                *ri -= xi * delta;
                            }
                            max_change = max_change.max(v[j] * delta * delta);
                        }
                    }
                    let d0 = wr.iter().sum::<f64>() / sw;
                    if d0 != 0.0 {
                        b0 += d0;
                        for (r, wi) in wr.iter_mut().zip(&w) {
                            *r -= wi * d0;
                        }
                        max_change = max_change.max(sw / nf * d0 * d0);
                    }
                    sweeps += 1;
                    inner += 1;
                    if max_change < inner_tol * inner_tol {
                        break;
                    }
                    if inner == LOGISTIC_STALL_SWEEPS && self.weighted_step(&w, sw, &mut beta, &mut b0, &mut wr, lambda) {
                        break 'quad;
                    }
                    if sweeps >= cfg.max_sweeps {
                        return Err(MaxwayError::NoConvergence { iterations: sweeps, gap: max_change.sqrt() });
                    }
                }
                let mut added = false;
                for j in 0..p {
                    if !in_active[j] && (dot(&cols[j], &wr) / nf).abs() > lambda {
                        in_active[j] = true;
                        activate(j, &mut wx, &mut v);
                        active.push(j);
                        added = true;
                    }
                }
                if !added {
                    break;
                }
            }
            // backtrack along the Newton direction until the objective does not increase
            let mut t = 1.0;
            let mut accepted = false;
            let mut eta_new = vec![0.0; n];
            let mut beta_t = beta.clone();
            let mut b0_t = b0;
            for _ in 0..30 {
                for j in 0..p {
                    beta_t[j] = beta_old[j] + t * (beta[j] - beta_old[j]);
                }
                b0_t = b0_old + t * (b0 - b0_old);
                eta_new.iter_mut().for_each(|e| *e = b0_t);
                for j in 0..p {
                    if beta_t[j] != 0.0 {
                        for (e, x) in eta_new.iter_mut().zip(&self.d.cols[j]) {
                            *e += x * beta_t[j];
                        }
                    }
                }
                let cand = self.objective_at(&eta_new, &beta_t, lambda);
                if cand <= obj + 1e-12 * obj.abs().max(1.0) {
                    obj = cand;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                return Ok(());
            }
            let change = (0..p)
                .map(|j| (beta_t[j] - beta_old[j]).abs() * v[j].sqrt())
                .fold((b0_t - b0_old).abs(), f64::max);
            self.beta = beta_t;
            self.b0 = b0_t;
            self.eta = eta_new;
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(obj);
            }
            if change < cfg.newton_tol {
                return Ok(());
            }
            inner_tol = (1e-2 * change).clamp(cfg.tol, inner_tol);
        }
        Ok(())
    }

    /// Solves the weighted least-squares subproblem exactly on the
    /// intercept-centered Gram matrix. `wr` is the weighted working residual.
    fn weighted_step(&self, w: &[f64], sw: f64, beta: &mut [f64], b0: &mut f64, wr: &mut [f64], lambda: f64) -> bool {
        let n = self.d.n;
        let nf = n as f64;
        let p = self.d.p();
        let cols = &self.d.cols;
        let mut z: Vec<f64> = wr.iter().zip(w).map(|(r, wi)| r / wi + *b0).collect();
        for j in 0..p {
            if beta[j] != 0.0 {
                for (zi, x) in z.iter_mut().zip(&cols[j]) {
                    *zi += x * beta[j];
                }
            }
        }
        let means: Vec<f64> = cols.iter().map(|col| dot(col, w) / sw).collect();
        let zmean = dot(&z, w) / sw;
        let wz: Vec<f64> = z.iter().zip(w).map(|(a, b)| a * b).collect();
        let c: Vec<f64> = (0..p).map(|j| (dot(&cols[j], &wz) - sw * means[j] * zmean) / nf).collect();
        let mut gram = vec![0.0; p * p];
        for a in 0..p {
            let wx: Vec<f64> = cols[a].iter().zip(w).map(|(x, wi)| x * wi).collect();
            for b in a..p {
                let g = (dot(&wx, &cols[b]) - sw * means[a] * means[b]) / nf;
                gram[a * p + b] = g;
                gram[b * p + a] = g;
            }
        }
        let q = Quadratic { p, gram: &gram, c: &c, max_support: n };
        let mut r = vec![0.0; p];
        let solved = feature_sign(&q, beta, &mut r, lambda);
        *b0 = zmean - means.iter().zip(beta.iter()).map(|(m, b)| m * b).sum::<f64>();
        for j in 0..p {
            if beta[j] != 0.0 {
                for (zi, x) in z.iter_mut().zip(&cols[j]) {
                    *zi -= x * beta[j];
                }
            }
        }
        for ((ri, zi), wi) in wr.iter_mut().zip(&z).zip(w) {
            *ri = wi * (zi - *b0);
        }
        solved
    }

    fn original(&self) -> (f64, Array1<f64>) {
        self.d.original_scale(self.b0, &self.beta)
    }
}

// ---------------------------------------------------------------------------
// Public API
// ---------------------------------------------------------------------------

fn check_inputs(x: &Array2<f64>, y: &Array1<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(MaxwayError::DimensionMismatch(format!("X has {} rows, y has {}", x.nrows(), y.len())));
    }
    if y.len() < 2 {
        return Err(MaxwayError::DimensionMismatch("lasso needs at least 2 rows".into()));
    }
    Ok(())
}

/// Smallest penalty at which every coefficient is zero (standardized scale).
pub fn lambda_max(x: &Array2<f64>, y: &Array1<f64>, family: Family) -> f64 {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let d = Design::new(x, &rows);
    lambda_max_design(&d, y.as_slice().expect("contiguous y"), family)
}

fn lambda_max_design(d: &Design, y: &[f64], _family: Family) -> f64 {
    // identical for both families: the null fit's residual is y − ȳ
    let n = d.n as f64;
    let ybar = y.iter().sum::<f64>() / n;
    d.cols
        .iter()
        .map(|col| (col.iter().zip(y).map(|(x, v)| x * (v - ybar)).sum::<f64>() / n).abs())
        .fold(0.0, f64::max)
}

fn make_grid(lmax: f64, cfg: &LassoConfig) -> Result<Vec<f64>> {
    if let Some(g) = &cfg.lambda_grid {
        if g.is_empty() {
            return Err(MaxwayError::EmptyGrid);
        }
        if g.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || g.windows(2).any(|w| w[1] >= w[0]) {
            return Err(MaxwayError::InvalidConfig("lambda grid must be strictly decreasing and nonnegative".into()));
        }
        return Ok(g.clone());
    }
    if cfg.n_lambda == 0 {
        return Err(MaxwayError::EmptyGrid);
    }
    if cfg.n_lambda == 1 {
        return Ok(vec![lmax]);
    }
    let lo = (lmax * cfg.lambda_min_ratio).ln();
    let hi = lmax.ln();
    let m = cfg.n_lambda - 1;
    Ok((0..cfg.n_lambda).map(|i| (hi + (lo - hi) * i as f64 / m as f64).exp()).collect())
}

enum PathState<'a> {
    Gaussian(GaussianState<'a>),
    Logistic(LogisticState<'a>),
}

impl<'a> PathState<'a> {
    fn new(d: &'a Design, y: &[f64], family: Family) -> Self {
        match family {
            Family::Gaussian => PathState::Gaussian(GaussianState::new(d, y)),
            Family::Logistic => PathState::Logistic(LogisticState::new(d, y)),
        }
    }

    fn solve(&mut self, lambda: f64, cfg: &LassoConfig, trace: Option<&mut Vec<f64>>) -> Result<()> {
        match self {
            PathState::Gaussian(s) => s.solve(lambda, cfg, trace),
            PathState::Logistic(s) => s.solve(lambda, cfg, trace),
        }
    }

    fn dev_ratio(&self) -> f64 {
        match self {
            PathState::Gaussian(s) => s.dev_ratio(),
            PathState::Logistic(s) => s.dev_ratio(),
        }
    }

    fn original(&self) -> (f64, Array1<f64>) {
        match self {
            PathState::Gaussian(s) => s.original(),
            PathState::Logistic(s) => s.original(),
        }
    }
}

fn is_constant(y: &[f64]) -> bool {
    y.iter().all(|&v| v == y[0])
}

fn null_intercept(y: &[f64], family: Family) -> f64 {
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    match family {
        Family::Gaussian => ybar,
        Family::Logistic => logit(ybar.clamp(PROB_CLIP, 1.0 - PROB_CLIP)),
    }
}

fn heldout_loss(intercept: f64, coef: &Array1<f64>, x: &Array2<f64>, y: &[f64], rows: &[usize], family: Family) -> f64 {
    rows.iter()
        .map(|&i| {
            let eta = intercept + x.row(i).dot(coef);
            match family {
                Family::Gaussian => (y[i] - eta).powi(2),
                Family::Logistic => {
                    let q = expit(eta).clamp(PROB_CLIP, 1.0 - PROB_CLIP);
                    -2.0 * (y[i] * q.ln() + (1.0 - y[i]) * (1.0 - q).ln())
                }
            }
        })
        .sum()
}

/// Fits the penalized path on `rows` down to `grid[upto]`, calling `visit` at each level.
///
/// With `saturate`, the path stops once the deviance ratio passes `DEV_RATIO_MAX`
/// or improves by less than a relative `DEV_RATIO_STEP`; later levels are
/// visited with the last solution. Returns the number of levels actually solved.
fn run_path(
    x: &Array2<f64>,
    y: &[f64],
    rows: &[usize],
    family: Family,
    grid: &[f64],
    upto: usize,
    cfg: &LassoConfig,
    saturate: bool,
    mut visit: impl FnMut(usize, f64, &Array1<f64>),
) -> Result<(Design, usize)> {
    let d = Design::new(x, rows);
    let ysub: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    if d.p() == 0 || is_constant(&ysub) {
        let b0 = null_intercept(&ysub, family);
        let zero = Array1::zeros(x.ncols());
        for l in 0..=upto {
            visit(l, b0, &zero);
        }
        return Ok((d, upto + 1));
    }
    let mut solved = upto + 1;
    {
        let mut state = PathState::new(&d, &ysub, family);
        let mut prev_ratio = 0.0;
        let mut last = (0.0, Array1::zeros(x.ncols()));
        for (l, &lambda) in grid.iter().enumerate().take(upto + 1) {
            if l >= solved {
                visit(l, last.0, &last.1);
                continue;
            }
            state.solve(lambda, cfg, None)?;
            last = state.original();
            visit(l, last.0, &last.1);
            let ratio = state.dev_ratio();
            if saturate && l > 0 && (ratio >= DEV_RATIO_MAX || ratio - prev_ratio < DEV_RATIO_STEP * ratio) {
                solved = l + 1;
            }
            prev_ratio = ratio;
        }
    }
    Ok((d, solved))
}

/// Cross-validated lasso fit.
pub fn fit_lasso(x: &Array2<f64>, y: &Array1<f64>, family: Family, cfg: &LassoConfig, rng: &RngHandle) -> Result<LassoFit> {
    check_inputs(x, y)?;
    let n = y.len();
    let yv = y.to_vec();
    if family == Family::Logistic {
        if let Some(row) = yv.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(MaxwayError::BadBinary { field: "y".into(), row, value: yv[row] });
        }
    }
    let all: Vec<usize> = (0..n).collect();
    let full = Design::new(x, &all);
    let lmax = lambda_max_design(&full, &yv, family);
    let mut flags = Vec::new();
    if !full.dropped.is_empty() {
        push_flag(&mut flags, Flag::DroppedConstantColumns { columns: full.dropped.clone() });
    }
    if full.p() == 0 || is_constant(&yv) || !(lmax > 1e-300) {
        push_flag(&mut flags, Flag::DegenerateTarget);
        let grid = cfg.lambda_grid.clone().filter(|g| !g.is_empty()).unwrap_or_else(|| vec![0.0]);
        let fit = LinearFit {
            intercept: null_intercept(&yv, family),
            coef: Array1::zeros(x.ncols()),
            family,
            lambda: grid[0],
            sigma2: None,
            flags,
        };
        let k = grid.len();
        return Ok(LassoFit {
            fit,
            selection: LambdaSelection { chosen: grid[0], chosen_index: 0, cv_losses: vec![0.0; k], cv_se: vec![0.0; k], grid, folds: 0 },
        });
    }
    let full_grid = make_grid(lmax, cfg)?;
    // an explicit grid is kept whole; the default one ends where the fit saturates
    let saturate = cfg.lambda_grid.is_none();
    let mut path = Vec::with_capacity(full_grid.len());
    let (_, solved) = run_path(x, &yv, &all, family, &full_grid, full_grid.len() - 1, cfg, saturate, |_, b0, coef| {
        path.push((b0, coef.clone()));
    })?;
    let grid = full_grid[..solved].to_vec();
    path.truncate(solved);
    let nl = grid.len();

    let k = cfg.folds.clamp(2, n);
    let mut perm = all.clone();
    perm.shuffle(&mut rng.rng());
    let mut fold_of = vec![0usize; n];
    for (pos, &i) in perm.iter().enumerate() {
        fold_of[i] = pos % k;
    }
    // held-out losses do not need the final fit's precision
    let fold_cfg = LassoConfig { tol: cfg.tol.max(CV_TOL), newton_tol: cfg.newton_tol.max(CV_NEWTON_TOL), ..cfg.clone() };
    let mut fold_losses = vec![vec![0.0; nl]; k];
    let mut fold_sizes = vec![0usize; k];
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        fold_sizes[f] = test.len();
        let losses = &mut fold_losses[f];
        run_path(x, &yv, &train, family, &grid, nl - 1, &fold_cfg, saturate, |l, b0, coef| {
            losses[l] = heldout_loss(b0, coef, x, &yv, &test, family);
        })?;
    }
    let cv_losses: Vec<f64> = (0..nl).map(|l| fold_losses.iter().map(|fl| fl[l]).sum::<f64>() / n as f64).collect();
    let cv_se: Vec<f64> = (0..nl)
        .map(|l| {
            let means: Vec<f64> = (0..k).map(|f| fold_losses[f][l] / fold_sizes[f] as f64).collect();
            let m = means.iter().sum::<f64>() / k as f64;
            let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (k as f64 - 1.0);
            (var / k as f64).sqrt()
        })
        .collect();
    let mut best = 0;
    for l in 1..nl {
        if cv_losses[l] < cv_losses[best] {
            best = l;
        }
    }
    let chosen_index = match cfg.rule {
        CvRule::Min => best,
        CvRule::OneSe => {
            let bound = cv_losses[best] + cv_se[best];
            (0..=best).find(|&l| cv_losses[l] <= bound).unwrap_or(best)
        }
    };

    let result = path.swap_remove(chosen_index);
    let (intercept, coef) = result;
    let sigma2 = match family {
        Family::Gaussian => {
            let fitted = x.dot(&coef) + intercept;
            Some((y - &fitted).mapv(|r| r * r).sum() / n as f64)
        }
        Family::Logistic => None,
    };
    Ok(LassoFit {
        fit: LinearFit { intercept, coef, family, lambda: grid[chosen_index], sigma2, flags },
        selection: LambdaSelection { chosen: grid[chosen_index], chosen_index, grid, folds: k, cv_losses, cv_se },
    })
}

/// Lasso at a single penalty level, without cross-validation.
pub fn fit_lasso_fixed(x: &Array2<f64>, y: &Array1<f64>, family: Family, lambda: f64, cfg: &LassoConfig) -> Result<LinearFit> {
    check_inputs(x, y)?;
    let all: Vec<usize> = (0..y.len()).collect();
    let mut out = (0.0, Array1::zeros(x.ncols()));
    let (d, _) = run_path(x, y.as_slice().expect("contiguous y"), &all, family, &[lambda], 0, cfg, false, |_, b0, c| {
        out = (b0, c.clone());
    })?;
    let mut flags = Vec::new();
    if !d.dropped.is_empty() {
        flags.push(Flag::DroppedConstantColumns { columns: d.dropped });
    }
    Ok(LinearFit { intercept: out.0, coef: out.1, family, lambda, sigma2: None, flags })
}

/// Objective value after every sweep (Gaussian) or Newton step (logistic),
/// starting from zero coefficients at a single penalty.
pub fn lasso_objective_trace(x: &Array2<f64>, y: &Array1<f64>, family: Family, lambda: f64, cfg: &LassoConfig) -> Result<Vec<f64>> {
    check_inputs(x, y)?;
    let all: Vec<usize> = (0..y.len()).collect();
    let d = Design::new(x, &all);
    let mut state = PathState::new(&d, y.as_slice().expect("contiguous y"), family);
    let mut trace = Vec::new();
    state.solve(lambda, cfg, Some(&mut trace))?;
    Ok(trace)
}

/// Largest violation of the lasso optimality conditions on the standardized scale.
pub fn lasso_kkt_violation(x: &Array2<f64>, y: &Array1<f64>, fit: &LinearFit) -> f64 {
    let all: Vec<usize> = (0..y.len()).collect();
    let d = Design::new(x, &all);
    let n = y.len() as f64;
    let mean_response = fit.predict(x).expect("matching dimensions");
    let resid: Vec<f64> = y.iter().zip(mean_response.iter()).map(|(a, b)| a - b).collect();
    let mut worst = (resid.iter().sum::<f64>() / n).abs();
    for (k, &j) in d.kept.iter().enumerate() {
        let g = dot(&d.cols[k], &resid) / n;
        let b = fit.coef[j];
        let v = if b != 0.0 { (g - fit.lambda * b.signum()).abs() } else { (g.abs() - fit.lambda).max(0.0) };
        worst = worst.max(v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random_problem(n: usize, p: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut r = RngHandle::new(seed).rng();
        let x = Array2::from_shape_fn((n, p), |_| r.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] * 1.5 - x[[i, 1]] + r.sample::<f64, _>(StandardNormal));
        (x, y)
    }

    #[test]
    fn huge_lambda_gives_null_fit() {
        let (x, y) = random_problem(40, 5, 1);
        let lmax = lambda_max(&x, &y, Family::Gaussian);
        let fit = fit_lasso_fixed(&x, &y, Family::Gaussian, lmax * 1.01, &LassoConfig::default()).unwrap();
        assert!(fit.coef.iter().all(|&c| c == 0.0));
        assert!((fit.intercept - y.mean().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn single_standardized_predictor_soft_thresholds() {
        let mut r = RngHandle::new(5).rng();
        let n = 50;
        let raw: Vec<f64> = (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let m = raw.iter().sum::<f64>() / n as f64;
        let sd = (raw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        let xs: Vec<f64> = raw.iter().map(|v| (v - m) / sd).collect();
        let y = Array1::from_shape_fn(n, |i| 0.7 * xs[i] + r.sample::<f64, _>(StandardNormal));
        let ybar = y.mean().unwrap();
        // independent oracle: c = (1/n) xᵀ(y − ȳ), coef = S(c, λ)
        let c: f64 = xs.iter().zip(y.iter()).map(|(a, b)| a * (b - ybar)).sum::<f64>() / n as f64;
        let x = Array2::from_shape_vec((n, 1), xs).unwrap();
        for lambda in [0.0, 0.1, 0.3, c.abs() * 0.99, c.abs() * 1.5] {
            let fit = fit_lasso_fixed(&x, &y, Family::Gaussian, lambda, &LassoConfig::default()).unwrap();
            let expect = c.signum() * (c.abs() - lambda).max(0.0);
            assert!((fit.coef[0] - expect).abs() < 1e-8, "lambda {lambda}");
        }
    }

    #[test]
    fn cv_fit_satisfies_kkt() {
        for seed in 0..5 {
            let (x, y) = random_problem(60, 12, seed);
            let f = fit_lasso(&x, &y, Family::Gaussian, &LassoConfig::default(), &RngHandle::new(seed)).unwrap();
            assert!(lasso_kkt_violation(&x, &y, &f.fit) < 1e-6);
            assert_eq!(f.selection.cv_losses.len(), f.selection.grid.len());
            assert!(f.selection.grid.contains(&f.selection.chosen));
        }
    }

    #[test]
    fn nearly_square_design_is_solved_exactly() {
        // n ≈ p with correlated columns: coordinate descent stalls here
        let mut r = RngHandle::new(21).rng();
        let (n, p) = (60, 55);
        let base = Array2::from_shape_fn((n, p), |_| r.sample::<f64, _>(StandardNormal));
        let mut x = base.clone();
        for j in 1..p {
            let prev = x.column(j - 1).to_owned();
            x.column_mut(j).assign(&(&base.column(j) * 0.4 + &prev * 0.9));
        }
        let y = Array1::from_shape_fn(n, |i| x[[i, 0]] - x[[i, 7]] + r.sample::<f64, _>(StandardNormal));
        let lmax = lambda_max(&x, &y, Family::Gaussian);
        for frac in [0.05, 0.005, 0.001] {
            let fit = fit_lasso_fixed(&x, &y, Family::Gaussian, lmax * frac, &LassoConfig::default()).unwrap();
            assert!(lasso_kkt_violation(&x, &y, &fit) < 1e-8, "frac {frac}");
            let tr = lasso_objective_trace(&x, &y, Family::Gaussian, lmax * frac, &LassoConfig::default()).unwrap();
            assert!(tr.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0)));
        }
    }

    #[test]
    fn cv_chooses_minimal_loss_with_ties_to_larger_lambda() {
        let (x, y) = random_problem(50, 8, 3);
        let f = fit_lasso(&x, &y, Family::Gaussian, &LassoConfig::default(), &RngHandle::new(3)).unwrap();
        let s = &f.selection;
        let min = s.cv_losses.iter().cloned().fold(f64::INFINITY, f64::min);
        let first = s.cv_losses.iter().position(|&v| v == min).unwrap();
        assert_eq!(s.chosen_index, first);
    }

    #[test]
    fn one_se_rule_picks_larger_penalty() {
        let (x, y) = random_problem(80, 10, 4);
        let mut cfg = LassoConfig::default();
        let a = fit_lasso(&x, &y, Family::Gaussian, &cfg, &RngHandle::new(1)).unwrap();
        cfg.rule = CvRule::OneSe;
        let b = fit_lasso(&x, &y, Family::Gaussian, &cfg, &RngHandle::new(1)).unwrap();
        assert!(b.selection.chosen >= a.selection.chosen);
    }

    #[test]
    fn objective_never_increases() {
        let (x, y) = random_problem(40, 15, 9);
        let lmax = lambda_max(&x, &y, Family::Gaussian);
        for frac in [0.5, 0.1, 0.01] {
            let tr = lasso_objective_trace(&x, &y, Family::Gaussian, lmax * frac, &LassoConfig::default()).unwrap();
            for w in tr.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{:?}", w);
            }
        }
    }

    #[test]
    fn constant_column_dropped_with_flag() {
        let (mut x, y) = random_problem(30, 4, 2);
        x.column_mut(2).fill(3.0);
        let f = fit_lasso(&x, &y, Family::Gaussian, &LassoConfig::default(), &RngHandle::new(0)).unwrap();
        assert_eq!(f.fit.coef[2], 0.0);
        assert!(f.fit.flags.contains(&Flag::DroppedConstantColumns { columns: vec![2] }));
    }

    #[test]
    fn logistic_lasso_recovers_sign_and_objective_decreases() {
        let mut r = RngHandle::new(11).rng();
        let n = 300;
        let x = Array2::from_shape_fn((n, 6), |_| r.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |i| if r.random::<f64>() < expit(1.5 * x[[i, 0]] - x[[i, 3]]) { 1.0 } else { 0.0 });
        let f = fit_lasso(&x, &y, Family::Logistic, &LassoConfig::default(), &RngHandle::new(2)).unwrap();
        assert!(f.fit.coef[0] > 0.5 && f.fit.coef[3] < -0.3, "{:?}", f.fit.coef);
        assert!(lasso_kkt_violation(&x, &y, &f.fit) < 1e-5);
        let lmax = lambda_max(&x, &y, Family::Logistic);
        let tr = lasso_objective_trace(&x, &y, Family::Logistic, 0.05 * lmax, &LassoConfig::default()).unwrap();
        for w in tr.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn empty_grid_rejected() {
        let (x, y) = random_problem(20, 3, 1);
        let cfg = LassoConfig { lambda_grid: Some(vec![]), ..Default::default() };
        assert_eq!(fit_lasso(&x, &y, Family::Gaussian, &cfg, &RngHandle::new(0)).unwrap_err(), MaxwayError::EmptyGrid);
    }
}
