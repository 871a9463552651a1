//! Augmented Lagrangian solver for the nuclear-norm penalized quantile
//! regression estimator.
//!
//! The problem is rewritten with a residual block `V`,
//!
//! ```text
//! min (1/(lambda N T)) rho_u(V) + ||L||_*   s.t.   X beta + L + V = Y,
//! ```
//!
//! and each sweep updates `L` (singular value thresholding at `1/mu`),
//! `V` (check-loss prox with scale `1/(mu lambda N T)`), `beta` (least
//! squares on the stacked covariates) and finally the multiplier `H`.
//! The penalty `mu` stays fixed for the whole run.

use serde::Serialize;

use crate::error::{check_quantile, Error, Result};
use crate::linalg::Cholesky;
use crate::matrix::DenseMatrix;
use crate::numcore::{check_loss_slice, nuclear_norm, prox_check_into, singular_values, svt_with_singulars};
use crate::tolerances::{ALM_MAX_ITERS, ALM_TOL, FEASIBILITY_REL};

/// A balanced panel: outcome `Y` and `p` covariate matrices, all `N x T`.
#[derive(Debug, Clone, Serialize)]
pub struct PanelData {
    pub y: DenseMatrix,
    pub x: Vec<DenseMatrix>,
}

impl PanelData {
    pub fn new(y: DenseMatrix, x: Vec<DenseMatrix>) -> Result<Self> {
        let data = Self { y, x };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, t) = self.y.shape();
        if n == 0 || t == 0 {
            return Err(Error::ShapeMismatch("panel must have N >= 1 and T >= 1".into()));
        }
        for (j, xj) in self.x.iter().enumerate() {
            if xj.shape() != (n, t) {
                return Err(Error::ShapeMismatch(format!(
                    "covariate {} is {}x{}, outcome is {n}x{t}",
                    j + 1,
                    xj.rows(),
                    xj.cols()
                )));
            }
            if !xj.is_finite() {
                return Err(Error::NonFinite("covariate matrix"));
            }
        }
        if !self.y.is_finite() {
            return Err(Error::NonFinite("outcome matrix"));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.rows()
    }

    pub fn t(&self) -> usize {
        self.y.cols()
    }

    pub fn p(&self) -> usize {
        self.x.len()
    }

    /// `sum_j X_j beta_j`.
    pub fn x_beta(&self, beta: &[f64]) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n(), self.t());
        accumulate_x_beta(&self.x, beta, out.as_mut_slice());
        out
    }

    /// Gram matrix `X'X` of the `NT x p` stacked covariates, row-major.
    pub fn gram(&self) -> Vec<f64> {
        let p = self.p();
        let mut g = vec![0.0; p * p];
        for a in 0..p {
            for b in a..p {
                let v = self.x[a].dot(&self.x[b]);
                g[a * p + b] = v;
                g[b * p + a] = v;
            }
        }
        g
    }
}

pub(crate) fn accumulate_x_beta(x: &[DenseMatrix], beta: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for (xj, &bj) in x.iter().zip(beta) {
        for (o, &v) in out.iter_mut().zip(xj.as_slice()) {
            *o += bj * v;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitConfig {
    pub u: f64,
    pub lambda: f64,
    /// ALM penalty; `None` selects `0.25 N T / ||Y||_1`.
    pub mu: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    /// When set, `L` is clipped entrywise into `[-bound, bound]` after each
    /// L-step.
    pub l_inf_bound: Option<f64>,
    /// Record the termination criterion of every sweep in
    /// [`FitResult::trace`].
    pub record_trace: bool,
}

impl FitConfig {
    pub fn new(u: f64, lambda: f64) -> Self {
        Self {
            u,
            lambda,
            mu: None,
            max_iters: ALM_MAX_ITERS,
            tol: ALM_TOL,
            l_inf_bound: None,
            record_trace: false,
        }
    }

    /// Configuration with the default penalty for an `n x t` panel.
    pub fn with_defaults(u: f64, n: usize, t: usize) -> Self {
        Self::new(u, default_lambda(n.max(2), t.max(2)))
    }

    pub fn validate(&self) -> Result<()> {
        check_quantile(self.u)?;
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) || !mu.is_finite() {
                return Err(Error::InvalidArgument(format!("mu must be positive, got {mu}")));
            }
        }
        if let Some(b) = self.l_inf_bound {
            if !(b > 0.0) {
                return Err(Error::InvalidArgument(format!("l_inf_bound must be positive, got {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub beta: Vec<f64>,
    #[serde(skip)]
    pub l: DenseMatrix,
    /// Singular values of `l`, nonincreasing.
    pub singulars: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Termination criterion value at the last sweep.
    pub last_change: f64,
    /// `||Y - X beta - L - V||_F` at the returned iterate.
    pub final_constraint_residual: f64,
    /// Penalized objective at `(beta, L)`.
    pub objective: f64,
    pub lambda: f64,
    pub mu: f64,
    /// `max_it |L_it|`, to compare against an intended sup-norm bound.
    pub max_abs_l: f64,
    #[serde(skip)]
    pub v: DenseMatrix,
    pub trace: Vec<f64>,
}

/// `log(NT) sqrt(max(N, T)) / (3.6 N T)`.
pub fn default_lambda(n: usize, t: usize) -> f64 {
    let nt = (n * t) as f64;
    nt.ln() * (n.max(t) as f64).sqrt() / (3.6 * nt)
}

/// `0.25 N T / ||Y||_1`.
pub fn default_mu(y: &DenseMatrix) -> Result<f64> {
    let l1 = y.l1_norm();
    if !(l1 > 0.0) || !l1.is_finite() {
        return Err(Error::Degenerate("outcome matrix has zero l1 norm".into()));
    }
    Ok(0.25 * (y.rows() * y.cols()) as f64 / l1)
}

/// `(1/NT) rho_u(Y - X beta - L) + lambda ||L||_*`.
pub fn objective_value(data: &PanelData, u: f64, lambda: f64, beta: &[f64], l: &DenseMatrix) -> Result<f64> {
    check_quantile(u)?;
    if beta.len() != data.p() {
        return Err(Error::ShapeMismatch(format!("beta has {} entries, panel has p = {}", beta.len(), data.p())));
    }
    if l.shape() != data.y.shape() {
        return Err(Error::ShapeMismatch("L and Y differ in shape".into()));
    }
    let mut resid = data.x_beta(beta);
    for (r, (&y, &lv)) in resid.as_mut_slice().iter_mut().zip(data.y.as_slice().iter().zip(l.as_slice())) {
        *r = y - *r - lv;
    }
    let nt = (data.n() * data.t()) as f64;
    Ok(check_loss_slice(resid.as_slice(), u) / nt + lambda * nuclear_norm(l)?)
}

/// Runs the ALM iteration from `beta = 0, V = H = 0, L = 0`.
///
/// Stops once `||dbeta||^2 / p + ||dL||_F^2 / NT <= tol` and the constraint
/// residual is within `FEASIBILITY_REL * (1 + ||Y||_F)`.
///
/// Non-convergence within `max_iters` is reported through
/// [`FitResult::converged`], not as an error.
pub fn alm_fit(data: &PanelData, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    data.validate()?;
    let (n, t, p) = (data.n(), data.t(), data.p());
    let nt = (n * t) as f64;
    let u = config.u;
    let lambda = config.lambda;
    let mu = match config.mu {
        Some(mu) => mu,
        None => default_mu(&data.y)?,
    };
    let chol = if p > 0 { Some(Cholesky::factor(&data.gram(), p)?) } else { None };

    let y = data.y.as_slice();
    let inv_mu = 1.0 / mu;
    let prox_scale = 1.0 / (mu * lambda * nt);

    let mut beta = vec![0.0; p];
    let mut l = DenseMatrix::zeros(n, t);
    let mut v = vec![0.0; n * t];
    let mut h = vec![0.0; n * t];
    let mut xb = vec![0.0; n * t];
    let mut work = DenseMatrix::zeros(n, t);
    let mut gamma = vec![0.0; n * t];
    let mut xty = vec![0.0; p];

    let feasibility_bound = FEASIBILITY_REL * (1.0 + data.y.frobenius_norm());
    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    let mut trace = Vec::new();

    while iterations < config.max_iters {
        iterations += 1;

        // L-step: threshold the singular values of Y - V - X beta + H / mu.
        for (k, w) in work.as_mut_slice().iter_mut().enumerate() {
            *w = y[k] - v[k] - xb[k] + h[k] * inv_mu;
        }
        let (mut l_new, _) = svt_with_singulars(&work, inv_mu)?;
        if let Some(bound) = config.l_inf_bound {
            l_new.as_mut_slice().iter_mut().for_each(|x| *x = x.clamp(-bound, bound));
        }

        // V-step uses the previous beta.
        let ls = l_new.as_slice();
        for k in 0..n * t {
            gamma[k] = h[k] * inv_mu - xb[k] - ls[k] + y[k];
        }
        prox_check_into(&gamma, u, prox_scale, &mut v);

        // beta-step: least squares of Y - L - V + H / mu on the covariates.
        let mut beta_change = 0.0;
        if let Some(chol) = &chol {
            for k in 0..n * t {
                gamma[k] = y[k] - ls[k] - v[k] + h[k] * inv_mu;
            }
            for (j, xj) in data.x.iter().enumerate() {
                xty[j] = xj.as_slice().iter().zip(&gamma).map(|(a, b)| a * b).sum();
            }
            let beta_new = chol.solve(&xty);
            beta_change = beta_new.iter().zip(&beta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p as f64;
            beta = beta_new;
            accumulate_x_beta(&data.x, &beta, &mut xb);
        }

        // Multiplier step.
        let mut resid_sq = 0.0;
        for k in 0..n * t {
            let r = v[k] + xb[k] + ls[k] - y[k];
            resid_sq += r * r;
            h[k] -= mu * r;
        }

        let l_change = l_new.dist_sq(&l) / nt;
        l = l_new;
        last_change = beta_change + l_change;
        if config.record_trace {
            trace.push(last_change);
        }
        // The step-size rule alone can stop short of primal feasibility.
        if last_change <= config.tol && resid_sq.sqrt() <= feasibility_bound {
            converged = true;
            break;
        }
    }

    let resid: f64 = (0..n * t)
        .map(|k| {
            let r = y[k] - xb[k] - l.as_slice()[k] - v[k];
            r * r
        })
        .sum::<f64>()
        .sqrt();
    let singulars = singular_values(&l)?;
    let objective = {
        let fit_loss: f64 =
            (0..n * t).map(|k| crate::numcore::check_loss_scalar(y[k] - xb[k] - l.as_slice()[k], u)).sum();
        fit_loss / nt + lambda * singulars.iter().sum::<f64>()
    };
    let max_abs_l = l.max_abs();
    Ok(FitResult {
        beta,
        l,
        singulars,
        iterations,
        converged,
        last_change,
        final_constraint_residual: resid,
        objective,
        lambda,
        mu,
        max_abs_l,
        v: DenseMatrix::from_row_major(n, t, v)?,
        trace,
    })
}
