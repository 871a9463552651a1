//! Check loss, its proximal map, and the SVD-based primitives shared by the
//! estimators.

use faer::Mat;
use serde::Serialize;

use crate::error::{check_quantile, Error, Result};
use crate::matrix::DenseMatrix;

/// `rho_u(z) = z * (u - 1{z <= 0})`.
#[inline]
pub fn check_loss_scalar(z: f64, u: f64) -> f64 {
    if z <= 0.0 {
        z * (u - 1.0)
    } else {
        z * u
    }
}

/// Sum of the check loss over every entry of `z`.
pub fn check_loss(z: &DenseMatrix, u: f64) -> Result<f64> {
    check_quantile(u)?;
    if !z.is_finite() {
        return Err(Error::NonFinite("check loss argument"));
    }
    Ok(check_loss_slice(z.as_slice(), u))
}

pub(crate) fn check_loss_slice(z: &[f64], u: f64) -> f64 {
    z.iter().map(|&v| check_loss_scalar(v, u)).sum()
}

/// The subgradient element `u * 1{z > 0} + (u - 1) * 1{z < 0}`; zero at the kink.
#[inline]
pub fn check_subgradient(z: f64, u: f64) -> f64 {
    if z > 0.0 {
        u
    } else if z < 0.0 {
        u - 1.0
    } else {
        0.0
    }
}

/// Minimizer of `c * rho_u(v) + (v - gamma)^2 / 2`. Both branches give 0 at
/// `gamma = 0`.
#[inline]
pub fn prox_check_scalar(gamma: f64, u: f64, c: f64) -> f64 {
    if gamma >= 0.0 {
        (gamma - u * c).max(0.0)
    } else {
        -(-gamma - (1.0 - u) * c).max(0.0)
    }
}

/// Elementwise proximal map of `c * rho_u`.
pub fn prox_check(gamma: &DenseMatrix, u: f64, c: f64) -> Result<DenseMatrix> {
    check_quantile(u)?;
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidArgument(format!("prox scale must be positive, got {c}")));
    }
    Ok(gamma.map(|g| prox_check_scalar(g, u, c)))
}

pub(crate) fn prox_check_into(gamma: &[f64], u: f64, c: f64, out: &mut [f64]) {
    for (o, &g) in out.iter_mut().zip(gamma) {
        *o = prox_check_scalar(g, u, c);
    }
}

/// Thin singular value decomposition `M = left * diag(singulars) * right^T`.
#[derive(Debug, Clone, Serialize)]
pub struct SvdFactors {
    pub left: DenseMatrix,
    pub singulars: Vec<f64>,
    pub right: DenseMatrix,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> DenseMatrix {
        let (n, k) = self.left.shape();
        let t = self.right.rows();
        DenseMatrix::from_fn(n, t, |i, j| {
            (0..k).map(|c| self.left[(i, c)] * self.singulars[c] * self.right[(j, c)]).sum()
        })
    }

    /// Leading `r` left and right singular vectors.
    pub fn truncate(&self, r: usize) -> (DenseMatrix, DenseMatrix) {
        let r = r.min(self.singulars.len());
        let left = DenseMatrix::from_fn(self.left.rows(), r, |i, j| self.left[(i, j)]);
        let right = DenseMatrix::from_fn(self.right.rows(), r, |i, j| self.right[(i, j)]);
        (left, right)
    }
}

fn thin_svd_faer(m: &DenseMatrix) -> Result<faer::linalg::solvers::Svd<f64>> {
    if !m.is_finite() {
        return Err(Error::NonFinite("SVD input"));
    }
    m.to_faer().thin_svd().map_err(|_| Error::SvdNoConvergence)
}

/// Thin SVD with `k = min(N, T)` singular triplets.
///
/// Each left singular vector is signed so that its largest-magnitude entry
/// is nonnegative (first such entry on ties); the matching right vector is
/// flipped with it.
pub fn svd(m: &DenseMatrix) -> Result<SvdFactors> {
    let (n, t) = m.shape();
    if n == 0 || t == 0 {
        return Ok(SvdFactors {
            left: DenseMatrix::zeros(n, 0),
            singulars: Vec::new(),
            right: DenseMatrix::zeros(t, 0),
        });
    }
    let f = thin_svd_faer(m)?;
    let (u, s, v) = (f.U(), f.S().column_vector(), f.V());
    let k = n.min(t);
    let mut left = DenseMatrix::zeros(n, k);
    let mut right = DenseMatrix::zeros(t, k);
    let mut singulars = Vec::with_capacity(k);
    for c in 0..k {
        let mut pivot = 0.0f64;
        let mut best = -1.0;
        for i in 0..n {
            let a = u[(i, c)].abs();
            if a > best {
                best = a;
                pivot = u[(i, c)];
            }
        }
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            left[(i, c)] = sign * u[(i, c)];
        }
        for j in 0..t {
            right[(j, c)] = sign * v[(j, c)];
        }
        singulars.push(s[c].max(0.0));
    }
    Ok(SvdFactors { left, singulars, right })
}

pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    if m.rows() == 0 || m.cols() == 0 {
        return Ok(Vec::new());
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("SVD input"));
    }
    let mut s = m.to_faer().singular_values().map_err(|_| Error::SvdNoConvergence)?;
    s.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(s)
}

pub fn nuclear_norm(m: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(m)?.iter().sum())
}

/// Singular value thresholding: the proximal map of `tau * ||.||_*`.
pub fn svt(m: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    Ok(svt_with_singulars(m, tau)?.0)
}

/// [`svt`] that also returns the shrunk singular values `max(sigma_j - tau, 0)`.
pub fn svt_with_singulars(m: &DenseMatrix, tau: f64) -> Result<(DenseMatrix, Vec<f64>)> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("threshold must be nonnegative, got {tau}")));
    }
    let (n, t) = m.shape();
    if n == 0 || t == 0 {
        return Ok((m.clone(), Vec::new()));
    }
    let f = thin_svd_faer(m)?;
    let (u, s, v) = (f.U(), f.S().column_vector(), f.V());
    let shrunk: Vec<f64> = s.iter().map(|&x| (x - tau).max(0.0)).collect();
    let kept = shrunk.iter().take_while(|&&x| x > 0.0).count();
    if kept == 0 {
        return Ok((DenseMatrix::zeros(n, t), shrunk));
    }
    let scaled = Mat::from_fn(n, kept, |i, c| u[(i, c)] * shrunk[c]);
    let prod = scaled * v.subcols(0, kept).transpose();
    Ok((DenseMatrix::from_faer(prod.as_ref()), shrunk))
}
