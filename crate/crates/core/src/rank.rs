//! Rank of the fitted low-rank component, the tangent-space projector of a
//! rank-`r` matrix and the cone diagnostic for estimation errors.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::numcore::nuclear_norm;
use crate::tolerances::ORTHONORMAL_TOL;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankEstimate {
    pub r_hat: usize,
    pub threshold: f64,
    pub singulars: Vec<f64>,
}

/// Counts singular values at or above `threshold`.
pub fn estimate_rank(singulars: &[f64], threshold: f64) -> Result<RankEstimate> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::InvalidArgument(format!("rank threshold must be positive, got {threshold}")));
    }
    if singulars.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidArgument("singular values must be finite and nonnegative".into()));
    }
    if singulars.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidArgument("singular values must be nonincreasing".into()));
    }
    let r_hat = singulars.iter().take_while(|&&s| s >= threshold).count();
    Ok(RankEstimate { r_hat, threshold, singulars: singulars.to_vec() })
}

/// `(N T max(N, T))^(1/4)`, the geometric mean of `sqrt(NT)` and
/// `sqrt(max(N, T))`.
pub fn default_rank_threshold(n: usize, t: usize) -> f64 {
    let (nf, tf) = (n as f64, t as f64);
    (nf * tf * nf.max(tf)).powf(0.25)
}

fn check_orthonormal(m: &DenseMatrix, name: &str) -> Result<()> {
    let gram = m.transpose().matmul(m)?;
    let dev = gram.max_abs_diff(&DenseMatrix::identity(m.cols()));
    if dev > ORTHONORMAL_TOL {
        return Err(Error::InvalidArgument(format!("{name} columns are not orthonormal (deviation {dev:.2e})")));
    }
    Ok(())
}

/// `R R' W + W S S' - R R' W S S'` for `R` (`N x r`) and `S` (`T x r`) with
/// orthonormal columns.
pub fn project_tangent(w: &DenseMatrix, r: &DenseMatrix, s: &DenseMatrix) -> Result<DenseMatrix> {
    let (n, t) = w.shape();
    if r.rows() != n || s.rows() != t || r.cols() != s.cols() {
        return Err(Error::ShapeMismatch(format!(
            "W is {n}x{t}, R is {}x{}, S is {}x{}",
            r.rows(),
            r.cols(),
            s.rows(),
            s.cols()
        )));
    }
    if r.cols() == 0 {
        return Ok(DenseMatrix::zeros(n, t));
    }
    check_orthonormal(r, "R")?;
    check_orthonormal(s, "S")?;
    let st = s.transpose();
    let rtw = r.transpose().matmul(w)?;
    let rrw = r.matmul(&rtw)?;
    let wss = w.matmul(s)?.matmul(&st)?;
    let rrwss = r.matmul(&rtw.matmul(s)?)?.matmul(&st)?;
    Ok(&(&rrw + &wss) - &rrwss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeReport {
    /// `||D_L||_* - 4 ||P D_L||_* - C sqrt(p min(N,T) log(p N T)) ||D_beta||`.
    pub value: f64,
    pub in_cone: bool,
}

/// Evaluates the cone inequality for the errors `(delta_beta, delta_l)`
/// relative to the tangent space spanned by `(r, s)`.
pub fn cone_diagnostic(
    delta_beta: &[f64],
    delta_l: &DenseMatrix,
    r: &DenseMatrix,
    s: &DenseMatrix,
    c_cone: f64,
) -> Result<ConeReport> {
    if !(c_cone > 0.0) {
        return Err(Error::InvalidArgument("cone constant must be positive".into()));
    }
    let (n, t) = delta_l.shape();
    let p = delta_beta.len();
    let projected = project_tangent(delta_l, r, s)?;
    let beta_norm = delta_beta.iter().map(|v| v * v).sum::<f64>().sqrt();
    // With p = 0 the coefficient term vanishes.
    let slack = if p == 0 {
        0.0
    } else {
        let pf = p as f64;
        (pf * n.min(t) as f64 * (pf * (n * t) as f64).ln()).sqrt() * beta_norm
    };
    let value = nuclear_norm(delta_l)? - 4.0 * nuclear_norm(&projected)? - c_cone * slack;
    Ok(ConeReport { value, in_cone: value <= 0.0 })
}
