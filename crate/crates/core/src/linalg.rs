//! Small dense solvers for the p x p normal equations of the coefficient
//! steps and the q x q interpolation systems of the quantile-regression
//! polish step.

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::tolerances::GRAM_MAX_CONDITION;

/// Cholesky factor of a symmetric positive definite matrix, stored as the
/// lower triangle in row-major order.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors `gram` (row-major, `n x n`) after checking that its condition
    /// number stays below [`GRAM_MAX_CONDITION`].
    pub fn factor(gram: &[f64], n: usize) -> Result<Self> {
        assert_eq!(gram.len(), n * n);
        let cond = condition_number(gram, n)?;
        if !(cond < GRAM_MAX_CONDITION) {
            return Err(Error::IllPosedDesign(format!(
                "Gram matrix condition number {cond:.3e} exceeds {GRAM_MAX_CONDITION:.0e}"
            )));
        }
        let mut lower = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = gram[i * n + j];
                for k in 0..j {
                    s -= lower[i * n + k] * lower[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::IllPosedDesign("Gram matrix is not positive definite".into()));
                    }
                    lower[i * n + i] = s.sqrt();
                } else {
                    lower[i * n + j] = s / lower[j * n + j];
                }
            }
        }
        Ok(Self { n, lower })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.lower[i * n + k] * y[k];
            }
            y[i] = s / self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.lower[k * n + i] * y[k];
            }
            y[i] = s / self.lower[i * n + i];
        }
        y
    }
}

/// Ratio of the extreme eigenvalues of a symmetric matrix; infinite when the
/// smallest eigenvalue is not positive.
pub fn condition_number(sym: &[f64], n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Gram matrix"));
    }
    let m = Mat::from_fn(n, n, |i, j| sym[i * n + j]);
    let eig = m
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| Error::IllPosedDesign("eigenvalue iteration failed".into()))?;
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if min <= 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(max / min)
    }
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot falls below `pivot_tol` times the
/// largest entry of `a`.
pub fn solve_square(a: &[f64], b: &[f64], n: usize, pivot_tol: f64) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    let scale = m.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..n {
        let (piv, best) = (col..n)
            .map(|r| (r, m[r * n + col].abs()))
            .fold((col, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best <= pivot_tol * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(piv * n + k, col * n + k);
            }
            x.swap(piv, col);
        }
        for r in col + 1..n {
            let f = m[r * n + col] / m[col * n + col];
            if f != 0.0 {
                for k in col..n {
                    m[r * n + k] -= f * m[col * n + k];
                }
                x[r] -= f * x[col];
            }
        }
    }
    for r in (0..n).rev() {
        let mut s = x[r];
        for k in r + 1..n {
            s -= m[r * n + k] * x[k];
        }
        x[r] = s / m[r * n + r];
    }
    Some(x)
}
