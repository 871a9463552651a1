//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use nnqr::DenseMatrix;

/// One-sided Jacobi SVD. Returns `(U, sigma, V)` with singular values in
/// nonincreasing order; `U` is `m x k`, `V` is `n x k`, `k = min(m, n)`.
pub fn jacobi_svd(a: &DenseMatrix) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
    let (m, n) = a.shape();
    if m < n {
        let (u, s, v) = jacobi_svd(&a.transpose());
        return (v, s, u);
    }
    // columns of `w` are rotated until mutually orthogonal
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 {
                    continue;
                }
                off = off.max(gamma.abs() / (alpha * beta).sqrt());
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (w[p][i], w[q][i]);
                    w[p][i] = c * x - s * y;
                    w[q][i] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[p][i], v[q][i]);
                    v[p][i] = c * x - s * y;
                    v[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut order: Vec<(f64, usize)> =
        (0..n).map(|j| (w[j].iter().map(|x| x * x).sum::<f64>().sqrt(), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sigma: Vec<f64> = order.iter().map(|o| o.0).collect();
    let u = DenseMatrix::from_fn(m, n, |i, c| {
        let (s, j) = order[c];
        if s > 0.0 {
            w[j][i] / s
        } else {
            0.0
        }
    });
    let vm = DenseMatrix::from_fn(n, n, |i, c| v[order[c].1][i]);
    (u, sigma, vm)
}

/// `sum_k max(sigma_k - tau, 0) u_k v_k'` from the Jacobi factors.
pub fn shrink_reconstruct(a: &DenseMatrix, tau: f64) -> DenseMatrix {
    let (u, s, v) = jacobi_svd(a);
    let (m, n) = a.shape();
    DenseMatrix::from_fn(m, n, |i, j| (0..s.len()).map(|k| (s[k] - tau).max(0.0) * u[(i, k)] * v[(j, k)]).sum())
}

/// Golden-section minimization of `c rho_u(v) + (v - gamma)^2 / 2`.
pub fn golden_prox(gamma: f64, u: f64, c: f64) -> f64 {
    let f = |v: f64| {
        let rho = if v <= 0.0 { v * (u - 1.0) } else { v * u };
        c * rho + 0.5 * (v - gamma) * (v - gamma)
    };
    let (mut a, mut b) = (gamma - c - 1.0, gamma + c + 1.0);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-11 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Set of minimizers of `sum rho_u(y_i - b)`: the closed interval between
/// two order statistics (a single point when `n u` is not an integer).
pub fn sample_quantile_interval(y: &[f64], u: f64) -> (f64, f64) {
    let mut s = y.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let nu = n as f64 * u;
    let k = nu.ceil() as usize;
    if (nu - nu.round()).abs() < 1e-12 {
        let k = nu.round() as usize;
        (s[k.max(1) - 1], s[k.min(n - 1)])
    } else {
        (s[k - 1], s[k - 1])
    }
}

pub fn check_loss_sum(r: &[f64], u: f64) -> f64 {
    r.iter().map(|&z| if z <= 0.0 { z * (u - 1.0) } else { z * u }).sum()
}

/// Deterministic pseudo-random values in [0, 1) (SplitMix64).
pub struct Stream(pub u64);

impl Stream {
    pub fn next(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.next().max(1e-300);
        let u2 = self.next();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn matrix(&mut self, m: usize, n: usize) -> DenseMatrix {
        DenseMatrix::from_fn(m, n, |_, _| self.normal())
    }
}
