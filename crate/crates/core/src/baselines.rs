//! Comparison estimators: pooled quantile regression, which ignores the
//! fixed effects, and the iterative factor estimator with a known number of
//! factors.
//!
//! Both are built on [`qr_small`], a dense linear quantile regression for
//! problems with few regressors. It runs an ADMM splitting of
//! `min sum rho_u(v)  s.t.  Z b + v = y` and then walks the vertices of the
//! piecewise-linear objective until no edge direction descends, so the
//! returned coefficients are an exact minimizer.

use serde::Serialize;

use crate::alm::PanelData;
use crate::error::{check_quantile, Error, Result};
use crate::linalg::{solve_square, Cholesky};
use crate::matrix::DenseMatrix;
use crate::numcore::{check_loss_scalar, check_loss_slice, prox_check_scalar, svd};
use crate::tolerances::{ITERATIVE_MAX_SWEEPS, ITERATIVE_TOL, QR_MAX_ITERS, QR_TOL};

#[derive(Debug, Clone, Serialize)]
pub struct QrOptions {
    /// ADMM stopping threshold on the relative primal and dual residuals.
    pub tol: f64,
    pub max_iters: usize,
    /// Cap on vertex pivots after ADMM. Zero disables the exact finish.
    pub max_pivots: usize,
}

impl Default for QrOptions {
    fn default() -> Self {
        Self { tol: QR_TOL, max_iters: QR_MAX_ITERS, max_pivots: 10_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QrSolution {
    pub coef: Vec<f64>,
    /// ADMM iterations.
    pub iterations: usize,
    pub pivots: usize,
    /// True when the vertex walk certified optimality, or (without the
    /// walk) when ADMM met its tolerance.
    pub converged: bool,
    /// `sum_i rho_u(y_i - Z_i' b)`.
    pub objective: f64,
}

/// Linear quantile regression of `y` on the columns of `z` (`n x q`).
pub fn qr_small(y: &[f64], z: &DenseMatrix, u: f64, opts: &QrOptions) -> Result<QrSolution> {
    qr_small_from(y, z, u, opts, None)
}

/// [`qr_small`] started from `start` instead of zero.
pub fn qr_small_from(
    y: &[f64],
    z: &DenseMatrix,
    u: f64,
    opts: &QrOptions,
    start: Option<&[f64]>,
) -> Result<QrSolution> {
    check_quantile(u)?;
    let (n, q) = z.shape();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!("y has {} entries, design has {n} rows", y.len())));
    }
    if q == 0 || n <= q {
        return Err(Error::InvalidArgument(format!("need n > q >= 1, got n = {n}, q = {q}")));
    }
    if !z.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quantile regression input"));
    }
    if let Some(s) = start {
        if s.len() != q {
            return Err(Error::ShapeMismatch("start vector length differs from q".into()));
        }
    }
    let gram = z.transpose().matmul(z)?;
    let chol = Cholesky::factor(gram.as_slice(), q)?;

    let (mut b, iterations, admm_ok) = admm(y, z, u, &chol, opts, start);
    let mut pivots = 0;
    let mut converged = admm_ok;
    if opts.max_pivots > 0 {
        if let Some(walk) = vertex_walk(y, z, u, &b, opts.max_pivots) {
            if walk.objective <= objective(y, z, u, &b) {
                b = walk.coef;
            }
            pivots = walk.pivots;
            converged = walk.optimal;
        }
    }
    let objective = objective(y, z, u, &b);
    Ok(QrSolution { coef: b, iterations, pivots, converged, objective })
}

fn objective(y: &[f64], z: &DenseMatrix, u: f64, b: &[f64]) -> f64 {
    (0..y.len()).map(|i| check_loss_scalar(y[i] - dot(z.row(i), b), u)).sum()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn admm(
    y: &[f64],
    z: &DenseMatrix,
    u: f64,
    chol: &Cholesky,
    opts: &QrOptions,
    start: Option<&[f64]>,
) -> (Vec<f64>, usize, bool) {
    let (n, q) = z.shape();
    let mut b = start.map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; q]);
    let mut zb: Vec<f64> = (0..n).map(|i| dot(z.row(i), &b)).collect();
    let l1: f64 = y.iter().zip(&zb).map(|(a, c)| (a - c).abs()).sum();
    let mut mu = if l1 > 0.0 { n as f64 / l1 } else { 1.0 };
    let mut v = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut zt = vec![0.0; q];
    let y_norm = norm(y);

    for iter in 1..=opts.max_iters {
        for i in 0..n {
            v[i] = prox_check_scalar(y[i] - zb[i] - w[i], u, 1.0 / mu);
            rhs[i] = y[i] - v[i] - w[i];
        }
        zt.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let row = z.row(i);
            for c in 0..q {
                zt[c] += row[c] * rhs[i];
            }
        }
        b = chol.solve(&zt);
        let mut r_sq = 0.0;
        let mut s_sq = 0.0;
        for i in 0..n {
            let new = dot(z.row(i), &b);
            let d = new - zb[i];
            s_sq += d * d;
            zb[i] = new;
            let r = zb[i] + v[i] - y[i];
            w[i] += r;
            r_sq += r * r;
        }
        let r_norm = r_sq.sqrt();
        let s_norm = mu * s_sq.sqrt();
        let w_norm = mu * norm(&w);
        if r_norm <= opts.tol * (1.0 + y_norm) && s_norm <= opts.tol * (1.0 + w_norm) {
            return (b, iter, true);
        }
        // Residual balancing; the scaled multiplier follows the penalty.
        if r_norm > 10.0 * s_norm {
            mu *= 2.0;
            w.iter_mut().for_each(|x| *x *= 0.5);
        } else if s_norm > 10.0 * r_norm {
            mu *= 0.5;
            w.iter_mut().for_each(|x| *x *= 2.0);
        }
    }
    (b, opts.max_iters, false)
}

struct Walk {
    coef: Vec<f64>,
    pivots: usize,
    optimal: bool,
    objective: f64,
}

/// Picks `q` rows with the smallest absolute residuals that are linearly
/// independent, by Gram-Schmidt with a relative tolerance.
fn initial_basis(z: &DenseMatrix, resid: &[f64]) -> Option<Vec<usize>> {
    let (n, q) = z.shape();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()).then(a.cmp(&b)));
    let mut basis = Vec::with_capacity(q);
    let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(q);
    for &i in &order {
        let row = z.row(i);
        let scale = norm(row);
        if scale == 0.0 {
            continue;
        }
        let mut v = row.to_vec();
        for e in &ortho {
            let c = dot(&v, e);
            v.iter_mut().zip(e).for_each(|(x, ei)| *x -= c * ei);
        }
        let len = norm(&v);
        if len > 1e-8 * scale {
            v.iter_mut().for_each(|x| *x /= len);
            ortho.push(v);
            basis.push(i);
            if basis.len() == q {
                return Some(basis);
            }
        }
    }
    None
}

/// Simplex-style descent over vertices (points interpolating `q`
/// observations). Each pivot frees one basic observation in the direction
/// of steepest descent and moves to the minimizing breakpoint along that
/// edge, so the objective strictly decreases.
fn vertex_walk(y: &[f64], z: &DenseMatrix, u: f64, b0: &[f64], max_pivots: usize) -> Option<Walk> {
    let (n, q) = z.shape();
    let resid0: Vec<f64> = (0..n).map(|i| y[i] - dot(z.row(i), b0)).collect();
    let mut basis = initial_basis(z, &resid0)?;
    let mut in_basis = vec![false; n];
    let mut resid = vec![0.0; n];
    let mut g = vec![0.0; n * q];
    let mut breaks: Vec<(f64, f64)> = Vec::with_capacity(n);
    let mut pivots = 0;

    loop {
        let zh: Vec<f64> = basis.iter().flat_map(|&i| z.row(i).iter().copied()).collect();
        let yh: Vec<f64> = basis.iter().map(|&i| y[i]).collect();
        let b = solve_square(&zh, &yh, q, 1e-12)?;
        // Columns of the inverse basis matrix, d_k solves Z_h d = e_k.
        let mut dinv = vec![0.0; q * q];
        for k in 0..q {
            let mut e = vec![0.0; q];
            e[k] = 1.0;
            let d = solve_square(&zh, &e, q, 1e-12)?;
            for c in 0..q {
                dinv[c * q + k] = d[c];
            }
        }
        in_basis.iter_mut().for_each(|f| *f = false);
        for &i in &basis {
            in_basis[i] = true;
        }
        for i in 0..n {
            let row = z.row(i);
            resid[i] = if in_basis[i] { 0.0 } else { y[i] - dot(row, &b) };
            for k in 0..q {
                g[i * q + k] = (0..q).map(|c| row[c] * dinv[c * q + k]).sum();
            }
        }
        let obj = check_loss_slice(&resid, u);

        // Moving along t * s * (-d_k) makes basic residual k equal t*s and
        // changes residual i by -t * gi with gi = -s * (Z_i' d_k).
        let mut best: Option<(f64, usize, f64)> = None;
        for k in 0..q {
            for s in [1.0f64, -1.0] {
                let mut slope = if s > 0.0 { u } else { 1.0 - u };
                let mut scale = 1.0;
                for i in 0..n {
                    if in_basis[i] {
                        continue;
                    }
                    let gi = -s * g[i * q + k];
                    scale += gi.abs();
                    let r = resid[i];
                    let deriv = if r > 0.0 || (r == 0.0 && gi < 0.0) { u } else { u - 1.0 };
                    slope -= gi * deriv;
                }
                if slope < -1e-12 * scale && best.is_none_or(|(bs, _, _)| slope < bs) {
                    best = Some((slope, k, s));
                }
            }
        }
        let Some((mut slope, k, s)) = best else {
            return Some(Walk { coef: b, pivots, optimal: true, objective: obj });
        };
        if pivots >= max_pivots {
            return Some(Walk { coef: b, pivots, optimal: false, objective: obj });
        }

        breaks.clear();
        for i in 0..n {
            if in_basis[i] {
                continue;
            }
            let gi = -s * g[i * q + k];
            let r = resid[i];
            if r != 0.0 && gi != 0.0 && (r > 0.0) == (gi > 0.0) {
                breaks.push((r / gi, gi.abs()));
            }
        }
        breaks.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut entering = None;
        for (idx, &(_, jump)) in breaks.iter().enumerate() {
            slope += jump;
            if slope >= 0.0 {
                entering = Some(idx);
                break;
            }
        }
        let idx = entering?;
        let t_star = breaks[idx].0;
        // Identify the observation at that breakpoint.
        let mut enter_obs = None;
        for i in 0..n {
            if in_basis[i] {
                continue;
            }
            let gi = -s * g[i * q + k];
            let r = resid[i];
            if r != 0.0 && gi != 0.0 && (r > 0.0) == (gi > 0.0) && r / gi == t_star {
                enter_obs = Some(i);
                break;
            }
        }
        let new_basis = {
            let mut nb = basis.clone();
            nb[k] = enter_obs?;
            nb
        };
        let zn: Vec<f64> = new_basis.iter().flat_map(|&i| z.row(i).iter().copied()).collect();
        let yn: Vec<f64> = new_basis.iter().map(|&i| y[i]).collect();
        match solve_square(&zn, &yn, q, 1e-12) {
            Some(bn) if objective(y, z, u, &bn) < obj => basis = new_basis,
            _ => return Some(Walk { coef: b, pivots, optimal: false, objective: obj }),
        }
        pivots += 1;
    }
}

/// Stacks the panel covariates into an `NT x p` design in row-major
/// `(i, t)` order.
fn stacked_design(data: &PanelData) -> DenseMatrix {
    let (n, t, p) = (data.n(), data.t(), data.p());
    DenseMatrix::from_fn(n * t, p, |k, j| data.x[j].as_slice()[k])
}

/// Pooled quantile regression of every `Y_it` on `X_it`, ignoring the fixed
/// effects.
pub fn pooled_fit(data: &PanelData, u: f64) -> Result<Vec<f64>> {
    Ok(pooled_solution(data, data.y.as_slice(), u, &QrOptions::default(), None)?.coef)
}

fn pooled_solution(
    data: &PanelData,
    target: &[f64],
    u: f64,
    opts: &QrOptions,
    start: Option<&[f64]>,
) -> Result<QrSolution> {
    if data.p() == 0 {
        return Err(Error::InvalidArgument("pooled regression needs p >= 1".into()));
    }
    data.validate()?;
    qr_small_from(target, &stacked_design(data), u, opts, start)
}

#[derive(Debug, Clone, Serialize)]
pub struct IterativeOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    pub qr: QrOptions,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        Self { tol: ITERATIVE_TOL, max_sweeps: ITERATIVE_MAX_SWEEPS, qr: QrOptions::default() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IterativeFit {
    pub beta: Vec<f64>,
    /// `N x r` loadings.
    pub lambda: DenseMatrix,
    /// `T x r` factors.
    pub f: DenseMatrix,
    /// `lambda * f'`.
    pub l: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// `(1/NT) sum rho_u(Y - X beta - L)` at initialization and after each
    /// sweep.
    pub objective_trace: Vec<f64>,
}

fn map_indices<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}

/// Updates one coefficient block by quantile regression of `target` on
/// `design`, keeping the current value unless the new one does not raise
/// the block loss.
fn block_update(target: &[f64], design: &DenseMatrix, u: f64, current: &[f64], opts: &QrOptions) -> Result<Vec<f64>> {
    let sol = qr_small_from(target, design, u, opts, Some(current)).map_err(|e| match e {
        Error::IllPosedDesign(msg) => Error::Degenerate(format!("factor iterate lost rank: {msg}")),
        other => other,
    })?;
    let old = objective(target, design, u, current);
    Ok(if sol.objective <= old { sol.coef } else { current.to_vec() })
}

/// Iterative factor quantile regression with `r` factors.
///
/// Starts from the pooled coefficients and the top `r` right singular
/// vectors of the pooled residual (scaled by `sqrt(T)`), then sweeps over
/// all loadings, all factors and the coefficients until
/// `||dbeta||^2 / p + ||dL||_F^2 / NT <= tol`. With `r = 0` the result is
/// the pooled fit.
pub fn iterative_fit(data: &PanelData, u: f64, r: usize, opts: &IterativeOptions) -> Result<IterativeFit> {
    check_quantile(u)?;
    data.validate()?;
    let (n, t, p) = (data.n(), data.t(), data.p());
    if r > n.min(t) {
        return Err(Error::InvalidArgument(format!("rank {r} exceeds min(N, T) = {}", n.min(t))));
    }
    if r > 0 && (n <= r || t <= r) {
        return Err(Error::InvalidArgument("need N > r and T > r".into()));
    }
    if !(opts.tol > 0.0) || opts.max_sweeps == 0 {
        return Err(Error::InvalidArgument("tolerance and sweep cap must be positive".into()));
    }
    let nt = (n * t) as f64;
    let y = data.y.as_slice();

    let mut beta = if p > 0 { pooled_solution(data, y, u, &opts.qr, None)?.coef } else { Vec::new() };
    let loss = |beta: &[f64], l: &DenseMatrix| {
        let xb = data.x_beta(beta);
        (0..n * t).map(|k| check_loss_scalar(y[k] - xb.as_slice()[k] - l.as_slice()[k], u)).sum::<f64>() / nt
    };

    if r == 0 {
        let l = DenseMatrix::zeros(n, t);
        let obj = loss(&beta, &l);
        return Ok(IterativeFit {
            beta,
            lambda: DenseMatrix::zeros(n, 0),
            f: DenseMatrix::zeros(t, 0),
            l,
            iterations: 0,
            converged: true,
            objective_trace: vec![obj],
        });
    }

    let resid = &data.y - &data.x_beta(&beta);
    let factors = svd(&resid)?;
    let (_, right) = factors.truncate(r);
    let mut f = &right * (t as f64).sqrt();
    let mut lambda = DenseMatrix::zeros(n, r);
    let mut l = DenseMatrix::zeros(n, t);
    let mut trace = vec![loss(&beta, &l)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_sweeps {
        iterations += 1;
        let xb = data.x_beta(&beta);
        let net = &data.y - &xb;

        let rows = map_indices(n, |i| block_update(net.row(i), &f, u, lambda.row(i), &opts.qr))?;
        lambda = DenseMatrix::from_fn(n, r, |i, c| rows[i][c]);

        let net_t = net.transpose();
        let cols = map_indices(t, |s| block_update(net_t.row(s), &lambda, u, f.row(s), &opts.qr))?;
        f = DenseMatrix::from_fn(t, r, |s, c| cols[s][c]);

        let l_new = lambda.matmul(&f.transpose())?;
        let mut beta_change = 0.0;
        if p > 0 {
            let target = &data.y - &l_new;
            let sol = pooled_solution(data, target.as_slice(), u, &opts.qr, Some(&beta))?;
            let old = objective(target.as_slice(), &stacked_design(data), u, &beta);
            if sol.objective <= old {
                beta_change = sol.coef.iter().zip(&beta).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / p as f64;
                beta = sol.coef;
            }
        }
        let change = beta_change + l_new.dist_sq(&l) / nt;
        l = l_new;
        trace.push(loss(&beta, &l));
        if change <= opts.tol {
            converged = true;
            break;
        }
    }

    Ok(IterativeFit { beta, lambda, f, l, iterations, converged, objective_trace: trace })
}
