//! Monte Carlo evaluation: squared bias and variance of the coefficient
//! estimates, mean squared error of the low-rank component and of the
//! fitted conditional quantile, and the experiment driver that produces
//! one row per (cell, estimator).

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::alm::{alm_fit, default_lambda, FitConfig};
use crate::baselines::{iterative_fit, pooled_fit, IterativeOptions};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::numcore::singular_values;
use crate::simulation::{replication_seed, simulate, ErrorLaw, SimulationSpec};
use crate::tolerances::{ALM_MAX_ITERS, ALM_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Estimator {
    /// Nuclear-norm penalized estimator.
    Nu,
    /// Iterative factor estimator.
    It,
    /// Pooled quantile regression.
    Po,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Nu => "nu",
            Estimator::It => "it",
            Estimator::Po => "po",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "nu" => Some(Estimator::Nu),
            "it" => Some(Estimator::It),
            "po" => Some(Estimator::Po),
            _ => None,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One replication's estimate. `l` is `None` for estimators without a
/// low-rank component.
#[derive(Debug, Clone)]
pub struct ReplicationFit {
    pub beta: Vec<f64>,
    pub l: Option<DenseMatrix>,
}

/// Ground truth and covariates of one replication.
#[derive(Debug, Clone, Copy)]
pub struct ReplicationTruth<'a> {
    pub beta: &'a [f64],
    pub l0: &'a DenseMatrix,
    pub x: &'a [DenseMatrix],
}

/// Aggregated metrics on the natural scale (no x100 / x1e4 factors).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSummary {
    pub bias2_beta: f64,
    pub var_beta: f64,
    pub mse_l: Option<f64>,
    pub mse_q: Option<f64>,
    /// `mse_q` was computed with a zero low-rank component.
    pub mse_q_zero_l: bool,
    pub replications: usize,
}

/// Per-replication errors, enough to aggregate without keeping matrices.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationErrors {
    pub beta_err: Vec<f64>,
    pub sq_l: Option<f64>,
    pub sq_q: Option<f64>,
}

/// Errors of one fit. With `zero_fill_l`, a missing `L` counts as zero for
/// the quantile error (the low-rank error stays undefined).
pub fn replication_errors(fit: &ReplicationFit, truth: &ReplicationTruth<'_>, zero_fill_l: bool) -> Result<ReplicationErrors> {
    let p = truth.beta.len();
    if fit.beta.len() != p || truth.x.len() != p {
        return Err(Error::ShapeMismatch(format!(
            "beta_hat has {} entries, truth has {p}, covariates {}",
            fit.beta.len(),
            truth.x.len()
        )));
    }
    let (n, t) = truth.l0.shape();
    if truth.x.iter().any(|x| x.shape() != (n, t)) {
        return Err(Error::ShapeMismatch("covariate and L0 shapes differ".into()));
    }
    let nt = (n * t) as f64;
    let beta_err: Vec<f64> = fit.beta.iter().zip(truth.beta).map(|(a, b)| a - b).collect();
    let mut q_err = DenseMatrix::zeros(n, t);
    for (x, e) in truth.x.iter().zip(&beta_err) {
        q_err.axpy(*e, x);
    }
    let (sq_l, sq_q) = match &fit.l {
        Some(l) => {
            if l.shape() != (n, t) {
                return Err(Error::ShapeMismatch("L_hat and L0 differ in shape".into()));
            }
            let dl = l - truth.l0;
            q_err.axpy(1.0, &dl);
            (Some(dl.frobenius_norm_sq() / nt), Some(q_err.frobenius_norm_sq() / nt))
        }
        None if zero_fill_l => {
            q_err.axpy(-1.0, truth.l0);
            (None, Some(q_err.frobenius_norm_sq() / nt))
        }
        None => (None, None),
    };
    Ok(ReplicationErrors { beta_err, sq_l, sq_q })
}

/// Averages per-replication errors. Bias and variance are taken per
/// coefficient and then averaged over coefficients.
pub fn aggregate(errors: &[ReplicationErrors], mse_q_zero_l: bool) -> Result<MetricSummary> {
    let b = errors.len();
    if b == 0 {
        return Err(Error::InvalidArgument("no replications to aggregate".into()));
    }
    let p = errors[0].beta_err.len();
    if errors.iter().any(|e| e.beta_err.len() != p) {
        return Err(Error::ShapeMismatch("replications disagree on p".into()));
    }
    let bf = b as f64;
    let (mut bias2, mut var) = (0.0, 0.0);
    for j in 0..p {
        let mean = errors.iter().map(|e| e.beta_err[j]).sum::<f64>() / bf;
        let centered = errors.iter().map(|e| (e.beta_err[j] - mean).powi(2)).sum::<f64>() / bf;
        bias2 += mean * mean;
        var += centered;
    }
    if p > 0 {
        bias2 /= p as f64;
        var /= p as f64;
    }
    let mean_opt = |f: &dyn Fn(&ReplicationErrors) -> Option<f64>| -> Option<f64> {
        let vals: Option<Vec<f64>> = errors.iter().map(f).collect();
        vals.map(|v| v.iter().sum::<f64>() / bf)
    };
    Ok(MetricSummary {
        bias2_beta: bias2,
        var_beta: var,
        mse_l: mean_opt(&|e| e.sq_l),
        mse_q: mean_opt(&|e| e.sq_q),
        mse_q_zero_l,
        replications: b,
    })
}

/// Metrics over replications `b = 1..B`:
/// `Bias^2 = (1/p) sum_j (mean_b (beta_hat_jb - beta_j))^2`,
/// `Var = (1/p) sum_j [mean_b beta_hat_jb^2 - (mean_b beta_hat_jb)^2]`,
/// `MSE_L = mean_b ||L_hat_b - L0_b||_F^2 / NT` and
/// `MSE_q = mean_b ||sum_j X_jb (beta_hat_jb - beta_j) + L_hat_b - L0_b||_F^2 / NT`.
pub fn compute_metrics(fits: &[ReplicationFit], truths: &[ReplicationTruth<'_>], zero_fill_l: bool) -> Result<MetricSummary> {
    if fits.len() != truths.len() {
        return Err(Error::ShapeMismatch(format!("{} fits but {} truths", fits.len(), truths.len())));
    }
    let errors = fits
        .iter()
        .zip(truths)
        .map(|(f, t)| replication_errors(f, t, zero_fill_l))
        .collect::<Result<Vec<_>>>()?;
    let zero_l = zero_fill_l && fits.iter().any(|f| f.l.is_none());
    aggregate(&errors, zero_l)
}

/// One cell of the experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentCell {
    pub n: usize,
    pub t: usize,
    pub phi: f64,
    pub error_law: ErrorLaw,
    pub u: f64,
    pub estimators: Vec<Estimator>,
}

/// Number of factors handed to the iterative estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ItRank {
    /// The nominal count of the data-generating process at level `u`.
    TrueRank,
    Fixed(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub reps: usize,
    pub master_seed: u64,
    pub it_rank: Option<ItRank>,
    /// Overrides the default penalty of the nuclear-norm estimator.
    pub lambda: Option<f64>,
    pub alm_tol: f64,
    pub alm_max_iters: usize,
    pub iterative: IterativeOptions,
    /// Report a pooled `MSE_q` computed with `L = 0`.
    pub po_mse_q: bool,
    /// Keep per-replication estimates in the output.
    pub keep_replications: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            reps: 20,
            master_seed: 0,
            it_rank: Some(ItRank::TrueRank),
            lambda: None,
            alm_tol: ALM_TOL,
            alm_max_iters: ALM_MAX_ITERS,
            iterative: IterativeOptions::default(),
            po_mse_q: false,
            keep_replications: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub estimator: Estimator,
    pub u: f64,
    pub n: usize,
    pub t: usize,
    pub phi: f64,
    pub error_law: ErrorLaw,
    /// Replications that produced an estimate.
    pub replications: usize,
    pub bias2_beta: f64,
    pub var_beta: f64,
    pub mse_l: Option<f64>,
    pub mse_q: Option<f64>,
    pub mse_q_zero_l: bool,
    pub mean_seconds: f64,
    pub nonconverged: usize,
    pub failures: usize,
}

/// A single fit kept for inspection.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicationRecord {
    pub cell: usize,
    pub rep: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub beta: Vec<f64>,
    pub l: Option<DenseMatrix>,
    pub singulars: Vec<f64>,
    pub converged: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricsRow>,
    pub replications: Vec<ReplicationRecord>,
}

struct FitOutcome {
    cell: usize,
    estimator: Estimator,
    rep: usize,
    result: std::result::Result<(ReplicationErrors, bool, f64, Option<ReplicationRecord>), String>,
}

fn panel_key(c: &ExperimentCell) -> (usize, usize, u64, ErrorLaw) {
    (c.n, c.t, c.phi.to_bits(), c.error_law)
}

fn run_job(
    cells: &[ExperimentCell],
    members: &[usize],
    rep: usize,
    config: &ExperimentConfig,
) -> Result<Vec<FitOutcome>> {
    let first = &cells[members[0]];
    let seed = replication_seed(config.master_seed, rep as u64);
    let mut levels: Vec<f64> = members.iter().map(|&c| cells[c].u).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let spec = SimulationSpec::new(first.n, first.t, first.phi, first.error_law, seed, levels);
    let truth = simulate(&spec)?;
    let data = &truth.data;

    let mut out = Vec::new();
    for &ci in members {
        let cell = &cells[ci];
        let level = truth.at(cell.u).ok_or_else(|| Error::InvalidArgument("missing truth level".into()))?;
        let rt = ReplicationTruth { beta: &level.beta, l0: &level.l0, x: &data.x };
        for &est in &cell.estimators {
            let start = Instant::now();
            let fitted: Result<(ReplicationFit, bool)> = match est {
                Estimator::Nu => {
                    let mut cfg = FitConfig::new(cell.u, config.lambda.unwrap_or_else(|| default_lambda(cell.n, cell.t)));
                    cfg.tol = config.alm_tol;
                    cfg.max_iters = config.alm_max_iters;
                    alm_fit(data, &cfg).map(|f| (ReplicationFit { beta: f.beta, l: Some(f.l) }, f.converged))
                }
                Estimator::It => {
                    let r = match config.it_rank {
                        Some(ItRank::TrueRank) => level.r_true,
                        Some(ItRank::Fixed(r)) => r,
                        None => return Err(Error::InvalidArgument("iterative estimator needs a rank".into())),
                    };
                    iterative_fit(data, cell.u, r, &config.iterative)
                        .map(|f| (ReplicationFit { beta: f.beta, l: Some(f.l) }, f.converged))
                }
                Estimator::Po => pooled_fit(data, cell.u).map(|b| (ReplicationFit { beta: b, l: None }, true)),
            };
            let seconds = start.elapsed().as_secs_f64();
            let result = fitted.and_then(|(fit, converged)| {
                let errs = replication_errors(&fit, &rt, config.po_mse_q)?;
                let record = if config.keep_replications {
                    let singulars = match &fit.l {
                        Some(l) => singular_values(l)?,
                        None => Vec::new(),
                    };
                    Some(ReplicationRecord {
                        cell: ci,
                        rep,
                        seed,
                        estimator: est,
                        beta: fit.beta,
                        l: fit.l,
                        singulars,
                        converged,
                        seconds,
                    })
                } else {
                    None
                };
                Ok((errs, converged, seconds, record))
            });
            out.push(FitOutcome { cell: ci, estimator: est, rep, result: result.map_err(|e| e.to_string()) });
        }
    }
    Ok(out)
}

/// Runs every cell for `config.reps` replications.
///
/// Cells sharing `(N, T, phi, error law)` reuse one simulated panel per
/// replication, and replication `b` uses the same seed in every cell.
/// Failed fits are counted per row and never abort the grid.
pub fn run_experiment(cells: &[ExperimentCell], config: &ExperimentConfig) -> Result<ExperimentOutput> {
    if cells.is_empty() {
        return Err(Error::InvalidArgument("experiment grid is empty".into()));
    }
    if config.reps == 0 {
        return Err(Error::InvalidArgument("need at least one replication".into()));
    }
    for c in cells {
        crate::error::check_quantile(c.u)?;
        if c.estimators.is_empty() {
            return Err(Error::InvalidArgument("cell without estimators".into()));
        }
        if c.estimators.contains(&Estimator::It) && config.it_rank.is_none() {
            return Err(Error::InvalidArgument("iterative estimator needs a rank".into()));
        }
    }
    let mut groups: BTreeMap<(usize, usize, u64, ErrorLaw), Vec<usize>> = BTreeMap::new();
    for (i, c) in cells.iter().enumerate() {
        groups.entry(panel_key(c)).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = groups.into_values().collect();
    let jobs: Vec<(usize, usize)> =
        (0..groups.len()).flat_map(|g| (0..config.reps).map(move |r| (g, r))).collect();

    let run = |&(g, rep): &(usize, usize)| run_job(cells, &groups[g], rep, config);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Vec<FitOutcome>>> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Vec<FitOutcome>>> = jobs.iter().map(run).collect();

    let mut outcomes = Vec::new();
    for r in results {
        outcomes.extend(r?);
    }
    outcomes.sort_by_key(|o| (o.cell, o.estimator, o.rep));

    let mut rows = Vec::new();
    let mut replications = Vec::new();
    for (ci, cell) in cells.iter().enumerate() {
        for &est in &cell.estimators {
            let mut errors = Vec::new();
            let (mut seconds, mut nonconverged, mut failures) = (0.0, 0, 0);
            for o in outcomes.iter_mut().filter(|o| o.cell == ci && o.estimator == est) {
                match &mut o.result {
                    Ok((errs, converged, secs, record)) => {
                        errors.push(errs.clone());
                        seconds += *secs;
                        if !*converged {
                            nonconverged += 1;
                        }
                        if let Some(rec) = record.take() {
                            replications.push(rec);
                        }
                    }
                    Err(_) => failures += 1,
                }
            }
            let zero_l = est == Estimator::Po && config.po_mse_q;
            let (summary, mean_seconds) = if errors.is_empty() {
                (None, f64::NAN)
            } else {
                (Some(aggregate(&errors, zero_l)?), seconds / errors.len() as f64)
            };
            rows.push(MetricsRow {
                estimator: est,
                u: cell.u,
                n: cell.n,
                t: cell.t,
                phi: cell.phi,
                error_law: cell.error_law,
                replications: errors.len(),
                bias2_beta: summary.as_ref().map_or(f64::NAN, |s| s.bias2_beta),
                var_beta: summary.as_ref().map_or(f64::NAN, |s| s.var_beta),
                mse_l: summary.as_ref().and_then(|s| s.mse_l),
                mse_q: summary.as_ref().and_then(|s| s.mse_q),
                mse_q_zero_l: zero_l,
                mean_seconds,
                nonconverged,
                failures,
            });
        }
    }
    Ok(ExperimentOutput { rows, replications })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fits_give_zero_metrics() {
        let l0 = DenseMatrix::filled(2, 3, 0.5);
        let x = vec![DenseMatrix::filled(2, 3, 1.0)];
        let beta = [0.3];
        let truth = ReplicationTruth { beta: &beta, l0: &l0, x: &x };
        let fit = ReplicationFit { beta: vec![0.3], l: Some(l0.clone()) };
        let m = compute_metrics(&[fit], &[truth], false).unwrap();
        assert_eq!((m.bias2_beta, m.var_beta, m.mse_l, m.mse_q), (0.0, 0.0, Some(0.0), Some(0.0)));
    }

    #[test]
    fn ones_offset_gives_unit_mse() {
        let l0 = DenseMatrix::zeros(3, 4);
        let x: Vec<DenseMatrix> = vec![];
        let truth = ReplicationTruth { beta: &[], l0: &l0, x: &x };
        let fit = ReplicationFit { beta: vec![], l: Some(DenseMatrix::filled(3, 4, 1.0)) };
        let m = compute_metrics(&[fit], &[truth], false).unwrap();
        assert!((m.mse_l.unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_perturbation() {
        let l0 = DenseMatrix::zeros(1, 2);
        let x = vec![DenseMatrix::zeros(1, 2)];
        let beta = [1.0];
        let truth = ReplicationTruth { beta: &beta, l0: &l0, x: &x };
        let d = 0.25;
        let fits = [ReplicationFit { beta: vec![1.0 + d], l: None }, ReplicationFit { beta: vec![1.0 - d], l: None }];
        let m = compute_metrics(&fits, &[truth, truth], false).unwrap();
        assert!(m.bias2_beta.abs() < 1e-15);
        assert!((m.var_beta - d * d).abs() < 1e-15);
        assert_eq!(m.mse_l, None);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(compute_metrics(&[], &[], false).is_err());
        assert!(run_experiment(&[], &ExperimentConfig::default()).is_err());
    }

    #[test]
    fn estimator_labels_round_trip() {
        for e in [Estimator::Nu, Estimator::It, Estimator::Po] {
            assert_eq!(Estimator::parse(e.label()), Some(e));
        }
        assert_eq!(Estimator::parse("xx"), None);
    }
}
