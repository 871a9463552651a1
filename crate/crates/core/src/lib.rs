//! Nuclear-norm penalized quantile regression for panel data with
//! interactive fixed effects.
//!
//! The estimator solves, for a quantile level `u`,
//!
//! ```text
//! min_{beta, L}  (1/NT) * rho_u(Y - sum_j X_j beta_j - L) + lambda * ||L||_*
//! ```
//!
//! with an augmented Lagrangian (ALM) scheme whose L-step is singular value
//! thresholding and whose residual step is the elementwise proximal map of
//! the check loss. The crate also ships the two comparison estimators
//! (pooled quantile regression and an iterative factor fit with known rank),
//! a rank estimator built on the singular-value gap of the fitted low-rank
//! component, the Monte Carlo design used to study all three, and the
//! panel CSV formats consumed by the `nnqr` command-line tool.
//!
//! ```
//! use nnqr::{alm_fit, simulate, FitConfig, SimulationSpec, ErrorLaw};
//!
//! let spec = SimulationSpec::new(30, 30, 0.2, ErrorLaw::StandardNormal, 7, vec![0.5]);
//! let sim = simulate(&spec).unwrap();
//! let cfg = FitConfig::with_defaults(0.5, sim.data.n(), sim.data.t());
//! let fit = alm_fit(&sim.data, &cfg).unwrap();
//! assert_eq!(fit.beta.len(), 3);
//! ```

pub mod alm;
pub mod baselines;
mod error;
pub mod linalg;
pub mod matrix;
pub mod metrics;
pub mod numcore;
pub mod panel_io;
pub mod rank;
pub mod simulation;
pub mod tolerances;

pub use alm::{alm_fit, default_lambda, default_mu, objective_value, FitConfig, FitResult, PanelData};
pub use baselines::{iterative_fit, pooled_fit, qr_small, qr_small_from, IterativeFit, IterativeOptions, QrOptions, QrSolution};
pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use metrics::{
    compute_metrics, run_experiment, Estimator, ExperimentCell, ExperimentConfig, ExperimentOutput, ItRank, MetricsRow,
    ReplicationFit, ReplicationTruth,
};
pub use numcore::{check_loss, prox_check, svd, svt, SvdFactors};
pub use rank::{cone_diagnostic, default_rank_threshold, estimate_rank, project_tangent, ConeReport, RankEstimate};
pub use simulation::{normal_quantile, simulate, t2_quantile, ErrorLaw, SimulationSpec, SimulationTruth};
