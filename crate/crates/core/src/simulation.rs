//! Monte Carlo data-generating process with quantile-dependent coefficients
//! and a quantile-dependent set of active interactive fixed effects.
//!
//! ```text
//! Y_it = sum_j X_j,it beta_j(U_it) + sum_k 1_k(U_it) F_kt Lambda_ki(U_it) + G^{-1}(U_it)
//! ```
//!
//! with `U_it ~ Unif(0,1)`, `F_kt ~ Unif[0,2]`, `chi_ki ~ Unif[0,1]`,
//! `Lambda_ki(v) = chi_ki + 0.1 v`, `eta_j,it ~ Unif[0,2]`,
//! `X_j,it = eta_j,it + phi (F_jt^2 + chi_ji^2)`, `beta_1 = beta_3 = -1 + 0.1 v`,
//! `beta_2 = 1 + 0.1 v`, and factor `k` active when `v` exceeds
//! `0`, `0.3`, `0.7` respectively.
//!
//! The conditional `u`-quantile of `Y` is `sum_j X_j beta_j(u) + L0(u)` where
//! `L0(u) = G^{-1}(u) 1 1' + sum_{k active at u} Lambda_k(u) F_k'`.

use rand::distr::{Distribution, Open01, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::alm::PanelData;
use crate::error::{check_quantile, Error, Result};
use crate::matrix::DenseMatrix;
use crate::numcore::singular_values;
use crate::tolerances::RANK_REL_TOL;

pub const NUM_COVARIATES: usize = 3;
pub const NUM_FACTORS: usize = 3;

/// Quantile levels above which factors 1, 2, 3 enter the model.
const FACTOR_THRESHOLDS: [f64; NUM_FACTORS] = [0.0, 0.3, 0.7];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLaw {
    StandardNormal,
    StudentT2,
}

impl ErrorLaw {
    /// `G^{-1}(u)`.
    pub fn quantile(self, u: f64) -> Result<f64> {
        match self {
            ErrorLaw::StandardNormal => normal_quantile(u),
            ErrorLaw::StudentT2 => t2_quantile(u),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ErrorLaw::StandardNormal => "normal",
            ErrorLaw::StudentT2 => "t2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "standard_normal" | "gaussian" => Some(ErrorLaw::StandardNormal),
            "t2" | "student_t2" | "t" => Some(ErrorLaw::StudentT2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSpec {
    pub n: usize,
    pub t: usize,
    pub phi: f64,
    pub error_law: ErrorLaw,
    pub seed: u64,
    pub quantile_levels: Vec<f64>,
}

impl SimulationSpec {
    pub fn new(n: usize, t: usize, phi: f64, error_law: ErrorLaw, seed: u64, quantile_levels: Vec<f64>) -> Self {
        Self { n, t, phi, error_law, seed, quantile_levels }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.t < 2 {
            return Err(Error::InvalidArgument(format!("need N, T >= 2, got {}x{}", self.n, self.t)));
        }
        if !(self.phi >= 0.0) || !self.phi.is_finite() {
            return Err(Error::InvalidArgument(format!("phi must be nonnegative, got {}", self.phi)));
        }
        for &u in &self.quantile_levels {
            check_quantile(u)?;
        }
        Ok(())
    }
}

/// Draws that generated a panel, kept for audits.
#[derive(Debug, Clone)]
pub struct LatentDraws {
    /// `U_it`, `N x T`.
    pub u: DenseMatrix,
    /// `F_kt`, `K x T`.
    pub factors: DenseMatrix,
    /// `chi_ki`, `K x N`.
    pub chi: DenseMatrix,
    /// `eta_j,it`, one `N x T` matrix per covariate.
    pub eta: Vec<DenseMatrix>,
}

/// Ground truth at a single quantile level.
#[derive(Debug, Clone)]
pub struct TruthAtLevel {
    pub u: f64,
    pub beta: [f64; NUM_COVARIATES],
    pub l0: DenseMatrix,
    /// Number of terms in the low-rank component: the `G^{-1}(u) 1 1'`
    /// term plus the active factors.
    pub r_true: usize,
    /// Numerical rank of `l0` (drops the constant term when `G^{-1}(u) = 0`).
    pub rank: usize,
}

#[derive(Debug, Clone)]
pub struct SimulationTruth {
    pub spec: SimulationSpec,
    pub data: PanelData,
    pub levels: Vec<TruthAtLevel>,
    pub latent: LatentDraws,
}

impl SimulationTruth {
    pub fn at(&self, u: f64) -> Option<&TruthAtLevel> {
        self.levels.iter().find(|lvl| lvl.u == u)
    }

    /// Outcome for cell `(i, t)` recomputed with `U_it` replaced by `v`.
    pub fn structural_outcome(&self, i: usize, t: usize, v: f64) -> Result<f64> {
        structural_outcome(&self.latent, &self.data.x, self.spec.error_law, i, t, v)
    }

    /// Conditional quantile surface `sum_j X_j beta_j(u) + L0(u)`.
    pub fn conditional_quantile(&self, u: f64) -> Result<DenseMatrix> {
        let l0 = true_low_rank(&self.latent, self.spec.error_law, u)?;
        let xb = self.data.x_beta(&true_beta(u));
        Ok(&xb + &l0)
    }
}

pub fn true_beta(u: f64) -> [f64; NUM_COVARIATES] {
    [-1.0 + 0.1 * u, 1.0 + 0.1 * u, -1.0 + 0.1 * u]
}

fn factor_active(k: usize, v: f64) -> bool {
    k == 0 || v > FACTOR_THRESHOLDS[k]
}

/// Number of terms in `L0(u)`: 2, 3 or 4 depending on the band of `u`.
pub fn nominal_rank(u: f64) -> usize {
    1 + (0..NUM_FACTORS).filter(|&k| factor_active(k, u)).count()
}

/// `L0(u)`, using the quantile level `u` inside the loadings.
pub fn true_low_rank(latent: &LatentDraws, law: ErrorLaw, u: f64) -> Result<DenseMatrix> {
    let shift = law.quantile(u)?;
    let (n, t) = latent.u.shape();
    let mut l0 = DenseMatrix::filled(n, t, shift);
    for k in (0..NUM_FACTORS).filter(|&k| factor_active(k, u)) {
        for i in 0..n {
            let loading = latent.chi[(k, i)] + 0.1 * u;
            for tt in 0..t {
                l0[(i, tt)] += loading * latent.factors[(k, tt)];
            }
        }
    }
    Ok(l0)
}

fn structural_outcome(
    latent: &LatentDraws,
    x: &[DenseMatrix],
    law: ErrorLaw,
    i: usize,
    t: usize,
    v: f64,
) -> Result<f64> {
    let beta = true_beta(v);
    let mut y = law.quantile(v)?;
    for (j, xj) in x.iter().enumerate() {
        y += xj[(i, t)] * beta[j];
    }
    for k in (0..NUM_FACTORS).filter(|&k| factor_active(k, v)) {
        y += latent.factors[(k, t)] * (latent.chi[(k, i)] + 0.1 * v);
    }
    Ok(y)
}

/// Independent random streams of one replication.
#[derive(Clone, Copy)]
#[repr(u64)]
enum Stream {
    Quantile = 1,
    Factor = 2,
    Chi = 3,
    Eta = 4,
}

fn stream_rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed of replication `rep` under a master seed (SplitMix64 finalizer), so
/// replications can be generated in any order.
pub fn replication_seed(master: u64, rep: u64) -> u64 {
    let mut z = master ^ rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn simulate(spec: &SimulationSpec) -> Result<SimulationTruth> {
    spec.validate()?;
    let (n, t) = (spec.n, spec.t);

    let mut rng = stream_rng(spec.seed, Stream::Quantile);
    let u = DenseMatrix::from_fn(n, t, |_, _| Open01.sample(&mut rng));

    let unif02 = Uniform::new(0.0, 2.0).expect("valid range");
    let unif01 = Uniform::new(0.0, 1.0).expect("valid range");
    let mut rng = stream_rng(spec.seed, Stream::Factor);
    let factors = DenseMatrix::from_fn(NUM_FACTORS, t, |_, _| unif02.sample(&mut rng));
    let mut rng = stream_rng(spec.seed, Stream::Chi);
    let chi = DenseMatrix::from_fn(NUM_FACTORS, n, |_, _| unif01.sample(&mut rng));
    let mut rng = stream_rng(spec.seed, Stream::Eta);
    let eta: Vec<DenseMatrix> =
        (0..NUM_COVARIATES).map(|_| DenseMatrix::from_fn(n, t, |_, _| unif02.sample(&mut rng))).collect();

    let x: Vec<DenseMatrix> = (0..NUM_COVARIATES)
        .map(|j| {
            DenseMatrix::from_fn(n, t, |i, tt| {
                let f = factors[(j, tt)];
                let c = chi[(j, i)];
                eta[j][(i, tt)] + spec.phi * (f * f + c * c)
            })
        })
        .collect();

    let latent = LatentDraws { u, factors, chi, eta };
    let mut y = DenseMatrix::zeros(n, t);
    for i in 0..n {
        for tt in 0..t {
            y[(i, tt)] = structural_outcome(&latent, &x, spec.error_law, i, tt, latent.u[(i, tt)])?;
        }
    }
    let data = PanelData::new(y, x)?;

    let levels = spec
        .quantile_levels
        .iter()
        .map(|&level| {
            let l0 = true_low_rank(&latent, spec.error_law, level)?;
            let rank = numerical_rank(&l0)?;
            Ok(TruthAtLevel { u: level, beta: true_beta(level), l0, r_true: nominal_rank(level), rank })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SimulationTruth { spec: spec.clone(), data, levels, latent })
}

/// Count of singular values above `RANK_REL_TOL` times the largest.
pub fn numerical_rank(m: &DenseMatrix) -> Result<usize> {
    let s = singular_values(m)?;
    let top = s.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > RANK_REL_TOL * top).count())
}

/// Inverse standard normal CDF.
///
/// Rational approximation (Acklam) refined by one Halley step against an
/// `erfc`-based CDF; absolute error below 1e-9 on (0, 1).
pub fn normal_quantile(u: f64) -> Result<f64> {
    check_quantile(u)?;
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    let x = if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - P_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - u).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if u == 0.5 {
        return Ok(0.0);
    }
    // Halley refinement.
    let e = 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2) - u;
    let d = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    Ok(x - d / (1.0 + x * d / 2.0))
}

/// Inverse CDF of Student's t with two degrees of freedom,
/// `(2u - 1) / sqrt(2 u (1 - u))`.
pub fn t2_quantile(u: f64) -> Result<f64> {
    check_quantile(u)?;
    Ok((2.0 * u - 1.0) * (2.0 / (4.0 * u * (1.0 - u))).sqrt())
}
