//! Browser bindings for three interactive views: the check-loss proximal
//! map, a simulate-and-fit run showing the singular values of the fitted
//! low-rank component, and a penalty path.
//!
//! The `demo` functions are plain Rust and are what the tests exercise; the
//! `#[wasm_bindgen]` items only convert arguments and results.

use wasm_bindgen::prelude::*;

pub mod demo {
    use nnqr::numcore::{check_loss_scalar, prox_check_scalar, singular_values};
    use nnqr::{
        alm_fit, default_lambda, default_rank_threshold, estimate_rank, simulate, ErrorLaw, FitConfig, Result,
        SimulationSpec,
    };

    /// Points `(gamma, prox, loss)` on an even grid over `[lo, hi]`.
    pub fn prox_curve(u: f64, c: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<[f64; 3]>> {
        if !(u > 0.0 && u < 1.0) {
            return Err(nnqr::Error::InvalidQuantile(u));
        }
        if !(c > 0.0) || !(hi > lo) || points < 2 {
            return Err(nnqr::Error::InvalidArgument("need c > 0, hi > lo and at least 2 points".into()));
        }
        Ok((0..points)
            .map(|k| {
                let g = lo + (hi - lo) * k as f64 / (points - 1) as f64;
                [g, prox_check_scalar(g, u, c), c * check_loss_scalar(g, u)]
            })
            .collect())
    }

    #[derive(Debug, Clone)]
    pub struct FitSummary {
        pub beta: Vec<f64>,
        pub beta_true: Vec<f64>,
        pub singulars: Vec<f64>,
        pub true_singulars: Vec<f64>,
        pub threshold: f64,
        pub r_hat: usize,
        pub r_true: usize,
        pub lambda: f64,
        pub iterations: usize,
        pub converged: bool,
        pub mse_l: f64,
    }

    /// Simulates an `n x t` panel and fits it at level `u` with the default
    /// penalty times `lambda_scale`.
    pub fn simulate_and_fit(
        n: usize,
        t: usize,
        u: f64,
        phi: f64,
        heavy_tails: bool,
        seed: u64,
        lambda_scale: f64,
    ) -> Result<FitSummary> {
        let law = if heavy_tails { ErrorLaw::StudentT2 } else { ErrorLaw::StandardNormal };
        let sim = simulate(&SimulationSpec::new(n, t, phi, law, seed, vec![u]))?;
        let truth = &sim.levels[0];
        let lambda = default_lambda(n, t) * lambda_scale;
        let fit = alm_fit(&sim.data, &FitConfig::new(u, lambda))?;
        let threshold = default_rank_threshold(n, t);
        let est = estimate_rank(&fit.singulars, threshold)?;
        Ok(FitSummary {
            beta: fit.beta,
            beta_true: truth.beta.to_vec(),
            singulars: fit.singulars,
            true_singulars: singular_values(&truth.l0)?,
            threshold,
            r_hat: est.r_hat,
            r_true: truth.r_true,
            lambda,
            iterations: fit.iterations,
            converged: fit.converged,
            mse_l: fit.l.dist_sq(&truth.l0) / (n * t) as f64,
        })
    }

    /// For each scale: `(scale, r_hat, mse_l, squared coefficient error)`.
    pub fn lambda_path(n: usize, t: usize, u: f64, seed: u64, scales: &[f64]) -> Result<Vec<[f64; 4]>> {
        scales
            .iter()
            .map(|&s| {
                let f = simulate_and_fit(n, t, u, 0.2, false, seed, s)?;
                let err: f64 = f.beta.iter().zip(&f.beta_true).map(|(a, b)| (a - b) * (a - b)).sum();
                Ok([s, f.r_hat as f64, f.mse_l, err])
            })
            .collect()
    }
}

fn js_err(e: nnqr::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Flattened `[gamma_0, prox_0, loss_0, gamma_1, ...]`.
#[wasm_bindgen(js_name = proxCurve)]
pub fn prox_curve(u: f64, c: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, JsError> {
    Ok(demo::prox_curve(u, c, lo, hi, points).map_err(js_err)?.concat())
}

#[wasm_bindgen]
pub struct FitView {
    inner: demo::FitSummary,
}

#[wasm_bindgen]
impl FitView {
    #[wasm_bindgen(getter)]
    pub fn beta(&self) -> Vec<f64> {
        self.inner.beta.clone()
    }
    #[wasm_bindgen(getter, js_name = betaTrue)]
    pub fn beta_true(&self) -> Vec<f64> {
        self.inner.beta_true.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn singulars(&self) -> Vec<f64> {
        self.inner.singulars.clone()
    }
    #[wasm_bindgen(getter, js_name = trueSingulars)]
    pub fn true_singulars(&self) -> Vec<f64> {
        self.inner.true_singulars.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn threshold(&self) -> f64 {
        self.inner.threshold
    }
    #[wasm_bindgen(getter, js_name = rHat)]
    pub fn r_hat(&self) -> usize {
        self.inner.r_hat
    }
    #[wasm_bindgen(getter, js_name = rTrue)]
    pub fn r_true(&self) -> usize {
        self.inner.r_true
    }
    #[wasm_bindgen(getter)]
    pub fn lambda(&self) -> f64 {
        self.inner.lambda
    }
    #[wasm_bindgen(getter)]
    pub fn iterations(&self) -> usize {
        self.inner.iterations
    }
    #[wasm_bindgen(getter)]
    pub fn converged(&self) -> bool {
        self.inner.converged
    }
    #[wasm_bindgen(getter, js_name = mseL)]
    pub fn mse_l(&self) -> f64 {
        self.inner.mse_l
    }
}

#[wasm_bindgen(js_name = simulateAndFit)]
pub fn simulate_and_fit(
    n: usize,
    t: usize,
    u: f64,
    phi: f64,
    heavy_tails: bool,
    seed: u32,
    lambda_scale: f64,
) -> Result<FitView, JsError> {
    let inner = demo::simulate_and_fit(n, t, u, phi, heavy_tails, seed as u64, lambda_scale).map_err(js_err)?;
    Ok(FitView { inner })
}

/// Flattened `[scale, r_hat, mse_l, beta_err, ...]`.
#[wasm_bindgen(js_name = lambdaPath)]
pub fn lambda_path(n: usize, t: usize, u: f64, seed: u32, scales: Vec<f64>) -> Result<Vec<f64>, JsError> {
    Ok(demo::lambda_path(n, t, u, seed as u64, &scales).map_err(js_err)?.concat())
}
