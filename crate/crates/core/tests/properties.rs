mod common;

use common::{golden_prox, Stream};
use nnqr::metrics::{compute_metrics, ReplicationFit, ReplicationTruth};
use nnqr::numcore::{check_loss_scalar, nuclear_norm, prox_check_scalar, singular_values};
use nnqr::panel_io::{read_panel, write_panel};
use nnqr::simulation::numerical_rank;
use nnqr::{estimate_rank, project_tangent, qr_small, simulate, svd, svt, DenseMatrix, ErrorLaw, QrOptions, SimulationSpec};
use proptest::prelude::*;

fn matrix(seed: u64, m: usize, n: usize) -> DenseMatrix {
    Stream(seed).matrix(m, n)
}

/// Orthonormal `n x r` basis from the left factors of a random matrix.
fn basis(seed: u64, n: usize, r: usize) -> DenseMatrix {
    let f = svd(&matrix(seed, n, r)).unwrap();
    f.left
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn check_loss_reflection(z in -1e3f64..1e3, u in 0.001f64..0.999) {
        let tol = 1e-12 * (1.0 + z.abs());
        prop_assert!((check_loss_scalar(z, u) - check_loss_scalar(-z, 1.0 - u)).abs() <= tol);
        prop_assert!((check_loss_scalar(z, u) + check_loss_scalar(-z, u) - z.abs()).abs() <= tol);
        prop_assert!((check_loss_scalar(z, 0.5) - z.abs() / 2.0).abs() <= tol);
    }

    #[test]
    fn prox_agrees_with_brute_force(g in -10f64..10.0, u in 0.01f64..0.99, c in 0.001f64..5.0) {
        prop_assert!((prox_check_scalar(g, u, c) - golden_prox(g, u, c)).abs() < 1e-6);
    }

    #[test]
    fn svt_is_nonexpansive(seed in any::<u64>(), m in 1usize..12, n in 1usize..12, tau in 0f64..3.0) {
        let a = matrix(seed, m, n);
        let b = matrix(seed ^ 0x55, m, n);
        let d = svt(&a, tau).unwrap().dist_sq(&svt(&b, tau).unwrap()).sqrt();
        prop_assert!(d <= a.dist_sq(&b).sqrt() + 1e-10);
    }

    #[test]
    fn svt_shrinks_nuclear_norm(seed in any::<u64>(), m in 1usize..15, n in 1usize..15, tau in 0f64..3.0) {
        let a = matrix(seed, m, n);
        let s = singular_values(&a).unwrap();
        let want: f64 = s.iter().map(|v| (v - tau).max(0.0)).sum();
        prop_assert!((nuclear_norm(&svt(&a, tau).unwrap()).unwrap() - want).abs() < 1e-8);
        prop_assert!(svt(&a, 0.0).unwrap().max_abs_diff(&a) < 1e-10);
    }

    #[test]
    fn svd_is_orthonormal(seed in any::<u64>(), m in 1usize..15, n in 1usize..15) {
        let a = matrix(seed, m, n);
        let f = svd(&a).unwrap();
        let k = m.min(n);
        let utu = f.left.transpose().matmul(&f.left).unwrap();
        let vtv = f.right.transpose().matmul(&f.right).unwrap();
        prop_assert!(utu.max_abs_diff(&DenseMatrix::identity(k)) < 1e-10);
        prop_assert!(vtv.max_abs_diff(&DenseMatrix::identity(k)) < 1e-10);
        prop_assert!(f.singulars.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(f.reconstruct().max_abs_diff(&a) < 1e-10 * (1.0 + a.max_abs()));
    }

    #[test]
    fn rank_is_monotone_in_threshold(seed in any::<u64>(), c1 in 0.01f64..10.0, c2 in 0.01f64..10.0) {
        let s = singular_values(&matrix(seed, 8, 6)).unwrap();
        let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        prop_assert!(estimate_rank(&s, lo).unwrap().r_hat >= estimate_rank(&s, hi).unwrap().r_hat);
    }

    #[test]
    fn tangent_projector_properties(seed in any::<u64>(), r in 1usize..4, a in -3f64..3.0) {
        let (n, t) = (10, 8);
        let rb = basis(seed, n, r);
        let sb = basis(seed ^ 1, t, r);
        let w = matrix(seed ^ 2, n, t);
        let z = matrix(seed ^ 3, n, t);
        let pw = project_tangent(&w, &rb, &sb).unwrap();
        // idempotent
        prop_assert!(project_tangent(&pw, &rb, &sb).unwrap().max_abs_diff(&pw) < 1e-10);
        // linear
        let mut comb = w.clone();
        comb.axpy(a, &z);
        let mut want = pw.clone();
        want.axpy(a, &project_tangent(&z, &rb, &sb).unwrap());
        prop_assert!(project_tangent(&comb, &rb, &sb).unwrap().max_abs_diff(&want) < 1e-10);
        // contraction and rank bound
        prop_assert!(pw.frobenius_norm() <= w.frobenius_norm() + 1e-10);
        prop_assert!(numerical_rank(&pw).unwrap() <= 2 * r);
    }

    #[test]
    fn metrics_ignore_replication_order(seed in any::<u64>()) {
        let mut s = Stream(seed);
        let x = vec![s.matrix(4, 3)];
        let l0 = s.matrix(4, 3);
        let beta = [0.7];
        let fits: Vec<ReplicationFit> = (0..5)
            .map(|_| ReplicationFit { beta: vec![0.7 + s.normal()], l: Some(s.matrix(4, 3)) })
            .collect();
        let truths: Vec<ReplicationTruth> = (0..5).map(|_| ReplicationTruth { beta: &beta, l0: &l0, x: &x }).collect();
        let a = compute_metrics(&fits, &truths, false).unwrap();
        let mut rev = fits.clone();
        rev.reverse();
        let b = compute_metrics(&rev, &truths, false).unwrap();
        prop_assert!((a.bias2_beta - b.bias2_beta).abs() < 1e-12);
        prop_assert!((a.var_beta - b.var_beta).abs() < 1e-12);
        prop_assert!((a.mse_l.unwrap() - b.mse_l.unwrap()).abs() < 1e-12);
        // ||a + b||^2 <= 2 ||a||^2 + 2 ||b||^2 with a = X dbeta, b = dL
        let mut bound = 0.0;
        for f in &fits {
            let e = f.beta[0] - beta[0];
            bound += 2.0 * e * e * x[0].frobenius_norm_sq() / 12.0 + 2.0 * f.l.as_ref().unwrap().dist_sq(&l0) / 12.0;
        }
        prop_assert!(a.mse_q.unwrap() <= bound / 5.0 + 1e-12);
    }

    #[test]
    fn quantile_regression_balances_signs(seed in any::<u64>(), u in 0.05f64..0.95, n in 20usize..80) {
        let mut s = Stream(seed);
        let z = DenseMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { s.normal() });
        let y: Vec<f64> = (0..n).map(|i| 0.5 - z[(i, 1)] + s.normal()).collect();
        let sol = qr_small(&y, &z, u, &QrOptions::default()).unwrap();
        prop_assume!(sol.converged);
        let resid: Vec<f64> = (0..n).map(|i| y[i] - sol.coef[0] - sol.coef[1] * z[(i, 1)]).collect();
        let neg = resid.iter().filter(|&&r| r < -1e-9).count() as f64;
        let zero = resid.iter().filter(|&&r| r.abs() <= 1e-9).count() as f64;
        let nf = n as f64;
        prop_assert!((neg / nf - u).abs() <= 2.0 / nf + zero / nf + 1e-12);
        // no perturbed point does better
        let f = |b0: f64, b1: f64| (0..n).map(|i| check_loss_scalar(y[i] - b0 - b1 * z[(i, 1)], u)).sum::<f64>();
        let best = f(sol.coef[0], sol.coef[1]);
        for (d0, d1) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3), (0.05, -0.05), (-0.2, 0.1)] {
            prop_assert!(best <= f(sol.coef[0] + d0, sol.coef[1] + d1) + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn simulation_is_reproducible_and_monotone(seed in any::<u64>(), heavy in any::<bool>()) {
        let law = if heavy { ErrorLaw::StudentT2 } else { ErrorLaw::StandardNormal };
        let spec = SimulationSpec::new(6, 5, 0.2, law, seed, vec![0.5]);
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec).unwrap();
        prop_assert_eq!(&a.data.y, &b.data.y);
        prop_assert_eq!(&a.levels[0].l0, &b.levels[0].l0);
        for (i, t) in [(0, 0), (3, 2), (5, 4)] {
            let mut prev = f64::NEG_INFINITY;
            for k in 1..20 {
                let y = a.structural_outcome(i, t, k as f64 / 20.0).unwrap();
                prop_assert!(y > prev);
                prev = y;
            }
        }
    }

    #[test]
    fn panel_csv_round_trip(seed in any::<u64>(), n in 1usize..6, t in 1usize..6, p in 0usize..3) {
        let mut s = Stream(seed);
        let data = nnqr::PanelData::new(s.matrix(n, t), (0..p).map(|_| s.matrix(n, t)).collect()).unwrap();
        let mut buf = Vec::new();
        write_panel(&mut buf, &data).unwrap();
        let back = read_panel(buf.as_slice()).unwrap();
        prop_assert_eq!(back.data.y, data.y);
        prop_assert_eq!(back.data.x, data.x);
    }
}

#[test]
fn conditional_quantile_is_valid_empirically() {
    // P(Y_it <= Q_it(u)) = u, pooled over cells and seeds
    let u = 0.3;
    let (n, t, reps) = (20, 20, 10);
    let mut hits = 0usize;
    for seed in 0..reps {
        let sim = simulate(&SimulationSpec::new(n, t, 0.2, ErrorLaw::StandardNormal, seed, vec![u])).unwrap();
        let q = sim.conditional_quantile(u).unwrap();
        hits += sim.data.y.as_slice().iter().zip(q.as_slice()).filter(|(y, q)| y <= q).count();
    }
    let total = (n * t * reps as usize) as f64;
    let se = (u * (1.0 - u) / total).sqrt();
    assert!((hits as f64 / total - u).abs() < 3.0 * se, "coverage {}", hits as f64 / total);
}
