mod common;

use common::Stream;
use nnqr::metrics::{compute_metrics, ReplicationFit, ReplicationTruth};
use nnqr::numcore::singular_values;
use nnqr::simulation::{numerical_rank, true_beta};
use nnqr::{
    alm_fit, cone_diagnostic, default_lambda, default_mu, estimate_rank, iterative_fit, normal_quantile, objective_value,
    pooled_fit, project_tangent, run_experiment, simulate, svd, DenseMatrix, ErrorLaw, Estimator, ExperimentCell,
    ExperimentConfig, FitConfig, IterativeOptions, PanelData, SimulationSpec,
};

fn feasible(fit: &nnqr::FitResult, y: &DenseMatrix) -> bool {
    fit.final_constraint_residual <= 1e-3 * (1.0 + y.frobenius_norm())
}

#[test]
fn huge_penalty_zeroes_low_rank_part() {
    let y = Stream(1).matrix(12, 9);
    let data = PanelData::new(y.clone(), vec![]).unwrap();
    let fit = alm_fit(&data, &FitConfig::new(0.5, 1e6)).unwrap();
    assert!(fit.l.frobenius_norm() <= 1e-6 * y.frobenius_norm());
}

#[test]
fn tiny_penalty_reproduces_outcome() {
    let y = Stream(2).matrix(12, 9);
    let data = PanelData::new(y.clone(), vec![]).unwrap();
    let fit = alm_fit(&data, &FitConfig::new(0.3, 1e-12)).unwrap();
    assert!(fit.l.max_abs_diff(&y) < 1e-3);
    assert!(fit.l.dist_sq(&y).sqrt() <= 1e-3 * y.frobenius_norm());
}

#[test]
fn small_panel_with_one_covariate() {
    let (n, t) = (20, 20);
    let mut s = Stream(7);
    let x = s.matrix(n, t);
    let a: Vec<f64> = (0..n).map(|_| s.normal()).collect();
    let b: Vec<f64> = (0..t).map(|_| s.normal()).collect();
    let l0 = DenseMatrix::from_fn(n, t, |i, j| 2.0 * a[i] * b[j]);
    let y = DenseMatrix::from_fn(n, t, |i, j| 2.0 * x[(i, j)] + l0[(i, j)] + 0.05 * s.normal());
    let data = PanelData::new(y.clone(), vec![x]).unwrap();
    let fit = alm_fit(&data, &FitConfig::with_defaults(0.5, n, t)).unwrap();
    assert!(fit.converged);
    assert!(feasible(&fit, &y));
    assert!((fit.beta[0] - 2.0).abs() < 0.25, "beta {}", fit.beta[0]);
    let rms = |m: &DenseMatrix| m.frobenius_norm() / ((n * t) as f64).sqrt();
    assert!(rms(&(&fit.l - &l0)) < rms(&l0));
}

#[test]
fn fit_is_feasible_no_worse_than_trivial_and_deterministic() {
    let sim = simulate(&SimulationSpec::new(25, 20, 0.2, ErrorLaw::StandardNormal, 4, vec![0.3])).unwrap();
    let data = &sim.data;
    for lambda in [default_lambda(25, 20), 0.1 * default_lambda(25, 20), 1e-3] {
        let cfg = FitConfig::new(0.3, lambda);
        let fit = alm_fit(data, &cfg).unwrap();
        assert!(fit.converged);
        assert!(feasible(&fit, &data.y));
        let zero_beta = vec![0.0; 3];
        let at_zero = objective_value(data, 0.3, lambda, &zero_beta, &DenseMatrix::zeros(25, 20)).unwrap();
        let at_y = objective_value(data, 0.3, lambda, &zero_beta, &data.y).unwrap();
        assert!(fit.objective <= at_zero + 1e-8);
        assert!(fit.objective <= at_y + 1e-8);
        let sv = singular_values(&fit.l).unwrap();
        assert!(sv.iter().zip(&fit.singulars).all(|(a, b)| (a - b).abs() < 1e-8));
        let again = alm_fit(data, &cfg).unwrap();
        assert_eq!(again.iterations, fit.iterations);
        assert_eq!(again.beta, fit.beta);
        assert_eq!(again.l, fit.l);
    }
}

#[test]
fn ill_posed_design_is_rejected() {
    let x = DenseMatrix::filled(5, 4, 1.0);
    let data = PanelData::new(Stream(3).matrix(5, 4), vec![x.clone(), &x * 2.0]).unwrap();
    assert!(matches!(alm_fit(&data, &FitConfig::new(0.5, 0.1)), Err(nnqr::Error::IllPosedDesign(_))));
}

#[test]
fn objective_trivial_examples() {
    let y = Stream(4).matrix(3, 4);
    let data = PanelData::new(y.clone(), vec![]).unwrap();
    let at_zero = objective_value(&data, 0.4, 0.7, &[], &DenseMatrix::zeros(3, 4)).unwrap();
    assert!((at_zero - nnqr::check_loss(&y, 0.4).unwrap() / 12.0).abs() < 1e-14);
    assert_eq!(objective_value(&data, 0.4, 0.0, &[], &y).unwrap(), 0.0);
    assert!(objective_value(&data, 0.4, 0.0, &[1.0], &y).is_err());
}

#[test]
fn mu_examples() {
    assert_eq!(default_mu(&DenseMatrix::filled(2, 2, 1.0)).unwrap(), 0.25);
    let y = DenseMatrix::from_rows(&[vec![1.0, -3.0], vec![0.0, 4.0]]).unwrap();
    assert_eq!(default_mu(&y).unwrap(), 0.125);
    assert!(default_mu(&DenseMatrix::zeros(2, 2)).is_err());
}

#[test]
fn iterative_recovers_noiseless_low_rank() {
    let (n, t, r) = (20, 15, 2);
    let mut s = Stream(5);
    let lam = s.matrix(n, r);
    let f = s.matrix(t, r);
    let l0 = lam.matmul(&f.transpose()).unwrap();
    let data = PanelData::new(l0.clone(), vec![]).unwrap();
    let fit = iterative_fit(&data, 0.5, r, &IterativeOptions::default()).unwrap();
    assert!(fit.l.dist_sq(&l0) / (n * t) as f64 <= 1e-4);
    assert!(fit.l.max_abs_diff(&fit.lambda.matmul(&fit.f.transpose()).unwrap()) < 1e-10);
    assert!(numerical_rank(&fit.l).unwrap() <= r);
}

#[test]
fn iterative_with_zero_rank_is_pooled() {
    let sim = simulate(&SimulationSpec::new(15, 12, 0.2, ErrorLaw::StandardNormal, 9, vec![0.6])).unwrap();
    let fit = iterative_fit(&sim.data, 0.6, 0, &IterativeOptions::default()).unwrap();
    assert_eq!(fit.beta, pooled_fit(&sim.data, 0.6).unwrap());
    assert_eq!(fit.l.max_abs(), 0.0);
}

#[test]
fn iterative_trace_is_monotone() {
    for seed in 0..3 {
        let sim = simulate(&SimulationSpec::new(30, 30, 0.2, ErrorLaw::StandardNormal, seed, vec![0.5])).unwrap();
        let fit = iterative_fit(&sim.data, 0.5, sim.levels[0].r_true, &IterativeOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-10), "seed {seed}");
    }
}

#[test]
fn iterative_beats_pooled_on_full_size_panels() {
    // On small panels the spare factor overfits; at 200 x 200 it does not.
    let n = 200;
    for seed in 0..3 {
        let sim = simulate(&SimulationSpec::new(n, n, 0.2, ErrorLaw::StandardNormal, seed, vec![0.5])).unwrap();
        let fit = iterative_fit(&sim.data, 0.5, sim.levels[0].r_true, &IterativeOptions::default()).unwrap();
        let q0 = sim.conditional_quantile(0.5).unwrap();
        let nt = (n * n) as f64;
        let it_q = (&sim.data.x_beta(&fit.beta) + &fit.l).dist_sq(&q0) / nt;
        let po_q = sim.data.x_beta(&pooled_fit(&sim.data, 0.5).unwrap()).dist_sq(&q0) / nt;
        assert!(it_q < po_q, "seed {seed}: {it_q} vs {po_q}");
    }
}

#[test]
fn pooled_without_fixed_effects_is_consistent() {
    // phi = 0 and no factor terms: Y = sum_j X_j beta_j(U) + G^{-1}(U)
    let (n, t) = (100, 100);
    let sim = simulate(&SimulationSpec::new(n, t, 0.0, ErrorLaw::StandardNormal, 21, vec![0.5])).unwrap();
    let x = &sim.data.x;
    let y = DenseMatrix::from_fn(n, t, |i, j| {
        let v = sim.latent.u[(i, j)];
        let b = true_beta(v);
        (0..3).map(|k| b[k] * x[k][(i, j)]).sum::<f64>() + normal_quantile(v).unwrap()
    });
    let data = PanelData::new(y, x.clone()).unwrap();
    let b = pooled_fit(&data, 0.5).unwrap();
    for (got, want) in b.iter().zip(true_beta(0.5)) {
        assert!((got - want).abs() < 0.1, "{got} vs {want}");
    }
}

#[test]
fn simulation_examples() {
    assert_eq!(true_beta(0.2), [-0.98, 1.02, -0.98]);
    let sim = simulate(&SimulationSpec::new(40, 30, 0.2, ErrorLaw::StandardNormal, 3, vec![0.2, 0.5, 0.8])).unwrap();
    for lvl in &sim.levels {
        let s = singular_values(&lvl.l0).unwrap();
        let rank = s.iter().filter(|&&v| v > 1e-8).count();
        assert_eq!(rank, lvl.rank);
        assert!(rank <= lvl.r_true);
    }
    assert_eq!(sim.at(0.2).unwrap().rank, 2);
    assert_eq!(sim.at(0.8).unwrap().rank, 4);
    assert_eq!(sim.at(0.5).unwrap().r_true, 3);
}

#[test]
fn rank_and_cone_examples() {
    let sim = simulate(&SimulationSpec::new(20, 15, 0.2, ErrorLaw::StandardNormal, 1, vec![0.8])).unwrap();
    let l0 = &sim.levels[0].l0;
    let (r, s) = svd(l0).unwrap().truncate(sim.levels[0].rank);
    assert!(project_tangent(l0, &r, &s).unwrap().max_abs_diff(l0) < 1e-10);
    let empty = (DenseMatrix::zeros(20, 0), DenseMatrix::zeros(15, 0));
    assert_eq!(project_tangent(l0, &empty.0, &empty.1).unwrap().max_abs(), 0.0);

    let rep = cone_diagnostic(&[0.0; 3], l0, &r, &s, 1.0).unwrap();
    let nuc: f64 = singular_values(l0).unwrap().iter().sum();
    assert!((rep.value + 3.0 * nuc).abs() < 1e-8 * nuc);
    assert!(rep.in_cone);
    let zero = cone_diagnostic(&[0.0; 3], &DenseMatrix::zeros(20, 15), &r, &s, 1.0).unwrap();
    assert_eq!(zero.value, 0.0);
    assert!(zero.in_cone);

    assert_eq!(estimate_rank(&[50.0, 40.0, 3.0, 0.5], 10.0).unwrap().r_hat, 2);
    assert_eq!(estimate_rank(&[0.0; 4], 0.1).unwrap().r_hat, 0);
    assert!((nnqr::default_rank_threshold(4, 4) - 8f64.sqrt()).abs() < 1e-12);
}

#[test]
fn metrics_examples() {
    let x = vec![Stream(6).matrix(3, 4)];
    let l0 = Stream(7).matrix(3, 4);
    let beta = [1.5];
    let truth = ReplicationTruth { beta: &beta, l0: &l0, x: &x };
    let exact = compute_metrics(&[ReplicationFit { beta: vec![1.5], l: Some(l0.clone()) }], &[truth], false).unwrap();
    assert_eq!((exact.bias2_beta, exact.var_beta, exact.mse_l, exact.mse_q), (0.0, 0.0, Some(0.0), Some(0.0)));

    let shifted = &l0 + &DenseMatrix::filled(3, 4, 1.0);
    let one = compute_metrics(&[ReplicationFit { beta: vec![1.5], l: Some(shifted) }], &[truth], false).unwrap();
    assert!((one.mse_l.unwrap() - 1.0).abs() < 1e-12);

    let d = 0.3;
    let fits = [
        ReplicationFit { beta: vec![1.5 + d], l: None },
        ReplicationFit { beta: vec![1.5 - d], l: None },
    ];
    let m = compute_metrics(&fits, &[truth, truth], false).unwrap();
    assert!(m.bias2_beta.abs() < 1e-15);
    assert!((m.var_beta - d * d).abs() < 1e-12);
    assert_eq!(m.mse_l, None);
    assert_eq!(m.mse_q, None);
    let zero_filled = compute_metrics(&fits, &[truth, truth], true).unwrap();
    assert!(zero_filled.mse_q_zero_l && zero_filled.mse_q.is_some());
}

#[test]
fn pooled_only_experiment_has_no_low_rank_metrics() {
    let cell = ExperimentCell {
        n: 15,
        t: 12,
        phi: 0.2,
        error_law: ErrorLaw::StandardNormal,
        u: 0.5,
        estimators: vec![Estimator::Po],
    };
    let cfg = ExperimentConfig { reps: 1, ..ExperimentConfig::default() };
    let out = run_experiment(&[cell], &cfg).unwrap();
    assert_eq!(out.rows.len(), 1);
    assert_eq!(out.rows[0].estimator, Estimator::Po);
    assert_eq!(out.rows[0].mse_l, None);
    assert_eq!(out.rows[0].mse_q, None);
    assert_eq!(out.rows[0].replications, 1);
}
