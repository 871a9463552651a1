use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nnqr::panel_io::{format_real, load_panel, write_matrix, write_simulation, write_vector, LoadedPanel};
use nnqr::tolerances::{ALM_MAX_ITERS, ALM_TOL, FEASIBILITY_REL};
use nnqr::{
    alm_fit, default_lambda, default_rank_threshold, estimate_rank, run_experiment, ErrorLaw, Estimator,
    ExperimentCell, ExperimentConfig, FitConfig, FitResult, ItRank, MetricsRow, SimulationSpec,
};
use serde::Serialize;

use crate::config::{resolve, ConfigFile};
use crate::{BenchArgs, CliError, FitArgs, RankArgs, SimulateArgs};

fn required<T>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("missing required option --{name}")))
}

fn parse_list<T: FromStr>(s: &str, name: &str) -> Result<Vec<T>, CliError> {
    let items: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| CliError::Usage(format!("--{name}: cannot parse {x:?}"))))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("--{name} is empty")));
    }
    Ok(items)
}

pub fn parse_size(token: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Usage(format!("invalid size token {token:?}, expected NxT like 200x200"));
    let (a, b) = token.trim().split_once(['x', 'X']).ok_or_else(bad)?;
    let n: usize = a.trim().parse().map_err(|_| bad())?;
    let t: usize = b.trim().parse().map_err(|_| bad())?;
    if n < 2 || t < 2 {
        return Err(bad());
    }
    Ok((n, t))
}

fn parse_law(s: &str) -> Result<ErrorLaw, CliError> {
    ErrorLaw::parse(s).ok_or_else(|| CliError::Usage(format!("unknown error law {s:?}; use normal or t2")))
}

fn load(path: &Path) -> Result<LoadedPanel, CliError> {
    load_panel(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

struct FitSettings {
    input: PathBuf,
    u: f64,
    lambda: f64,
    lambda_is_default: bool,
    tol: f64,
    max_iters: usize,
}

fn fit_settings(
    input: Option<PathBuf>,
    u: Option<f64>,
    lambda: Option<f64>,
    tol: Option<f64>,
    max_iters: Option<usize>,
    cfg: &ConfigFile,
) -> Result<(FitSettings, LoadedPanel), CliError> {
    let input = required(resolve(input, cfg, "input")?, "input")?;
    let u = required(resolve(u, cfg, "u")?, "u")?;
    let lambda = resolve(lambda, cfg, "lambda")?;
    let tol = resolve(tol, cfg, "tol")?.unwrap_or(ALM_TOL);
    let max_iters = resolve(max_iters, cfg, "max-iters")?.unwrap_or(ALM_MAX_ITERS);
    if !(u > 0.0 && u < 1.0) {
        return Err(CliError::Usage(format!("--u must lie in (0, 1), got {u}")));
    }
    let panel = load(&input)?;
    let (n, t) = (panel.data.n(), panel.data.t());
    let settings = FitSettings {
        input,
        u,
        lambda: lambda.unwrap_or_else(|| default_lambda(n, t)),
        lambda_is_default: lambda.is_none(),
        tol,
        max_iters,
    };
    Ok((settings, panel))
}

fn run_fit(s: &FitSettings, panel: &LoadedPanel) -> Result<FitResult, CliError> {
    let mut cfg = FitConfig::new(s.u, s.lambda);
    cfg.tol = s.tol;
    cfg.max_iters = s.max_iters;
    Ok(alm_fit(&panel.data, &cfg)?)
}

#[derive(Serialize)]
struct FitManifest<'a> {
    command: &'a str,
    version: &'a str,
    input: String,
    n: usize,
    t: usize,
    p: usize,
    u: f64,
    lambda: f64,
    lambda_is_default: bool,
    mu: f64,
    tol: f64,
    max_iters: usize,
    iterations: usize,
    converged: bool,
    last_change: f64,
    constraint_residual: f64,
    feasibility_bound: f64,
    objective: f64,
    warning: Option<String>,
}

pub fn fit(a: FitArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    cfg.check_keys(&["input", "u", "lambda", "tol", "max-iters", "out"])?;
    let out = resolve(a.out, cfg, "out")?.unwrap_or_else(|| PathBuf::from("."));
    let (s, panel) = fit_settings(a.input, a.u, a.lambda, a.tol, a.max_iters, cfg)?;
    let res = run_fit(&s, &panel)?;

    std::fs::create_dir_all(&out)?;
    write_vector(File::create(out.join("beta.csv"))?, "j", &res.beta)?;
    write_matrix(File::create(out.join("L.csv"))?, &res.l)?;
    write_vector(File::create(out.join("singulars.csv"))?, "k", &res.singulars)?;

    let warning = (!res.converged).then(|| {
        format!("no convergence after {} iterations (last change {:.3e})", res.iterations, res.last_change)
    });
    let manifest = FitManifest {
        command: "fit",
        version: env!("CARGO_PKG_VERSION"),
        input: s.input.display().to_string(),
        n: panel.data.n(),
        t: panel.data.t(),
        p: panel.data.p(),
        u: s.u,
        lambda: s.lambda,
        lambda_is_default: s.lambda_is_default,
        mu: res.mu,
        tol: s.tol,
        max_iters: s.max_iters,
        iterations: res.iterations,
        converged: res.converged,
        last_change: res.last_change,
        constraint_residual: res.final_constraint_residual,
        feasibility_bound: FEASIBILITY_REL * (1.0 + panel.data.y.frobenius_norm()),
        objective: res.objective,
        warning: warning.clone(),
    };
    let mut f = File::create(out.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(f)?;

    if let Some(w) = warning {
        eprintln!("warning: {w}");
    }
    println!("beta: {}", res.beta.iter().map(|b| format!("{b:.6}")).collect::<Vec<_>>().join(", "));
    println!("iterations: {}, converged: {}", res.iterations, res.converged);
    println!("wrote {}", out.display());
    Ok(())
}

pub fn rank(a: RankArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    cfg.check_keys(&["input", "u", "threshold", "lambda", "tol", "max-iters"])?;
    let threshold = resolve(a.threshold, cfg, "threshold")?;
    let (s, panel) = fit_settings(a.input, a.u, a.lambda, a.tol, a.max_iters, cfg)?;
    let res = run_fit(&s, &panel)?;
    let c_r = threshold.unwrap_or_else(|| default_rank_threshold(panel.data.n(), panel.data.t()));
    let est = estimate_rank(&res.singulars, c_r)?;
    if !res.converged {
        eprintln!("warning: fit did not converge after {} iterations", res.iterations);
    }
    println!("r_hat: {}", est.r_hat);
    println!("threshold: {}", format_real(est.threshold));
    println!("singulars: {}", est.singulars.iter().map(|v| format_real(*v)).collect::<Vec<_>>().join(","));
    Ok(())
}

pub const RESULTS_HEADER: [&str; 12] = [
    "estimator",
    "u",
    "N",
    "T",
    "phi",
    "error_law",
    "reps",
    "bias2_beta_x100",
    "var_beta_x1e4",
    "mse_L",
    "mse_q",
    "mean_seconds",
];

fn opt_real(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

fn write_results(path: &Path, rows: &[MetricsRow]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.estimator.label().to_string(),
            format_real(r.u),
            r.n.to_string(),
            r.t.to_string(),
            format_real(r.phi),
            r.error_law.label().to_string(),
            r.replications.to_string(),
            format_real(r.bias2_beta * 100.0),
            format_real(r.var_beta * 1e4),
            opt_real(r.mse_l),
            opt_real(r.mse_q),
            format_real(r.mean_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn bench(a: BenchArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    cfg.check_keys(&[
        "phi",
        "u",
        "sizes",
        "errors",
        "reps",
        "estimators",
        "seed",
        "out",
        "rank",
        "true-rank-from-truth",
        "lambda",
        "po-mse-q",
    ])?;
    let phis: Vec<f64> = parse_list(&resolve(a.phi, cfg, "phi")?.unwrap_or_else(|| "0.2".into()), "phi")?;
    let us: Vec<f64> = parse_list(&resolve(a.u, cfg, "u")?.unwrap_or_else(|| "0.5".into()), "u")?;
    let sizes = parse_list::<String>(&resolve(a.sizes, cfg, "sizes")?.unwrap_or_else(|| "200x200".into()), "sizes")?
        .iter()
        .map(|s| parse_size(s))
        .collect::<Result<Vec<_>, _>>()?;
    let laws = parse_list::<String>(&resolve(a.errors, cfg, "errors")?.unwrap_or_else(|| "normal".into()), "errors")?
        .iter()
        .map(|s| parse_law(s))
        .collect::<Result<Vec<_>, _>>()?;
    let estimators = parse_list::<String>(
        &resolve(a.estimators, cfg, "estimators")?.unwrap_or_else(|| "nu,po".into()),
        "estimators",
    )?
    .iter()
    .map(|s| Estimator::parse(s).ok_or_else(|| CliError::Usage(format!("unknown estimator {s:?}; use nu, it, po"))))
    .collect::<Result<Vec<_>, _>>()?;
    let reps = resolve(a.reps, cfg, "reps")?.unwrap_or(20);
    let seed = resolve(a.seed, cfg, "seed")?.unwrap_or(0);
    let out = resolve(a.out, cfg, "out")?.unwrap_or_else(|| PathBuf::from("results.csv"));
    let rank = resolve(a.rank, cfg, "rank")?;
    let true_rank = a.true_rank_from_truth || cfg.flag("true-rank-from-truth")?;
    let lambda = resolve(a.lambda, cfg, "lambda")?;
    let po_mse_q = a.po_mse_q || cfg.flag("po-mse-q")?;

    let it_rank = match (rank, true_rank) {
        (Some(_), true) => {
            return Err(CliError::Usage("--rank and --true-rank-from-truth are mutually exclusive".into()));
        }
        (Some(r), false) => Some(ItRank::Fixed(r)),
        (None, true) => Some(ItRank::TrueRank),
        (None, false) => None,
    };
    if estimators.contains(&Estimator::It) && it_rank.is_none() {
        return Err(CliError::Usage("--estimators it requires --rank INT or --true-rank-from-truth".into()));
    }
    if reps == 0 {
        return Err(CliError::Usage("--reps must be positive".into()));
    }

    let mut cells = Vec::new();
    for &(n, t) in &sizes {
        for &phi in &phis {
            for &law in &laws {
                for &u in &us {
                    cells.push(ExperimentCell { n, t, phi, error_law: law, u, estimators: estimators.clone() });
                }
            }
        }
    }
    let config = ExperimentConfig { reps, master_seed: seed, it_rank, lambda, po_mse_q, ..ExperimentConfig::default() };
    let output = run_experiment(&cells, &config)?;
    write_results(&out, &output.rows)?;
    for r in &output.rows {
        if r.failures > 0 || r.nonconverged > 0 {
            eprintln!(
                "warning: {} u={} {}x{}: {} failed, {} did not converge",
                r.estimator, r.u, r.n, r.t, r.failures, r.nonconverged
            );
        }
    }
    println!("wrote {} rows to {}", output.rows.len(), out.display());
    Ok(())
}

pub fn simulate(a: SimulateArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    cfg.check_keys(&["size", "phi", "errors", "seed", "u", "out"])?;
    let (n, t) = parse_size(&resolve(a.size, cfg, "size")?.unwrap_or_else(|| "200x200".into()))?;
    let phi = resolve(a.phi, cfg, "phi")?.unwrap_or(0.2);
    let law = parse_law(&resolve(a.errors, cfg, "errors")?.unwrap_or_else(|| "normal".into()))?;
    let seed = resolve(a.seed, cfg, "seed")?.unwrap_or(0);
    let levels: Vec<f64> = parse_list(&resolve(a.u, cfg, "u")?.unwrap_or_else(|| "0.2,0.5,0.8".into()), "u")?;
    let out = resolve(a.out, cfg, "out")?.unwrap_or_else(|| PathBuf::from("simulated"));
    let truth = nnqr::simulate(&SimulationSpec::new(n, t, phi, law, seed, levels))?;
    write_simulation(&out, &truth)?;
    println!("wrote {n}x{t} panel and truth to {}", out.display());
    Ok(())
}
