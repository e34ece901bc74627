use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use glassrisk::experiments::{
    correlation_histogram_of, run_margin_sweep, run_scaling, ScalingConfig, SweepConfig,
};
use glassrisk::instances::random_spins;
use glassrisk::market_data::sample_indices;
use glassrisk::parallel::Execution;
use glassrisk::risk_model::{margin_ratio, CovarianceEstimate};
use glassrisk::solvers::{exhaustive_ground_state, local_field_baseline, tap_solve, TapSettings};
use glassrisk::{
    apply_sampling, compute_returns, critical_margin, estimate_covariance, hessian_min_eigenvalue,
    laplacian, synth_prices, CorrelationModel, PortfolioProblem, PriceMatrix,
};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::CliError;
use crate::manifest::{default_path, InputDigest, RunManifest};
use crate::source::{self, Source};
use crate::{
    Command, CorrelationArgs, DataArgs, GammaCArgs, OptimizeArgs, ScalingArgs, SolverArg, StartArg,
    SweepArgs, SynthArgs,
};

/// Primary output of a command plus the inputs it consumed.
pub struct Run {
    pub output: String,
    pub inputs: Vec<InputDigest>,
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    if let Command::Replay(args) = command {
        return replay(&args.manifest_path, args.out.as_deref());
    }
    let run = execute(&command)?;
    let (out, manifest_flag) = output_paths(&command);
    write_output(out, &run.output)?;
    let manifest_path = default_path(out, manifest_flag);
    let manifest = RunManifest {
        command: command_name(&command).to_string(),
        master_seed: master_seed(&command),
        config: command,
        inputs: run.inputs,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    match manifest_path {
        Some(path) => std::fs::write(&path, manifest.to_json())
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?,
        None => eprint!("{}", manifest.to_json()),
    }
    Ok(())
}

fn replay(path: &Path, out_override: Option<&Path>) -> Result<(), CliError> {
    let manifest = RunManifest::read(path)?;
    let run = execute(&manifest.config)?;
    for (recorded, now) in manifest.inputs.iter().zip(&run.inputs) {
        if recorded.sha256 != now.sha256 {
            return Err(CliError::Data(format!(
                "input {} changed since the manifest was written",
                recorded.source
            )));
        }
    }
    let (out, _) = output_paths(&manifest.config);
    write_output(out_override.or(out), &run.output)
}

fn execute(command: &Command) -> Result<Run, CliError> {
    match command {
        Command::GammaC(args) => gamma_c(args),
        Command::Optimize(args) => optimize(args),
        Command::Sweep(args) => sweep(args),
        Command::Scaling(args) => scaling(args),
        Command::Synth(args) => synth(args),
        Command::Correlations(args) => correlations(args),
        Command::Replay(_) => Err(CliError::Usage("a manifest cannot record a replay".into())),
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::GammaC(_) => "gamma-c",
        Command::Optimize(_) => "optimize",
        Command::Sweep(_) => "sweep",
        Command::Scaling(_) => "scaling",
        Command::Synth(_) => "synth",
        Command::Correlations(_) => "correlations",
        Command::Replay(_) => "replay",
    }
}

fn master_seed(command: &Command) -> Option<u64> {
    match command {
        Command::GammaC(a) => Some(a.seed),
        Command::Optimize(a) => Some(a.seed),
        Command::Sweep(a) => Some(a.seed),
        Command::Scaling(a) => Some(a.seed),
        Command::Synth(a) => Some(a.seed),
        Command::Correlations(_) | Command::Replay(_) => None,
    }
}

fn output_paths(command: &Command) -> (Option<&Path>, Option<&Path>) {
    let o = match command {
        Command::GammaC(a) => &a.output,
        Command::Optimize(a) => &a.output,
        Command::Sweep(a) => &a.output,
        Command::Scaling(a) => &a.output,
        Command::Synth(a) => &a.output,
        Command::Correlations(a) => &a.output,
        Command::Replay(_) => return (None, None),
    };
    (o.out.as_deref(), o.manifest.as_deref())
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Data(format!("cannot write output: {e}")))
        }
    }
}

fn load(spec: &str) -> Result<(Source, InputDigest), CliError> {
    let src = source::load(spec)?;
    let digest = InputDigest {
        source: spec.to_string(),
        sha256: src.digest.clone(),
        dropped_rows: src.dropped_rows,
    };
    Ok((src, digest))
}

fn check_shrinkage(data: &DataArgs) -> Result<(), CliError> {
    if (0.0..1.0).contains(&data.shrinkage) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("--shrinkage {} outside [0, 1)", data.shrinkage)))
    }
}

/// Sampled, optionally subset prices and their covariance estimate.
fn prepare(
    data: &DataArgs,
    prices: &PriceMatrix,
    n: Option<usize>,
    seed: u64,
) -> Result<(PriceMatrix, CovarianceEstimate), CliError> {
    check_shrinkage(data)?;
    let sampled = apply_sampling(prices, data.scheme)?;
    let selected = match n {
        Some(n) => sampled.select_columns(&sample_indices(sampled.assets(), n, seed)?)?,
        None => sampled,
    };
    let cov = estimate_covariance(&compute_returns(&selected, data.return_mode.into()))?;
    Ok((selected, cov))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn gamma_c(args: &GammaCArgs) -> Result<Run, CliError> {
    if let Some(g) = args.gamma {
        if !(g.is_finite() && g >= 0.0) {
            return Err(CliError::Usage(format!("--gamma {g} must be finite and >= 0")));
        }
    }
    let (src, digest) = load(&args.data.prices)?;
    let (selected, cov) = prepare(&args.data, &src.prices, args.n, args.seed)?;
    let precision = glassrisk::invert_covariance(&cov.matrix, args.data.shrinkage)?;
    let delta = laplacian(&precision);
    let gc = critical_margin(&delta);
    let hessian = args.gamma.map(|g| hessian_min_eigenvalue(&delta, g));
    let verdict = args
        .gamma
        .map(|g| if g < gc { "convex" } else { "non-convex" })
        .unwrap_or_default();

    let mut out = String::from("assets,observations,scheme,gamma_c,gamma,gamma_ratio,hessian_min_eigenvalue,verdict\n");
    writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        selected.assets(),
        selected.observations(),
        args.data.scheme,
        gc,
        fmt_opt(args.gamma),
        fmt_opt(args.gamma.map(|g| margin_ratio(g, gc))),
        fmt_opt(hessian),
        verdict
    )
    .expect("write to string");
    Ok(Run {
        output: out,
        inputs: vec![digest],
    })
}

fn parse_returns(arg: &str) -> Result<Vec<f64>, CliError> {
    let text = if Path::new(arg).is_file() {
        std::fs::read_to_string(arg).map_err(|e| CliError::Data(format!("cannot read {arg}: {e}")))?
    } else {
        arg.to_string()
    };
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad expected return {t:?}")))
        })
        .collect()
}

#[derive(Serialize)]
struct SolverDiagnostics {
    name: &'static str,
    converged: bool,
    sweeps_used: usize,
    is_local_min: bool,
}

#[derive(Serialize)]
struct OptimizeReport {
    tickers: Vec<String>,
    expected_returns: Vec<f64>,
    field: Vec<f64>,
    spins: Vec<i8>,
    positions: Vec<f64>,
    sign_consistent: Vec<bool>,
    all_sign_consistent: bool,
    position_risk: f64,
    spin_risk: f64,
    expected_portfolio_return: f64,
    gamma: f64,
    /// `null` when the critical margin is infinite.
    gamma_c: Option<f64>,
    gamma_ratio: f64,
    hessian_min_eigenvalue: f64,
    solver: SolverDiagnostics,
}

fn optimize(args: &OptimizeArgs) -> Result<Run, CliError> {
    let r = parse_returns(&args.returns)?;
    for g in [args.gamma, args.gamma_ratio].into_iter().flatten() {
        if !(g.is_finite() && g >= 0.0) {
            return Err(CliError::Usage(format!("margin {g} must be finite and >= 0")));
        }
    }
    let (src, digest) = load(&args.data.prices)?;
    let (selected, cov) = prepare(&args.data, &src.prices, args.n, args.seed)?;
    if r.len() != selected.assets() {
        return Err(CliError::Usage(format!(
            "{} expected returns for {} assets",
            r.len(),
            selected.assets()
        )));
    }
    let returns = DVector::from_vec(r);
    let precision = glassrisk::invert_covariance(&cov.matrix, args.data.shrinkage)?;
    let gc = critical_margin(&laplacian(&precision));
    let gamma = match (args.gamma, args.gamma_ratio) {
        (Some(g), _) => g,
        (None, Some(ratio)) if gc.is_finite() => ratio * gc,
        (None, Some(_)) => {
            return Err(CliError::Usage("--gamma-ratio needs a finite critical margin".into()))
        }
        (None, None) => return Err(CliError::Usage("pass --gamma or --gamma-ratio".into())),
    };
    let problem = PortfolioProblem::new(cov.matrix, args.data.shrinkage, returns, gamma)?;
    let inst = problem.ising()?;
    let n = inst.len();

    let start = match args.start {
        StartArg::Random => random_spins(n, &mut ChaCha8Rng::seed_from_u64(args.seed)),
        StartArg::Baseline => local_field_baseline(&inst).spins,
    };
    let (config, diagnostics) = match args.solver {
        SolverArg::Tap => {
            let settings = TapSettings {
                update_order: args.order.into(),
                seed: args.seed,
                ..TapSettings::default()
            };
            let report = tap_solve(&inst, &start, &settings)?;
            let d = SolverDiagnostics {
                name: "tap",
                converged: report.converged,
                sweeps_used: report.sweeps_used,
                is_local_min: report.is_local_min,
            };
            (report.config, d)
        }
        SolverArg::Exhaustive => {
            let g = exhaustive_ground_state(&inst)?;
            let d = SolverDiagnostics {
                name: "exhaustive",
                converged: true,
                sweeps_used: 0,
                is_local_min: glassrisk::solvers::is_local_minimum(&inst, &g.spins),
            };
            (g, d)
        }
        SolverArg::Baseline => {
            let b = local_field_baseline(&inst);
            let d = SolverDiagnostics {
                name: "baseline",
                converged: true,
                sweeps_used: 0,
                is_local_min: glassrisk::solvers::is_local_minimum(&inst, &b.spins),
            };
            (b, d)
        }
    };
    let positions = problem.positions(&config.spins)?;
    let sign_consistent = positions.sign_consistency(&config.spins);
    let report = OptimizeReport {
        tickers: selected.tickers().to_vec(),
        expected_returns: problem.returns.iter().copied().collect(),
        field: inst.field.iter().copied().collect(),
        all_sign_consistent: sign_consistent.iter().all(|&b| b),
        sign_consistent,
        position_risk: problem.risk(&positions.values, &config.spins),
        spin_risk: config.risk,
        expected_portfolio_return: problem.expected_return(&positions.values),
        gamma,
        gamma_c: gc.is_finite().then_some(gc),
        gamma_ratio: margin_ratio(gamma, gc),
        hessian_min_eigenvalue: hessian_min_eigenvalue(&inst.laplacian, gamma),
        spins: config.spins,
        positions: positions.values,
        solver: diagnostics,
    };
    Ok(Run {
        output: serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
        inputs: vec![digest],
    })
}

fn sweep(args: &SweepArgs) -> Result<Run, CliError> {
    check_shrinkage(&args.data)?;
    let (src, digest) = load(&args.data.prices)?;
    let prices = apply_sampling(&src.prices, args.data.scheme)?;
    let cfg = SweepConfig {
        n: args.n,
        gamma_ratios: args.ratios.clone(),
        trials: args.trials,
        master_seed: args.seed,
        shrinkage: args.data.shrinkage,
        return_mode: args.data.return_mode.into(),
        update_order: args.order.into(),
        execution: Execution::from(args.execution),
        ..SweepConfig::default()
    };
    let result = run_margin_sweep(&prices, &cfg)?;
    let mut out = String::from("gamma_ratio,solver,mean_relative_risk,std_relative_risk,trials_defined\n");
    for row in &result.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.stats.key,
            row.solver.label(),
            row.stats.mean,
            row.stats.std,
            row.stats.trials_defined
        )
        .expect("write to string");
    }
    Ok(Run {
        output: out,
        inputs: vec![digest],
    })
}

fn scaling(args: &ScalingArgs) -> Result<Run, CliError> {
    check_shrinkage(&args.data)?;
    let (src, digest) = load(&args.data.prices)?;
    let cfg = ScalingConfig {
        sizes: args.sizes.clone(),
        trials: args.trials,
        scheme: args.data.scheme,
        master_seed: args.seed,
        shrinkage: args.data.shrinkage,
        return_mode: args.data.return_mode.into(),
        execution: args.execution.into(),
    };
    let fit = run_scaling(&src.prices, &cfg)?;
    let mut out = String::from("n,scheme,gamma_c_mean,gamma_c_std,trials_used\n");
    for p in &fit.points {
        writeln!(out, "{},{},{},{},{}", p.key, fit.scheme, p.mean, p.std, p.trials_defined)
            .expect("write to string");
    }
    writeln!(out, "# fit alpha={} r_squared={}", fit.fit.alpha, fit.fit.r_squared).expect("write to string");
    Ok(Run {
        output: out,
        inputs: vec![digest],
    })
}

fn parse_model(model: &str) -> Result<CorrelationModel, CliError> {
    let bad = || CliError::Usage(format!("bad model {model:?}; use factor:<count> or uniform:<rho>"));
    let (kind, value) = model.split_once(':').ok_or_else(bad)?;
    match kind {
        "factor" => Ok(CorrelationModel::RandomFactor {
            factors: value.parse().map_err(|_| bad())?,
        }),
        "uniform" => Ok(CorrelationModel::Uniform {
            rho: value.parse().map_err(|_| bad())?,
        }),
        _ => Err(bad()),
    }
}

fn synth(args: &SynthArgs) -> Result<Run, CliError> {
    let model = parse_model(&args.model)?;
    let prices = synth_prices(args.n, args.observations, model, args.seed)?;
    let mut buf = Vec::new();
    prices.write_csv(&mut buf)?;
    Ok(Run {
        output: String::from_utf8(buf).expect("csv is utf-8"),
        inputs: Vec::new(),
    })
}

fn correlations(args: &CorrelationArgs) -> Result<Run, CliError> {
    let (src, digest) = load(&args.prices)?;
    let data = compute_returns(&src.prices, args.return_mode.into());
    let hist = correlation_histogram_of(&data.values, args.bins, Execution::Parallel)?;
    let mut out = String::from("bin_low,bin_high,count\n");
    for (b, count) in hist.counts.iter().enumerate() {
        writeln!(out, "{},{},{}", hist.edges[b], hist.edges[b + 1], count).expect("write to string");
    }
    writeln!(out, "# pairs={} excluded_pairs={}", hist.pairs, hist.excluded_pairs).expect("write to string");
    Ok(Run {
        output: out,
        inputs: vec![digest],
    })
}
