mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chainsolve::bench::{desk_suite, paper_suite, run_benchmark, BenchOptions};
use chainsolve::network::{simulate_network_with, NetworkOptions};
use chainsolve::{solve, Method, ModelSpec64, Solution64, SolveError, SolveOptions, Variant};
use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use config::{build_model, RunConfig};
use output::{write_file, SolveStatus, Summary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "chainsolve", version, about = "Equilibrium prices and production networks for production chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for the equilibrium price function and write price and policy CSVs.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the last iterate when the iteration limit is hit instead of failing.
        #[arg(long)]
        allow_partial: bool,
    },
    /// Solve a baseline and parameter variants on a shared grid.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// `delta=1.05,1.1` or `beta=...`; may be repeated.
        #[arg(long = "vary", required = true)]
        vary: Vec<String>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate production networks from the stochastic equilibrium.
    Network {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds; defaults to the config's network block.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time both methods on a benchmark suite.
    Bench {
        #[arg(long, value_enum, default_value = "desk")]
        suite: Suite,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        out: PathBuf,
        /// Step tolerance of the iterative method.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        /// Run cases concurrently. Timings become unreliable.
        #[arg(long)]
        concurrent_cases: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Iterate,
    Recursive,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Iterate => Method::Iterate,
            MethodArg::Recursive => Method::Recursive,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Det,
    Stoch,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Det => Variant::Deterministic,
            VariantArg::Stoch => Variant::Stochastic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    Paper,
    Desk,
}

/// Reads `CHAINSOLVE_THREADS`, sizes the rayon pool, and reports whether
/// solver-internal parallelism should be on.
fn configure_threads() -> Result<bool, CliError> {
    let Ok(raw) = std::env::var("CHAINSOLVE_THREADS") else {
        return Ok(false);
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| CliError::Config(format!("CHAINSOLVE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(threads > 1)
}

fn solve_options(config: &RunConfig, parallel: bool) -> SolveOptions<f64> {
    SolveOptions {
        tol: config.solver.tol,
        max_iter: config.solver.max_iter,
        parallel,
        bounds: None,
    }
}

/// Solves, keeping the last iterate of a run that hit the iteration limit
/// when `allow_partial` is set.
fn run_solver(
    model: &ModelSpec64,
    config: &RunConfig,
    m: usize,
    method: Method,
    variant: Variant,
    parallel: bool,
    allow_partial: bool,
) -> Result<(Solution64, SolveStatus), CliError> {
    match solve(model, m, method, variant, &solve_options(config, parallel)) {
        Ok(sol) => Ok((sol, SolveStatus::Converged)),
        Err(SolveError::MaxIterationsExceeded { last, .. }) if allow_partial => {
            eprintln!("warning: iteration limit reached, writing the last iterate");
            Ok((*last, SolveStatus::MaxIterations))
        }
        Err(e) => Err(CliError::Solver(e.to_string())),
    }
}

fn out_dir(flag: Option<PathBuf>, config: &RunConfig) -> PathBuf {
    flag.or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn cmd_solve(
    config_path: &Path,
    method: Option<MethodArg>,
    variant: Option<VariantArg>,
    m: Option<usize>,
    out: Option<PathBuf>,
    allow_partial: bool,
    parallel: bool,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let method = method.map(Method::from).unwrap_or(config.solver.method);
    let variant = variant.map(Variant::from).unwrap_or(config.solver.variant);
    let m = grid_size(m, &config)?;
    let model = build_model(&config.model)?;
    let (solution, status) = run_solver(&model, &config, m, method, variant, parallel, allow_partial)?;
    let dir = out_dir(out, &config);
    let warnings = model
        .warnings()
        .iter()
        .map(|w| w.to_string())
        .collect();
    write_file(&dir.join("price.csv"), &output::price_csv(&solution)?)?;
    write_file(&dir.join("policy.csv"), &output::policy_csv(&solution)?)?;
    let summary = Summary::new(config.model.clone(), &solution, status, warnings);
    write_file(
        &dir.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    eprintln!(
        "{} {} m={m}: p(1)={:.10e}, residual {:.3e}, {} iterations, {:.3?}",
        method.name(),
        output::variant_name(variant),
        summary.price_at_one,
        solution.residual,
        solution.iterations,
        solution.wall_time
    );
    Ok(())
}

fn grid_size(flag: Option<usize>, config: &RunConfig) -> Result<usize, CliError> {
    let m = flag.unwrap_or(config.grid.m);
    if m < 2 {
        return Err(CliError::Config(format!("grid size must be at least 2, got {m}")));
    }
    Ok(m)
}

/// Parses `delta=1.05,1.1` into labelled overrides.
fn parse_vary(spec: &str) -> Result<Vec<(String, String, f64)>, CliError> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--vary expects key=v1,v2,..., got {spec:?}")))?;
    let key = key.trim();
    if key != "delta" && key != "beta" {
        return Err(CliError::Config(format!("--vary supports delta and beta, got {key:?}")));
    }
    values
        .split(',')
        .map(|v| {
            let v = v.trim();
            let value: f64 = v
                .parse()
                .map_err(|_| CliError::Config(format!("bad value {v:?} for {key}")))?;
            Ok((format!("{key}={v}"), key.to_owned(), value))
        })
        .collect()
}

fn cmd_compare(
    config_path: &Path,
    vary: &[String],
    method: Option<MethodArg>,
    variant: Option<VariantArg>,
    m: Option<usize>,
    out: Option<PathBuf>,
    parallel: bool,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let method = method.map(Method::from).unwrap_or(config.solver.method);
    let variant = variant.map(Variant::from).unwrap_or(config.solver.variant);
    let m = grid_size(m, &config)?;

    let mut labels = vec!["baseline".to_owned()];
    let mut configs = vec![config.clone()];
    for spec in vary {
        for (label, key, value) in parse_vary(spec)? {
            let mut c = config.clone();
            c.model = match key.as_str() {
                "delta" => c.model.with_delta(value),
                _ => c.model.with_beta(value),
            };
            labels.push(label);
            configs.push(c);
        }
    }
    let mut prices = Vec::with_capacity(configs.len());
    for c in &configs {
        let model = build_model(&c.model)?;
        let (sol, _) = run_solver(&model, c, m, method, variant, parallel, false)?;
        prices.push(sol.price);
    }

    let base_beta = config.model.g.params.get("beta").copied().unwrap_or(f64::NAN);
    for (i, c) in configs.iter().enumerate().skip(1) {
        let raised = c.model.delta > config.model.delta
            || c.model.g.params.get("beta").copied().unwrap_or(f64::NAN) > base_beta;
        let above = prices[i]
            .values()
            .iter()
            .zip(prices[0].values())
            .all(|(v, b)| *v >= b - 1e-9);
        let below = prices[i]
            .values()
            .iter()
            .zip(prices[0].values())
            .all(|(v, b)| *v <= b + 1e-9);
        let relation = match (above, below) {
            (true, true) => "equal to baseline",
            (true, false) => "above baseline",
            (false, true) => "below baseline",
            (false, false) => "crosses baseline",
        };
        let expected = if raised { above } else { below };
        println!(
            "{}: {relation} ({})",
            labels[i],
            if expected { "ordering holds" } else { "ordering VIOLATED" }
        );
    }

    let path = out
        .or_else(|| config.output.file.clone())
        .unwrap_or_else(|| PathBuf::from("compare.csv"));
    write_file(&path, &output::compare_csv(&labels, &prices, method, variant)?)
}

fn cmd_network(
    config_path: &Path,
    seeds: Option<Vec<u64>>,
    m: Option<usize>,
    out: Option<PathBuf>,
    parallel: bool,
) -> Result<(), CliError> {
    let config = RunConfig::load(config_path)?;
    let m = grid_size(m, &config)?;
    let model = build_model(&config.model)?;
    // Networks always come from the stochastic equilibrium.
    let (solution, _) = run_solver(&model, &config, m, config.solver.method, Variant::Stochastic, parallel, false)?;
    let seeds = seeds.unwrap_or_else(|| config.network.seeds());
    let dir = out_dir(out, &config);
    let options = NetworkOptions {
        max_depth: config.network.max_depth,
        parallel,
    };
    for seed in seeds {
        let net = simulate_network_with(&model, &solution, seed, &options)
            .map_err(|e| CliError::Solver(e.to_string()))?;
        write_file(&dir.join(format!("network_seed{seed}.json")), &(net.to_json() + "\n"))?;
        write_file(&dir.join(format!("network_seed{seed}.dot")), &net.to_dot())?;
        eprintln!(
            "seed {seed}: {} firms, depth {}, layers {:?}",
            net.stats.n_firms, net.stats.depth, net.stats.per_layer_counts
        );
    }
    Ok(())
}

fn cmd_bench(
    suite: Suite,
    repeats: usize,
    out: &Path,
    tol: f64,
    max_iter: usize,
    concurrent_cases: bool,
    parallel: bool,
) -> Result<(), CliError> {
    if repeats == 0 {
        return Err(CliError::Config("--repeats must be at least 1".to_owned()));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(CliError::Config(format!("--tol must be positive, got {tol}")));
    }
    let cases = match suite {
        Suite::Paper => paper_suite(),
        Suite::Desk => desk_suite(),
    };
    let report = run_benchmark(
        &cases,
        &BenchOptions {
            repeats,
            tol,
            max_iter,
            parallel,
            concurrent_cases,
        },
    );
    write_file(out, &report.to_csv())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let parallel = configure_threads()?;
    match cli.command {
        Command::Solve {
            config,
            method,
            variant,
            m,
            out,
            allow_partial,
        } => cmd_solve(&config, method, variant, m, out, allow_partial, parallel),
        Command::Compare {
            config,
            vary,
            method,
            variant,
            m,
            out,
        } => cmd_compare(&config, &vary, method, variant, m, out, parallel),
        Command::Network { config, seeds, m, out } => cmd_network(&config, seeds, m, out, parallel),
        Command::Bench {
            suite,
            repeats,
            out,
            tol,
            max_iter,
            concurrent_cases,
        } => cmd_bench(suite, repeats, &out, tol, max_iter, concurrent_cases, parallel),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
