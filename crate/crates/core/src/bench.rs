//! Wall-clock and accuracy comparison of the two solution methods.

use std::fmt::Write;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{make_model, FamilyConfig, ModelConfig, ModelError, ModelSpec};
use crate::operator::{PriceFunction, Variant};
use crate::solver::{solve_iterative, solve_recursive, Method, Solution, SolveError, SolveOptions};

pub const BENCH_SCHEMA: &str = "chainsolve.bench/v1";
pub const BENCH_COLUMNS: &str = "case,method,median_seconds,iterations,sup_error,m,reference_m,status";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub name: String,
    pub config: ModelConfig,
    pub model: ModelSpec<f64>,
    pub m: usize,
    pub reference_m: usize,
}

/// The five cost pairs, each at `delta = 1.1` (cases 1-5) and `delta = 1.01`
/// (cases 6-10).
pub fn suite_configs() -> Vec<ModelConfig> {
    let pairs = [
        (FamilyConfig::new("exp_affine", &[("a", 10.0)]), 1.0),
        (FamilyConfig::new("exp_affine", &[("a", 1.0)]), 0.01),
        (FamilyConfig::new("exp_square", &[]), 0.01),
        (FamilyConfig::new("poly_affine", &[]), 0.01),
        (FamilyConfig::new("exp_plus_square", &[]), 0.05),
    ];
    [1.1, 1.01]
        .iter()
        .flat_map(|&delta| {
            pairs.iter().map(move |(cost, beta)| ModelConfig {
                cost: cost.clone(),
                delta,
                g: FamilyConfig::new("linear", &[("beta", *beta)]),
            })
        })
        .collect()
}

fn suite(m: usize, reference_m: usize) -> Vec<BenchCase> {
    suite_configs()
        .into_iter()
        .enumerate()
        .map(|(n, config)| BenchCase {
            name: format!("case{}", n + 1),
            model: make_model(&config).expect("suite models are valid"),
            config,
            m,
            reference_m,
        })
        .collect()
}

/// Ten cases at `m = 1000`, reference `m = 50000`.
pub fn paper_suite() -> Vec<BenchCase> {
    suite(1000, 50_000)
}

/// The same ten cases at `m = 500`, reference `m = 8000`.
pub fn desk_suite() -> Vec<BenchCase> {
    suite(500, 8000)
}

/// Builds a one-off case; `reference_m` must be at least `8 m`.
pub fn custom_case(name: &str, config: ModelConfig, m: usize, reference_m: usize) -> Result<BenchCase, ModelError> {
    assert!(reference_m >= 8 * m, "reference grid must be at least 8 times finer");
    Ok(BenchCase {
        name: name.to_owned(),
        model: make_model(&config)?,
        config,
        m,
        reference_m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub repeats: usize,
    /// Step tolerance for the iterative method.
    pub tol: f64,
    pub max_iter: usize,
    /// Lets each solve use the rayon pool.
    pub parallel: bool,
    /// Runs cases concurrently; only the errors stay meaningful.
    pub concurrent_cases: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            repeats: 5,
            tol: 1e-8,
            max_iter: 100_000,
            parallel: false,
            concurrent_cases: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchStatus {
    Ok,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub case: String,
    pub method: Method,
    pub median_seconds: f64,
    /// Operator applications; empty for the recursive method.
    pub iterations: Option<usize>,
    /// Sup distance to the reference solution at this case's grid points.
    pub sup_error: f64,
    pub m: usize,
    pub reference_m: usize,
    pub status: BenchStatus,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, case: &str, method: Method) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.case == case && r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema={BENCH_SCHEMA}\n{BENCH_COLUMNS}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{},{:.16e},{},{},{}",
                r.case,
                r.method.name(),
                r.median_seconds,
                r.iterations.map(|n| n.to_string()).unwrap_or_default(),
                r.sup_error,
                r.m,
                r.reference_m,
                match r.status {
                    BenchStatus::Ok => "ok",
                    BenchStatus::Timeout => "timeout",
                }
            );
        }
        out
    }
}

pub fn run_benchmark(cases: &[BenchCase], options: &BenchOptions) -> BenchReport {
    assert!(options.repeats >= 1, "at least one timed repeat");
    let rows: Vec<Vec<BenchRow>> = if options.concurrent_cases {
        cases.par_iter().map(|c| run_case(c, options)).collect()
    } else {
        cases.iter().map(|c| run_case(c, options)).collect()
    };
    BenchReport {
        rows: rows.into_iter().flatten().collect(),
    }
}

fn run_case(case: &BenchCase, options: &BenchOptions) -> Vec<BenchRow> {
    let solve_options = SolveOptions {
        tol: options.tol,
        max_iter: options.max_iter,
        parallel: options.parallel,
        bounds: None,
    };
    let reference = solve_recursive(&case.model, case.reference_m, Variant::Deterministic, &solve_options)
        .expect("reference grid is valid")
        .price;
    [Method::Iterate, Method::Recursive]
        .into_iter()
        .map(|method| {
            let run = || match method {
                Method::Iterate => solve_iterative(&case.model, case.m, Variant::Deterministic, &solve_options),
                Method::Recursive => solve_recursive(&case.model, case.m, Variant::Deterministic, &solve_options),
            };
            let mut status = BenchStatus::Ok;
            let mut last: Option<Solution<f64>> = None;
            let mut times = Vec::with_capacity(options.repeats);
            for rep in 0..=options.repeats {
                let sol = match run() {
                    Ok(sol) => sol,
                    Err(SolveError::MaxIterationsExceeded { last, .. }) => {
                        status = BenchStatus::Timeout;
                        *last
                    }
                    Err(e) => panic!("bench case {} is invalid: {e}", case.name),
                };
                // A timed-out solve is timed once and not repeated.
                let timed_out = status == BenchStatus::Timeout;
                if rep > 0 || timed_out {
                    times.push(sol.wall_time);
                }
                last = Some(sol);
                if timed_out {
                    break;
                }
            }
            let sol = last.expect("at least one run");
            BenchRow {
                case: case.name.clone(),
                method,
                median_seconds: median(&mut times).as_secs_f64(),
                iterations: (method == Method::Iterate).then_some(sol.iterations),
                sup_error: sup_error(&sol.price, &reference),
                m: case.m,
                reference_m: case.reference_m,
                status,
            }
        })
        .collect()
}

/// Sup distance at the grid points of `coarse`, reading `reference` exactly
/// when the grids nest and by interpolation otherwise.
pub fn sup_error(coarse: &PriceFunction<f64>, reference: &PriceFunction<f64>) -> f64 {
    let (m, big) = (coarse.grid_size(), reference.grid_size());
    if big % m == 0 {
        let stride = big / m;
        coarse
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (v - reference.values()[i * stride]).abs())
            .fold(0.0, f64::max)
    } else {
        coarse.sup_distance_on_grid(reference)
    }
}

fn median(times: &mut [Duration]) -> Duration {
    times.sort();
    let n = times.len();
    if n % 2 == 1 {
        times[n / 2]
    } else {
        (times[n / 2 - 1] + times[n / 2]) / 2
    }
}
