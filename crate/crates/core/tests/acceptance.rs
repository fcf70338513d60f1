//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails, except for the entries in `KNOWN_FAILURES`.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use chainsolve::bench::{desk_suite, run_benchmark, BenchOptions, BenchReport, BenchStatus};
use chainsolve::network::{simulate_network, DEFAULT_MAX_DEPTH};
use chainsolve::operator::{
    apply_operator, apply_with, expected_upstream_cost, lower_envelope, objective, poisson_pmf,
    upper_envelope, Bounds, OperatorSettings, PriceFunction, Variant,
};
use chainsolve::solver::{refine_study, solve_iterative, solve_recursive, Method, Solution, SolveOptions};
use chainsolve::{CostSpec, ModelSpec, TransactionSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn exp_model(a: f64, delta: f64, beta: f64) -> ModelSpec<f64> {
    ModelSpec::new(CostSpec::ExpAffine { a }, TransactionSpec::linear(delta, beta)).unwrap()
}

fn figure_1() -> ModelSpec<f64> {
    exp_model(10.0, 10.0, 50.0)
}

fn figure_4(delta: f64, beta: f64) -> ModelSpec<f64> {
    ModelSpec::new(CostSpec::Power { theta: 1.2 }, TransactionSpec::power(delta, beta, 1.5)).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn closed_form_operator() -> Outcome {
    let model = exp_model(1.0, 2.0, 0.01);
    let m = 1024;
    let u0 = lower_envelope(&model, m);
    let start = Instant::now();
    let (tu, _) = apply_operator(&model, &u0);
    let elapsed = start.elapsed();
    // c'(s) = e^s <= 2 c'(0) up to ln 2.
    let s_bar = 2f64.ln();
    let h = 1.0 / m as f64;
    let tol = 2.0 * model.cost_slope(1.0) * h;
    let worst = (0..=m)
        .map(|i| {
            let s = i as f64 * h;
            let closed = if s < s_bar {
                model.cost(s)
            } else {
                model.cost(s_bar) + 2.0 * model.cost_slope(0.0) * (s - s_bar)
            };
            (tu.values()[i] - closed).abs()
        })
        .fold(0.0, f64::max);
    check(
        worst <= tol && elapsed < Duration::from_secs(1),
        format!("max error {worst:.3e} (tol {tol:.3e}), {elapsed:?}"),
    )
}

fn poisson_table() -> Outcome {
    let table = [0.08f64, 0.2, 0.26, 0.21, 0.13];
    let mut worst = (0, 0.0f64);
    for (k, expected) in (1..=5).zip(table) {
        let err = (poisson_pmf(k, 2.5).unwrap() - expected).abs();
        if err > worst.1 {
            worst = (k, err);
        }
    }
    check(
        worst.1 <= 0.005,
        format!("largest deviation {:.5} at k={} (tol 0.005)", worst.1, worst.0),
    )
}

fn method_agreement() -> Outcome {
    let model = figure_1();
    let start = Instant::now();
    let it = solve_iterative(&model, 1000, Variant::Deterministic, &SolveOptions::default().with_tol(1e-9))
        .map_err(|e| e.to_string())?;
    let rec = solve_recursive(&model, 1000, Variant::Deterministic, &SolveOptions::default())
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let gap = it.price.sup_distance(&rec.price);
    let tol = 1e-3 * model.cost_at_one();
    check(
        gap <= tol && elapsed < Duration::from_secs(30),
        format!("sup distance {gap:.3e} (tol {tol:.3e}), {} iterations, {elapsed:?}", it.iterations),
    )
}

fn convergence() -> Outcome {
    let model = figure_1();
    let levels: Vec<usize> = (5..=12).map(|n| 1 << n).collect();
    let rows = refine_study(&model, Variant::Deterministic, &levels, &SolveOptions::default())
        .map_err(|e| e.to_string())?;
    // The finest level is the reference itself.
    let compared = &rows[..rows.len() - 1];
    let decreasing = compared.windows(2).all(|w| w[1].distance < w[0].distance);
    let last = compared.last().unwrap().distance;
    let tol = 1e-3 * model.cost_at_one();
    let table: Vec<String> = compared.iter().map(|r| format!("{}:{:.3e}", r.m, r.distance)).collect();
    check(
        decreasing && last <= tol,
        format!("{} (final tol {tol:.3e})", table.join(" ")),
    )
}

fn run_desk_suite() -> (BenchReport, Duration) {
    let start = Instant::now();
    let report = run_benchmark(&desk_suite(), &BenchOptions::default());
    (report, start.elapsed())
}

fn speed_ordering(report: &BenchReport, elapsed: Duration) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = elapsed < Duration::from_secs(300);
    for n in 1..=5 {
        let fast = format!("case{n}");
        let slow = format!("case{}", n + 5);
        let it = report.row(&slow, Method::Iterate).unwrap();
        let rec = report.row(&slow, Method::Recursive).unwrap();
        let it_fast = report.row(&fast, Method::Iterate).unwrap();
        ok &= rec.median_seconds < it.median_seconds;
        ok &= it.status == BenchStatus::Timeout || it.iterations > it_fast.iterations;
        notes.push(format!(
            "{slow}: {:.4}s vs {:.4}s, iters {} vs {}",
            rec.median_seconds,
            it.median_seconds,
            it.iterations.unwrap_or(0),
            it_fast.iterations.unwrap_or(0)
        ));
    }
    check(ok, format!("{}; suite {elapsed:?}", notes.join("; ")))
}

fn error_comparability(report: &BenchReport) -> Outcome {
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for n in 1..=10 {
        let case = format!("case{n}");
        let it = report.row(&case, Method::Iterate).unwrap();
        let rec = report.row(&case, Method::Recursive).unwrap();
        ok &= rec.sup_error <= 1.5 * it.sup_error;
        worst = worst.max(rec.sup_error / it.sup_error);
    }
    check(ok, format!("largest method-2/method-1 error ratio {worst:.4} (limit 1.5)"))
}

fn random_model(rng: &mut ChaCha8Rng) -> ModelSpec<f64> {
    let cost = match rng.random_range(0..5) {
        0 => CostSpec::ExpAffine { a: rng.random_range(0.5..10.0) },
        1 => CostSpec::Power { theta: rng.random_range(1.1..2.5) },
        2 => CostSpec::PolyAffine,
        3 => CostSpec::ExpPlusSquare,
        _ => CostSpec::ExpSquare,
    };
    let delta = rng.random_range(1.01..4.0);
    // Partner costs scale with c(1), as in the figure models; tiny ratios
    // make the effort search range explode.
    let c1 = cost.value(1.0);
    let tx = if rng.random_bool(0.5) {
        TransactionSpec::linear(delta, c1 * rng.random_range(0.005..0.5))
    } else {
        TransactionSpec::power(delta, c1 * rng.random_range(0.001..0.5), rng.random_range(1.0..2.0))
    };
    ModelSpec::new(cost, tx).unwrap()
}

fn invariants_for(model: &ModelSpec<f64>, rng: &mut ChaCha8Rng) -> Result<(), String> {
    const M: usize = 24;
    let lo = lower_envelope(model, M);
    let hi = upper_envelope(model, M);
    let settings = OperatorSettings::for_model(model);
    let opts = SolveOptions::default();

    // Operator spot checks on a random ordered pair p <= q.
    let r: Vec<f64> = (0..=M).map(|_| rng.random()).collect();
    let p = PriceFunction::new((0..=M).map(|i| lo.values()[i] + r[i] * (hi.values()[i] - lo.values()[i])).collect())
        .unwrap();
    let q = PriceFunction::new(
        (0..=M).map(|i| p.values()[i] + rng.random::<f64>() * (hi.values()[i] - p.values()[i])).collect(),
    )
    .unwrap();
    for variant in [Variant::Deterministic, Variant::Stochastic] {
        let (tp, _) = apply_with(model, &p, variant, &settings);
        let (tq, _) = apply_with(model, &q, variant, &settings);
        for i in 0..=M {
            if tp.values()[i] > tq.values()[i] + 1e-12 * tq.values()[i].max(1.0) {
                return Err(format!("{variant:?} monotonicity at i={i}"));
            }
        }
        if variant == Variant::Deterministic {
            for alpha in [0.25, 0.5, 0.75] {
                let mix = PriceFunction::new(
                    (0..=M).map(|i| alpha * p.values()[i] + (1.0 - alpha) * q.values()[i]).collect(),
                )
                .unwrap();
                let (tm, _) = apply_with(model, &mix, variant, &settings);
                for i in 0..=M {
                    if tm.values()[i] < alpha * tp.values()[i] + (1.0 - alpha) * tq.values()[i] - 1e-9 {
                        return Err(format!("concavity at i={i}, alpha={alpha}"));
                    }
                }
            }
        }
    }

    let h = 1.0 / M as f64;
    let lipschitz = model.cost_slope(1.0) * h + 1e-12;
    let mut solved = Vec::new();
    for variant in [Variant::Deterministic, Variant::Stochastic] {
        let sol = solve_recursive(model, M, variant, &opts).map_err(|e| e.to_string())?;
        let v = sol.price.values();
        for i in 0..=M {
            if v[i] < lo.values()[i] - 1e-9 || v[i] > hi.values()[i] + 1e-9 {
                return Err(format!("{variant:?} envelope at i={i}"));
            }
            let s = i as f64 * h;
            let at_policy = objective(model, &sol.price, s, sol.policy.t_star(i), sol.policy.choice(i));
            if (at_policy - v[i]).abs() > 1e-8 {
                return Err(format!("{variant:?} zero profit at i={i}"));
            }
        }
        for i in 0..M {
            let step = v[i + 1] - v[i];
            if step > lipschitz {
                return Err(format!("{variant:?} Lipschitz at i={i}"));
            }
            if step <= 0.0 {
                return Err(format!("{variant:?} strict monotonicity at i={i}"));
            }
        }
        // Higher transaction costs give higher prices.
        let raised = [
            model.with_delta(model.delta() * 1.2).unwrap(),
            model.with_beta(model.transaction().additive.beta() * 2.0).unwrap(),
        ];
        for twin in &raised {
            let other = solve_recursive(twin, M, variant, &opts).map_err(|e| e.to_string())?;
            for i in 0..=M {
                if v[i] > other.price.values()[i] + 1e-9 {
                    return Err(format!("{variant:?} comparative statics at i={i}"));
                }
            }
        }
        solved.push(sol);
    }
    for i in 0..=M {
        if solved[1].price.values()[i] < solved[0].price.values()[i] - 1e-9 {
            return Err(format!("stochastic below deterministic at i={i}"));
        }
    }
    Ok(())
}

fn invariant_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let n = 200;
    for case in 0..n {
        let model = random_model(&mut rng);
        if let Err(what) = invariants_for(&model, &mut rng) {
            return Err(format!("model {case} ({:?}, {:?}): {what}", model.cost_spec(), model.transaction()));
        }
    }
    Ok(format!("{n} random models"))
}

fn search_bounds() -> Outcome {
    let models = [figure_1(), figure_4(1.05, 0.0005), exp_model(1.0, 1.1, 0.01)];
    let mut worst: f64 = 0.0;
    for model in &models {
        let base = Bounds::for_model(model);
        for variant in [Variant::Deterministic, Variant::Stochastic] {
            let solve = |bounds: Bounds<f64>| {
                let opts = SolveOptions {
                    bounds: Some(bounds),
                    ..SolveOptions::default()
                };
                solve_recursive(model, 200, variant, &opts).unwrap().price
            };
            let a = solve(base);
            for wider in [base.widened(50, 0.0), base.widened(0, 10.0)] {
                worst = worst.max(a.sup_distance(&solve(wider)));
            }
        }
    }
    check(worst <= 1e-10, format!("largest change {worst:.3e} (tol 1e-10)"))
}

fn network_residual(model: &ModelSpec<f64>, sol: &Solution<f64>, net: &chainsolve::ProductionNetwork) -> f64 {
    let mut worst: f64 = 0.0;
    net.root.walk(|node, _| {
        let identity =
            model.cost(node.in_house) + expected_upstream_cost(model, &sol.price, node.t_subcontracted, node.lambda);
        worst = worst.max((identity - node.price).abs());
    });
    worst
}

fn mean_depth(model: &ModelSpec<f64>, sol: &Solution<f64>, seeds: std::ops::RangeInclusive<u64>) -> Result<f64, String> {
    let n = seeds.clone().count() as f64;
    let mut total = 0.0;
    for seed in seeds {
        let net = simulate_network(model, sol, seed, DEFAULT_MAX_DEPTH).map_err(|e| e.to_string())?;
        total += net.stats.depth as f64;
    }
    Ok(total / n)
}

fn network() -> Outcome {
    const M: usize = 500;
    let opts = SolveOptions::default();
    let model = figure_4(1.05, 0.0005);
    let sol = solve_recursive(&model, M, Variant::Stochastic, &opts).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for seed in 1..=20 {
        let a = simulate_network(&model, &sol, seed, DEFAULT_MAX_DEPTH).map_err(|e| e.to_string())?;
        let b = simulate_network(&model, &sol, seed, DEFAULT_MAX_DEPTH).map_err(|e| e.to_string())?;
        ok &= a.to_json() == b.to_json() && a.to_dot() == b.to_dot();
        worst = worst.max(network_residual(&model, &sol, &a));
    }
    ok &= worst <= 1e-6;
    let steep = figure_4(1.1, 0.0005);
    let steep_sol = solve_recursive(&steep, M, Variant::Stochastic, &opts).map_err(|e| e.to_string())?;
    let depth_a = mean_depth(&model, &sol, 1..=100)?;
    let depth_b = mean_depth(&steep, &steep_sol, 1..=100)?;
    ok &= depth_b <= depth_a;
    check(
        ok,
        format!("residual {worst:.3e} (tol 1e-6); mean depth {depth_b:.2} at delta 1.1 vs {depth_a:.2} at 1.05"),
    )
}

/// Criteria that cannot hold as stated. They still run and print FAIL; a
/// pass here means the entry is stale.
const KNOWN_FAILURES: &[(&str, &str)] = &[(
    "poisson pmf table",
    "the reference table rounds pmf(2) = 0.2052 to one decimal",
)];

const CRITERIA: &[&str] = &[
    "closed-form operator image of u0",
    "poisson pmf table",
    "method agreement on the figure 1 model",
    "grid refinement convergence",
    "desk suite speed ordering",
    "desk suite error comparability",
    "invariant suite",
    "search bound sufficiency",
    "network reproducibility and accounting",
];

fn main() -> ExitCode {
    // Optional name filters, e.g. `cargo test --test acceptance -- network`.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let mut desk: Option<(BenchReport, Duration)> = None;

    let (mut failed, mut known, mut stale) = (0, 0, 0);
    for &name in CRITERIA.iter().filter(|n| selected(n)) {
        let outcome = match name {
            "closed-form operator image of u0" => closed_form_operator(),
            "poisson pmf table" => poisson_table(),
            "method agreement on the figure 1 model" => method_agreement(),
            "grid refinement convergence" => convergence(),
            "desk suite speed ordering" => {
                let (report, elapsed) = desk.get_or_insert_with(run_desk_suite);
                speed_ordering(report, *elapsed)
            }
            "desk suite error comparability" => error_comparability(&desk.get_or_insert_with(run_desk_suite).0),
            "invariant suite" => invariant_suite(),
            "search bound sufficiency" => search_bounds(),
            "network reproducibility and accounting" => network(),
            other => unreachable!("no check for {other}"),
        };
        let reason = KNOWN_FAILURES.iter().find(|(n, _)| *n == name).map(|(_, r)| *r);
        match (outcome, reason) {
            (Ok(detail), None) => println!("PASS {name}: {detail}"),
            (Ok(detail), Some(_)) => {
                stale += 1;
                println!("PASS {name}: {detail} (listed as a known failure)");
            }
            (Err(detail), None) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
            (Err(detail), Some(reason)) => {
                known += 1;
                println!("FAIL {name}: {detail} (known: {reason})");
            }
        }
    }
    if known > 0 {
        println!("{known} known failure(s)");
    }
    if failed + stale == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed, {stale} known failure(s) now pass");
        ExitCode::FAILURE
    }
}
