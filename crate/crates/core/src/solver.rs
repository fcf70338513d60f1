//! Equilibrium price functions by successive operator iteration and by the
//! recursive grid construction.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::ModelSpec;
use crate::operator::{
    apply_with, best_split, choices_for, cost_grid, upper_envelope, Bounds, OperatorSettings,
    Policy, PriceFunction, UpstreamSearch, Variant,
};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Successive applications of the operator, starting from `c`.
    Iterate,
    /// One left-to-right pass over the grid.
    Recursive,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Iterate => "iterate",
            Method::Recursive => "recursive",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution<T> {
    pub price: PriceFunction<T>,
    pub policy: Policy<T>,
    pub method: Method,
    /// Operator applications until the step criterion was met. Always 0 for
    /// the recursive method.
    pub iterations: usize,
    /// `sup |T p - p|` over the grid.
    pub residual: T,
    pub wall_time: Duration,
}

impl<T: Real> Solution<T> {
    pub fn variant(&self) -> Variant {
        self.policy.variant()
    }

    pub fn grid_size(&self) -> usize {
        self.price.grid_size()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError<T: Real> {
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("no convergence after {} iterations (last step {step:e}, residual {:e})", last.iterations, last.residual)]
    MaxIterationsExceeded { last: Box<Solution<T>>, step: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<T> {
    /// Stop once the sup-norm step between iterates is at most this.
    pub tol: T,
    pub max_iter: usize,
    pub parallel: bool,
    /// Search ranges; computed from the model when absent.
    pub bounds: Option<Bounds<T>>,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_iter: 100_000,
            parallel: false,
            bounds: None,
        }
    }
}

impl<T: Real> SolveOptions<T> {
    pub fn with_tol(self, tol: T) -> Self {
        Self { tol, ..self }
    }

    fn settings(&self, model: &ModelSpec<T>) -> OperatorSettings<T> {
        OperatorSettings {
            bounds: self.bounds.unwrap_or_else(|| Bounds::for_model(model)),
            parallel: self.parallel,
        }
    }
}

/// Iterates the operator from `v0 = c` until the step is at most `tol`.
pub fn solve_iterative<T: Real>(
    model: &ModelSpec<T>,
    m: usize,
    variant: Variant,
    options: &SolveOptions<T>,
) -> Result<Solution<T>, SolveError<T>> {
    if m < 2 {
        return Err(SolveError::GridTooSmall(m));
    }
    solve_iterative_from(model, upper_envelope(model, m), variant, options)
}

/// Iterates the operator from an arbitrary start in the order interval.
///
/// The stored policy is the minimizer against the returned price, taken from
/// the extra application that measures the residual.
pub fn solve_iterative_from<T: Real>(
    model: &ModelSpec<T>,
    initial: PriceFunction<T>,
    variant: Variant,
    options: &SolveOptions<T>,
) -> Result<Solution<T>, SolveError<T>> {
    if initial.grid_size() < 2 {
        return Err(SolveError::GridTooSmall(initial.grid_size()));
    }
    if !(options.tol > T::zero() && options.tol.is_finite()) {
        return Err(SolveError::InvalidTolerance(options.tol.to_f64_lossy()));
    }
    let settings = options.settings(model);
    let start = Instant::now();
    let mut price = initial;
    let mut iterations = 0;
    let mut step = T::infinity();
    while iterations < options.max_iter {
        let (next, _) = apply_with(model, &price, variant, &settings);
        step = next.sup_distance(&price);
        price = next;
        iterations += 1;
        if step <= options.tol {
            break;
        }
    }
    // Like the recursive method, the timing leaves out the residual check.
    let wall_time = start.elapsed();
    let (check, policy) = apply_with(model, &price, variant, &settings);
    let residual = check.sup_distance(&price);
    let solution = Solution {
        price,
        policy,
        method: Method::Iterate,
        iterations,
        residual,
        wall_time,
    };
    if step <= options.tol {
        Ok(solution)
    } else {
        Err(SolveError::MaxIterationsExceeded {
            last: Box::new(solution),
            step,
        })
    }
}

/// Builds the price grid point by grid point: `p(0) = 0`, and each `p(i h)`
/// minimizes over `t <= (i - 1) h` using only values already fixed.
pub fn solve_recursive<T: Real>(
    model: &ModelSpec<T>,
    m: usize,
    variant: Variant,
    options: &SolveOptions<T>,
) -> Result<Solution<T>, SolveError<T>> {
    if m < 2 {
        return Err(SolveError::GridTooSmall(m));
    }
    let settings = options.settings(model);
    let start = Instant::now();
    let costs = cost_grid(model, m);
    let mut search = UpstreamSearch::new(model, settings.bounds, variant);
    let mut values = vec![T::zero(); m + 1];
    let mut t_index = vec![0; m + 1];
    let mut upstream = Vec::with_capacity(m);
    for i in 1..=m {
        // Values are nondecreasing, so the latest one bounds the price term.
        search.prepare(model.delta() * values[i - 1]);
        upstream.push(search.best(&values, i - 1));
        let (v, j) = best_split(&costs, &upstream, i, i - 1);
        values[i] = v;
        t_index[i] = j;
    }
    let price = PriceFunction::from_values_unchecked(values);
    let policy = Policy::new(m, t_index.clone(), choices_for(variant, &upstream, &t_index));
    let wall_time = start.elapsed();
    let residual = residual_with(model, &price, variant, &settings);
    Ok(Solution {
        price,
        policy,
        method: Method::Recursive,
        iterations: 0,
        residual,
        wall_time,
    })
}

/// Dispatches on the method.
pub fn solve<T: Real>(
    model: &ModelSpec<T>,
    m: usize,
    method: Method,
    variant: Variant,
    options: &SolveOptions<T>,
) -> Result<Solution<T>, SolveError<T>> {
    match method {
        Method::Iterate => solve_iterative(model, m, variant, options),
        Method::Recursive => solve_recursive(model, m, variant, options),
    }
}

/// `sup |T p - p|` over the grid.
pub fn residual<T: Real>(model: &ModelSpec<T>, price: &PriceFunction<T>, variant: Variant) -> T {
    residual_with(model, price, variant, &OperatorSettings::for_model(model))
}

pub fn residual_with<T: Real>(
    model: &ModelSpec<T>,
    price: &PriceFunction<T>,
    variant: Variant,
    settings: &OperatorSettings<T>,
) -> T {
    let (applied, _) = apply_with(model, price, variant, settings);
    applied.sup_distance(price)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementRow<T> {
    pub m: usize,
    /// Sup distance at this level's grid points to the finest solution.
    pub distance: T,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefineError<T: Real> {
    #[error("refinement levels must be increasing and each must divide the next: {0:?}")]
    BadLevels(Vec<usize>),
    #[error(transparent)]
    Solve(#[from] SolveError<T>),
}

/// Recursive solutions on nested grids, each compared with the finest.
pub fn refine_study<T: Real>(
    model: &ModelSpec<T>,
    variant: Variant,
    levels: &[usize],
    options: &SolveOptions<T>,
) -> Result<Vec<RefinementRow<T>>, RefineError<T>> {
    let nested = !levels.is_empty()
        && levels[0] >= 2
        && levels.windows(2).all(|w| w[1] > w[0] && w[1] % w[0] == 0);
    if !nested {
        return Err(RefineError::BadLevels(levels.to_vec()));
    }
    let finest_m = *levels.last().expect("nonempty");
    let finest = solve_recursive(model, finest_m, variant, options)?;
    let mut rows = Vec::with_capacity(levels.len());
    for &m in levels {
        let stride = finest_m / m;
        let distance = if m == finest_m {
            T::zero()
        } else {
            let coarse = solve_recursive(model, m, variant, options)?;
            coarse
                .price
                .values()
                .iter()
                .enumerate()
                .map(|(i, v)| (*v - finest.price.values()[i * stride]).abs())
                .fold(T::zero(), T::max)
        };
        rows.push(RefinementRow { m, distance });
    }
    Ok(rows)
}
