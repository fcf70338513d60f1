//! The zero-profit operators on grid price functions.
//!
//! For a price function `p` on `{0, h, ..., 1}` the deterministic operator is
//!
//! ```text
//! Tp(s) = min_{t in {0, h, .., s}, 1 <= k <= k_bar}  c(s - t) + g(k) + delta k p(t/k)
//! ```
//!
//! and the stochastic operator replaces the partner count by a search effort
//! `lambda`, taking the expectation over a shifted Poisson count. `p(t/k)` is
//! always read by linear interpolation.

pub mod bounds;
pub mod poisson;
pub mod price;
mod upstream;

use crate::model::ModelSpec;
use crate::scalar::Real;

pub use bounds::{compute_k_bar, compute_lambda_bar, Bounds};
pub use poisson::{expected_upstream_cost, poisson_pmf, truncation_len, PmfRow};
pub use price::{PartnerChoice, Policy, PolicyChoices, PriceError, PriceFunction, Variant};
pub use upstream::{UpstreamBest, EFFORT_REFINE_STEPS, EFFORT_SCAN_STEP};

pub(crate) use upstream::{best_split, prefer, UpstreamSearch};

/// Search ranges and threading for one operator application.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorSettings<T> {
    pub bounds: Bounds<T>,
    /// Spread the per-amount searches over the rayon pool. Results are
    /// identical either way.
    pub parallel: bool,
}

impl<T: Real> OperatorSettings<T> {
    pub fn for_model(model: &ModelSpec<T>) -> Self {
        Self {
            bounds: Bounds::for_model(model),
            parallel: false,
        }
    }
}

/// `u0(s) = c'(0) s` on a grid of size `m`.
pub fn lower_envelope<T: Real>(model: &ModelSpec<T>, m: usize) -> PriceFunction<T> {
    let slope = model.envelope_slope();
    PriceFunction::from_values_unchecked(
        (0..=m).map(|i| slope * price::grid_stage::<T>(i, m)).collect(),
    )
}

/// `v0(s) = c(s)` on a grid of size `m`.
pub fn upper_envelope<T: Real>(model: &ModelSpec<T>, m: usize) -> PriceFunction<T> {
    PriceFunction::from_values_unchecked(cost_grid(model, m))
}

/// `c(d h)` for `d = 0..=m`.
pub(crate) fn cost_grid<T: Real>(model: &ModelSpec<T>, m: usize) -> Vec<T> {
    (0..=m)
        .map(|d| model.cost(price::grid_stage(d, m)))
        .collect()
}

/// One application of the deterministic operator.
pub fn apply_operator<T: Real>(
    model: &ModelSpec<T>,
    price: &PriceFunction<T>,
) -> (PriceFunction<T>, Policy<T>) {
    apply_with(model, price, Variant::Deterministic, &OperatorSettings::for_model(model))
}

/// One application of the stochastic operator.
pub fn apply_stochastic_operator<T: Real>(
    model: &ModelSpec<T>,
    price: &PriceFunction<T>,
) -> (PriceFunction<T>, Policy<T>) {
    apply_with(model, price, Variant::Stochastic, &OperatorSettings::for_model(model))
}

/// One operator application with explicit search ranges.
pub fn apply_with<T: Real>(
    model: &ModelSpec<T>,
    price: &PriceFunction<T>,
    variant: Variant,
    settings: &OperatorSettings<T>,
) -> (PriceFunction<T>, Policy<T>) {
    let m = price.grid_size();
    let mut search = UpstreamSearch::new(model, settings.bounds, variant);
    let upstream = search.table(price.values(), settings.parallel);
    let costs = cost_grid(model, m);

    let split = |i: usize| best_split(&costs, &upstream, i, i);
    let splits: Vec<(T, usize)> = if settings.parallel {
        use rayon::prelude::*;
        (0..=m).into_par_iter().map(split).collect()
    } else {
        (0..=m).map(split).collect()
    };

    let mut values = Vec::with_capacity(m + 1);
    let mut t_index = Vec::with_capacity(m + 1);
    for (v, j) in splits {
        values.push(v);
        t_index.push(j);
    }
    values[0] = T::zero();
    let policy = Policy::new(m, t_index.clone(), choices_for(variant, &upstream, &t_index));
    (PriceFunction::from_values_unchecked(values), policy)
}

pub(crate) fn choices_for<T: Real>(
    variant: Variant,
    upstream: &[UpstreamBest<T>],
    t_index: &[usize],
) -> PolicyChoices<T> {
    match variant {
        Variant::Deterministic => PolicyChoices::Deterministic {
            k_star: t_index
                .iter()
                .map(|&j| match upstream[j].choice {
                    PartnerChoice::Count(k) => k,
                    PartnerChoice::Effort(_) => unreachable!("deterministic search"),
                })
                .collect(),
        },
        Variant::Stochastic => PolicyChoices::Stochastic {
            lambda_star: t_index
                .iter()
                .map(|&j| match upstream[j].choice {
                    PartnerChoice::Effort(l) => l,
                    PartnerChoice::Count(_) => unreachable!("stochastic search"),
                })
                .collect(),
        },
    }
}

/// The firm's objective at stage `s` for a given subcontracted amount and
/// partner choice, reading `price` by interpolation.
pub fn objective<T: Real>(
    model: &ModelSpec<T>,
    price: &PriceFunction<T>,
    s: T,
    t: T,
    choice: PartnerChoice<T>,
) -> T {
    let in_house = model.cost((s - t).max(T::zero()));
    let upstream = match choice {
        PartnerChoice::Count(k) => {
            model.partner_cost(k) + model.delta() * T::of(k) * price.eval(t / T::of(k))
        }
        PartnerChoice::Effort(lambda) => expected_upstream_cost(model, price, t, lambda),
    };
    in_house + upstream
}

/// Optimal decision of a single firm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageDecision<T> {
    /// Zero-profit price at the firm's stage.
    pub price: T,
    /// Subcontracted amount as a multiple of the grid step.
    pub t_index: usize,
    pub t: T,
    pub choice: PartnerChoice<T>,
}

/// Solves the firm problem at arbitrary stages against a fixed price
/// function, with `t` on the grid and `t <= s - h`.
pub struct StageOptimizer<'a, T> {
    model: &'a ModelSpec<T>,
    m: usize,
    variant: Variant,
    upstream: Vec<UpstreamBest<T>>,
}

impl<'a, T: Real> StageOptimizer<'a, T> {
    pub fn new(
        model: &'a ModelSpec<T>,
        price: &PriceFunction<T>,
        variant: Variant,
        settings: &OperatorSettings<T>,
    ) -> Self {
        let mut search = UpstreamSearch::new(model, settings.bounds, variant);
        let upstream = search.table(price.values(), settings.parallel);
        Self {
            model,
            m: price.grid_size(),
            variant,
            upstream,
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn decide(&self, s: T) -> StageDecision<T> {
        let m_real = T::of(self.m);
        // Grid points at or below s; the slack absorbs rounding in s = t/k.
        let below = (s * m_real + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
        let j_max = below.saturating_sub(1).min(self.m);
        let mut best = T::infinity();
        let mut best_j = 0;
        for (j, up) in self.upstream.iter().enumerate().take(j_max + 1) {
            let t = T::of(j) / m_real;
            let v = self.model.cost((s - t).max(T::zero())) + up.cost;
            if v < best || (v == best && prefer(&up.choice, &self.upstream[best_j].choice)) {
                best = v;
                best_j = j;
            }
        }
        StageDecision {
            price: best,
            t_index: best_j,
            t: T::of(best_j) / m_real,
            choice: self.upstream[best_j].choice,
        }
    }
}
