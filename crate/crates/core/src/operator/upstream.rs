//! Inner minimization over the partner choice for a fixed subcontracted
//! amount.
//!
//! The objective `c(s - t) + [g(k) + delta k p(t/k)]` splits into a stage
//! term and an upstream term that depends on `t` alone, so the best `k` (or
//! `lambda`) for each grid `t = j h` is computed once and reused for every
//! stage `s >= t`.

use std::borrow::Cow;

use rayon::prelude::*;

use crate::model::ModelSpec;
use crate::scalar::Real;

use super::bounds::Bounds;
use super::poisson::{truncation_len, PmfRow};
use super::price::{interpolate_ratio, PartnerChoice, Variant};

/// Spacing of the coarse effort scan.
pub const EFFORT_SCAN_STEP: f64 = 0.1;
/// Ternary refinement steps on the best coarse cell.
pub const EFFORT_REFINE_STEPS: usize = 40;
/// Probabilities kept in memory across all coarse rows. Rows past this are
/// rebuilt whenever they are scanned.
const ROW_CACHE_ENTRIES: usize = 1 << 24;

/// Cheapest way to source a subcontracted amount `t = j h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpstreamBest<T> {
    /// `min g(k) + delta k p(t/k)`, or its expectation under the best effort.
    pub cost: T,
    pub choice: PartnerChoice<T>,
}

impl<T: Real> UpstreamBest<T> {
    pub(crate) fn in_house() -> Self {
        Self {
            cost: T::zero(),
            choice: PartnerChoice::Count(1),
        }
    }

    pub(crate) fn in_house_for(variant: Variant) -> Self {
        match variant {
            Variant::Deterministic => Self::in_house(),
            Variant::Stochastic => Self {
                cost: T::zero(),
                choice: PartnerChoice::Effort(T::zero()),
            },
        }
    }
}

/// True when `a` wins a tie against `b`: fewer partners, or less effort.
#[inline]
pub(crate) fn prefer<T: Real>(a: &PartnerChoice<T>, b: &PartnerChoice<T>) -> bool {
    match (a, b) {
        (PartnerChoice::Count(x), PartnerChoice::Count(y)) => x < y,
        (PartnerChoice::Effort(x), PartnerChoice::Effort(y)) => x < y,
        _ => false,
    }
}

/// Searches partner choices for one model and one price function.
pub(crate) struct UpstreamSearch<'a, T> {
    model: &'a ModelSpec<T>,
    bounds: Bounds<T>,
    variant: Variant,
    partner_cost: Vec<T>,
    ln_table: Vec<T>,
    rows: Vec<CoarseRow<T>>,
    rows_complete: bool,
    cached_entries: usize,
    cache_limit: usize,
}

struct CoarseRow<T> {
    pmf: Option<PmfRow<T>>,
    mean_partner_cost: T,
}

impl<'a, T: Real> UpstreamSearch<'a, T> {
    pub fn new(model: &'a ModelSpec<T>, bounds: Bounds<T>, variant: Variant) -> Self {
        let len = match variant {
            Variant::Deterministic => bounds.k_bar,
            Variant::Stochastic => 64,
        };
        let mut search = Self {
            model,
            bounds,
            variant,
            partner_cost: Vec::new(),
            ln_table: vec![T::zero()],
            rows: Vec::new(),
            rows_complete: false,
            cached_entries: 0,
            cache_limit: ROW_CACHE_ENTRIES,
        };
        search.grow_tables(len);
        search.prepare(T::zero());
        search
    }

    #[cfg(test)]
    pub fn without_row_cache(model: &'a ModelSpec<T>, bounds: Bounds<T>, variant: Variant) -> Self {
        let mut search = Self::new(model, bounds, variant);
        search.rows.clear();
        search.cached_entries = 0;
        search.cache_limit = 0;
        search.prepare(T::zero());
        search
    }

    fn grow_tables(&mut self, last_k: usize) {
        while self.partner_cost.len() < last_k {
            let k = self.partner_cost.len() + 1;
            self.partner_cost.push(self.model.partner_cost(k));
        }
        while self.ln_table.len() <= last_k {
            let n = self.ln_table.len();
            self.ln_table.push(T::of(n).ln());
        }
    }

    fn coarse_lambda(n: usize) -> T {
        T::of(n) * T::lit(EFFORT_SCAN_STEP)
    }

    /// Extends the coarse effort rows until the mean partner cost exceeds
    /// `bound` or the effort ceiling is reached.
    pub fn prepare(&mut self, bound: T) {
        if self.variant != Variant::Stochastic {
            return;
        }
        loop {
            if self.rows_complete {
                return;
            }
            if let Some(last) = self.rows.last() {
                if last.mean_partner_cost > bound {
                    return;
                }
            }
            let lambda = Self::coarse_lambda(self.rows.len());
            if lambda > self.bounds.lambda_bar {
                self.rows_complete = true;
                return;
            }
            self.grow_tables(truncation_len(lambda));
            let pmf = PmfRow::with_ln_table(lambda, &self.ln_table);
            let mean_partner_cost = pmf.expect(&self.partner_cost);
            let keep = self.cached_entries + pmf.probs().len() <= self.cache_limit;
            if keep {
                self.cached_entries += pmf.probs().len();
            }
            self.rows.push(CoarseRow {
                pmf: keep.then_some(pmf),
                mean_partner_cost,
            });
        }
    }

    /// Best choice for `t = j h` given grid values that are final on `[0, j h]`.
    pub fn best(&self, values: &[T], j: usize) -> UpstreamBest<T> {
        if j == 0 {
            return UpstreamBest::in_house_for(self.variant);
        }
        match self.variant {
            Variant::Deterministic => self.best_count(values, j),
            Variant::Stochastic => self.best_effort(values, j),
        }
    }

    fn best_count(&self, values: &[T], j: usize) -> UpstreamBest<T> {
        let delta = self.model.delta();
        let mut best = T::infinity();
        let mut best_k = 1;
        for k in 1..=self.bounds.k_bar {
            let g = self.partner_cost_at(k);
            // The price term is nonnegative.
            if g > best {
                break;
            }
            let v = g + delta * T::of(k) * interpolate_ratio(values, j, k);
            if v < best {
                best = v;
                best_k = k;
            }
        }
        UpstreamBest {
            cost: best,
            choice: PartnerChoice::Count(best_k),
        }
    }

    #[inline]
    fn partner_cost_at(&self, k: usize) -> T {
        match self.partner_cost.get(k - 1) {
            Some(g) => *g,
            None => self.model.partner_cost(k),
        }
    }

    fn best_effort(&self, values: &[T], j: usize) -> UpstreamBest<T> {
        let delta = self.model.delta();
        let ceiling = self.model.cost_at_one();
        let lambda_bar = self.bounds.lambda_bar;
        let mut weights = Weights {
            values,
            j,
            delta,
            w: Vec::new(),
        };

        // Coarse scan. Row 0 is lambda = 0, i.e. one partner for sure.
        let mut best = weights.upto(1, self)[0];
        let mut best_n = 0;
        for (n, row) in self.rows.iter().enumerate().skip(1) {
            // Expected cost is at least the expected partner cost, which
            // grows with the effort.
            if row.mean_partner_cost > best {
                break;
            }
            let rebuilt;
            let pmf = match &row.pmf {
                Some(pmf) => pmf,
                None => {
                    rebuilt = PmfRow::with_ln_table(Self::coarse_lambda(n), &self.ln_table);
                    &rebuilt
                }
            };
            let v = pmf.expect(weights.upto(pmf.last_k(), self));
            if v > best + ceiling {
                break;
            }
            if v < best {
                best = v;
                best_n = n;
            }
        }
        let mut best_lambda = Self::coarse_lambda(best_n);

        // Ternary refinement on the cell around the coarse winner.
        let cell = T::lit(EFFORT_SCAN_STEP);
        let mut lo = (best_lambda - cell).max(T::zero());
        let mut hi = (best_lambda + cell).min(lambda_bar);
        if hi > lo {
            let mut eval = |lambda: T| {
                let pmf = PmfRow::with_ln_table(lambda, &self.ln_table_view(lambda));
                pmf.expect(weights.upto(pmf.last_k(), self))
            };
            let three = T::lit(3.0);
            for _ in 0..EFFORT_REFINE_STEPS {
                let a = lo + (hi - lo) / three;
                let b = hi - (hi - lo) / three;
                if eval(a) <= eval(b) {
                    hi = b;
                } else {
                    lo = a;
                }
            }
            let lambda = (lo + hi) / T::lit(2.0);
            let v = eval(lambda);
            if v < best {
                best = v;
                best_lambda = lambda;
            }
        }
        UpstreamBest {
            cost: best,
            choice: PartnerChoice::Effort(best_lambda),
        }
    }

    fn ln_table_view(&self, lambda: T) -> Cow<'_, [T]> {
        let need = truncation_len(lambda);
        if need < self.ln_table.len() {
            Cow::Borrowed(&self.ln_table[..=need])
        } else {
            Cow::Owned((0..=need).map(|n| T::of(n).ln()).collect())
        }
    }

    /// Upstream table for every grid amount of a fixed price function.
    pub fn table(&mut self, values: &[T], parallel: bool) -> Vec<UpstreamBest<T>> {
        let top = values.iter().copied().fold(T::zero(), T::max);
        self.prepare(self.model.delta() * top);
        let this = &*self;
        if parallel {
            (0..values.len())
                .into_par_iter()
                .map(|j| this.best(values, j))
                .collect()
        } else {
            (0..values.len()).map(|j| this.best(values, j)).collect()
        }
    }
}

/// Lazily extended `w(k) = g(k) + delta k p(j h / k)`.
struct Weights<'v, T> {
    values: &'v [T],
    j: usize,
    delta: T,
    w: Vec<T>,
}

impl<T: Real> Weights<'_, T> {
    fn upto(&mut self, last_k: usize, search: &UpstreamSearch<'_, T>) -> &[T] {
        while self.w.len() < last_k {
            let k = self.w.len() + 1;
            let g = search.partner_cost_at(k);
            self.w
                .push(g + self.delta * T::of(k) * interpolate_ratio(self.values, self.j, k));
        }
        &self.w
    }
}

/// `min_j c((i - j) h) + upstream[j]` over `j <= j_max`, with ties going to
/// fewer partners (less effort) and then to the smaller `j`.
#[inline]
pub(crate) fn best_split<T: Real>(
    cost_grid: &[T],
    upstream: &[UpstreamBest<T>],
    i: usize,
    j_max: usize,
) -> (T, usize) {
    let mut best = T::infinity();
    let mut best_j = 0;
    for (j, up) in upstream.iter().enumerate().take(j_max + 1) {
        let v = cost_grid[i - j] + up.cost;
        if v < best || (v == best && prefer(&up.choice, &upstream[best_j].choice)) {
            best = v;
            best_j = j;
        }
    }
    (best, best_j)
}
