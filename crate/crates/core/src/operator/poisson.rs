//! Poisson distribution shifted to start at one partner, and the truncated
//! expectation of upstream cost under it.

use crate::model::{DomainError, ModelSpec};
use crate::scalar::Real;

use super::price::PriceFunction;

/// Left-tail probabilities below this are dropped from a [`PmfRow`].
const LEFT_TAIL_FLOOR: f64 = 1e-20;

/// Number of terms summed for effort `lambda`:
/// `ceil(lambda + 12 sqrt(lambda + 1) + 30)`.
pub fn truncation_len<T: Real>(lambda: T) -> usize {
    let l = lambda.to_f64_lossy().max(0.0);
    (l + 12.0 * (l + 1.0).sqrt() + 30.0).ceil() as usize
}

/// `f(k; lambda) = lambda^(k-1) e^(-lambda) / (k-1)!`, with all mass on
/// `k = 1` when `lambda = 0`.
pub fn poisson_pmf<T: Real>(k: usize, lambda: T) -> Result<T, DomainError> {
    if k < 1 {
        return Err(DomainError {
            what: "partner count",
            value: k as f64,
            domain: "k >= 1",
        });
    }
    if !(lambda >= T::zero() && lambda.is_finite()) {
        return Err(DomainError {
            what: "search effort",
            value: lambda.to_f64_lossy(),
            domain: "lambda >= 0",
        });
    }
    if lambda == T::zero() {
        return Ok(if k == 1 { T::one() } else { T::zero() });
    }
    let n = k - 1;
    let ln_fact: T = (2..=n).map(|j| T::of(j).ln()).sum();
    Ok((T::of(n) * lambda.ln() - lambda - ln_fact).exp())
}

/// Probabilities `f(k; lambda)` for `k` in `first_k ..= last_k`, where
/// `last_k` is [`truncation_len`]. Left-tail terms below `1e-20` are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PmfRow<T> {
    lambda: T,
    first_k: usize,
    probs: Vec<T>,
}

impl<T: Real> PmfRow<T> {
    pub fn new(lambda: T) -> Self {
        Self::build(lambda, |n| T::of(n).ln())
    }

    /// Same as [`PmfRow::new`] with `ln n` read from `ln_table[n]`.
    pub(crate) fn with_ln_table(lambda: T, ln_table: &[T]) -> Self {
        Self::build(lambda, |n| ln_table[n])
    }

    fn build(lambda: T, ln: impl Fn(usize) -> T) -> Self {
        debug_assert!(lambda >= T::zero());
        if lambda == T::zero() {
            return Self {
                lambda,
                first_k: 1,
                probs: vec![T::one()],
            };
        }
        let last_k = truncation_len(lambda);
        let ln_lambda = lambda.ln();
        let floor = T::lit(LEFT_TAIL_FLOOR);
        let mut ln_f = -lambda;
        let mut first_k = 0;
        let mut probs = Vec::with_capacity(last_k);
        for k in 1..=last_k {
            if k > 1 {
                ln_f = ln_f + ln_lambda - ln(k - 1);
            }
            let f = ln_f.exp();
            if first_k == 0 {
                if f < floor {
                    continue;
                }
                first_k = k;
            }
            probs.push(f);
        }
        Self {
            lambda,
            first_k,
            probs,
        }
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn first_k(&self) -> usize {
        self.first_k
    }

    pub fn last_k(&self) -> usize {
        self.first_k + self.probs.len() - 1
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn total_mass(&self) -> T {
        self.probs.iter().copied().sum()
    }

    /// `sum_k f(k) w(k)` where `weights[k - 1] = w(k)`; `weights` must cover
    /// `last_k()`.
    #[inline]
    pub fn expect(&self, weights: &[T]) -> T {
        self.probs
            .iter()
            .zip(&weights[self.first_k - 1..])
            .map(|(f, w)| *f * *w)
            .sum()
    }

    /// Truncated `E[g(k)]`.
    pub fn mean_partner_cost(&self, model: &ModelSpec<T>) -> T {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, f)| *f * model.partner_cost(self.first_k + i))
            .sum()
    }
}

/// `E[g(k) + delta k p(t/k)]` under effort `lambda`, truncated after
/// [`truncation_len`] terms.
pub fn expected_upstream_cost<T: Real>(
    model: &ModelSpec<T>,
    price: &PriceFunction<T>,
    t: T,
    lambda: T,
) -> T {
    let delta = model.delta();
    if lambda == T::zero() {
        return model.partner_cost(1) + delta * price.eval(t);
    }
    let row = PmfRow::new(lambda);
    row.probs
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let k = row.first_k + i;
            *f * (model.partner_cost(k) + delta * T::of(k) * price.eval(t / T::of(k)))
        })
        .sum()
}
