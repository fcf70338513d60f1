use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PriceError {
    #[error("a price function needs at least two grid values, got {0}")]
    TooFewPoints(usize),
    #[error("price at stage 0 must be 0, got {0}")]
    NonzeroOrigin(f64),
    #[error("price value {value} at grid index {index} is negative or not finite")]
    InvalidValue { index: usize, value: f64 },
}

/// Piecewise-linear price function on the uniform grid `{0, h, ..., 1}`,
/// `h = 1/m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceFunction<T> {
    values: Vec<T>,
}

impl<T: Real> PriceFunction<T> {
    /// Wraps grid values `p(0), p(h), ..., p(1)`.
    pub fn new(values: Vec<T>) -> Result<Self, PriceError> {
        if values.len() < 2 {
            return Err(PriceError::TooFewPoints(values.len()));
        }
        if values[0] != T::zero() {
            return Err(PriceError::NonzeroOrigin(values[0].to_f64_lossy()));
        }
        if let Some((index, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= T::zero()))
        {
            return Err(PriceError::InvalidValue {
                index,
                value: v.to_f64_lossy(),
            });
        }
        Ok(Self { values })
    }

    /// Samples `f` on a grid of size `m`. `f(0)` is forced to zero.
    pub fn from_fn(m: usize, f: impl Fn(T) -> T) -> Result<Self, PriceError> {
        let mut values: Vec<T> = (0..=m).map(|i| f(grid_stage(i, m))).collect();
        if let Some(first) = values.first_mut() {
            *first = T::zero();
        }
        Self::new(values)
    }

    pub(crate) fn from_values_unchecked(values: Vec<T>) -> Self {
        debug_assert!(values.len() >= 2 && values[0] == T::zero());
        Self { values }
    }

    /// Grid size `m`; there are `m + 1` values.
    #[inline]
    pub fn grid_size(&self) -> usize {
        self.values.len() - 1
    }

    #[inline]
    pub fn step(&self) -> T {
        T::one() / T::of(self.grid_size())
    }

    #[inline]
    pub fn stage(&self, i: usize) -> T {
        grid_stage(i, self.grid_size())
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Linear interpolation at any `x` in `[0, 1]`; `x` is clamped.
    pub fn eval(&self, x: T) -> T {
        let m = self.grid_size();
        let pos = (x.max(T::zero()) * T::of(m)).min(T::of(m));
        let idx = pos.floor().to_usize().unwrap_or(0).min(m);
        if idx == m {
            return self.values[m];
        }
        let frac = pos - T::of(idx);
        let lo = self.values[idx];
        lo + (self.values[idx + 1] - lo) * frac
    }

    /// `p(j h / k)`, exact in the grid arithmetic: the node index and the
    /// interpolation weight come from integer division.
    #[inline]
    pub fn at_ratio(&self, j: usize, k: usize) -> T {
        interpolate_ratio(&self.values, j, k)
    }

    /// Largest absolute difference over the grid. Both functions must share
    /// the grid size.
    pub fn sup_distance(&self, other: &Self) -> T {
        assert_eq!(self.grid_size(), other.grid_size(), "grid mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }

    /// Largest absolute difference at the grid points of `self`, reading
    /// `other` by interpolation.
    pub fn sup_distance_on_grid(&self, other: &Self) -> T {
        (0..=self.grid_size())
            .map(|i| (self.values[i] - other.eval(self.stage(i))).abs())
            .fold(T::zero(), T::max)
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }
}

#[inline]
pub(crate) fn grid_stage<T: Real>(i: usize, m: usize) -> T {
    T::of(i) / T::of(m)
}

#[inline]
pub(crate) fn interpolate_ratio<T: Real>(values: &[T], j: usize, k: usize) -> T {
    let idx = j / k;
    let rem = j % k;
    let lo = values[idx];
    if rem == 0 {
        lo
    } else {
        lo + (values[idx + 1] - lo) * (T::of(rem) / T::of(k))
    }
}

/// Which operator defines the equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Firms pick the number of partners `k` directly.
    #[serde(alias = "det")]
    Deterministic,
    /// Firms pick a search effort `lambda`; `k - 1` is Poisson(`lambda`).
    #[serde(alias = "stoch")]
    Stochastic,
}

impl Variant {
    pub fn short_name(self) -> &'static str {
        match self {
            Variant::Deterministic => "det",
            Variant::Stochastic => "stoch",
        }
    }
}

/// How many partners a firm ends up with: a count or a search effort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartnerChoice<T> {
    Count(usize),
    Effort(T),
}

/// Per-grid-point minimizers of the operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy<T> {
    m: usize,
    t_index: Vec<usize>,
    choices: PolicyChoices<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyChoices<T> {
    Deterministic { k_star: Vec<usize> },
    Stochastic { lambda_star: Vec<T> },
}

impl<T: Real> Policy<T> {
    pub(crate) fn new(m: usize, t_index: Vec<usize>, choices: PolicyChoices<T>) -> Self {
        Self {
            m,
            t_index,
            choices,
        }
    }

    pub fn grid_size(&self) -> usize {
        self.m
    }

    pub fn variant(&self) -> Variant {
        match self.choices {
            PolicyChoices::Deterministic { .. } => Variant::Deterministic,
            PolicyChoices::Stochastic { .. } => Variant::Stochastic,
        }
    }

    /// Subcontracted amount at grid point `i`, as a multiple of `h`.
    pub fn t_index(&self, i: usize) -> usize {
        self.t_index[i]
    }

    pub fn t_star(&self, i: usize) -> T {
        grid_stage(self.t_index[i], self.m)
    }

    pub fn choice(&self, i: usize) -> PartnerChoice<T> {
        match &self.choices {
            PolicyChoices::Deterministic { k_star } => PartnerChoice::Count(k_star[i]),
            PolicyChoices::Stochastic { lambda_star } => PartnerChoice::Effort(lambda_star[i]),
        }
    }

    pub fn choices(&self) -> &PolicyChoices<T> {
        &self.choices
    }

    pub fn len(&self) -> usize {
        self.t_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_index.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(PriceFunction::<f64>::new(vec![0.0]).is_err());
        assert!(PriceFunction::new(vec![0.1, 1.0]).is_err());
        assert!(PriceFunction::new(vec![0.0, -1.0]).is_err());
        assert!(PriceFunction::new(vec![0.0, f64::NAN]).is_err());
        assert!(PriceFunction::new(vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn interpolation_is_piecewise_linear() {
        let p = PriceFunction::<f64>::new(vec![0.0, 1.0, 3.0, 6.0]).unwrap();
        assert_eq!(p.eval(0.0), 0.0);
        assert_eq!(p.eval(1.0), 6.0);
        assert!((p.eval(0.5) - 2.0).abs() < 1e-15);
        assert!((p.eval(1.0 / 6.0) - 0.5).abs() < 1e-15);
        // j h / k with j = 5, k = 2 is 2.5 h.
        assert!((p.at_ratio(5, 2) - 4.5).abs() < 1e-15);
        assert_eq!(p.at_ratio(4, 2), 3.0);
        assert!((p.at_ratio(5, 2) - p.eval(5.0 / 6.0)).abs() < 1e-14);
    }
}
