//! Finite search ranges for the partner count and the search effort.
//!
//! Prices never exceed `c(1)`, so any choice whose additive cost alone is
//! above `c(1)` is dominated by producing everything in-house.

use crate::model::ModelSpec;
use crate::scalar::Real;

/// Spacing of the effort grid scanned by [`compute_lambda_bar`].
pub const LAMBDA_BAR_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds<T> {
    pub k_bar: usize,
    pub lambda_bar: T,
}

impl<T: Real> Bounds<T> {
    pub fn for_model(model: &ModelSpec<T>) -> Self {
        Self {
            k_bar: compute_k_bar(model),
            lambda_bar: compute_lambda_bar(model),
        }
    }

    /// Larger ranges, used to check that the defaults are sufficient.
    pub fn widened(self, extra_k: usize, extra_lambda: T) -> Self {
        Self {
            k_bar: self.k_bar + extra_k,
            lambda_bar: self.lambda_bar + extra_lambda,
        }
    }
}

/// `min { k >= 1 : g(k) > c(1) }`.
pub fn compute_k_bar<T: Real>(model: &ModelSpec<T>) -> usize {
    let ceiling = model.cost_at_one();
    let mut k = 1;
    while !(model.partner_cost(k) > ceiling) {
        k += 1;
    }
    k
}

/// Smallest effort on the `0.01` grid with `g(lambda - ln 2 + 1) / 2 >= c(1)`.
///
/// The left side is a lower bound on `E[g(k)]` obtained from the Poisson
/// median, so efforts above the result never beat `k = 1` with certainty.
pub fn compute_lambda_bar<T: Real>(model: &ModelSpec<T>) -> T {
    let ceiling = model.cost_at_one();
    let additive = model.transaction().additive;
    let half = T::lit(0.5);
    let shift = T::one() - T::LN_2();
    let step = T::lit(LAMBDA_BAR_STEP);
    let mut n = 0usize;
    loop {
        let lambda = T::of(n) * step;
        if half * additive.value_real(lambda + shift) >= ceiling {
            return lambda;
        }
        n += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostSpec, TransactionSpec};
    use crate::operator::poisson::PmfRow;

    #[test]
    fn k_bar_by_enumeration() {
        let fig1 = ModelSpec::new(CostSpec::ExpAffine { a: 10.0 }, TransactionSpec::linear(10.0, 50.0))
            .unwrap();
        assert_eq!(compute_k_bar(&fig1), 442);
        let brute = (1..).find(|&k| 50.0 * (k as f64 - 1.0) > 10f64.exp_m1()).unwrap();
        assert_eq!(brute, 442);

        let power = ModelSpec::new(CostSpec::Power { theta: 1.2 }, TransactionSpec::linear(1.05, 0.01))
            .unwrap();
        assert_eq!(compute_k_bar(&power), 102);

        // g(2) = 5 > c(1) = e - 1.
        let steep = ModelSpec::new(CostSpec::ExpAffine { a: 1.0 }, TransactionSpec::linear(2.0, 5.0))
            .unwrap();
        assert_eq!(compute_k_bar(&steep), 2);
    }

    #[test]
    fn lambda_bar_matches_closed_form() {
        let fig1 = ModelSpec::new(CostSpec::ExpAffine { a: 10.0 }, TransactionSpec::linear(10.0, 50.0))
            .unwrap();
        let lb = compute_lambda_bar(&fig1);
        let exact = 2.0 * 10f64.exp_m1() / 50.0 + std::f64::consts::LN_2;
        assert!((exact - 881.712).abs() < 1e-3);
        assert!(lb >= exact && lb < exact + LAMBDA_BAR_STEP + 1e-9, "{lb}");
        assert!((lb - 881.72).abs() < 1e-9);

        let fig4a = ModelSpec::new(
            CostSpec::Power { theta: 1.2 },
            TransactionSpec::power(1.05, 0.0005, 1.5),
        )
        .unwrap();
        let lb = compute_lambda_bar(&fig4a);
        let exact = std::f64::consts::LN_2 + 4000f64.powf(2.0 / 3.0);
        assert!((exact - 252.68).abs() < 0.01);
        assert!(lb >= exact && lb < exact + LAMBDA_BAR_STEP + 1e-9, "{lb} vs {exact}");
    }

    #[test]
    fn mean_partner_cost_at_lambda_bar_exceeds_ceiling() {
        let models = [
            ModelSpec::new(CostSpec::ExpAffine { a: 10.0 }, TransactionSpec::linear(10.0, 50.0)).unwrap(),
            ModelSpec::new(CostSpec::Power { theta: 1.2 }, TransactionSpec::power(1.05, 0.0005, 1.5))
                .unwrap(),
            ModelSpec::new(CostSpec::PolyAffine, TransactionSpec::linear(1.01, 0.01)).unwrap(),
        ];
        for model in &models {
            let lb = compute_lambda_bar(model);
            let row = PmfRow::new(lb);
            assert!(row.mean_partner_cost(model) >= model.cost_at_one());
        }
    }
}
