//! Economic primitives of the production chain: the in-house cost `c`, the
//! proportional transaction cost `delta` and the additive partner cost `g`.
//!
//! Every family is a closed parametric form with an analytic derivative, and
//! a [`ModelSpec`] can only be obtained through validation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Number of interior points used by the numeric convexity check.
pub const VALIDATION_POINTS: usize = 1000;

/// Slope used for the lower envelope when the cost family has `c'(0) = 0`.
pub const SLOPE_FLOOR: f64 = 1e-12;

const VALIDATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown {kind} family `{name}`")]
    UnknownFamily { kind: &'static str, name: String },
    #[error("family `{family}` requires parameter `{name}`")]
    MissingParameter { family: String, name: &'static str },
    #[error("parameter `{name}` = {value} out of range: {requirement}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("assumption violated: {what} at {at}")]
    AssumptionViolated { what: &'static str, at: f64 },
}

/// An argument outside the domain of a model primitive.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{what} = {value} is outside the domain {domain}")]
pub struct DomainError {
    pub what: &'static str,
    pub value: f64,
    pub domain: &'static str,
}

/// In-house production cost `c` on the stage interval `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostSpec<T> {
    /// `c(s) = exp(a s) - 1`
    ExpAffine { a: T },
    /// `c(s) = s^theta`
    Power { theta: T },
    /// `c(s) = s^2 + s`
    PolyAffine,
    /// `c(s) = exp(s) + s^2 - 1`
    ExpPlusSquare,
    /// `c(s) = exp(s^2) - 1`
    ExpSquare,
}

impl<T: Real> CostSpec<T> {
    pub fn name(&self) -> &'static str {
        match self {
            CostSpec::ExpAffine { .. } => "exp_affine",
            CostSpec::Power { .. } => "power",
            CostSpec::PolyAffine => "poly_affine",
            CostSpec::ExpPlusSquare => "exp_plus_square",
            CostSpec::ExpSquare => "exp_square",
        }
    }

    #[inline]
    pub fn value(&self, s: T) -> T {
        match *self {
            CostSpec::ExpAffine { a } => (a * s).exp_m1(),
            CostSpec::Power { theta } => {
                if s == T::zero() {
                    T::zero()
                } else {
                    s.powf(theta)
                }
            }
            CostSpec::PolyAffine => s * s + s,
            CostSpec::ExpPlusSquare => s.exp_m1() + s * s,
            CostSpec::ExpSquare => (s * s).exp_m1(),
        }
    }

    #[inline]
    pub fn derivative(&self, s: T) -> T {
        let two = T::lit(2.0);
        match *self {
            CostSpec::ExpAffine { a } => a * (a * s).exp(),
            CostSpec::Power { theta } => {
                if s == T::zero() {
                    if theta > T::one() {
                        T::zero()
                    } else if theta == T::one() {
                        T::one()
                    } else {
                        T::infinity()
                    }
                } else {
                    theta * s.powf(theta - T::one())
                }
            }
            CostSpec::PolyAffine => two * s + T::one(),
            CostSpec::ExpPlusSquare => s.exp() + two * s,
            CostSpec::ExpSquare => two * s * (s * s).exp(),
        }
    }

    fn check_parameters(&self) -> Result<(), ModelError> {
        match *self {
            CostSpec::ExpAffine { a } if !(a > T::zero() && a.is_finite()) => {
                Err(ModelError::ParameterOutOfRange {
                    name: "a",
                    value: a.to_f64_lossy(),
                    requirement: "a > 0",
                })
            }
            CostSpec::Power { theta } if !(theta > T::zero() && theta.is_finite()) => {
                Err(ModelError::ParameterOutOfRange {
                    name: "theta",
                    value: theta.to_f64_lossy(),
                    requirement: "theta > 0",
                })
            }
            _ => Ok(()),
        }
    }
}

/// Additive cost `g(k)` of maintaining `k` upstream partners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdditiveCost<T> {
    /// `g(k) = beta (k - 1)`
    Linear { beta: T },
    /// `g(k) = beta (k - 1)^gamma`
    Power { beta: T, gamma: T },
}

impl<T: Real> AdditiveCost<T> {
    pub fn name(&self) -> &'static str {
        match self {
            AdditiveCost::Linear { .. } => "linear",
            AdditiveCost::Power { .. } => "power",
        }
    }

    pub fn beta(&self) -> T {
        match *self {
            AdditiveCost::Linear { beta } | AdditiveCost::Power { beta, .. } => beta,
        }
    }

    /// The same family extended to a real partner count `x`, clamped to zero
    /// below `x = 1`.
    #[inline]
    pub fn value_real(&self, x: T) -> T {
        let excess = (x - T::one()).max(T::zero());
        match *self {
            AdditiveCost::Linear { beta } => beta * excess,
            AdditiveCost::Power { beta, gamma } => {
                if excess == T::zero() {
                    T::zero()
                } else {
                    beta * excess.powf(gamma)
                }
            }
        }
    }

    #[inline]
    pub fn value(&self, k: usize) -> T {
        debug_assert!(k >= 1);
        self.value_real(T::of(k))
    }
}

/// Proportional coefficient `delta` together with the additive cost `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransactionSpec<T> {
    pub delta: T,
    pub additive: AdditiveCost<T>,
}

impl<T: Real> TransactionSpec<T> {
    pub fn linear(delta: T, beta: T) -> Self {
        Self {
            delta,
            additive: AdditiveCost::Linear { beta },
        }
    }

    pub fn power(delta: T, beta: T, gamma: T) -> Self {
        Self {
            delta,
            additive: AdditiveCost::Power { beta, gamma },
        }
    }

    fn check_parameters(&self) -> Result<(), ModelError> {
        if !(self.delta > T::one() && self.delta.is_finite()) {
            return Err(ModelError::ParameterOutOfRange {
                name: "delta",
                value: self.delta.to_f64_lossy(),
                requirement: "delta > 1",
            });
        }
        let beta = self.additive.beta();
        if !(beta > T::zero() && beta.is_finite()) {
            return Err(ModelError::ParameterOutOfRange {
                name: "beta",
                value: beta.to_f64_lossy(),
                requirement: "beta > 0",
            });
        }
        if let AdditiveCost::Power { gamma, .. } = self.additive {
            if !(gamma >= T::one() && gamma.is_finite()) {
                return Err(ModelError::ParameterOutOfRange {
                    name: "gamma",
                    value: gamma.to_f64_lossy(),
                    requirement: "gamma >= 1",
                });
            }
        }
        Ok(())
    }
}

/// Non-fatal findings of model validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelWarning {
    /// `c'(0) = 0`; the lower envelope uses [`SLOPE_FLOOR`] as its slope.
    FlatCostAtZero,
}

impl fmt::Display for ModelWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelWarning::FlatCostAtZero => write!(
                f,
                "c'(0) = 0; lower envelope slope floored at {SLOPE_FLOOR:e}"
            ),
        }
    }
}

/// A validated production chain model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<T> {
    cost: CostSpec<T>,
    transaction: TransactionSpec<T>,
    warnings: Vec<ModelWarning>,
}

impl<T: Real> ModelSpec<T> {
    pub fn new(cost: CostSpec<T>, transaction: TransactionSpec<T>) -> Result<Self, ModelError> {
        cost.check_parameters()?;
        transaction.check_parameters()?;
        let warnings = validate_cost(&cost)?;
        if !(transaction.additive.value(2) > T::zero()) {
            return Err(ModelError::AssumptionViolated {
                what: "g(2) > 0",
                at: 2.0,
            });
        }
        Ok(Self {
            cost,
            transaction,
            warnings,
        })
    }

    pub fn cost_spec(&self) -> &CostSpec<T> {
        &self.cost
    }

    pub fn transaction(&self) -> &TransactionSpec<T> {
        &self.transaction
    }

    pub fn warnings(&self) -> &[ModelWarning] {
        &self.warnings
    }

    #[inline]
    pub fn delta(&self) -> T {
        self.transaction.delta
    }

    /// `c(s)` without a domain check.
    #[inline]
    pub fn cost(&self, s: T) -> T {
        self.cost.value(s)
    }

    #[inline]
    pub fn cost_slope(&self, s: T) -> T {
        self.cost.derivative(s)
    }

    /// `g(k)` without a domain check.
    #[inline]
    pub fn partner_cost(&self, k: usize) -> T {
        self.transaction.additive.value(k)
    }

    /// `c(1)`, the upper bound of every equilibrium price.
    pub fn cost_at_one(&self) -> T {
        self.cost(T::one())
    }

    /// Slope of the lower envelope `u0(s) = c'(0) s`.
    pub fn envelope_slope(&self) -> T {
        let slope = self.cost_slope(T::zero());
        if slope > T::zero() {
            slope
        } else {
            T::lit(SLOPE_FLOOR)
        }
    }

    /// Same cost, new proportional coefficient.
    pub fn with_delta(&self, delta: T) -> Result<Self, ModelError> {
        Self::new(
            self.cost,
            TransactionSpec {
                delta,
                additive: self.transaction.additive,
            },
        )
    }

    /// Same cost and `delta`, new scale of the additive cost.
    pub fn with_beta(&self, beta: T) -> Result<Self, ModelError> {
        let additive = match self.transaction.additive {
            AdditiveCost::Linear { .. } => AdditiveCost::Linear { beta },
            AdditiveCost::Power { gamma, .. } => AdditiveCost::Power { beta, gamma },
        };
        Self::new(
            self.cost,
            TransactionSpec {
                delta: self.transaction.delta,
                additive,
            },
        )
    }
}

fn validate_cost<T: Real>(cost: &CostSpec<T>) -> Result<Vec<ModelWarning>, ModelError> {
    let tol = T::lit(VALIDATION_TOL);
    let n = T::of(VALIDATION_POINTS);
    let mut prev_slope = cost.derivative(T::zero());
    let mut prev_value = T::zero();
    for i in 1..=VALIDATION_POINTS {
        let s = T::of(i) / n;
        let slope = cost.derivative(s);
        let value = cost.value(s);
        if !(slope.is_finite() && value.is_finite()) {
            return Err(ModelError::AssumptionViolated {
                what: "c finite on [0, 1]",
                at: s.to_f64_lossy(),
            });
        }
        if !(slope > T::zero()) || !(value > prev_value) {
            return Err(ModelError::AssumptionViolated {
                what: "c strictly increasing",
                at: s.to_f64_lossy(),
            });
        }
        if !(slope - prev_slope > tol) {
            return Err(ModelError::AssumptionViolated {
                what: "c strictly convex",
                at: s.to_f64_lossy(),
            });
        }
        prev_slope = slope;
        prev_value = value;
    }
    if cost.derivative(T::zero()) > T::zero() {
        Ok(Vec::new())
    } else {
        Ok(vec![ModelWarning::FlatCostAtZero])
    }
}

/// `c(x)` for `x` in `[0, 1]`.
pub fn eval_cost<T: Real>(model: &ModelSpec<T>, x: T) -> Result<T, DomainError> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(DomainError {
            what: "stage",
            value: x.to_f64_lossy(),
            domain: "[0, 1]",
        });
    }
    Ok(model.cost(x))
}

/// `g(k)` for `k >= 1`.
pub fn eval_g<T: Real>(model: &ModelSpec<T>, k: usize) -> Result<T, DomainError> {
    if k < 1 {
        return Err(DomainError {
            what: "partner count",
            value: k as f64,
            domain: "k >= 1",
        });
    }
    Ok(model.partner_cost(k))
}

/// A family name plus its named real parameters, e.g.
/// `{"family": "exp_affine", "a": 10.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyConfig {
    pub family: String,
    #[serde(flatten)]
    pub params: BTreeMap<String, f64>,
}

impl FamilyConfig {
    pub fn new(family: &str, params: &[(&str, f64)]) -> Self {
        Self {
            family: family.to_owned(),
            params: params.iter().map(|(k, v)| ((*k).to_owned(), *v)).collect(),
        }
    }

    fn param(&self, name: &'static str) -> Result<f64, ModelError> {
        self.params
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::MissingParameter {
                family: self.family.clone(),
                name,
            })
    }
}

/// Declarative model description as it appears in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cost: FamilyConfig,
    pub delta: f64,
    pub g: FamilyConfig,
}

impl ModelConfig {
    pub fn with_delta(&self, delta: f64) -> Self {
        Self {
            delta,
            ..self.clone()
        }
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        let mut out = self.clone();
        out.g.params.insert("beta".to_owned(), beta);
        out
    }
}

impl<T: Real> From<&ModelSpec<T>> for ModelConfig {
    fn from(model: &ModelSpec<T>) -> Self {
        let cost = match model.cost {
            CostSpec::ExpAffine { a } => FamilyConfig::new("exp_affine", &[("a", a.to_f64_lossy())]),
            CostSpec::Power { theta } => {
                FamilyConfig::new("power", &[("theta", theta.to_f64_lossy())])
            }
            other => FamilyConfig::new(other.name(), &[]),
        };
        let g = match model.transaction.additive {
            AdditiveCost::Linear { beta } => FamilyConfig::new("linear", &[("beta", beta.to_f64_lossy())]),
            AdditiveCost::Power { beta, gamma } => FamilyConfig::new(
                "power",
                &[("beta", beta.to_f64_lossy()), ("gamma", gamma.to_f64_lossy())],
            ),
        };
        ModelConfig {
            cost,
            delta: model.delta().to_f64_lossy(),
            g,
        }
    }
}

/// Builds and validates a model from its declarative description.
pub fn make_model<T: Real>(config: &ModelConfig) -> Result<ModelSpec<T>, ModelError> {
    let cost = match config.cost.family.as_str() {
        "exp_affine" => CostSpec::ExpAffine {
            a: T::lit(config.cost.param("a")?),
        },
        "power" => CostSpec::Power {
            theta: T::lit(config.cost.param("theta")?),
        },
        "poly_affine" => CostSpec::PolyAffine,
        "exp_plus_square" => CostSpec::ExpPlusSquare,
        "exp_square" => CostSpec::ExpSquare,
        other => {
            return Err(ModelError::UnknownFamily {
                kind: "cost",
                name: other.to_owned(),
            })
        }
    };
    let additive = match config.g.family.as_str() {
        "linear" => AdditiveCost::Linear {
            beta: T::lit(config.g.param("beta")?),
        },
        "power" => AdditiveCost::Power {
            beta: T::lit(config.g.param("beta")?),
            gamma: T::lit(config.g.param("gamma")?),
        },
        other => {
            return Err(ModelError::UnknownFamily {
                kind: "transaction",
                name: other.to_owned(),
            })
        }
    };
    ModelSpec::new(
        cost,
        TransactionSpec {
            delta: T::lit(config.delta),
            additive,
        },
    )
}
