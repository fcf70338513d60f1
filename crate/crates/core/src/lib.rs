//! Equilibrium price functions for production chains in which each firm can
//! split its subcontracted work among several upstream partners.
//!
//! The numerical core ([`model`], [`operator`], [`solver`]) is generic over
//! the floating point type; [`network`] and [`bench`] work in `f64`.

pub mod bench;
pub mod model;
pub mod network;
pub mod operator;
pub mod scalar;
pub mod solver;

pub use model::{
    eval_cost, eval_g, make_model, AdditiveCost, CostSpec, DomainError, FamilyConfig, ModelConfig,
    ModelError, ModelSpec, ModelWarning, TransactionSpec,
};
pub use network::{
    network_stats, sample_partner_count, simulate_network, simulate_network_with, FirmNode,
    NetworkError, NetworkOptions, NetworkStats, ProductionNetwork,
};
pub use operator::{
    apply_operator, apply_stochastic_operator, apply_with, lower_envelope, upper_envelope, Bounds,
    OperatorSettings, PartnerChoice, Policy, PriceFunction, Variant,
};
pub use scalar::Real;
pub use solver::{
    refine_study, residual, solve, solve_iterative, solve_iterative_from, solve_recursive, Method,
    RefinementRow, Solution, SolveError, SolveOptions,
};

pub type ModelSpec64 = ModelSpec<f64>;
pub type PriceFunction64 = PriceFunction<f64>;
pub type Policy64 = Policy<f64>;
pub type Solution64 = Solution<f64>;

pub type ModelSpec32 = ModelSpec<f32>;
pub type PriceFunction32 = PriceFunction<f32>;
