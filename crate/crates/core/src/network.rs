//! Random production networks drawn from a stochastic equilibrium.
//!
//! Starting with the most downstream firm at `s = 1`, each firm keeps
//! `s - t*` in house, draws its number of partners from the shifted Poisson
//! law with its chosen effort, and every partner becomes a firm at stage
//! `t* / k`. Firms re-solve their own problem at their exact stage against
//! the equilibrium price function.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelConfig, ModelSpec};
use crate::operator::{
    OperatorSettings, PartnerChoice, PmfRow, StageDecision, StageOptimizer, Variant,
};
use crate::solver::Solution;

pub const NETWORK_SCHEMA: &str = "chainsolve.network/v1";
pub const GENERATOR_ID: &str = "chacha8-rand_chacha-0.9;stream=splitmix64(path)";
pub const DEFAULT_MAX_DEPTH: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("networks need a stochastic solution, got a {0:?} one")]
    NotStochastic(Variant),
    #[error("firm tree deeper than {0} layers")]
    DepthExceeded(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmNode {
    pub stage: f64,
    pub in_house: f64,
    pub t_subcontracted: f64,
    pub lambda: f64,
    pub realized_k: usize,
    /// `c(s - t*) + g(k)`, or `c(s)` for a firm that subcontracts nothing.
    pub value_added: f64,
    /// Zero-profit price of this firm's output.
    pub price: f64,
    pub children: Vec<FirmNode>,
}

impl FirmNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Preorder traversal with depths, root at depth 0.
    pub fn walk(&self, mut visit: impl FnMut(&FirmNode, usize)) {
        let mut stack = vec![(self, 0)];
        while let Some((node, depth)) = stack.pop() {
            visit(node, depth);
            stack.extend(node.children.iter().rev().map(|c| (c, depth + 1)));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueAddedSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// All firm sizes, largest first.
    pub sorted: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    /// Longest root-to-leaf path, in edges.
    pub depth: usize,
    pub n_firms: usize,
    /// Firms per layer, root layer first.
    pub per_layer_counts: Vec<usize>,
    pub value_added: ValueAddedSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionNetwork {
    pub schema: String,
    pub seed: u64,
    pub generator: String,
    pub grid_size: usize,
    pub model: ModelConfig,
    pub stats: NetworkStats,
    pub root: FirmNode,
}

impl ProductionNetwork {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Graphviz digraph. Each node carries its value added both as a `size`
    /// attribute and in a comment.
    pub fn to_dot(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "// schema={NETWORK_SCHEMA}.dot seed={} generator={}", self.seed, self.generator);
        let _ = writeln!(out, "digraph network {{");
        let mut next_id = 0usize;
        let mut stack = vec![(&self.root, None::<usize>)];
        while let Some((node, parent)) = stack.pop() {
            let id = next_id;
            next_id += 1;
            let _ = writeln!(
                out,
                "  n{id} [size={:.16e}, stage={:.16e}, k={}, comment=\"value_added={:.16e}\"]; // value_added={:.16e}",
                node.value_added, node.stage, node.realized_k, node.value_added, node.value_added
            );
            if let Some(p) = parent {
                let _ = writeln!(out, "  n{p} -> n{id};");
            }
            stack.extend(node.children.iter().rev().map(|c| (c, Some(id))));
        }
        out.push_str("}\n");
        out
    }
}

/// Draws `k >= 1` with probability `f(k; lambda)` by inverting the
/// cumulative distribution.
pub fn sample_partner_count<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    if !(lambda > 0.0) {
        return 1;
    }
    let row = PmfRow::new(lambda);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (offset, p) in row.probs().iter().enumerate() {
        acc += p;
        if u < acc {
            return row.first_k() + offset;
        }
    }
    row.last_k()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkOptions {
    pub max_depth: usize,
    /// Simulate sibling subtrees on the rayon pool. Trees are identical
    /// either way.
    pub parallel: bool,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
            parallel: false,
        }
    }
}

pub fn simulate_network(
    model: &ModelSpec<f64>,
    solution: &Solution<f64>,
    seed: u64,
    max_depth: usize,
) -> Result<ProductionNetwork, NetworkError> {
    simulate_network_with(
        model,
        solution,
        seed,
        &NetworkOptions {
            max_depth,
            ..NetworkOptions::default()
        },
    )
}

pub fn simulate_network_with(
    model: &ModelSpec<f64>,
    solution: &Solution<f64>,
    seed: u64,
    options: &NetworkOptions,
) -> Result<ProductionNetwork, NetworkError> {
    let variant = solution.variant();
    if variant != Variant::Stochastic {
        return Err(NetworkError::NotStochastic(variant));
    }
    let optimizer = StageOptimizer::new(
        model,
        &solution.price,
        variant,
        &OperatorSettings::for_model(model),
    );
    let sim = Simulator {
        model,
        optimizer: &optimizer,
        seed,
        options,
    };
    let root = sim.firm(1.0, &mut Vec::new())?;
    let stats = network_stats(&root);
    Ok(ProductionNetwork {
        schema: NETWORK_SCHEMA.to_owned(),
        seed,
        generator: GENERATOR_ID.to_owned(),
        grid_size: solution.grid_size(),
        model: ModelConfig::from(model),
        stats,
        root,
    })
}

struct Simulator<'a> {
    model: &'a ModelSpec<f64>,
    optimizer: &'a StageOptimizer<'a, f64>,
    seed: u64,
    options: &'a NetworkOptions,
}

impl Simulator<'_> {
    fn firm(&self, stage: f64, path: &mut Vec<u64>) -> Result<FirmNode, NetworkError> {
        if path.len() > self.options.max_depth {
            return Err(NetworkError::DepthExceeded(self.options.max_depth));
        }
        let StageDecision {
            price,
            t_index,
            t,
            choice,
        } = self.optimizer.decide(stage);
        let lambda = match choice {
            PartnerChoice::Effort(l) => l,
            PartnerChoice::Count(_) => unreachable!("stochastic optimizer"),
        };
        if t_index == 0 {
            return Ok(FirmNode {
                stage,
                in_house: stage,
                t_subcontracted: 0.0,
                lambda,
                realized_k: 1,
                value_added: self.model.cost(stage),
                price,
                children: Vec::new(),
            });
        }
        let k = sample_partner_count(lambda, &mut self.rng(path));
        let child_stage = t / k as f64;
        let children = if self.options.parallel {
            (0..k)
                .into_par_iter()
                .map(|c| {
                    let mut p = path.clone();
                    p.push(c as u64);
                    self.firm(child_stage, &mut p)
                })
                .collect::<Result<Vec<_>, _>>()?
        } else {
            let mut out = Vec::with_capacity(k);
            for c in 0..k {
                path.push(c as u64);
                let child = self.firm(child_stage, path);
                path.pop();
                out.push(child?);
            }
            out
        };
        Ok(FirmNode {
            stage,
            in_house: stage - t,
            t_subcontracted: t,
            lambda,
            realized_k: k,
            value_added: self.model.cost(stage - t) + self.model.partner_cost(k),
            price,
            children,
        })
    }

    /// One independent stream per position in the tree.
    fn rng(&self, path: &[u64]) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let stream = path
            .iter()
            .fold(splitmix64(path.len() as u64), |h, &c| splitmix64(h ^ c));
        rng.set_stream(stream);
        rng
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn network_stats(root: &FirmNode) -> NetworkStats {
    let mut per_layer_counts: Vec<usize> = Vec::new();
    let mut sizes = Vec::new();
    root.walk(|node, depth| {
        if per_layer_counts.len() <= depth {
            per_layer_counts.resize(depth + 1, 0);
        }
        per_layer_counts[depth] += 1;
        sizes.push(node.value_added);
    });
    sizes.sort_by(|a, b| b.total_cmp(a));
    let n_firms = sizes.len();
    NetworkStats {
        depth: per_layer_counts.len() - 1,
        n_firms,
        per_layer_counts,
        value_added: ValueAddedSummary {
            min: sizes.last().copied().unwrap_or(0.0),
            max: sizes.first().copied().unwrap_or(0.0),
            mean: sizes.iter().sum::<f64>() / n_firms as f64,
            sorted: sizes,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostSpec, TransactionSpec};
    use crate::operator::{expected_upstream_cost, poisson_pmf};
    use crate::solver::{solve_recursive, SolveOptions};

    fn figure_4(delta: f64, beta: f64) -> ModelSpec<f64> {
        ModelSpec::new(CostSpec::Power { theta: 1.2 }, TransactionSpec::power(delta, beta, 1.5))
            .unwrap()
    }

    fn stochastic(model: &ModelSpec<f64>, m: usize) -> Solution<f64> {
        solve_recursive(model, m, Variant::Stochastic, &SolveOptions::default()).unwrap()
    }

    #[test]
    fn sampling_matches_pmf() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            let k = sample_partner_count(2.5, &mut rng);
            if k <= 5 {
                counts[k] += 1;
            }
        }
        for k in 1..=5 {
            let freq = counts[k] as f64 / n as f64;
            let exact = poisson_pmf(k, 2.5).unwrap();
            assert!((freq - exact).abs() <= 0.01, "k={k}: {freq} vs {exact}");
        }
        assert_eq!(sample_partner_count(0.0, &mut rng), 1);
    }

    #[test]
    fn sampling_is_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..200).map(|_| sample_partner_count(4.0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn large_effort_does_not_underflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mean = (0..2000).map(|_| sample_partner_count(800.0, &mut rng) as f64).sum::<f64>() / 2000.0;
        assert!((mean - 801.0).abs() < 5.0, "{mean}");
    }

    #[test]
    fn huge_proportional_cost_gives_single_firm() {
        let model = ModelSpec::new(CostSpec::ExpAffine { a: 1.0 }, TransactionSpec::linear(1e6, 0.01)).unwrap();
        let sol = stochastic(&model, 50);
        let net = simulate_network(&model, &sol, 1, DEFAULT_MAX_DEPTH).unwrap();
        assert!(net.root.is_leaf());
        assert_eq!(net.root.value_added, model.cost(1.0));
        assert_eq!(net.stats.depth, 0);
        assert_eq!(net.stats.n_firms, 1);
        assert_eq!(net.to_dot().matches("->").count(), 0);
    }

    #[test]
    fn tree_invariants_and_accounting() {
        let model = figure_4(1.05, 0.0005);
        let sol = stochastic(&model, 200);
        for seed in 1..=5 {
            let net = simulate_network(&model, &sol, seed, DEFAULT_MAX_DEPTH).unwrap();
            assert_eq!(net.root.stage, 1.0);
            assert!(net.stats.depth >= 1);
            assert_eq!(net.stats.per_layer_counts.iter().sum::<usize>(), net.stats.n_firms);
            net.root.walk(|node, _| {
                if node.is_leaf() {
                    assert_eq!(node.t_subcontracted, 0.0);
                    assert_eq!(node.value_added, model.cost(node.stage));
                } else {
                    assert_eq!(node.children.len(), node.realized_k);
                    let expected = model.cost(node.stage - node.t_subcontracted)
                        + model.partner_cost(node.realized_k);
                    assert_eq!(node.value_added, expected);
                    let identity = model.cost(node.in_house)
                        + expected_upstream_cost(&model, &sol.price, node.t_subcontracted, node.lambda);
                    assert!((identity - node.price).abs() <= 1e-8);
                }
                for child in &node.children {
                    assert!(child.stage < node.stage);
                    assert_eq!(child.stage, node.t_subcontracted / node.realized_k as f64);
                }
            });
        }
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let model = figure_4(1.05, 0.0005);
        let sol = stochastic(&model, 200);
        let a = simulate_network(&model, &sol, 11, DEFAULT_MAX_DEPTH).unwrap();
        let b = simulate_network(&model, &sol, 11, DEFAULT_MAX_DEPTH).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_dot(), b.to_dot());
        let par = simulate_network_with(
            &model,
            &sol,
            11,
            &NetworkOptions {
                parallel: true,
                ..NetworkOptions::default()
            },
        )
        .unwrap();
        assert_eq!(a.to_json(), par.to_json());
        let differ = (12..20).any(|s| simulate_network(&model, &sol, s, DEFAULT_MAX_DEPTH).unwrap() != a);
        assert!(differ);
        assert_eq!(ProductionNetwork::from_json(&a.to_json()).unwrap(), a);
    }

    #[test]
    fn depth_limit_is_reported() {
        let model = figure_4(1.05, 0.0005);
        let sol = stochastic(&model, 100);
        let net = simulate_network(&model, &sol, 2, DEFAULT_MAX_DEPTH).unwrap();
        assert!(net.stats.depth >= 1);
        assert_eq!(
            simulate_network(&model, &sol, 2, 0),
            Err(NetworkError::DepthExceeded(0))
        );
    }

    #[test]
    fn rejects_deterministic_solutions() {
        let model = figure_4(1.05, 0.0005);
        let sol = solve_recursive(&model, 20, Variant::Deterministic, &SolveOptions::default()).unwrap();
        assert_eq!(
            simulate_network(&model, &sol, 1, 10),
            Err(NetworkError::NotStochastic(Variant::Deterministic))
        );
    }
}
