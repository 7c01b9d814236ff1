//! Minimum-cost paths through a layered graph with a source and a sink.
//!
//! Every node of layer `i` connects to every node of layer `i + 1`; the
//! source connects to all of layer 0 and all of the last layer connect to the
//! sink. Edge weights are non-negative.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredGraph {
    sizes: Vec<usize>,
    source: Vec<f64>,
    /// `transitions[i][a * sizes[i + 1] + b]` is the edge from node `a` of
    /// layer `i` to node `b` of layer `i + 1`.
    transitions: Vec<Vec<f64>>,
    sink: Vec<f64>,
}

fn check_costs(costs: &[f64]) -> Result<()> {
    if costs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
        return Err(Error::contract("edge costs must be finite and non-negative"));
    }
    Ok(())
}

impl LayeredGraph {
    pub fn new(source: Vec<f64>, transitions: Vec<Vec<f64>>, sink: Vec<f64>) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::contract("graph has an empty layer"));
        }
        let mut sizes = alloc::vec![source.len()];
        for t in &transitions {
            let prev = *sizes.last().expect("non-empty");
            if t.is_empty() || t.len() % prev != 0 {
                return Err(Error::contract("transition matrix does not match its layers"));
            }
            sizes.push(t.len() / prev);
        }
        if sink.len() != *sizes.last().expect("non-empty") {
            return Err(Error::contract("sink edges do not match the last layer"));
        }
        check_costs(&source)?;
        check_costs(&sink)?;
        for t in &transitions {
            check_costs(t)?;
        }
        Ok(LayeredGraph {
            sizes,
            source,
            transitions,
            sink,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn source_cost(&self, node: usize) -> f64 {
        self.source[node]
    }

    pub fn transition_cost(&self, layer: usize, from: usize, to: usize) -> f64 {
        self.transitions[layer][from * self.sizes[layer + 1] + to]
    }

    pub fn sink_cost(&self, node: usize) -> f64 {
        self.sink[node]
    }

    /// Sum of the edge costs along `nodes` (one node per layer).
    pub fn path_cost(&self, nodes: &[usize]) -> f64 {
        let mut cost = self.source[nodes[0]];
        for (i, pair) in nodes.windows(2).enumerate() {
            cost += self.transition_cost(i, pair[0], pair[1]);
        }
        cost + self.sink[nodes[nodes.len() - 1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphPath {
    /// Chosen node index in each layer.
    pub nodes: Vec<usize>,
    pub cost: f64,
}

fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Cheapest source-to-sink path. Among equal-cost paths the lexicographically
/// smallest node sequence is returned.
pub fn min_cost_path(graph: &LayeredGraph) -> GraphPath {
    let layers = graph.sizes.len();
    // to_go[i][a]: cheapest cost from node a of layer i to the sink.
    let mut to_go: Vec<Vec<f64>> = alloc::vec![Vec::new(); layers];
    to_go[layers - 1] = graph.sink.clone();
    for i in (0..layers - 1).rev() {
        let next = &to_go[i + 1];
        to_go[i] = (0..graph.sizes[i])
            .map(|a| argmin((0..graph.sizes[i + 1]).map(|b| graph.transition_cost(i, a, b) + next[b])).1)
            .collect();
    }
    let (first, cost) = argmin((0..graph.sizes[0]).map(|a| graph.source[a] + to_go[0][a]));
    let mut nodes = alloc::vec![first];
    for i in 0..layers - 1 {
        let a = nodes[i];
        let (b, _) = argmin((0..graph.sizes[i + 1]).map(|b| graph.transition_cost(i, a, b) + to_go[i + 1][b]));
        nodes.push(b);
    }
    GraphPath { nodes, cost }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Lexicographic enumeration of every path; keeps the first strict minimum.
    fn brute_force(g: &LayeredGraph) -> GraphPath {
        let sizes = g.layer_sizes();
        let mut idx = alloc::vec![0; sizes.len()];
        let mut best = GraphPath {
            nodes: idx.clone(),
            cost: f64::INFINITY,
        };
        loop {
            let c = g.path_cost(&idx);
            if c < best.cost {
                best = GraphPath {
                    nodes: idx.clone(),
                    cost: c,
                };
            }
            let mut l = sizes.len();
            loop {
                if l == 0 {
                    return best;
                }
                l -= 1;
                idx[l] += 1;
                if idx[l] < sizes[l] {
                    break;
                }
                idx[l] = 0;
            }
        }
    }

    #[test]
    fn single_layer_picks_cheapest_round_trip() {
        let g = LayeredGraph::new(alloc::vec![2.0, 5.0, 7.0], Vec::new(), alloc::vec![2.0, 5.0, 7.0]).unwrap();
        let p = min_cost_path(&g);
        assert_eq!(p.nodes, [0]);
        assert_eq!(p.cost, 4.0);
    }

    #[test]
    fn equal_costs_give_smallest_sequence() {
        let g = LayeredGraph::new(alloc::vec![1.0; 3], alloc::vec![alloc::vec![1.0; 9]; 2], alloc::vec![1.0; 3]).unwrap();
        assert_eq!(min_cost_path(&g).nodes, [0, 0, 0]);
    }

    #[test]
    fn rejects_malformed_graphs() {
        assert!(LayeredGraph::new(Vec::new(), Vec::new(), Vec::new()).is_err());
        assert!(LayeredGraph::new(alloc::vec![1.0, 2.0], alloc::vec![alloc::vec![1.0; 3]], alloc::vec![1.0]).is_err());
        assert!(LayeredGraph::new(alloc::vec![-1.0], Vec::new(), alloc::vec![1.0]).is_err());
        assert!(LayeredGraph::new(alloc::vec![1.0], Vec::new(), alloc::vec![1.0, 2.0]).is_err());
    }

    fn graphs() -> impl Strategy<Value = LayeredGraph> {
        (prop::collection::vec(1usize..=4, 1..=3), any::<u64>()).prop_map(|(sizes, seed)| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // Small integer costs make ties common.
            let mut cost = |n: usize| (0..n).map(|_| rng.random_range(0..4) as f64).collect::<Vec<_>>();
            let source = cost(sizes[0]);
            let transitions = sizes.windows(2).map(|w| cost(w[0] * w[1])).collect();
            let sink = cost(sizes[sizes.len() - 1]);
            LayeredGraph::new(source, transitions, sink).unwrap()
        })
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(g in graphs()) {
            let p = min_cost_path(&g);
            let oracle = brute_force(&g);
            prop_assert_eq!(&p.nodes, &oracle.nodes);
            prop_assert_eq!(p.cost, oracle.cost);
            prop_assert_eq!(g.path_cost(&p.nodes), p.cost);
        }
    }
}
