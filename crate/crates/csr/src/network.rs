//! Variable interaction networks.
//!
//! For each target variable the top-k inputs by mean relevance become
//! incoming edges. Zero-relevance variables never produce edges, so a target
//! can end up with fewer than k. Output formats: DOT (GraphViz digraph) and
//! an edge-list CSV; both are byte-deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relevance::AggregatedRelevance;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("duplicate target `{0}` in aggregates")]
    DuplicateTarget(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub target: String,
    pub weight: f64,
}

/// Directed weighted graph: edge `a -> b` when `a` is among `b`'s top-k
/// mean-relevance inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionNetwork {
    pub nodes: Vec<String>,
    pub edges: Vec<Edge>,
    pub k: usize,
}

/// Selects, per target, the `k` largest mean-relevance inputs (ties by larger
/// weight, then lexicographic name).
pub fn build_network(
    aggregates: &[AggregatedRelevance],
    k: usize,
) -> Result<InteractionNetwork, NetworkError> {
    if k < 1 {
        return Err(NetworkError::InvalidK);
    }
    let mut nodes: Vec<String> = Vec::new();
    let push_node = |nodes: &mut Vec<String>, name: &str| {
        if !nodes.iter().any(|n| n == name) {
            nodes.push(name.to_string());
        }
    };
    let mut seen_targets: Vec<&str> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    for agg in aggregates {
        if seen_targets.contains(&agg.target.as_str()) {
            return Err(NetworkError::DuplicateTarget(agg.target.clone()));
        }
        seen_targets.push(&agg.target);
        push_node(&mut nodes, &agg.target);
        for (name, _) in agg.mean.ranked() {
            push_node(&mut nodes, name);
        }
        for (name, weight) in agg
            .mean
            .ranked()
            .into_iter()
            .filter(|(name, weight)| *weight > 0.0 && *name != agg.target)
            .take(k)
        {
            edges.push(Edge {
                source: name.to_string(),
                target: agg.target.clone(),
                weight,
            });
        }
    }
    nodes.sort();
    edges.sort_by(|a, b| (&a.source, &a.target).cmp(&(&b.source, &b.target)));
    Ok(InteractionNetwork { nodes, edges, k })
}

impl InteractionNetwork {
    /// DOT digraph with quoted identifiers; nodes and edges in sorted order.
    /// Weights become edge labels with three decimal places when enabled.
    pub fn to_dot(&self, label_weights: bool) -> String {
        let mut out = String::from("digraph G {\n");
        for node in &self.nodes {
            out.push_str(&format!("  \"{}\";\n", escape(node)));
        }
        for edge in &self.edges {
            if label_weights {
                out.push_str(&format!(
                    "  \"{}\" -> \"{}\" [label=\"{:.3}\"];\n",
                    escape(&edge.source),
                    escape(&edge.target),
                    edge.weight
                ));
            } else {
                out.push_str(&format!(
                    "  \"{}\" -> \"{}\";\n",
                    escape(&edge.source),
                    escape(&edge.target)
                ));
            }
        }
        out.push_str("}\n");
        out
    }

    /// Secondary export: `source,target,weight` lines in sorted order.
    pub fn to_edge_csv(&self) -> String {
        let mut out = String::from("source,target,weight\n");
        for edge in &self.edges {
            out.push_str(&format!("{},{},{:?}\n", edge.source, edge.target, edge.weight));
        }
        out
    }
}

fn escape(name: &str) -> String {
    name.replace('\\', "\\\\").replace('"', "\\\"")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relevance::{aggregate_runs, RelevanceVector};

    fn agg(target: &str, weights: &[(&str, f64)]) -> AggregatedRelevance {
        let vec = RelevanceVector {
            entries: weights.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        };
        aggregate_runs(&[(target.to_string(), vec)]).unwrap()
    }

    #[test]
    fn top_three_selection() {
        let net = build_network(
            &[agg("b", &[("x", 0.5), ("y", 0.3), ("z", 0.15), ("w", 0.05)])],
            3,
        )
        .unwrap();
        let pairs: Vec<(&str, &str)> = net
            .edges
            .iter()
            .map(|e| (e.source.as_str(), e.target.as_str()))
            .collect();
        assert_eq!(pairs, vec![("x", "b"), ("y", "b"), ("z", "b")]);
    }

    #[test]
    fn k_one_single_nonzero() {
        let net = build_network(&[agg("b", &[("x", 0.9), ("y", 0.0)])], 1).unwrap();
        assert_eq!(net.edges.len(), 1);
        assert_eq!(net.edges[0].source, "x");
    }

    #[test]
    fn zero_weight_inputs_never_produce_edges() {
        let net = build_network(&[agg("b", &[("x", 1.0), ("y", 0.0), ("z", 0.0)])], 3).unwrap();
        assert_eq!(net.edges.len(), 1);
    }

    #[test]
    fn double_linked_pair() {
        let net = build_network(
            &[
                agg("a", &[("b", 0.8), ("c", 0.2)]),
                agg("b", &[("a", 0.7), ("c", 0.3)]),
            ],
            1,
        )
        .unwrap();
        let pairs: Vec<(&str, &str)> = net
            .edges
            .iter()
            .map(|e| (e.source.as_str(), e.target.as_str()))
            .collect();
        assert_eq!(pairs, vec![("a", "b"), ("b", "a")]);
    }

    #[test]
    fn duplicate_targets_rejected() {
        let a = agg("t", &[("x", 1.0)]);
        assert!(matches!(
            build_network(&[a.clone(), a], 3),
            Err(NetworkError::DuplicateTarget(t)) if t == "t"
        ));
    }

    #[test]
    fn invalid_k_rejected() {
        assert!(matches!(build_network(&[], 0), Err(NetworkError::InvalidK)));
    }

    #[test]
    fn empty_network_dot_is_header_and_footer() {
        let net = build_network(&[], 3).unwrap();
        assert_eq!(net.to_dot(true), "digraph G {\n}\n");
    }

    #[test]
    fn single_edge_dot_line() {
        let net = build_network(&[agg("y", &[("x", 0.5)])], 1).unwrap();
        let dot = net.to_dot(true);
        assert!(dot.contains("\"x\" -> \"y\" [label=\"0.500\"];"), "{dot}");
        let plain = net.to_dot(false);
        assert!(plain.contains("\"x\" -> \"y\";"));
    }

    #[test]
    fn in_degree_never_exceeds_k() {
        let aggregates: Vec<AggregatedRelevance> = (0..6)
            .map(|i| {
                let weights: Vec<(String, f64)> = (0..6)
                    .filter(|&j| j != i)
                    .map(|j| (format!("v{j}"), (j + 1) as f64 / 10.0))
                    .collect();
                let refs: Vec<(&str, f64)> =
                    weights.iter().map(|(n, w)| (n.as_str(), *w)).collect();
                agg(&format!("v{i}"), &refs)
            })
            .collect();
        let net = build_network(&aggregates, 3).unwrap();
        for node in &net.nodes {
            let indeg = net.edges.iter().filter(|e| &e.target == node).count();
            assert!(indeg <= 3);
        }
    }

    #[test]
    fn edge_set_invariant_under_common_scaling() {
        let base = [("x", 0.5), ("y", 0.3), ("z", 0.15), ("w", 0.05)];
        let scaled: Vec<(&str, f64)> = base.iter().map(|(n, w)| (*n, w * 4.2)).collect();
        let net_a = build_network(&[agg("b", &base)], 2).unwrap();
        let net_b = build_network(&[agg("b", &scaled)], 2).unwrap();
        let pairs = |n: &InteractionNetwork| {
            n.edges
                .iter()
                .map(|e| (e.source.clone(), e.target.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(pairs(&net_a), pairs(&net_b));
    }

    #[test]
    fn edge_csv_lists_sorted_edges() {
        let net = build_network(&[agg("b", &[("x", 0.75), ("y", 0.25)])], 2).unwrap();
        let csv = net.to_edge_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "source,target,weight");
        assert_eq!(lines[1], "x,b,0.75");
        assert_eq!(lines[2], "y,b,0.25");
    }
}
