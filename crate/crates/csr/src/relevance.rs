//! Frequency-based variable relevance.
//!
//! The relative reference frequency of a variable in a population is its
//! share of all variable references across the population's trees. The
//! relevance of a variable for one run is the mean of these per-generation
//! frequencies over all generations the run executed. Cross-run aggregation
//! averages the per-run vectors for one target.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expression::ExpressionTree;

#[derive(Debug, Error)]
pub enum RelevanceError {
    #[error("cannot average an empty list of relevance vectors")]
    EmptyGenerationList,
    #[error("cannot aggregate an empty list of run results")]
    EmptyRunList,
    #[error("mixed targets in aggregation: `{0}` vs `{1}`")]
    MixedTargets(String, String),
}

/// Non-negative weights per base variable; sums to 1 unless it is the
/// all-zero "no references" vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelevanceVector {
    pub entries: BTreeMap<String, f64>,
}

impl RelevanceVector {
    pub fn get(&self, variable: &str) -> f64 {
        self.entries.get(variable).copied().unwrap_or(0.0)
    }

    pub fn sum(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|&v| v == 0.0)
    }

    /// Variables ordered by descending weight, ties by name.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut items: Vec<(&str, f64)> = self
            .entries
            .iter()
            .map(|(k, v)| (k.as_str(), *v))
            .collect();
        items.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));
        items
    }
}

/// Relative reference frequencies of the `universe` variables over a
/// population of trees. `names` maps variable indices to identifiers for the
/// whole design matrix; `universe` lists the allowed input variable indices.
/// A population without any variable reference yields the all-zero vector.
pub fn population_frequency(
    trees: &[ExpressionTree],
    names: &[String],
    universe: &[usize],
) -> RelevanceVector {
    let mut counts = vec![0usize; names.len()];
    for tree in trees {
        for (var, c) in tree.ref_counts(names.len()).into_iter().enumerate() {
            counts[var] += c;
        }
    }
    let total: usize = universe.iter().map(|&v| counts[v]).sum();
    let entries = universe
        .iter()
        .map(|&v| {
            let freq = if total == 0 {
                0.0
            } else {
                counts[v] as f64 / total as f64
            };
            (names[v].clone(), freq)
        })
        .collect();
    RelevanceVector { entries }
}

/// Elementwise mean of the per-generation frequency vectors of one run.
/// All-zero generations participate as zeros; the mean is unweighted.
pub fn run_relevance(per_generation: &[RelevanceVector]) -> Result<RelevanceVector, RelevanceError> {
    if per_generation.is_empty() {
        return Err(RelevanceError::EmptyGenerationList);
    }
    let mut sums: BTreeMap<String, f64> = BTreeMap::new();
    for vec in per_generation {
        for (name, value) in &vec.entries {
            *sums.entry(name.clone()).or_insert(0.0) += value;
        }
    }
    let g = per_generation.len() as f64;
    let entries = sums.into_iter().map(|(k, v)| (k, v / g)).collect();
    Ok(RelevanceVector { entries })
}

/// Per-target aggregation of run-level relevance vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedRelevance {
    pub target: String,
    pub per_run: Vec<RelevanceVector>,
    pub mean: RelevanceVector,
}

/// Averages run relevance vectors for one target; the per-run vectors are
/// retained for dispersion reporting.
pub fn aggregate_runs(
    runs: &[(String, RelevanceVector)],
) -> Result<AggregatedRelevance, RelevanceError> {
    let (first_target, _) = runs.first().ok_or(RelevanceError::EmptyRunList)?;
    for (target, _) in runs {
        if target != first_target {
            return Err(RelevanceError::MixedTargets(
                first_target.clone(),
                target.clone(),
            ));
        }
    }
    let per_run: Vec<RelevanceVector> = runs.iter().map(|(_, v)| v.clone()).collect();
    let mean = run_relevance(&per_run).expect("non-empty by construction");
    Ok(AggregatedRelevance {
        target: first_target.clone(),
        per_run,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expression::{ExpressionTree, FunctionSymbol, Node};

    fn names() -> Vec<String> {
        vec!["x".into(), "y".into(), "z".into()]
    }

    fn var(v: usize) -> Node {
        Node::Var { var: v, lag: 0 }
    }

    #[test]
    fn population_frequency_example() {
        // {add(x, y), mul(x, x)} -> x: 3/4, y: 1/4
        let pop = vec![
            ExpressionTree::new(Node::Fun(FunctionSymbol::Add, vec![var(0), var(1)])),
            ExpressionTree::new(Node::Fun(FunctionSymbol::Mul, vec![var(0), var(0)])),
        ];
        let freq = population_frequency(&pop, &names(), &[0, 1, 2]);
        assert_eq!(freq.get("x"), 0.75);
        assert_eq!(freq.get("y"), 0.25);
        assert_eq!(freq.get("z"), 0.0);
        assert!((freq.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constants_only_population_is_all_zero() {
        let pop = vec![
            ExpressionTree::new(Node::Const(1.0)),
            ExpressionTree::new(Node::Const(2.0)),
        ];
        let freq = population_frequency(&pop, &names(), &[0, 1, 2]);
        assert!(freq.is_zero());
    }

    #[test]
    fn single_variable_population() {
        let pop = vec![ExpressionTree::new(var(0))];
        let freq = population_frequency(&pop, &names(), &[0, 1, 2]);
        assert_eq!(freq.get("x"), 1.0);
    }

    #[test]
    fn population_frequency_is_order_invariant() {
        let a = ExpressionTree::new(Node::Fun(FunctionSymbol::Add, vec![var(0), var(1)]));
        let b = ExpressionTree::new(Node::Fun(FunctionSymbol::Mul, vec![var(2), var(2)]));
        let fwd = population_frequency(&[a.clone(), b.clone()], &names(), &[0, 1, 2]);
        let rev = population_frequency(&[b, a], &names(), &[0, 1, 2]);
        assert_eq!(fwd, rev);
    }

    fn vec_of(pairs: &[(&str, f64)]) -> RelevanceVector {
        RelevanceVector {
            entries: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn run_relevance_examples() {
        let mean = run_relevance(&[vec_of(&[("x", 0.5)]), vec_of(&[("x", 0.7)])]).unwrap();
        assert!((mean.get("x") - 0.6).abs() < 1e-15);

        let same = vec_of(&[("x", 0.25), ("y", 0.75)]);
        let idem = run_relevance(&[same.clone(), same.clone(), same.clone()]).unwrap();
        assert_eq!(idem, same);

        let three = run_relevance(&[
            vec_of(&[("x", 1.0)]),
            vec_of(&[("x", 0.0)]),
            vec_of(&[("x", 0.5)]),
        ])
        .unwrap();
        assert!((three.get("x") - 0.5).abs() < 1e-15);

        assert!(matches!(
            run_relevance(&[]),
            Err(RelevanceError::EmptyGenerationList)
        ));
    }

    #[test]
    fn run_relevance_is_generation_order_invariant() {
        let a = vec_of(&[("x", 0.2), ("y", 0.8)]);
        let b = vec_of(&[("x", 0.9), ("y", 0.1)]);
        let c = vec_of(&[("x", 0.5), ("y", 0.5)]);
        let fwd = run_relevance(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let rev = run_relevance(&[c, a, b]).unwrap();
        for key in ["x", "y"] {
            assert!((fwd.get(key) - rev.get(key)).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_of_probability_vectors_is_probability_vector() {
        let vecs = vec![
            vec_of(&[("x", 0.3), ("y", 0.7)]),
            vec_of(&[("x", 1.0), ("y", 0.0)]),
            vec_of(&[("x", 0.0), ("y", 1.0)]),
        ];
        let mean = run_relevance(&vecs).unwrap();
        assert!(mean.entries.values().all(|&v| v >= 0.0));
        assert!((mean.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn aggregate_runs_examples() {
        let single = aggregate_runs(&[("t".into(), vec_of(&[("x", 0.4), ("y", 0.6)]))]).unwrap();
        assert_eq!(single.mean, vec_of(&[("x", 0.4), ("y", 0.6)]));

        let two = aggregate_runs(&[
            ("t".into(), vec_of(&[("x", 0.2)])),
            ("t".into(), vec_of(&[("x", 0.4)])),
        ])
        .unwrap();
        assert!((two.mean.get("x") - 0.3).abs() < 1e-15);
        assert_eq!(two.per_run.len(), 2);

        assert!(matches!(
            aggregate_runs(&[
                ("t".into(), vec_of(&[("x", 0.2)])),
                ("u".into(), vec_of(&[("x", 0.4)])),
            ]),
            Err(RelevanceError::MixedTargets(..))
        ));
        assert!(matches!(
            aggregate_runs(&[]),
            Err(RelevanceError::EmptyRunList)
        ));
    }

    #[test]
    fn aggregation_respects_concatenation_weights() {
        // mean over a+b equals weighted mean of the two partial means
        let part_a = vec![("t".to_string(), vec_of(&[("x", 0.1)])); 3];
        let part_b = vec![("t".to_string(), vec_of(&[("x", 0.7)])); 1];
        let all: Vec<_> = part_a.iter().cloned().chain(part_b.iter().cloned()).collect();
        let mean_all = aggregate_runs(&all).unwrap().mean.get("x");
        let mean_a = aggregate_runs(&part_a).unwrap().mean.get("x");
        let mean_b = aggregate_runs(&part_b).unwrap().mean.get("x");
        let weighted = (3.0 * mean_a + 1.0 * mean_b) / 4.0;
        assert!((mean_all - weighted).abs() < 1e-12);
    }
}
