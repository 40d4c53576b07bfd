//! A single genetic-programming run.
//!
//! The run follows a generational scheme with 1-elitism: the best-on-train
//! individual is copied unchanged, every other slot is filled by subtree
//! crossover of two tournament winners followed by independent one-point and
//! subtree-replacement mutation rolls. Offspring deeper than the dynamic
//! depth limit are rejected unless they strictly improve the best training
//! fitness seen so far, in which case the limit rises to their depth.
//!
//! Fitness is the squared correlation (R²) of model output and target on the
//! fitness partition; the validation partition is scored the same way but
//! used only for overfitting detection and final model selection. After each
//! generation the Spearman rank correlation of the population's training and
//! validation fitness is computed; the run stops when it falls below the
//! configured threshold. The final model is the best-on-validation individual
//! of the whole run, linearly scaled to the target on the fitness partition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{LaggedDesignMatrix, Partition};
use crate::expression::{ExpressionTree, FunctionSymbol, Node};
use crate::relevance::{population_frequency, run_relevance, RelevanceError, RelevanceVector};
use crate::stats::{linear_scale, r_squared, spearman_rho};

#[derive(Debug, Error)]
pub enum EvolutionError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown target variable `{0}`")]
    UnknownTarget(String),
    #[error("target `{0}` is constant on the fitness range; fitness is undefined")]
    ConstantTarget(String),
    #[error("{range} range has only {usable} usable rows, need at least 2")]
    InsufficientRows { range: &'static str, usable: usize },
    #[error("config max_lag {config} exceeds the matrix max_lag {matrix}")]
    LagMismatch { config: usize, matrix: usize },
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
}

/// Run parameters. Defaults follow the reference configuration: population
/// 2000, 150 generations, tournament size 7, 7% one-point and 7% subtree
/// mutation, initial depth limit 7, Spearman stop threshold 0.2, lags up to
/// 12.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub tournament_size: usize,
    pub one_point_mutation_rate: f64,
    pub subtree_mutation_rate: f64,
    pub initial_depth_limit: usize,
    pub spearman_stop_threshold: f64,
    pub constant_range: (f64, f64),
    pub max_lag: usize,
    pub rng_seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 2000,
            max_generations: 150,
            tournament_size: 7,
            one_point_mutation_rate: 0.07,
            subtree_mutation_rate: 0.07,
            initial_depth_limit: 7,
            spearman_stop_threshold: 0.2,
            constant_range: (-20.0, 20.0),
            max_lag: 12,
            rng_seed: 0,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let fail = |m: &str| Err(EvolutionError::InvalidConfig(m.to_string()));
        if self.population_size < 2 {
            return fail("population_size must be at least 2");
        }
        if self.tournament_size < 1 {
            return fail("tournament_size must be at least 1");
        }
        let rates = [self.one_point_mutation_rate, self.subtree_mutation_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return fail("mutation rates must lie in [0, 1]");
        }
        if rates.iter().sum::<f64>() > 1.0 {
            return fail("mutation rates must sum to at most 1");
        }
        if self.initial_depth_limit < 2 {
            return fail("initial_depth_limit must be at least 2");
        }
        if self.constant_range.0 > self.constant_range.1 {
            return fail("constant_range must be a non-empty interval");
        }
        Ok(())
    }
}

/// The terminal pool of one run: constants plus (variable, lag) references
/// over the allowed input variables.
#[derive(Debug, Clone)]
pub struct TerminalSet {
    variables: Vec<usize>,
    max_lag: usize,
    constant_range: (f64, f64),
}

// share of terminal draws that produce a constant rather than a variable
const CONSTANT_TERMINAL_PROB: f64 = 0.1;

impl TerminalSet {
    pub fn new(variables: Vec<usize>, max_lag: usize, constant_range: (f64, f64)) -> Self {
        TerminalSet {
            variables,
            max_lag,
            constant_range,
        }
    }

    pub fn variables(&self) -> &[usize] {
        &self.variables
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Node {
        if self.variables.is_empty() || rng.gen_bool(CONSTANT_TERMINAL_PROB) {
            Node::Const(rng.gen_range(self.constant_range.0..=self.constant_range.1))
        } else {
            Node::Var {
                var: self.variables[rng.gen_range(0..self.variables.len())],
                lag: rng.gen_range(0..=self.max_lag),
            }
        }
    }
}

// Max subtree size rooted at depth `d` under `limit` with max arity 2.
fn depth_capacity(limit: usize, d: usize) -> u64 {
    if d > limit {
        return 0;
    }
    let levels = (limit - d + 1).min(62);
    (1u64 << levels) - 1
}

fn choose_function(
    rng: &mut ChaCha8Rng,
    slot_depth: usize,
    current_size: usize,
    other_capacity: u64,
    size_target: usize,
    limit: usize,
) -> FunctionSymbol {
    // prefer symbols whose arity keeps the size target reachable; the
    // depth limit would otherwise truncate large trees well below target
    let child_cap = depth_capacity(limit, slot_depth + 1);
    let reachable = |arity: usize| {
        current_size as u64 + 1 + other_capacity + arity as u64 * child_cap >= size_target as u64
    };
    let allowed: Vec<FunctionSymbol> = FunctionSymbol::ALL
        .iter()
        .copied()
        .filter(|f| reachable(f.arity()))
        .collect();
    if allowed.is_empty() {
        let binary: Vec<FunctionSymbol> = FunctionSymbol::ALL
            .iter()
            .copied()
            .filter(|f| f.arity() == 2)
            .collect();
        binary[rng.gen_range(0..binary.len())]
    } else {
        allowed[rng.gen_range(0..allowed.len())]
    }
}

/// Probabilistic tree creation: grows a random tree of roughly `size_target`
/// nodes, never exceeding `depth_limit` (root has depth 1).
pub fn ptc2(
    rng: &mut ChaCha8Rng,
    terminals: &TerminalSet,
    depth_limit: usize,
    size_target: usize,
) -> Node {
    if size_target <= 1 || depth_limit <= 1 {
        return terminals.sample(rng);
    }

    enum Cell {
        Open { depth: usize },
        Fun(FunctionSymbol, Vec<usize>),
        Leaf(Node),
    }
    let mut arena: Vec<Cell> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    let mut size = 0usize;

    let place_function = |arena: &mut Vec<Cell>,
                              open: &mut Vec<usize>,
                              id: usize,
                              f: FunctionSymbol,
                              depth: usize| {
        let mut children = Vec::with_capacity(f.arity());
        for _ in 0..f.arity() {
            arena.push(Cell::Open { depth: depth + 1 });
            children.push(arena.len() - 1);
            open.push(arena.len() - 1);
        }
        arena[id] = Cell::Fun(f, children);
    };

    arena.push(Cell::Open { depth: 1 });
    let root_f = choose_function(rng, 1, 0, 0, size_target, depth_limit);
    size += 1;
    place_function(&mut arena, &mut open, 0, root_f, 1);

    while !open.is_empty() && size + open.len() < size_target {
        let pick = rng.gen_range(0..open.len());
        let id = open.swap_remove(pick);
        let depth = match arena[id] {
            Cell::Open { depth } => depth,
            _ => unreachable!(),
        };
        if depth >= depth_limit {
            arena[id] = Cell::Leaf(terminals.sample(rng));
            size += 1;
            continue;
        }
        let other_capacity: u64 = open
            .iter()
            .map(|&s| match arena[s] {
                Cell::Open { depth } => depth_capacity(depth_limit, depth),
                _ => 0,
            })
            .sum();
        let f = choose_function(rng, depth, size, other_capacity, size_target, depth_limit);
        size += 1;
        place_function(&mut arena, &mut open, id, f, depth);
    }
    for id in open {
        arena[id] = Cell::Leaf(terminals.sample(rng));
    }

    fn materialize(arena: &[Cell], id: usize) -> Node {
        match &arena[id] {
            Cell::Leaf(node) => node.clone(),
            Cell::Fun(f, children) => Node::Fun(
                *f,
                children.iter().map(|&c| materialize(arena, c)).collect(),
            ),
            Cell::Open { .. } => unreachable!("open slot after fill"),
        }
    }
    materialize(&arena, 0)
}

/// PTC2 population with size targets uniform on `[3, 2^depth_limit - 1]`.
pub fn initialize_population(
    config: &GpConfig,
    terminals: &TerminalSet,
    rng: &mut ChaCha8Rng,
) -> Vec<ExpressionTree> {
    let limit = config.initial_depth_limit;
    let max_target = depth_capacity(limit, 1).min(1 << 20) as usize;
    (0..config.population_size)
        .map(|_| {
            let target = rng.gen_range(3..=max_target.max(3));
            ExpressionTree::new(ptc2(rng, terminals, limit, target))
        })
        .collect()
}

/// A tree plus cached fitness and shape statistics.
#[derive(Debug, Clone)]
pub struct Individual {
    pub tree: ExpressionTree,
    pub fitness_train: f64,
    pub fitness_validation: f64,
    pub depth: usize,
    pub size: usize,
}

// Strict "i beats j" ordering on training fitness with deterministic
// tie-breaks: smaller tree, then earlier population index.
fn beats_on_train(pop: &[Individual], i: usize, j: usize) -> bool {
    let (a, b) = (&pop[i], &pop[j]);
    if a.fitness_train != b.fitness_train {
        return a.fitness_train > b.fitness_train;
    }
    if a.size != b.size {
        return a.size < b.size;
    }
    i < j
}

/// Draws `size` individuals uniformly with replacement and returns the index
/// of the training-fitness winner.
pub fn tournament_select(pop: &[Individual], size: usize, rng: &mut ChaCha8Rng) -> usize {
    assert!(!pop.is_empty());
    let mut best = rng.gen_range(0..pop.len());
    for _ in 1..size {
        let challenger = rng.gen_range(0..pop.len());
        if beats_on_train(pop, challenger, best) {
            best = challenger;
        }
    }
    best
}

/// Replaces a uniformly chosen node of a copy of `a` with a copy of a
/// uniformly chosen subtree of `b`. The child may exceed the depth limit;
/// that is the acceptance step's concern.
pub fn subtree_crossover(
    a: &ExpressionTree,
    b: &ExpressionTree,
    rng: &mut ChaCha8Rng,
) -> ExpressionTree {
    let mut child = a.clone();
    let at = rng.gen_range(0..child.size());
    let from = rng.gen_range(0..b.size());
    *child.root.nth_mut(at) = b.root.nth(from).clone();
    child
}

fn one_point_mutation(tree: &mut ExpressionTree, rng: &mut ChaCha8Rng, terminals: &TerminalSet) {
    let idx = rng.gen_range(0..tree.size());
    let node = tree.root.nth_mut(idx);
    match node {
        Node::Fun(f, _) => {
            let others: Vec<FunctionSymbol> = FunctionSymbol::ALL
                .iter()
                .copied()
                .filter(|g| g.arity() == f.arity() && g != f)
                .collect();
            *f = others[rng.gen_range(0..others.len())];
        }
        Node::Var { .. } => *node = terminals.sample(rng),
        Node::Const(c) => *c += rng.sample::<f64, _>(StandardNormal),
    }
}

fn subtree_replacement(
    tree: &mut ExpressionTree,
    rng: &mut ChaCha8Rng,
    terminals: &TerminalSet,
    depth_limit: usize,
) {
    let idx = rng.gen_range(0..tree.size());
    let node_depth = tree.root.depth_of_nth(idx);
    let budget = (depth_limit + 1).saturating_sub(node_depth).max(1);
    let max_target = depth_capacity(budget, 1).min(1 << 12) as usize;
    let target = rng.gen_range(1..=max_target.max(1));
    *tree.root.nth_mut(idx) = ptc2(rng, terminals, budget, target);
}

/// Applies one-point mutation and subtree replacement with independent rolls
/// at the configured rates.
pub fn mutate(
    tree: &ExpressionTree,
    rng: &mut ChaCha8Rng,
    config: &GpConfig,
    terminals: &TerminalSet,
    depth_limit: usize,
) -> ExpressionTree {
    let mut out = tree.clone();
    if config.one_point_mutation_rate > 0.0 && rng.gen_bool(config.one_point_mutation_rate) {
        one_point_mutation(&mut out, rng, terminals);
    }
    if config.subtree_mutation_rate > 0.0 && rng.gen_bool(config.subtree_mutation_rate) {
        subtree_replacement(&mut out, rng, terminals, depth_limit);
    }
    out
}

/// Dynamic depth limit decision: children within the limit are accepted
/// unchanged; deeper children are accepted (raising the limit to their depth)
/// only when they strictly beat the best training fitness so far.
pub fn accept_offspring(
    child_depth: usize,
    child_fitness_train: f64,
    current_depth_limit: usize,
    best_fitness_so_far: f64,
) -> (bool, usize) {
    if child_depth <= current_depth_limit {
        (true, current_depth_limit)
    } else if child_fitness_train > best_fitness_so_far {
        (true, child_depth)
    } else {
        (false, current_depth_limit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxGenerations,
    SpearmanStop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub fitness: f64,
    pub validation: f64,
    pub test: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearScaling {
    pub offset: f64,
    pub slope: f64,
}

/// Outcome of one GP run: the scaled best-on-validation model, its scores on
/// all three partitions, and the run's relevance vector with the full
/// per-generation frequency trace behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub target: String,
    pub seed: u64,
    pub config: GpConfig,
    pub stop_reason: StopReason,
    pub generations_executed: usize,
    pub scores: Scores,
    pub scale: LinearScaling,
    pub model: String,
    pub model_size: usize,
    pub model_depth: usize,
    pub relevance: RelevanceVector,
    pub freq_trace: Vec<RelevanceVector>,
}

/// Depth-limit acceptance decision, reported to observers.
#[derive(Debug, Clone, Copy)]
pub struct AcceptanceEvent {
    pub generation: usize,
    pub child_depth: usize,
    pub child_fitness_train: f64,
    pub best_fitness_before: f64,
    pub limit_before: usize,
    pub limit_after: usize,
    pub accepted: bool,
}

/// Instrumentation hooks for tests and diagnostics. All methods default to
/// no-ops; `override_validation` may rewrite the population's validation
/// fitness before it feeds the Spearman stopping rule and model selection.
pub trait RunObserver {
    fn override_validation(&mut self, _fitness: &mut [f64], _rng: &mut ChaCha8Rng) {}
    fn on_generation(&mut self, _generation: usize, _population: &[Individual]) {}
    fn on_acceptance(&mut self, _event: &AcceptanceEvent) {}
}

pub struct NoopObserver;

impl RunObserver for NoopObserver {}

/// Executes one GP run against `target` with the remaining variables (all
/// lags up to the configured maximum) plus constants as terminals.
pub fn run(
    config: &GpConfig,
    matrix: &LaggedDesignMatrix,
    target: &str,
    partition: &Partition,
) -> Result<RunResult, EvolutionError> {
    run_with_observer(config, matrix, target, partition, &mut NoopObserver)
}

pub fn run_with_observer(
    config: &GpConfig,
    matrix: &LaggedDesignMatrix,
    target: &str,
    partition: &Partition,
    observer: &mut dyn RunObserver,
) -> Result<RunResult, EvolutionError> {
    config.validate()?;
    if config.max_lag > matrix.max_lag() {
        return Err(EvolutionError::LagMismatch {
            config: config.max_lag,
            matrix: matrix.max_lag(),
        });
    }
    let target_idx = matrix
        .var_index(target)
        .ok_or_else(|| EvolutionError::UnknownTarget(target.to_string()))?;

    let fit_rows = matrix.usable_rows(partition.fitness, target_idx);
    let val_rows = matrix.usable_rows(partition.validation, target_idx);
    let test_rows = matrix.usable_rows(partition.test, target_idx);
    if fit_rows.len() < 2 {
        return Err(EvolutionError::InsufficientRows {
            range: "fitness",
            usable: fit_rows.len(),
        });
    }
    let target_series = |rows: &[usize]| -> Vec<f64> {
        rows.iter().map(|&t| matrix.value(target_idx, t)).collect()
    };
    let fit_target = target_series(&fit_rows);
    let val_target = target_series(&val_rows);
    let test_target = target_series(&test_rows);
    if fit_target.iter().all(|&v| v == fit_target[0]) {
        return Err(EvolutionError::ConstantTarget(target.to_string()));
    }

    let universe: Vec<usize> = (0..matrix.num_vars()).filter(|&v| v != target_idx).collect();
    let terminals = TerminalSet::new(universe.clone(), config.max_lag, config.constant_range);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    // non-finite output on any usable row, or constant output, scores 0
    let fitness_of = |outputs: &[f64], targets: &[f64]| -> f64 {
        if outputs.iter().any(|v| !v.is_finite()) {
            0.0
        } else {
            r_squared(outputs, targets)
        }
    };
    let evaluate_tree = |tree: ExpressionTree| -> Individual {
        let train = fitness_of(&tree.evaluate(matrix, &fit_rows), &fit_target);
        let validation = fitness_of(&tree.evaluate(matrix, &val_rows), &val_target);
        Individual {
            depth: tree.depth(),
            size: tree.size(),
            tree,
            fitness_train: train,
            fitness_validation: validation,
        }
    };
    let evaluate_all = |trees: Vec<ExpressionTree>| -> Vec<Individual> {
        trees.into_par_iter().map(evaluate_tree).collect()
    };

    let mut population = evaluate_all(initialize_population(config, &terminals, &mut rng));
    let mut depth_limit = config.initial_depth_limit;
    let mut best_train = population
        .iter()
        .map(|i| i.fitness_train)
        .fold(0.0f64, f64::max);
    let mut best_on_validation: Option<Individual> = None;
    let mut freq_trace: Vec<RelevanceVector> = Vec::new();
    let mut generation = 1usize;

    let stop_reason = loop {
        let mut validations: Vec<f64> =
            population.iter().map(|i| i.fitness_validation).collect();
        observer.override_validation(&mut validations, &mut rng);
        for (ind, v) in population.iter_mut().zip(&validations) {
            ind.fitness_validation = *v;
        }
        observer.on_generation(generation, &population);

        let trees: Vec<ExpressionTree> =
            population.iter().map(|i| i.tree.clone()).collect();
        freq_trace.push(population_frequency(&trees, matrix.names(), &universe));

        for ind in &population {
            let replace = match &best_on_validation {
                None => true,
                Some(best) => {
                    ind.fitness_validation > best.fitness_validation
                        || (ind.fitness_validation == best.fitness_validation
                            && ind.size < best.size)
                }
            };
            if replace {
                best_on_validation = Some(ind.clone());
            }
        }

        let trains: Vec<f64> = population.iter().map(|i| i.fitness_train).collect();
        if spearman_rho(&trains, &validations) < config.spearman_stop_threshold {
            break StopReason::SpearmanStop;
        }
        if generation >= config.max_generations {
            break StopReason::MaxGenerations;
        }

        // breed the next generation: elite in slot 0, the rest by
        // crossover + mutation with depth-limit acceptance
        let elite = (0..population.len())
            .reduce(|best, i| if beats_on_train(&population, i, best) { i } else { best })
            .expect("non-empty population");
        let mut parents: Vec<usize> = Vec::with_capacity(population.len() - 1);
        let mut candidates: Vec<ExpressionTree> = Vec::with_capacity(population.len() - 1);
        for _ in 1..population.len() {
            let pa = tournament_select(&population, config.tournament_size, &mut rng);
            let pb = tournament_select(&population, config.tournament_size, &mut rng);
            let child = subtree_crossover(&population[pa].tree, &population[pb].tree, &mut rng);
            let child = mutate(&child, &mut rng, config, &terminals, depth_limit);
            parents.push(pa);
            candidates.push(child);
        }
        let evaluated: Vec<Individual> = evaluate_all(candidates);
        let mut next = Vec::with_capacity(population.len());
        next.push(population[elite].clone());
        for (slot, child) in evaluated.into_iter().enumerate() {
            let (accepted, new_limit) =
                accept_offspring(child.depth, child.fitness_train, depth_limit, best_train);
            observer.on_acceptance(&AcceptanceEvent {
                generation: generation + 1,
                child_depth: child.depth,
                child_fitness_train: child.fitness_train,
                best_fitness_before: best_train,
                limit_before: depth_limit,
                limit_after: new_limit,
                accepted,
            });
            depth_limit = new_limit;
            let individual = if accepted {
                child
            } else {
                population[parents[slot]].clone()
            };
            if individual.fitness_train > best_train {
                best_train = individual.fitness_train;
            }
            next.push(individual);
        }
        population = next;
        generation += 1;
    };

    let best = best_on_validation.expect("at least one generation recorded");
    let best_fit_output = best.tree.evaluate(matrix, &fit_rows);
    let (offset, slope) = linear_scale(&best_fit_output, &fit_target);
    let scaled_r2 = |rows: &[usize], targets: &[f64]| -> f64 {
        let scaled: Vec<f64> = best
            .tree
            .evaluate(matrix, rows)
            .into_iter()
            .map(|v| offset + slope * v)
            .collect();
        r_squared(&scaled, targets)
    };
    let scores = Scores {
        fitness: scaled_r2(&fit_rows, &fit_target),
        validation: scaled_r2(&val_rows, &val_target),
        test: scaled_r2(&test_rows, &test_target),
    };
    let relevance = run_relevance(&freq_trace)?;

    Ok(RunResult {
        target: target.to_string(),
        seed: config.rng_seed,
        config: config.clone(),
        stop_reason,
        generations_executed: generation,
        scores,
        scale: LinearScaling { offset, slope },
        model: best.tree.to_prefix(matrix.names()),
        model_size: best.size,
        model_depth: best.depth,
        relevance,
        freq_trace,
    })
}
