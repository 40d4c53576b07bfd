#![allow(dead_code)]

//! Helpers shared by the integration test targets: a minimal DOT parser for
//! checking emitted networks and seeded synthetic dataset generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A parsed DOT digraph: node names and (source, target, optional label)
/// edges. Supports exactly the subset this crate emits: a `digraph G { ... }`
/// wrapper, quoted node statements, and quoted edge statements with an
/// optional `[label="..."]` attribute.
#[derive(Debug, Default, PartialEq)]
pub struct DotGraph {
    pub nodes: Vec<String>,
    pub edges: Vec<(String, String, Option<String>)>,
}

pub fn parse_dot(text: &str) -> Result<DotGraph, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some("digraph G {") => {}
        other => return Err(format!("bad header: {other:?}")),
    }
    let mut graph = DotGraph::default();
    let mut closed = false;
    for line in lines {
        if closed {
            return Err(format!("content after closing brace: {line}"));
        }
        if line == "}" {
            closed = true;
            continue;
        }
        let body = line
            .strip_prefix("  ")
            .ok_or_else(|| format!("statement not indented: {line}"))?
            .strip_suffix(';')
            .ok_or_else(|| format!("statement not terminated: {line}"))?;
        let (first, rest) = take_quoted(body)?;
        if rest.is_empty() {
            graph.nodes.push(first);
            continue;
        }
        let rest = rest
            .strip_prefix(" -> ")
            .ok_or_else(|| format!("expected edge arrow in: {line}"))?;
        let (second, rest) = take_quoted(rest)?;
        let label = if rest.is_empty() {
            None
        } else {
            let inner = rest
                .strip_prefix(" [label=")
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| format!("unexpected edge attributes: {line}"))?;
            let (label, tail) = take_quoted(inner)?;
            if !tail.is_empty() {
                return Err(format!("trailing attribute content: {line}"));
            }
            Some(label)
        };
        graph.edges.push((first, second, label));
    }
    if !closed {
        return Err("missing closing brace".to_string());
    }
    Ok(graph)
}

// Reads one quoted, backslash-escaped identifier off the front of `text`.
fn take_quoted(text: &str) -> Result<(String, &str), String> {
    let mut chars = text.char_indices();
    match chars.next() {
        Some((_, '"')) => {}
        _ => return Err(format!("expected opening quote in: {text}")),
    }
    let mut out = String::new();
    let mut escaped = false;
    for (i, c) in chars {
        if escaped {
            out.push(c);
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == '"' {
            return Ok((out, &text[i + 1..]));
        } else {
            out.push(c);
        }
    }
    Err(format!("unterminated quote in: {text}"))
}

/// In-degree per node of a parsed DOT graph.
pub fn in_degrees(graph: &DotGraph) -> std::collections::BTreeMap<&str, usize> {
    let mut degrees: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for node in &graph.nodes {
        degrees.entry(node).or_insert(0);
    }
    for (_, target, _) in &graph.edges {
        *degrees.entry(target).or_insert(0) += 1;
    }
    degrees
}

/// CSV text for a seeded table of loosely coupled autoregressive series.
/// Column `s0` is pure noise; each later column mixes its own past, the
/// previous column's past and fresh noise, so cross-variable signal exists.
pub fn coupled_series_csv(seed: u64, num_vars: usize, rows: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(rows); num_vars];
    for t in 0..rows {
        for v in 0..num_vars {
            let noise: f64 = rng.gen_range(-1.0..1.0);
            let own = if t > 0 { columns[v][t - 1] } else { 0.0 };
            let prev = if v > 0 && t > 0 { columns[v - 1][t - 1] } else { 0.0 };
            let value = 0.4 * own + 0.4 * prev + noise;
            columns[v].push(value);
        }
    }
    let mut out = (0..num_vars)
        .map(|v| format!("s{v}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for t in 0..rows {
        let row = (0..num_vars)
            .map(|v| format!("{:?}", columns[v][t]))
            .collect::<Vec<_>>()
            .join(",");
        out.push_str(&row);
        out.push('\n');
    }
    out
}
