//! Static maintainability metrics: Halstead volume, cyclomatic complexity,
//! SLOC, comment ratio and the maintainability index.
//!
//! # Decision points
//!
//! Cyclomatic complexity of a block is `1 + decisions`, where each of the
//! following adds one:
//!
//! - `if`, `elif`
//! - `for` (statement form), `while`
//! - `except` handler
//! - `and` / `or` inside the condition of an `if`, `elif`, `while`,
//!   conditional expression, comprehension `if`, `assert` or `case` guard
//! - conditional expression (`a if c else b`)
//! - comprehension `if` clause
//! - `assert`
//! - every `case` arm after the first in a `match`
//!
//! Blocks are function and method definitions; decisions belong to the
//! innermost enclosing definition. A module without any definition is one
//! block. The module value is the mean over blocks.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::{self, LineCensus, Node, SyntaxError, SyntaxTree, TokenCensus};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("maintainability index is undefined for zero source lines")]
    EmptySource,
    #[error("comment ratio {0} outside [0, 1]")]
    CommentRatio(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StaticReport {
    pub halstead_volume: f64,
    pub cyclomatic_complexity: f64,
    pub sloc: usize,
    pub comment_ratio: f64,
    pub maintainability_index: f64,
}

/// `V = N · log2(η)`; zero when there are no tokens or only one distinct token.
pub fn halstead_volume(census: &TokenCensus) -> f64 {
    let length = census.total_operators + census.total_operands;
    let vocabulary = census.distinct_operators + census.distinct_operands;
    if length == 0 || vocabulary <= 1 {
        return 0.0;
    }
    length as f64 * (vocabulary as f64).log2()
}

/// Per-block complexity values in source order.
pub fn block_complexities(tree: &SyntaxTree) -> Vec<u32> {
    let mut blocks: Vec<u32> = Vec::new();
    let mut module_decisions = 0u32;
    let mut counted_bool_ops = HashSet::new();
    walk(&tree.root, None, &mut blocks, &mut module_decisions, &mut counted_bool_ops);
    if blocks.is_empty() {
        vec![1 + module_decisions]
    } else {
        blocks
    }
}

fn walk(
    node: &Node,
    current: Option<usize>,
    blocks: &mut Vec<u32>,
    module: &mut u32,
    counted: &mut HashSet<(usize, usize)>,
) {
    let mut current = current;
    if node.kind == "function_definition" {
        blocks.push(1);
        current = Some(blocks.len() - 1);
    }
    let here = decisions_at(node, counted);
    if here > 0 {
        match current {
            Some(i) => blocks[i] += here,
            None => *module += here,
        }
    }
    for child in &node.children {
        walk(child, current, blocks, module, counted);
    }
}

fn decisions_at(node: &Node, counted: &mut HashSet<(usize, usize)>) -> u32 {
    if !node.named {
        return 0;
    }
    let (own, condition) = match node.kind {
        "if_statement" | "elif_clause" | "while_statement" => (1, node.child_by_field("condition")),
        "for_statement" | "except_clause" => (1, None),
        "conditional_expression" => (1, node.named_children().nth(1)),
        "if_clause" if node.field == Some("guard") => (0, None),
        "if_clause" => (1, node.named_children().next()),
        "assert_statement" => (1, node.named_children().next()),
        "case_clause" => (0, node.child_by_field("guard").and_then(|g| g.named_children().next())),
        "block" => (later_case_arms(node), None),
        _ => (0, None),
    };
    let bool_ops = condition.map_or(0, |c| {
        c.preorder()
            .filter(|n| n.kind == "boolean_operator")
            .filter(|n| counted.insert((n.span.start, n.span.end)))
            .count() as u32
    });
    own + bool_ops
}

/// A `match` body holds its arms directly; every arm after the first branches.
fn later_case_arms(block: &Node) -> u32 {
    let arms = block.children.iter().filter(|c| c.kind == "case_clause").count() as u32;
    arms.saturating_sub(1)
}

/// Mean per-block cyclomatic complexity.
pub fn cyclomatic_complexity(tree: &SyntaxTree) -> f64 {
    let blocks = block_complexities(tree);
    blocks.iter().map(|&b| b as f64).sum::<f64>() / blocks.len() as f64
}

/// Maintainability index before the clamp at zero.
pub fn maintainability_index_unclamped(volume: f64, complexity: f64, sloc: usize, comment_ratio: f64) -> f64 {
    100.0
        * (171.0 - 5.2 * volume.max(1.0).ln() - 0.23 * complexity - 16.2 * (sloc as f64).ln()
            + 50.0 * (2.4 * comment_ratio).sqrt().sin())
        / 171.0
}

pub fn maintainability_index(volume: f64, complexity: f64, sloc: usize, comment_ratio: f64) -> Result<f64, MetricError> {
    if sloc == 0 {
        return Err(MetricError::EmptySource);
    }
    if !(0.0..=1.0).contains(&comment_ratio) {
        return Err(MetricError::CommentRatio(comment_ratio));
    }
    Ok(maintainability_index_unclamped(volume, complexity, sloc, comment_ratio).max(0.0))
}

/// Share of comment lines among non-blank lines.
pub fn comment_ratio(lines: &LineCensus) -> f64 {
    let denom = lines.sloc + lines.comment_lines;
    if denom == 0 {
        0.0
    } else {
        lines.comment_lines as f64 / denom as f64
    }
}

pub fn static_report(source: &str) -> Result<StaticReport, MetricError> {
    let tree = parser::parse_source(source)?;
    let census = parser::census_of(&parser::tokens(&tree, source));
    let lines = parser::line_census(source);
    let halstead_volume = halstead_volume(&census);
    let cyclomatic_complexity = cyclomatic_complexity(&tree);
    let comment_ratio = comment_ratio(&lines);
    let maintainability_index = maintainability_index(halstead_volume, cyclomatic_complexity, lines.sloc, comment_ratio)?;
    Ok(StaticReport { halstead_volume, cyclomatic_complexity, sloc: lines.sloc, comment_ratio, maintainability_index })
}
