//! Dynamic maintainability metrics over (original, modified) code pairs:
//! post-modification Pass@k, syntax-tree similarity and code-diff volume.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use similar::{Algorithm, ChangeTag, TextDiff};
use thiserror::Error;

use crate::corpus::ChangePattern;
use crate::parser::{self, SyntaxError};

#[derive(Debug, Error, PartialEq)]
pub enum DynamicMetricError {
    #[error("pass@k needs 0 <= c <= n and 1 <= k <= n (got n={n}, c={c}, k={k})")]
    PassAtKDomain { n: u64, c: u64, k: u64 },
    #[error("original has no source lines but the diff is non-empty")]
    EmptyOriginal,
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("no probe results to aggregate")]
    NoProbes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassAtKInput {
    pub n: u64,
    pub c: u64,
    pub k: u64,
}

impl PassAtKInput {
    pub fn new(n: u64, c: u64, k: u64) -> Result<Self, DynamicMetricError> {
        if c > n || k == 0 || k > n {
            return Err(DynamicMetricError::PassAtKDomain { n, c, k });
        }
        Ok(Self { n, c, k })
    }
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // exact at every step: acc * (n - i) is divisible by (i + 1)
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

/// Pass@k as an exact fraction `(numerator, denominator)` of
/// `1 − C(n−c, k) / C(n, k)`.
pub fn pass_at_k_ratio(input: PassAtKInput) -> (u128, u128) {
    let total = binomial(input.n, input.k);
    let failing = binomial(input.n - input.c, input.k);
    (total - failing, total)
}

/// Probability that a uniform k-subset of the n samples has a passing one.
pub fn pass_at_k(input: PassAtKInput) -> f64 {
    let (num, den) = pass_at_k_ratio(input);
    num as f64 / den as f64
}

/// Longest matching block `(i, j, size)` in `a[alo..ahi]` × `b[blo..bhi]`,
/// earliest in `a` then earliest in `b` on ties.
fn longest_match<T: Eq + std::hash::Hash>(
    a: &[T],
    b2j: &HashMap<&T, Vec<usize>>,
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> (usize, usize, usize) {
    let (mut best_i, mut best_j, mut best_size) = (alo, blo, 0);
    // run lengths indexed by j + 1, with the touched slots listed so a row resets cheaply
    let mut lengths = vec![0usize; bhi + 1];
    let mut next = vec![0usize; bhi + 1];
    let (mut touched, mut next_touched) = (Vec::new(), Vec::new());
    for (i, item) in a.iter().enumerate().take(ahi).skip(alo) {
        if let Some(positions) = b2j.get(item) {
            for &j in positions {
                if j < blo {
                    continue;
                }
                if j >= bhi {
                    break;
                }
                let k = lengths[j] + 1;
                next[j + 1] = k;
                next_touched.push(j + 1);
                if k > best_size {
                    best_i = i + 1 - k;
                    best_j = j + 1 - k;
                    best_size = k;
                }
            }
        }
        for &t in &touched {
            lengths[t] = 0;
        }
        std::mem::swap(&mut lengths, &mut next);
        std::mem::swap(&mut touched, &mut next_touched);
        next_touched.clear();
    }
    (best_i, best_j, best_size)
}

/// Total size of the recursively found longest matching blocks.
pub fn matching_total<T: Eq + std::hash::Hash>(a: &[T], b: &[T]) -> usize {
    let mut b2j: HashMap<&T, Vec<usize>> = HashMap::new();
    for (j, item) in b.iter().enumerate() {
        b2j.entry(item).or_default().push(j);
    }
    let mut total = 0;
    let mut queue = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = queue.pop() {
        let (i, j, k) = longest_match(a, &b2j, alo, ahi, blo, bhi);
        if k == 0 {
            continue;
        }
        total += k;
        if alo < i && blo < j {
            queue.push((alo, i, blo, j));
        }
        if i + k < ahi && j + k < bhi {
            queue.push((i + k, ahi, j + k, bhi));
        }
    }
    total
}

/// Ratcliff/Obershelp ratio `2M / (|A| + |B|)`; two empty sequences are identical.
pub fn sequence_ratio<T: Eq + std::hash::Hash>(a: &[T], b: &[T]) -> f64 {
    let len = a.len() + b.len();
    if len == 0 {
        return 1.0;
    }
    2.0 * matching_total(a, b) as f64 / len as f64
}

/// The greedy block search is order-sensitive, so take the better of both directions.
pub fn symmetric_ratio<T: Eq + std::hash::Hash>(a: &[T], b: &[T]) -> f64 {
    sequence_ratio(a, b).max(sequence_ratio(b, a))
}

/// Structural similarity of two programs over their node-kind sequences.
pub fn ast_similarity(a: &str, b: &str) -> Result<f64, DynamicMetricError> {
    let seq_a = parser::node_kind_sequence(&parser::parse_source(a)?);
    let seq_b = parser::node_kind_sequence(&parser::parse_source(b)?);
    Ok(symmetric_ratio(&seq_a, &seq_b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffVolume {
    /// Changed lines as a percentage of the original's SLOC; may exceed 100.
    pub per: f64,
    /// Inserted plus deleted lines.
    pub abs: usize,
    /// SLOC of the original, kept so `per` can be checked exactly.
    pub original_sloc: usize,
}

fn normalized_lines(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Line-level diff volume; a replaced line counts as one deletion plus one insertion.
pub fn code_diff(original: &str, modified: &str) -> Result<DiffVolume, DynamicMetricError> {
    let old = normalized_lines(original);
    let new = normalized_lines(modified);
    let diff = TextDiff::configure().algorithm(Algorithm::Myers).diff_lines(&old, &new);
    let abs = diff.iter_all_changes().filter(|c| c.tag() != ChangeTag::Equal).count();
    let original_sloc = parser::line_census(original).sloc;
    let per = match (original_sloc, abs) {
        (0, 0) => 0.0,
        (0, _) => return Err(DynamicMetricError::EmptyOriginal),
        (sloc, abs) => abs as f64 * 100.0 / sloc as f64,
    };
    Ok(DiffVolume { per, abs, original_sloc })
}

/// What a single Phase II probe contributes to the dynamic aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeObservation {
    pub problem_id: String,
    pub pattern: ChangePattern,
    pub passed: bool,
    /// `None` when the probe produced no usable code.
    pub ast_sim: Option<f64>,
    pub diff: Option<DiffVolume>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicAggregate {
    /// Keyed by k.
    pub pass_at_k: BTreeMap<u64, f64>,
    pub ast_sim: Option<f64>,
    pub diff_per: Option<f64>,
    pub diff_abs: Option<f64>,
    pub units: usize,
    pub probes: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Pool probes per (problem, pattern) unit, compute Pass@k per unit and
/// average over units; similarity and diff are averaged over probes.
/// k values larger than a unit's sample count are skipped for that unit.
pub fn dynamic_report(probes: &[ProbeObservation], ks: &[u64]) -> Result<DynamicAggregate, DynamicMetricError> {
    if probes.is_empty() {
        return Err(DynamicMetricError::NoProbes);
    }
    let mut units: BTreeMap<(&str, ChangePattern), (u64, u64)> = BTreeMap::new();
    for p in probes {
        let unit = units.entry((p.problem_id.as_str(), p.pattern)).or_default();
        unit.0 += 1;
        unit.1 += u64::from(p.passed);
    }
    let mut pass_at_k_map = BTreeMap::new();
    for &k in ks {
        let values: Vec<f64> = units
            .values()
            .filter_map(|&(n, c)| PassAtKInput::new(n, c, k).ok().map(pass_at_k))
            .collect();
        if let Some(m) = mean(values.into_iter()) {
            pass_at_k_map.insert(k, m);
        }
    }
    Ok(DynamicAggregate {
        pass_at_k: pass_at_k_map,
        ast_sim: mean(probes.iter().filter_map(|p| p.ast_sim)),
        diff_per: mean(probes.iter().filter_map(|p| p.diff.map(|d| d.per))),
        diff_abs: mean(probes.iter().filter_map(|p| p.diff.map(|d| d.abs as f64))),
        units: units.len(),
        probes: probes.len(),
    })
}
