//! Feature–class and feature–feature statistics over value/label columns.
//!
//! Every function here is pure. Inputs must be finite; a NaN or infinity is
//! reported as [`StatsError::NonFinite`] rather than silently ranked.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::ClassLabel;
use crate::features::FeatureId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StatsError {
    #[error("length mismatch: {left} values vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("no {0} values present")]
    MissingClass(ClassLabel),
    #[error("mean is zero; chi-square is undefined")]
    ZeroMean,
    #[error("within-group variance is zero; F is undefined")]
    DegenerateGroups,
    #[error("all values tied; tie correction is zero")]
    AllTied,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
}

fn check_finite(values: &[f64]) -> Result<(), StatsError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(StatsError::NonFinite(i)),
        None => Ok(()),
    }
}

fn check_column(values: &[f64], labels: &[ClassLabel]) -> Result<(), StatsError> {
    if values.len() != labels.len() {
        return Err(StatsError::LengthMismatch {
            left: values.len(),
            right: labels.len(),
        });
    }
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(values)
}

fn require_both(labels: &[ClassLabel]) -> Result<(usize, usize), StatsError> {
    let malware = labels.iter().filter(|&&l| l == ClassLabel::Malware).count();
    let normal = labels.len() - malware;
    if normal == 0 {
        return Err(StatsError::MissingClass(ClassLabel::Normal));
    }
    if malware == 0 {
        return Err(StatsError::MissingClass(ClassLabel::Malware));
    }
    Ok((normal, malware))
}

/// Compensated (Neumaier) sum.
fn sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = s + v;
        if s.abs() >= v.abs() {
            c += (s - t) + v;
        } else {
            c += (v - t) + s;
        }
        s = t;
    }
    s + c
}

fn mean(values: &[f64]) -> f64 {
    sum(values.iter().copied()) / values.len() as f64
}

/// Row indices ordered by value.
fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// A maximal interval of sorted values that all carry one class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRange {
    pub lo: f64,
    pub hi: f64,
    pub class: ClassLabel,
    pub cardinality: usize,
}

/// The class ranges of a column, in ascending value order.
///
/// A value that occurs in both classes belongs to no range and ends any run
/// adjacent to it.
pub fn class_ranges(values: &[f64], labels: &[ClassLabel]) -> Result<Vec<ClassRange>, StatsError> {
    check_column(values, labels)?;
    let order = sorted_order(values);
    let mut ranges: Vec<ClassRange> = Vec::new();
    let mut open: Option<ClassRange> = None;
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]];
        let class = labels[order[i]];
        let mut j = i + 1;
        let mut mixed = false;
        while j < order.len() && values[order[j]] == v {
            mixed |= labels[order[j]] != class;
            j += 1;
        }
        let count = j - i;
        match open.as_mut() {
            Some(run) if !mixed && run.class == class => {
                run.hi = v;
                run.cardinality += count;
            }
            _ => {
                ranges.extend(open.take());
                if !mixed {
                    open = Some(ClassRange {
                        lo: v,
                        hi: v,
                        class,
                        cardinality: count,
                    });
                }
            }
        }
        i = j;
    }
    ranges.extend(open);
    Ok(ranges)
}

/// Per-class crRelevance of one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrRelevance {
    pub normal: f64,
    pub malware: f64,
}

impl CrRelevance {
    pub fn get(&self, class: ClassLabel) -> f64 {
        match class {
            ClassLabel::Normal => self.normal,
            ClassLabel::Malware => self.malware,
        }
    }

    pub fn max(&self) -> f64 {
        self.normal.max(self.malware)
    }

    pub fn abs_diff(&self) -> f64 {
        (self.normal - self.malware).abs()
    }
}

/// Size of each class's largest range divided by that class's row count.
pub fn cr_relevance(values: &[f64], labels: &[ClassLabel]) -> Result<CrRelevance, StatsError> {
    check_column(values, labels)?;
    let (n_normal, n_malware) = require_both(labels)?;
    let mut core = [0usize; 2];
    for range in class_ranges(values, labels)? {
        let slot = &mut core[range.class.index()];
        *slot = (*slot).max(range.cardinality);
    }
    Ok(CrRelevance {
        normal: core[0] as f64 / n_normal as f64,
        malware: core[1] as f64 / n_malware as f64,
    })
}

/// crRelevance of one feature as it appears in a ranked list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceScore {
    pub feature: FeatureId,
    pub score_normal: f64,
    pub score_malware: f64,
    pub abs_diff: f64,
}

impl RelevanceScore {
    pub fn new(feature: FeatureId, scores: CrRelevance) -> Self {
        RelevanceScore {
            feature,
            score_normal: scores.normal,
            score_malware: scores.malware,
            abs_diff: scores.abs_diff(),
        }
    }
}

/// Normalized mean residue similarity of two equal-length vectors.
///
/// One minus the summed residue disagreement over twice the larger summed
/// absolute residue. Two constant vectors score 1.
pub fn nmrs(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(a)?;
    check_finite(b)?;
    let (ma, mb) = (mean(a), mean(b));
    let ra = |i: usize| a[i] - ma;
    let rb = |i: usize| b[i] - mb;
    let n = a.len();
    let numerator = sum((0..n).map(|i| (ra(i) - rb(i)).abs()));
    let sa = sum((0..n).map(|i| ra(i).abs()));
    let sb = sum((0..n).map(|i| rb(i).abs()));
    let denominator = 2.0 * sa.max(sb);
    if denominator == 0.0 {
        return Ok(1.0);
    }
    Ok((1.0 - numerator / denominator).clamp(0.0, 1.0))
}

/// Σ (v − E)² / E with E the mean of `values`.
pub fn chi_square_score(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    check_finite(values)?;
    let e = mean(values);
    if e == 0.0 {
        return Err(StatsError::ZeroMean);
    }
    Ok(sum(values.iter().map(|&v| (v - e) * (v - e))) / e)
}

/// One-way ANOVA F over the two classes.
pub fn anova_f(values: &[f64], labels: &[ClassLabel]) -> Result<f64, StatsError> {
    check_column(values, labels)?;
    let (n_normal, n_malware) = require_both(labels)?;
    let n = values.len();
    if n < 3 {
        return Err(StatsError::DegenerateGroups);
    }
    let group = |class: ClassLabel| -> Vec<f64> {
        values
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(&v, _)| v)
            .collect()
    };
    let groups = [group(ClassLabel::Normal), group(ClassLabel::Malware)];
    let grand = mean(values);
    let means = [mean(&groups[0]), mean(&groups[1])];
    let sizes = [n_normal as f64, n_malware as f64];
    let msb = sum((0..2).map(|j| sizes[j] * (means[j] - grand).powi(2))) / (2.0 - 1.0);
    let ssw = sum((0..2).flat_map(|j| {
        let m = means[j];
        groups[j].iter().map(move |&v| (v - m) * (v - m))
    }));
    let msw = ssw / (n - 2) as f64;
    if msw == 0.0 {
        return Err(StatsError::DegenerateGroups);
    }
    Ok(msb / msw)
}

/// Rank sums of both classes, doubled so that average ranks stay integral,
/// plus Σ(t³ − t) over tie groups.
struct RankSums {
    doubled: [u128; 2],
    counts: [u64; 2],
    tie_term: u128,
}

fn rank_sums(values: &[f64], labels: &[ClassLabel]) -> RankSums {
    let order = sorted_order(values);
    let mut doubled = [0u128; 2];
    let mut counts = [0u64; 2];
    let mut tie_term = 0u128;
    let mut i = 0;
    while i < order.len() {
        let v = values[order[i]];
        let mut j = i;
        while j < order.len() && values[order[j]] == v {
            j += 1;
        }
        // Positions i..j share rank ((i + 1) + j) / 2.
        let doubled_rank = (i + 1 + j) as u128;
        for &row in &order[i..j] {
            let c = labels[row].index();
            doubled[c] += doubled_rank;
            counts[c] += 1;
        }
        let t = (j - i) as u128;
        tie_term += t * t * t - t;
        i = j;
    }
    RankSums {
        doubled,
        counts,
        tie_term,
    }
}

/// Mann–Whitney U for each class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    pub u_normal: f64,
    pub u_malware: f64,
}

impl MannWhitney {
    /// The ranking key: `max(U1, U2)`.
    pub fn key(&self) -> f64 {
        self.u_normal.max(self.u_malware)
    }
}

/// U statistics with average ranks over the pooled sample.
pub fn mann_whitney_u(values: &[f64], labels: &[ClassLabel]) -> Result<MannWhitney, StatsError> {
    check_column(values, labels)?;
    require_both(labels)?;
    let sums = rank_sums(values, labels);
    let u = |c: usize| {
        let n = u128::from(sums.counts[c]);
        // 2U = 2R − n(n + 1)
        (sums.doubled[c] - n * (n + 1)) as f64 / 2.0
    };
    Ok(MannWhitney {
        u_normal: u(0),
        u_malware: u(1),
    })
}

/// Kruskal–Wallis H over the two classes with tie correction.
pub fn kruskal_wallis_h(values: &[f64], labels: &[ClassLabel]) -> Result<f64, StatsError> {
    check_column(values, labels)?;
    require_both(labels)?;
    let sums = rank_sums(values, labels);
    let n = values.len() as i128;
    // 12/(N(N+1)) Σ R²/n − 3(N+1) = 3 Σ D²/n / (N(N+1)) with D = 2R − n(N+1).
    let spread: f64 = (0..2)
        .map(|c| {
            let nc = i128::from(sums.counts[c]);
            let d = sums.doubled[c] as i128 - nc * (n + 1);
            (d * d) as f64 / nc as f64
        })
        .sum();
    let h = 3.0 * spread / (n * (n + 1)) as f64;
    let cube = (n * n * n - n) as u128;
    if sums.tie_term >= cube {
        return Err(StatsError::AllTied);
    }
    let correction = 1.0 - sums.tie_term as f64 / cube as f64;
    Ok(h / correction)
}

/// Orders `a` before `b` when `a` is the better-scoring feature, with the
/// lower feature id winning ties.
pub fn rank_order(a: (FeatureId, f64), b: (FeatureId, f64), descending: bool) -> Ordering {
    let by_score = if descending {
        b.1.total_cmp(&a.1)
    } else {
        a.1.total_cmp(&b.1)
    };
    by_score.then(a.0.cmp(&b.0))
}
