//! Feature rankings: crRelevance against the class, NMRS between features, and
//! the four baseline statistics.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassLabel, DatasetError, FeatureMatrix};
use crate::features::FeatureId;
use crate::stats::{self, RelevanceScore, StatsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RankingMethod {
    #[serde(rename = "crrelevance")]
    CrRelevance,
    #[serde(rename = "chi2-normal")]
    Chi2Normal,
    #[serde(rename = "chi2-malware")]
    Chi2Malware,
    #[serde(rename = "anova")]
    Anova,
    #[serde(rename = "mwu")]
    Mwu,
    #[serde(rename = "kw")]
    Kw,
}

impl RankingMethod {
    pub const ALL: [RankingMethod; 6] = [
        RankingMethod::CrRelevance,
        RankingMethod::Chi2Normal,
        RankingMethod::Chi2Malware,
        RankingMethod::Anova,
        RankingMethod::Mwu,
        RankingMethod::Kw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RankingMethod::CrRelevance => "crrelevance",
            RankingMethod::Chi2Normal => "chi2-normal",
            RankingMethod::Chi2Malware => "chi2-malware",
            RankingMethod::Anova => "anova",
            RankingMethod::Mwu => "mwu",
            RankingMethod::Kw => "kw",
        }
    }

    /// Whether a higher score ranks better. Chi-square ranks low scores first.
    pub fn descending(self) -> bool {
        !matches!(self, RankingMethod::Chi2Normal | RankingMethod::Chi2Malware)
    }
}

impl fmt::Display for RankingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RankingMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        RankingMethod::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| {
                format!(
                    "unknown ranking method {s:?}; expected one of {}",
                    RankingMethod::ALL.map(|m| m.name()).join(", ")
                )
            })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RankingError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{method} on {feature}: {source}")]
    Statistic {
        method: RankingMethod,
        feature: FeatureId,
        source: StatsError,
    },
    #[error("NMRS on ({a}, {b}): {source}")]
    Pair { a: FeatureId, b: FeatureId, source: StatsError },
    #[error("feature {0} appears more than once")]
    DuplicateFeature(FeatureId),
    #[error("pair ({0}, {1}) appears more than once")]
    DuplicatePair(FeatureId, FeatureId),
    #[error("pair ({0}, {0}) has identical members")]
    SelfPair(FeatureId),
    #[error("need at least two features to form pairs")]
    TooFewFeatures,
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub feature: FeatureId,
    pub score: f64,
}

/// Features ordered from most to least relevant under one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub method: RankingMethod,
    pub entries: Vec<RankEntry>,
    /// Per-class crRelevance, present for crRelevance rankings.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relevance: Vec<RelevanceScore>,
}

impl RankedList {
    /// Sorts `scores` by the method's direction; ties go to the lower feature id.
    pub fn from_scores(method: RankingMethod, scores: Vec<(FeatureId, f64)>) -> Result<Self, RankingError> {
        let mut seen = [false; 17];
        for &(f, _) in &scores {
            if std::mem::replace(&mut seen[usize::from(f.number())], true) {
                return Err(RankingError::DuplicateFeature(f));
            }
        }
        let mut scores = scores;
        scores.sort_by(|&a, &b| stats::rank_order(a, b, method.descending()));
        Ok(RankedList {
            method,
            entries: scores
                .into_iter()
                .map(|(feature, score)| RankEntry { feature, score })
                .collect(),
            relevance: Vec::new(),
        })
    }

    pub fn from_relevance(scores: Vec<RelevanceScore>) -> Result<Self, RankingError> {
        let mut list = Self::from_scores(
            RankingMethod::CrRelevance,
            scores.iter().map(|s| (s.feature, s.abs_diff)).collect(),
        )?;
        list.relevance = list
            .entries
            .iter()
            .map(|e| *scores.iter().find(|s| s.feature == e.feature).expect("same features"))
            .collect();
        Ok(list)
    }

    /// 1-based position of `feature`.
    pub fn rank_of(&self, feature: FeatureId) -> Option<usize> {
        self.entries.iter().position(|e| e.feature == feature).map(|p| p + 1)
    }

    pub fn score_of(&self, feature: FeatureId) -> Option<f64> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.score)
    }

    pub fn features(&self) -> Vec<FeatureId> {
        self.entries.iter().map(|e| e.feature).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `rank,feature,score`, one line per feature.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RankingError> {
        let mut w = csv_writer(writer);
        w.write_record(["rank", "feature", "score"])?;
        for (i, e) in self.entries.iter().enumerate() {
            w.write_record([(i + 1).to_string(), e.feature.to_string(), e.score.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `rank,feature,score` form back. Rows are re-sorted by score.
    pub fn read_csv<R: Read>(method: RankingMethod, reader: R) -> Result<Self, RankingError> {
        let mut scores = Vec::new();
        for_each_record(reader, &["rank", "feature", "score"], |line, record| {
            let feature = parse_feature(line, &record[1])?;
            let score = parse_number(line, &record[2])?;
            scores.push((feature, score));
            Ok(())
        })?;
        Self::from_scores(method, scores)
    }
}

/// NMRS of one unordered feature pair, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub a: FeatureId,
    pub b: FeatureId,
    pub nmrs: f64,
}

impl PairScore {
    pub fn new(x: FeatureId, y: FeatureId, nmrs: f64) -> Self {
        PairScore {
            a: x.min(y),
            b: x.max(y),
            nmrs,
        }
    }

    pub fn contains(&self, f: FeatureId) -> bool {
        self.a == f || self.b == f
    }
}

impl fmt::Display for PairScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.a, self.b)
    }
}

/// Feature pairs from most to least concordant.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PairQueue {
    pub pairs: Vec<PairScore>,
}

impl PairQueue {
    /// Sorts by NMRS descending, then by pair.
    pub fn from_pairs(pairs: Vec<PairScore>) -> Result<Self, RankingError> {
        let mut pairs = pairs;
        for p in &pairs {
            if p.a == p.b {
                return Err(RankingError::SelfPair(p.a));
            }
        }
        pairs.sort_by(|x, y| y.nmrs.total_cmp(&x.nmrs).then((x.a, x.b).cmp(&(y.a, y.b))));
        let mut keys: Vec<_> = pairs.iter().map(|p| (p.a, p.b)).collect();
        keys.sort();
        if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
            return Err(RankingError::DuplicatePair(w[0].0, w[0].1));
        }
        Ok(PairQueue { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `rank,feature_a,feature_b,nmrs`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RankingError> {
        let mut w = csv_writer(writer);
        w.write_record(["rank", "feature_a", "feature_b", "nmrs"])?;
        for (i, p) in self.pairs.iter().enumerate() {
            w.write_record([(i + 1).to_string(), p.a.to_string(), p.b.to_string(), p.nmrs.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, RankingError> {
        let mut pairs = Vec::new();
        for_each_record(reader, &["rank", "feature_a", "feature_b", "nmrs"], |line, record| {
            let a = parse_feature(line, &record[1])?;
            let b = parse_feature(line, &record[2])?;
            let nmrs = parse_number(line, &record[3])?;
            pairs.push(PairScore::new(a, b, nmrs));
            Ok(())
        })?;
        Self::from_pairs(pairs)
    }
}

fn csv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer)
}

fn for_each_record<R: Read>(
    reader: R,
    header: &[&str],
    mut f: impl FnMut(u64, &csv::StringRecord) -> Result<(), RankingError>,
) -> Result<(), RankingError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let found = rdr.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(RankingError::Parse {
            line: 1,
            reason: format!(
                "expected header {:?}, found {:?}",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(RankingError::Parse {
                line,
                reason: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        f(line, &record)?;
    }
    Ok(())
}

fn parse_feature(line: u64, cell: &str) -> Result<FeatureId, RankingError> {
    cell.parse().map_err(|e: crate::features::UnknownFeature| RankingError::Parse {
        line,
        reason: e.to_string(),
    })
}

fn parse_number(line: u64, cell: &str) -> Result<f64, RankingError> {
    cell.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| RankingError::Parse {
            line,
            reason: format!("cannot parse {cell:?} as a finite number"),
        })
}

/// crRelevance of every feature of `matrix`.
pub fn relevance_scores(matrix: &FeatureMatrix) -> Result<Vec<RelevanceScore>, RankingError> {
    matrix.require_both_classes()?;
    matrix
        .feature_ids()
        .par_iter()
        .map(|&feature| {
            let col = matrix.column(feature)?;
            stats::cr_relevance(col.values, col.labels)
                .map(|s| RelevanceScore::new(feature, s))
                .map_err(|source| RankingError::Statistic {
                    method: RankingMethod::CrRelevance,
                    feature,
                    source,
                })
        })
        .collect()
}

/// Features ranked by `|crRelevance(normal) − crRelevance(malware)|`.
pub fn fc_ranking(matrix: &FeatureMatrix) -> Result<RankedList, RankingError> {
    RankedList::from_relevance(relevance_scores(matrix)?)
}

/// NMRS of every feature pair.
///
/// Columns are compared over all normal rows followed by all malware rows,
/// each in row order.
pub fn ff_ranking(matrix: &FeatureMatrix) -> Result<PairQueue, RankingError> {
    let features = matrix.feature_ids();
    if features.len() < 2 {
        return Err(RankingError::TooFewFeatures);
    }
    let order: Vec<usize> = ClassLabel::BOTH.iter().flat_map(|&c| matrix.rows_of(c)).collect();
    let columns: Vec<Vec<f64>> = (0..features.len())
        .map(|i| {
            let values = matrix.values_at(i);
            order.iter().map(|&r| values[r]).collect()
        })
        .collect();
    let index_pairs: Vec<(usize, usize)> = (0..features.len())
        .flat_map(|i| (i + 1..features.len()).map(move |j| (i, j)))
        .collect();
    let pairs = index_pairs
        .par_iter()
        .map(|&(i, j)| {
            stats::nmrs(&columns[i], &columns[j])
                .map(|s| PairScore::new(features[i], features[j], s))
                .map_err(|source| RankingError::Pair {
                    a: features[i].min(features[j]),
                    b: features[i].max(features[j]),
                    source,
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    PairQueue::from_pairs(pairs)
}

fn split_by_class(values: &[f64], labels: &[ClassLabel], class: ClassLabel) -> Vec<f64> {
    values
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == class)
        .map(|(&v, _)| v)
        .collect()
}

/// Ranking of every feature under `method`.
pub fn alt_ranking(matrix: &FeatureMatrix, method: RankingMethod) -> Result<RankedList, RankingError> {
    if method == RankingMethod::CrRelevance {
        return fc_ranking(matrix);
    }
    matrix.require_both_classes()?;
    let scores = matrix
        .feature_ids()
        .par_iter()
        .map(|&feature| {
            let col = matrix.column(feature)?;
            let score = match method {
                RankingMethod::Chi2Normal => {
                    stats::chi_square_score(&split_by_class(col.values, col.labels, ClassLabel::Normal))
                }
                RankingMethod::Chi2Malware => {
                    stats::chi_square_score(&split_by_class(col.values, col.labels, ClassLabel::Malware))
                }
                RankingMethod::Anova => stats::anova_f(col.values, col.labels),
                RankingMethod::Mwu => stats::mann_whitney_u(col.values, col.labels).map(|u| u.key()),
                RankingMethod::Kw => stats::kruskal_wallis_h(col.values, col.labels),
                RankingMethod::CrRelevance => unreachable!(),
            };
            score
                .map(|s| (feature, s))
                .map_err(|source| RankingError::Statistic { method, feature, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    RankedList::from_scores(method, scores)
}
