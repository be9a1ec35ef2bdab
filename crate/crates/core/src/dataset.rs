//! Labelled feature matrices, their CSV form, and stratified fold plans.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::features::{FeatureId, FeatureVector};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Normal,
    Malware,
}

impl ClassLabel {
    pub const BOTH: [ClassLabel; 2] = [ClassLabel::Normal, ClassLabel::Malware];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Normal => "normal",
            ClassLabel::Malware => "malware",
        }
    }

    pub fn index(self) -> usize {
        match self {
            ClassLabel::Normal => 0,
            ClassLabel::Malware => 1,
        }
    }

    pub fn other(self) -> ClassLabel {
        match self {
            ClassLabel::Normal => ClassLabel::Malware,
            ClassLabel::Malware => ClassLabel::Normal,
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(ClassLabel::Normal),
            "malware" => Ok(ClassLabel::Malware),
            other => Err(format!("unknown class label {other:?}; expected normal or malware")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("wrong header: expected {expected:?}, found {found:?}")]
    WrongHeader { expected: String, found: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount { line: u64, expected: usize, found: usize },
    #[error("line {line}, column {column}: cannot parse {value:?} as a finite number")]
    BadNumber { line: u64, column: String, value: String },
    #[error("line {line}: unknown label {value:?}")]
    UnknownLabel { line: u64, value: String },
    #[error("feature {0} is not a column of this matrix")]
    UnknownFeature(FeatureId),
    #[error("row has {found} values but the matrix has {expected} features")]
    RowWidth { expected: usize, found: usize },
    #[error("feature columns differ: {left:?} vs {right:?}")]
    FeatureMismatch { left: Vec<FeatureId>, right: Vec<FeatureId> },
    #[error("no {0} rows in the matrix")]
    MissingClass(ClassLabel),
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
    #[error("class {class} has {found} rows, fewer than the {needed} folds requested")]
    TooFewRows { class: ClassLabel, needed: usize, found: usize },
}

/// Column-major table of feature values with one class label per row.
///
/// Row order is ingestion order and is never changed implicitly.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    feature_ids: Vec<FeatureId>,
    columns: Vec<Vec<f64>>,
    labels: Vec<ClassLabel>,
    flow_ids: Vec<String>,
}

/// One feature column with the labels of the same rows.
#[derive(Debug, Clone, Copy)]
pub struct Column<'a> {
    pub values: &'a [f64],
    pub labels: &'a [ClassLabel],
}

impl FeatureMatrix {
    /// An empty matrix over `feature_ids`.
    pub fn new(feature_ids: Vec<FeatureId>) -> Self {
        let columns = vec![Vec::new(); feature_ids.len()];
        FeatureMatrix {
            feature_ids,
            columns,
            labels: Vec::new(),
            flow_ids: Vec::new(),
        }
    }

    /// An empty matrix over all sixteen features.
    pub fn full() -> Self {
        Self::new(FeatureId::all().collect())
    }

    pub fn from_vectors<I: IntoIterator<Item = FeatureVector>>(vectors: I) -> Self {
        let mut m = Self::full();
        for v in vectors {
            m.push_row(v.flow_id, v.values.as_slice(), v.label)
                .expect("feature vectors always have sixteen values");
        }
        m
    }

    pub fn push_row(&mut self, flow_id: impl Into<String>, values: &[f64], label: ClassLabel) -> Result<(), DatasetError> {
        if values.len() != self.feature_ids.len() {
            return Err(DatasetError::RowWidth {
                expected: self.feature_ids.len(),
                found: values.len(),
            });
        }
        for (column, &v) in self.columns.iter_mut().zip(values) {
            column.push(v);
        }
        self.labels.push(label);
        self.flow_ids.push(flow_id.into());
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_ids(&self) -> &[FeatureId] {
        &self.feature_ids
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn flow_ids(&self) -> &[String] {
        &self.flow_ids
    }

    pub fn column_index(&self, id: FeatureId) -> Option<usize> {
        self.feature_ids.iter().position(|&f| f == id)
    }

    /// Values of feature `id` by column position.
    pub fn values_at(&self, column: usize) -> &[f64] {
        &self.columns[column]
    }

    pub fn column(&self, id: FeatureId) -> Result<Column<'_>, DatasetError> {
        let idx = self.column_index(id).ok_or(DatasetError::UnknownFeature(id))?;
        Ok(Column {
            values: &self.columns[idx],
            labels: &self.labels,
        })
    }

    pub fn row_values(&self, row: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[row]).collect()
    }

    /// Row counts as `(normal, malware)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let malware = self.labels.iter().filter(|&&l| l == ClassLabel::Malware).count();
        (self.labels.len() - malware, malware)
    }

    pub fn require_both_classes(&self) -> Result<(), DatasetError> {
        let (normal, malware) = self.class_counts();
        if normal == 0 {
            return Err(DatasetError::MissingClass(ClassLabel::Normal));
        }
        if malware == 0 {
            return Err(DatasetError::MissingClass(ClassLabel::Malware));
        }
        Ok(())
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &FeatureMatrix) -> Result<FeatureMatrix, DatasetError> {
        if self.feature_ids != other.feature_ids {
            return Err(DatasetError::FeatureMismatch {
                left: self.feature_ids.clone(),
                right: other.feature_ids.clone(),
            });
        }
        let mut out = self.clone();
        for (column, extra) in out.columns.iter_mut().zip(&other.columns) {
            column.extend_from_slice(extra);
        }
        out.labels.extend_from_slice(&other.labels);
        out.flow_ids.extend_from_slice(&other.flow_ids);
        Ok(out)
    }

    /// The same rows restricted to `features`, in the given order.
    pub fn project(&self, features: &[FeatureId]) -> Result<FeatureMatrix, DatasetError> {
        let columns = features
            .iter()
            .map(|&f| {
                self.column_index(f)
                    .map(|i| self.columns[i].clone())
                    .ok_or(DatasetError::UnknownFeature(f))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureMatrix {
            feature_ids: features.to_vec(),
            columns,
            labels: self.labels.clone(),
            flow_ids: self.flow_ids.clone(),
        })
    }

    /// A matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            feature_ids: self.feature_ids.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            flow_ids: rows.iter().map(|&r| self.flow_ids[r].clone()).collect(),
        }
    }

    /// Row indices of one class, in row order.
    pub fn rows_of(&self, class: ClassLabel) -> Vec<usize> {
        (0..self.n_rows()).filter(|&r| self.labels[r] == class).collect()
    }
}

/// The CSV header for `features`: `flow_id,<features>,label`.
pub fn csv_header(features: &[FeatureId]) -> Vec<String> {
    std::iter::once("flow_id".to_string())
        .chain(features.iter().map(|f| f.to_string()))
        .chain(std::iter::once("label".to_string()))
        .collect()
}

/// The extractor's header: `flow_id,F1,...,F16,label`.
pub fn full_csv_header() -> Vec<String> {
    csv_header(&FeatureId::all().collect::<Vec<_>>())
}

/// Formats a feature value as the shortest decimal string that parses back to
/// the same `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v}")
}

/// Feature columns named by a header, if it has the `flow_id,...,label` shape
/// with distinct feature ids in between.
fn header_features(header: &[String]) -> Option<Vec<FeatureId>> {
    let (first, rest) = header.split_first()?;
    let (last, middle) = rest.split_last()?;
    if first != "flow_id" || last != "label" || middle.is_empty() {
        return None;
    }
    let mut features = Vec::with_capacity(middle.len());
    for name in middle {
        let id: FeatureId = name.parse().ok()?;
        if name != &id.to_string() || features.contains(&id) {
            return None;
        }
        features.push(id);
    }
    Some(features)
}

/// Reads a feature CSV.
///
/// The header is normally the full `flow_id,F1,...,F16,label`; a projected
/// matrix written by [`write_csv`] names only its own columns.
pub fn read_csv<R: Read>(reader: R) -> Result<FeatureMatrix, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let features = header_features(&found).ok_or_else(|| DatasetError::WrongHeader {
        expected: full_csv_header().join(","),
        found: found.join(","),
    })?;
    let width = features.len();
    let mut matrix = FeatureMatrix::new(features);
    let mut values = vec![0.0f64; width];
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != found.len() {
            return Err(DatasetError::FieldCount {
                line,
                expected: found.len(),
                found: record.len(),
            });
        }
        for (i, slot) in values.iter_mut().enumerate() {
            let cell = &record[i + 1];
            *slot = cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::BadNumber {
                    line,
                    column: found[i + 1].clone(),
                    value: cell.to_string(),
                })?;
        }
        let label_cell = &record[width + 1];
        let label = label_cell.parse().map_err(|_| DatasetError::UnknownLabel {
            line,
            value: label_cell.to_string(),
        })?;
        matrix.push_row(&record[0], &values, label)?;
    }
    Ok(matrix)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<FeatureMatrix, DatasetError> {
    read_csv(BufReader::new(File::open(path)?))
}

pub fn write_csv<W: Write>(matrix: &FeatureMatrix, writer: W) -> Result<(), DatasetError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(csv_header(matrix.feature_ids()))?;
    let mut record: Vec<String> = Vec::with_capacity(matrix.feature_ids().len() + 2);
    for row in 0..matrix.n_rows() {
        record.clear();
        record.push(matrix.flow_ids[row].clone());
        record.extend(matrix.columns.iter().map(|c| format_value(c[row])));
        record.push(matrix.labels[row].to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    write_csv(matrix, BufWriter::new(File::create(path)?))
}

/// Assignment of rows to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// `assignment[row]` is the fold holding `row` out.
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    /// Stratified plan over `labels`.
    ///
    /// Each class's rows are shuffled with the stream `(seed, "folds", class)`
    /// and dealt round-robin, so per-class fold sizes differ by at most one.
    /// Malware dealing starts where normal dealing stopped, which also keeps
    /// total fold sizes within one of each other.
    pub fn stratified(labels: &[ClassLabel], k: usize, seed: u64) -> Result<FoldPlan, DatasetError> {
        if k < 2 {
            return Err(DatasetError::InvalidFoldCount(k));
        }
        let mut assignment = vec![0usize; labels.len()];
        let mut start = 0usize;
        for class in ClassLabel::BOTH {
            let mut rows: Vec<usize> = (0..labels.len()).filter(|&r| labels[r] == class).collect();
            if rows.len() < k {
                return Err(DatasetError::TooFewRows {
                    class,
                    needed: k,
                    found: rows.len(),
                });
            }
            rows.shuffle(&mut seed::stream(seed, "folds", class.index() as u64));
            for (pos, &row) in rows.iter().enumerate() {
                assignment[row] = (start + pos) % k;
            }
            start = (start + rows.len()) % k;
        }
        Ok(FoldPlan { k, seed, assignment })
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&r| self.assignment[r] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&r| self.assignment[r] != fold).collect()
    }
}

pub fn stratified_kfold(matrix: &FeatureMatrix, k: usize, seed: u64) -> Result<FoldPlan, DatasetError> {
    FoldPlan::stratified(matrix.labels(), k, seed)
}
