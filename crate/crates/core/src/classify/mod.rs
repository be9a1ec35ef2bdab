//! Decision tree, random forest, bagging and Gaussian naive Bayes classifiers,
//! and the accuracy evaluators built on them.

use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ClassLabel, DatasetError, FeatureMatrix};
use crate::features::FeatureId;

mod cv;
mod ensemble;
mod gnb;
mod tree;

pub use cv::{cross_validate, cross_validate_with_plan, holdout, Confusion, CvReport, HoldoutReport};
pub use ensemble::{bootstrap_sample, max_features, train_ensemble, train_tree_on_sample, Ensemble, Member};
pub use gnb::{train_gnb, ClassStats, GaussianNb, VARIANCE_FLOOR};
pub use tree::{train_tree, Node, Tree, TreeParams};

pub const DEFAULT_N_ESTIMATORS: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("cannot train on an empty matrix")]
    Empty,
    #[error("no features selected")]
    NoFeatures,
    #[error("feature {0} is not available")]
    MissingFeature(FeatureId),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Tree,
    Forest,
    Bagging,
    Gnb,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Tree => "tree",
            ClassifierKind::Forest => "forest",
            ClassifierKind::Bagging => "bagging",
            ClassifierKind::Gnb => "gnb",
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tree" | "dt" | "decision-tree" => Ok(ClassifierKind::Tree),
            "forest" | "rf" | "random-forest" => Ok(ClassifierKind::Forest),
            "bagging" => Ok(ClassifierKind::Bagging),
            "gnb" | "nb" | "naive-bayes" => Ok(ClassifierKind::Gnb),
            _ => Err(format!("unknown classifier {s:?}; expected tree, forest, bagging or gnb")),
        }
    }
}

/// Which classifier to train and with what parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub tree: TreeParams,
    pub n_estimators: usize,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            kind: ClassifierKind::Tree,
            tree: TreeParams::default(),
            n_estimators: DEFAULT_N_ESTIMATORS,
        }
    }
}

impl ClassifierSpec {
    pub fn new(kind: ClassifierKind) -> Self {
        ClassifierSpec {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        self.tree.validate()?;
        if self.n_estimators == 0 && matches!(self.kind, ClassifierKind::Forest | ClassifierKind::Bagging) {
            return Err(ClassifyError::InvalidParams("n_estimators must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrainedModel {
    Tree(Tree),
    Forest(Ensemble),
    Bagging(Ensemble),
    Gnb(GaussianNb),
}

impl TrainedModel {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainedModel::Tree(_) => ClassifierKind::Tree,
            TrainedModel::Forest(_) => ClassifierKind::Forest,
            TrainedModel::Bagging(_) => ClassifierKind::Bagging,
            TrainedModel::Gnb(_) => ClassifierKind::Gnb,
        }
    }

    /// Features the model was trained on.
    pub fn features(&self) -> &[FeatureId] {
        match self {
            TrainedModel::Tree(t) => &t.features,
            TrainedModel::Forest(e) | TrainedModel::Bagging(e) => &e.features,
            TrainedModel::Gnb(g) => &g.features,
        }
    }

    fn predict_with(&self, get: &dyn Fn(FeatureId) -> f64) -> ClassLabel {
        match self {
            TrainedModel::Tree(t) => t.predict_with(get),
            TrainedModel::Forest(e) | TrainedModel::Bagging(e) => e.predict_with(get),
            TrainedModel::Gnb(g) => g.predict_with(get),
        }
    }

    /// Predicts one row given as parallel feature ids and values.
    pub fn predict(&self, features: &[FeatureId], row: &[f64]) -> Result<ClassLabel, ClassifyError> {
        let mut slots = [usize::MAX; 17];
        for (i, f) in features.iter().enumerate().take(row.len()) {
            slots[usize::from(f.number())] = i;
        }
        for &f in self.features() {
            if slots[usize::from(f.number())] == usize::MAX {
                return Err(ClassifyError::MissingFeature(f));
            }
        }
        Ok(self.predict_with(&|f| row[slots[usize::from(f.number())]]))
    }

    /// Predicts every row of `matrix`.
    pub fn predict_rows(&self, matrix: &FeatureMatrix) -> Result<Vec<ClassLabel>, ClassifyError> {
        let mut columns: [&[f64]; 17] = [&[]; 17];
        for &f in self.features() {
            let idx = matrix.column_index(f).ok_or(ClassifyError::MissingFeature(f))?;
            columns[usize::from(f.number())] = matrix.values_at(idx);
        }
        Ok((0..matrix.n_rows())
            .map(|r| self.predict_with(&|f| columns[usize::from(f.number())][r]))
            .collect())
    }

    /// Structural checks for models read from outside.
    pub fn validate(&self) -> Result<(), ClassifyError> {
        match self {
            TrainedModel::Tree(t) => t.validate(),
            TrainedModel::Forest(e) | TrainedModel::Bagging(e) => e.validate(),
            TrainedModel::Gnb(g) => g.validate(),
        }
    }

    pub fn from_json<R: Read>(reader: R) -> Result<Self, ClassifyError> {
        let model: TrainedModel = serde_json::from_reader(reader)?;
        model.validate()?;
        Ok(model)
    }
}

/// Trains `spec` on `features` of every row of `matrix`.
pub fn train(
    matrix: &FeatureMatrix,
    features: &[FeatureId],
    spec: &ClassifierSpec,
    seed: u64,
) -> Result<TrainedModel, ClassifyError> {
    spec.validate()?;
    Ok(match spec.kind {
        ClassifierKind::Tree => TrainedModel::Tree(train_tree(matrix, features, &spec.tree)?),
        ClassifierKind::Forest | ClassifierKind::Bagging => {
            let ensemble = train_ensemble(matrix, features, spec.kind, &spec.tree, spec.n_estimators, seed)?;
            if spec.kind == ClassifierKind::Forest {
                TrainedModel::Forest(ensemble)
            } else {
                TrainedModel::Bagging(ensemble)
            }
        }
        ClassifierKind::Gnb => TrainedModel::Gnb(train_gnb(matrix, features)?),
    })
}

/// Fraction of rows whose prediction matches the label.
pub fn accuracy(predicted: &[ClassLabel], actual: &[ClassLabel]) -> f64 {
    if actual.is_empty() {
        return 0.0;
    }
    let correct = predicted.iter().zip(actual).filter(|(p, a)| p == a).count();
    correct as f64 / actual.len() as f64
}

/// Training rows restricted to a feature subset, column-major.
///
/// Features are kept in ascending id order so that split search visits them
/// in the order its tie rule expects.
pub(crate) struct TrainingSet {
    pub features: Vec<FeatureId>,
    pub columns: Vec<Vec<f64>>,
    pub labels: Vec<ClassLabel>,
}

impl TrainingSet {
    pub fn new(matrix: &FeatureMatrix, features: &[FeatureId], rows: Option<&[usize]>) -> Result<Self, ClassifyError> {
        if features.is_empty() {
            return Err(ClassifyError::NoFeatures);
        }
        let mut features = features.to_vec();
        features.sort();
        features.dedup();
        let all: Vec<usize>;
        let rows = match rows {
            Some(r) => r,
            None => {
                all = (0..matrix.n_rows()).collect();
                &all
            }
        };
        if rows.is_empty() {
            return Err(ClassifyError::Empty);
        }
        let columns = features
            .iter()
            .map(|&f| {
                let idx = matrix.column_index(f).ok_or(ClassifyError::MissingFeature(f))?;
                let values = matrix.values_at(idx);
                Ok(rows.iter().map(|&r| values[r]).collect())
            })
            .collect::<Result<Vec<Vec<f64>>, ClassifyError>>()?;
        let labels = rows.iter().map(|&r| matrix.labels()[r]).collect();
        Ok(TrainingSet {
            features,
            columns,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }
}

/// Majority of `(normal, malware)` counts; a tie goes to normal.
pub(crate) fn majority(normal: usize, malware: usize) -> ClassLabel {
    if malware > normal {
        ClassLabel::Malware
    } else {
        ClassLabel::Normal
    }
}
