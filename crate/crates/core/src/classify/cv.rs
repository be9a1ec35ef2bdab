use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, ClassifierKind, ClassifierSpec, ClassifyError};
use crate::dataset::{ClassLabel, FeatureMatrix, FoldPlan};
use crate::features::FeatureId;
use crate::seed;

/// Counts with malware as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[ClassLabel], actual: &[ClassLabel]) -> Self {
        let mut c = Confusion::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (ClassLabel::Malware, ClassLabel::Malware) => c.true_positive += 1,
                (ClassLabel::Malware, ClassLabel::Normal) => c.false_positive += 1,
                (ClassLabel::Normal, ClassLabel::Normal) => c.true_negative += 1,
                (ClassLabel::Normal, ClassLabel::Malware) => c.false_negative += 1,
            }
        }
        c
    }

    pub fn add(&mut self, other: &Confusion) {
        self.true_positive += other.true_positive;
        self.false_positive += other.false_positive;
        self.true_negative += other.true_negative;
        self.false_negative += other.false_negative;
    }

    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.true_positive + self.true_negative, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_positive)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positive, self.true_positive + self.false_negative)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub classifier: ClassifierKind,
    pub features: Vec<FeatureId>,
    pub k: usize,
    pub seed: u64,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Pooled over all held-out folds.
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
}

/// Stratified k-fold accuracy of `spec` on `features`.
pub fn cross_validate(
    matrix: &FeatureMatrix,
    features: &[FeatureId],
    spec: &ClassifierSpec,
    k: usize,
    seed: u64,
) -> Result<CvReport, ClassifyError> {
    let plan = FoldPlan::stratified(matrix.labels(), k, seed)?;
    cross_validate_with_plan(matrix, features, spec, &plan)
}

/// Cross-validation over an existing fold plan. Fold `f` trains with the
/// seed `(plan.seed, "cv-model", f)`.
pub fn cross_validate_with_plan(
    matrix: &FeatureMatrix,
    features: &[FeatureId],
    spec: &ClassifierSpec,
    plan: &FoldPlan,
) -> Result<CvReport, ClassifyError> {
    spec.validate()?;
    if plan.assignment.len() != matrix.n_rows() {
        return Err(ClassifyError::InvalidParams(format!(
            "fold plan covers {} rows, matrix has {}",
            plan.assignment.len(),
            matrix.n_rows()
        )));
    }
    let projected = matrix.project(features)?;
    let folds = (0..plan.k)
        .into_par_iter()
        .map(|fold| {
            let train_rows = projected.select_rows(&plan.train_rows(fold));
            let test_rows = projected.select_rows(&plan.test_rows(fold));
            let model = train(&train_rows, features, spec, seed::derive_seed(plan.seed, "cv-model", fold as u64))?;
            let predicted = model.predict_rows(&test_rows)?;
            Ok(Confusion::from_predictions(&predicted, test_rows.labels()))
        })
        .collect::<Result<Vec<_>, ClassifyError>>()?;
    let fold_accuracies: Vec<f64> = folds.iter().map(Confusion::accuracy).collect();
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    let mut confusion = Confusion::default();
    for c in &folds {
        confusion.add(c);
    }
    Ok(CvReport {
        classifier: spec.kind,
        features: features.to_vec(),
        k: plan.k,
        seed: plan.seed,
        fold_accuracies,
        mean_accuracy,
        confusion,
        precision: confusion.precision(),
        recall: confusion.recall(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub classifier: ClassifierKind,
    pub features: Vec<FeatureId>,
    pub seed: u64,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub precision: f64,
    pub recall: f64,
}

/// Trains on `train` and scores on `test`.
pub fn holdout(
    train_matrix: &FeatureMatrix,
    test_matrix: &FeatureMatrix,
    features: &[FeatureId],
    spec: &ClassifierSpec,
    seed: u64,
) -> Result<HoldoutReport, ClassifyError> {
    if test_matrix.is_empty() {
        return Err(ClassifyError::Empty);
    }
    let model = train(train_matrix, features, spec, seed::derive_seed(seed, "holdout-model", 0))?;
    let predicted = model.predict_rows(test_matrix)?;
    let confusion = Confusion::from_predictions(&predicted, test_matrix.labels());
    Ok(HoldoutReport {
        classifier: spec.kind,
        features: features.to_vec(),
        seed,
        accuracy: confusion.accuracy(),
        confusion,
        precision: confusion.precision(),
        recall: confusion.recall(),
    })
}
