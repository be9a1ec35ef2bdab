use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, FeatureSampler};
use super::{majority, ClassifierKind, ClassifyError, TrainingSet, Tree, TreeParams};
use crate::dataset::{ClassLabel, FeatureMatrix};
use crate::features::FeatureId;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    /// Index into the ensemble's bootstrap and feature-sampling streams.
    pub index: u64,
    pub tree: Tree,
}

/// Bootstrap-aggregated trees. Forests also sample split candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub features: Vec<FeatureId>,
    pub seed: u64,
    /// Candidate features per split; `None` considers all of them.
    pub max_features: Option<usize>,
    pub members: Vec<Member>,
}

impl Ensemble {
    /// Majority vote of the members; a tie goes to normal.
    pub(crate) fn predict_with(&self, get: &dyn Fn(FeatureId) -> f64) -> ClassLabel {
        let malware = self
            .members
            .iter()
            .filter(|m| m.tree.predict_with(get) == ClassLabel::Malware)
            .count();
        majority(self.members.len() - malware, malware)
    }

    pub(crate) fn validate(&self) -> Result<(), ClassifyError> {
        if self.members.is_empty() {
            return Err(ClassifyError::InvalidModel("ensemble has no members".into()));
        }
        for (i, m) in self.members.iter().enumerate() {
            if let Some(f) = m.tree.features.iter().find(|f| !self.features.contains(f)) {
                return Err(ClassifyError::InvalidModel(format!("member {i} uses untrained feature {f}")));
            }
            m.tree.validate()?;
        }
        Ok(())
    }
}

/// `⌈√d⌉` candidate features per split.
pub fn max_features(d: usize) -> usize {
    ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1))
}

/// `n` row indices drawn with replacement from the stream
/// `(seed, "bootstrap", member)`.
pub fn bootstrap_sample(n: usize, seed: u64, member: u64) -> Vec<usize> {
    let mut rng = seed::stream(seed, "bootstrap", member);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Trains one tree on the given rows (repeats allowed).
///
/// With `split_features = Some((k, seed, member))`, each split considers `k`
/// features drawn from the stream `(seed, "split-features", member)`.
pub fn train_tree_on_sample(
    matrix: &FeatureMatrix,
    features: &[FeatureId],
    params: &TreeParams,
    sample: &[usize],
    split_features: Option<(usize, u64, u64)>,
) -> Result<Tree, ClassifyError> {
    params.validate()?;
    let set = TrainingSet::new(matrix, features, Some(sample))?;
    let sampler = split_features.map(|(per_split, s, member)| FeatureSampler {
        per_split,
        rng: seed::stream(s, "split-features", member),
    });
    Ok(grow(&set, params, sampler))
}

/// Trains `n_estimators` trees on bootstrap samples of `matrix`.
pub fn train_ensemble(
    matrix: &FeatureMatrix,
    features: &[FeatureId],
    kind: ClassifierKind,
    params: &TreeParams,
    n_estimators: usize,
    seed: u64,
) -> Result<Ensemble, ClassifyError> {
    let forest = match kind {
        ClassifierKind::Forest => true,
        ClassifierKind::Bagging => false,
        other => return Err(ClassifyError::InvalidParams(format!("{other} is not an ensemble"))),
    };
    if n_estimators == 0 {
        return Err(ClassifyError::InvalidParams("n_estimators must be at least 1".into()));
    }
    if matrix.is_empty() {
        return Err(ClassifyError::Empty);
    }
    let mut trained: Vec<FeatureId> = features.to_vec();
    trained.sort();
    trained.dedup();
    let per_split = forest.then(|| max_features(trained.len()));
    let members = (0..n_estimators as u64)
        .into_par_iter()
        .map(|i| {
            let sample = bootstrap_sample(matrix.n_rows(), seed, i);
            let tree = train_tree_on_sample(matrix, &trained, params, &sample, per_split.map(|k| (k, seed, i)))?;
            Ok(Member { index: i, tree })
        })
        .collect::<Result<Vec<_>, ClassifyError>>()?;
    Ok(Ensemble {
        features: trained,
        seed,
        max_features: per_split,
        members,
    })
}
