use serde::{Deserialize, Serialize};

use super::{ClassifyError, TrainingSet};
use crate::dataset::{ClassLabel, FeatureMatrix};
use crate::features::FeatureId;

pub const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class: ClassLabel,
    pub prior: f64,
    pub means: Vec<f64>,
    /// Population variances, floored at [`VARIANCE_FLOOR`].
    pub variances: Vec<f64>,
}

impl ClassStats {
    fn log_posterior(&self, features: &[FeatureId], get: &dyn Fn(FeatureId) -> f64) -> f64 {
        let mut total = self.prior.ln();
        for (i, &f) in features.iter().enumerate() {
            let var = self.variances[i];
            let d = get(f) - self.means[i];
            total += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - d * d / (2.0 * var);
        }
        total
    }
}

/// Gaussian naive Bayes; only classes seen in training are kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    pub features: Vec<FeatureId>,
    pub classes: Vec<ClassStats>,
}

impl GaussianNb {
    /// The class with the larger log posterior; a tie goes to normal.
    pub(crate) fn predict_with(&self, get: &dyn Fn(FeatureId) -> f64) -> ClassLabel {
        let mut best = (ClassLabel::Normal, f64::NEG_INFINITY);
        for stats in &self.classes {
            let score = stats.log_posterior(&self.features, get);
            if score > best.1 {
                best = (stats.class, score);
            }
        }
        best.0
    }

    pub(crate) fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |msg: String| Err(ClassifyError::InvalidModel(msg));
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        for c in &self.classes {
            if c.means.len() != self.features.len() || c.variances.len() != self.features.len() {
                return bad(format!("{} parameters do not match the feature list", c.class));
            }
            if !(c.prior > 0.0 && c.prior <= 1.0) {
                return bad(format!("{} prior {} outside (0, 1]", c.class, c.prior));
            }
            if c.variances.iter().any(|v| !(*v >= VARIANCE_FLOOR && v.is_finite())) {
                return bad(format!("{} has a variance below the floor", c.class));
            }
            if c.means.iter().any(|m| !m.is_finite()) {
                return bad(format!("{} has a non-finite mean", c.class));
            }
        }
        Ok(())
    }
}

pub fn train_gnb(matrix: &FeatureMatrix, features: &[FeatureId]) -> Result<GaussianNb, ClassifyError> {
    let set = TrainingSet::new(matrix, features, None)?;
    let n = set.len() as f64;
    let mut classes = Vec::new();
    for class in ClassLabel::BOTH {
        let rows: Vec<usize> = (0..set.len()).filter(|&r| set.labels[r] == class).collect();
        if rows.is_empty() {
            continue;
        }
        let count = rows.len() as f64;
        let mut means = Vec::with_capacity(set.features.len());
        let mut variances = Vec::with_capacity(set.features.len());
        for col in &set.columns {
            let mean = rows.iter().map(|&r| col[r]).sum::<f64>() / count;
            let var = rows.iter().map(|&r| (col[r] - mean).powi(2)).sum::<f64>() / count;
            means.push(mean);
            variances.push(var.max(VARIANCE_FLOOR));
        }
        classes.push(ClassStats {
            class,
            prior: count / n,
            means,
            variances,
        });
    }
    Ok(GaussianNb {
        features: set.features,
        classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::tests::matrix;
    use crate::classify::TrainedModel;
    use ClassLabel::{Malware as M, Normal as N};

    #[test]
    fn equidistant_query_goes_to_normal() {
        let m = matrix(&[(FeatureId::F1, &[0.0, 2.0, 4.0, 6.0])], &[N, N, M, M]);
        let g = train_gnb(&m, &[FeatureId::F1]).unwrap();
        assert_eq!(g.classes[0].means, vec![1.0]);
        assert_eq!(g.classes[1].variances, vec![1.0]);
        assert_eq!(g.predict_with(&|_| 3.0), N);
        assert_eq!(g.predict_with(&|_| 3.5), M);
        assert_eq!(g.predict_with(&|_| 2.5), N);
    }

    #[test]
    fn constant_feature_uses_variance_floor() {
        let m = matrix(&[(FeatureId::F1, &[1.0, 1.0, 2.0, 2.0])], &[N, N, M, M]);
        let g = train_gnb(&m, &[FeatureId::F1]).unwrap();
        assert!(g.classes.iter().all(|c| c.variances == vec![VARIANCE_FLOOR]));
        assert_eq!(g.predict_with(&|_| 1.1), N);
        assert_eq!(g.predict_with(&|_| 1.9), M);
    }

    #[test]
    fn single_class_training_predicts_that_class() {
        let m = matrix(&[(FeatureId::F1, &[1.0, 2.0])], &[M, M]);
        let g = train_gnb(&m, &[FeatureId::F1]).unwrap();
        assert_eq!(g.predict_with(&|_| -100.0), M);
    }

    #[test]
    fn shifting_a_feature_keeps_predictions() {
        let xs = [0.5, 1.5, 1.0, 3.0, 3.5, 2.5, 2.0, 4.0];
        let ys = [1.0, 0.0, 2.0, 1.0, 3.0, 2.0, 0.5, 2.5];
        let labels = [N, N, N, M, M, M, N, M];
        let m = matrix(&[(FeatureId::F1, &xs), (FeatureId::F2, &ys)], &labels);
        let shifted_xs: Vec<f64> = xs.iter().map(|x| x + 64.0).collect();
        let shifted = matrix(&[(FeatureId::F1, &shifted_xs), (FeatureId::F2, &ys)], &labels);
        let a = TrainedModel::Gnb(train_gnb(&m, &[FeatureId::F1, FeatureId::F2]).unwrap());
        let b = TrainedModel::Gnb(train_gnb(&shifted, &[FeatureId::F1, FeatureId::F2]).unwrap());
        assert_eq!(a.predict_rows(&m).unwrap(), b.predict_rows(&shifted).unwrap());
    }
}
