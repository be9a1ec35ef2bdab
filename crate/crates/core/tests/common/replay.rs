//! Recorded rankings and a lookup-table evaluator for replaying a selection run.

use std::collections::HashMap;
use std::fs::File;

use corrnet::classify::ClassifyError;
use corrnet::features::parse_feature_list;
use corrnet::ranking::{PairQueue, RankedList, RankingMethod};
use corrnet::selection::AccuracyEvaluator;
use corrnet::FeatureId;

use super::fixture;

pub fn fc_list() -> RankedList {
    let file = File::open(fixture("replay/crrelevance_ranking.csv")).unwrap();
    RankedList::read_csv(RankingMethod::CrRelevance, file).unwrap()
}

pub fn ff_list() -> PairQueue {
    PairQueue::read_csv(File::open(fixture("replay/nmrs_pairs.csv")).unwrap()).unwrap()
}

/// Per-class crRelevance scores: (feature, normal, malware, abs_diff).
pub fn class_scores() -> Vec<(FeatureId, f64, f64, f64)> {
    let mut reader = csv::Reader::from_path(fixture("replay/crrelevance_scores.csv")).unwrap();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            let num = |i: usize| r[i].parse::<f64>().unwrap();
            (r[0].parse().unwrap(), num(1), num(2), num(3))
        })
        .collect()
}

/// Answers with recorded accuracies; sets that were never recorded score 0.
pub struct StubEvaluator {
    table: HashMap<Vec<FeatureId>, f64>,
}

impl StubEvaluator {
    pub fn load() -> Self {
        let mut reader = csv::Reader::from_path(fixture("replay/dt_accuracy.csv")).unwrap();
        let table = reader
            .records()
            .map(|r| {
                let r = r.unwrap();
                let mut features = parse_feature_list(&r[0]).unwrap();
                features.sort();
                (features, r[1].parse::<f64>().unwrap())
            })
            .collect();
        StubEvaluator { table }
    }

    pub fn recorded(&self, features: &[FeatureId]) -> Option<f64> {
        let mut key = features.to_vec();
        key.sort();
        self.table.get(&key).copied()
    }
}

impl AccuracyEvaluator for StubEvaluator {
    fn accuracy(&self, features: &[FeatureId]) -> Result<f64, ClassifyError> {
        Ok(self.recorded(features).unwrap_or(0.0))
    }

    fn describe(&self) -> String {
        "recorded decision-tree accuracies".into()
    }
}
