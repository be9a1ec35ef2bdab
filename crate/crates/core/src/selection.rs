//! Classifier-in-the-loop feature elimination driven by NMRS pairs.
//!
//! Starting from every feature, the loop repeatedly takes the most concordant
//! pair whose members are both still active, drops the member that the
//! feature–class ranking likes less, and re-measures accuracy. Eliminations
//! are committed whether or not accuracy improves; the best subset seen is
//! returned alongside the full trace.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classify::{self, ClassifierSpec, ClassifyError};
use crate::dataset::{FeatureMatrix, FoldPlan};
use crate::features::{format_feature_list, FeatureId};
use crate::ranking::{PairQueue, PairScore, RankedList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Run until `min_active` features remain or no pair is left.
    #[default]
    Exhaustive,
    /// Also stop right after the first step whose accuracy drops.
    StopOnDecline,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Exhaustive => "exhaustive",
            Policy::StopOnDecline => "stop-on-decline",
        })
    }
}

impl FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exhaustive" => Ok(Policy::Exhaustive),
            "stop-on-decline" => Ok(Policy::StopOnDecline),
            _ => Err(format!("unknown policy {s:?}; expected exhaustive or stop-on-decline")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionOptions {
    pub policy: Policy,
    pub min_active: usize,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            policy: Policy::Exhaustive,
            min_active: 1,
        }
    }
}

/// Accuracy of a classifier restricted to a feature subset.
pub trait AccuracyEvaluator: Sync {
    fn accuracy(&self, features: &[FeatureId]) -> Result<f64, ClassifyError>;

    /// Short description for reports.
    fn describe(&self) -> String;
}

/// k-fold cross-validated accuracy; the fold plan is fixed across calls.
pub struct CvEvaluator<'a> {
    pub matrix: &'a FeatureMatrix,
    pub spec: ClassifierSpec,
    pub plan: FoldPlan,
}

impl<'a> CvEvaluator<'a> {
    pub fn new(matrix: &'a FeatureMatrix, spec: ClassifierSpec, k: usize, seed: u64) -> Result<Self, ClassifyError> {
        let plan = FoldPlan::stratified(matrix.labels(), k, seed)?;
        Ok(CvEvaluator { matrix, spec, plan })
    }
}

impl AccuracyEvaluator for CvEvaluator<'_> {
    fn accuracy(&self, features: &[FeatureId]) -> Result<f64, ClassifyError> {
        classify::cross_validate_with_plan(self.matrix, features, &self.spec, &self.plan).map(|r| r.mean_accuracy)
    }

    fn describe(&self) -> String {
        format!("{} {}-fold cv", self.spec.kind, self.plan.k)
    }
}

/// Train on one matrix, score on another.
pub struct HoldoutEvaluator<'a> {
    pub train: &'a FeatureMatrix,
    pub test: &'a FeatureMatrix,
    pub spec: ClassifierSpec,
    pub seed: u64,
}

impl AccuracyEvaluator for HoldoutEvaluator<'_> {
    fn accuracy(&self, features: &[FeatureId]) -> Result<f64, ClassifyError> {
        classify::holdout(self.train, self.test, features, &self.spec, self.seed).map(|r| r.accuracy)
    }

    fn describe(&self) -> String {
        format!("{} holdout", self.spec.kind)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 1-based; step 0 is the baseline.
    pub step: usize,
    pub pair: PairScore,
    pub victim: FeatureId,
    /// Active features after the elimination, ascending.
    pub features: Vec<FeatureId>,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub evaluator: String,
    pub policy: Policy,
    pub min_active: usize,
    pub initial_features: Vec<FeatureId>,
    pub baseline_accuracy: f64,
    pub trace: Vec<TraceEntry>,
    pub best_subset: Vec<FeatureId>,
    pub d_max: f64,
}

impl SelectionOutcome {
    pub fn victims(&self) -> Vec<FeatureId> {
        self.trace.iter().map(|e| e.victim).collect()
    }

    /// `step,pair,victim,features,accuracy` with the baseline as step 0.
    pub fn write_trace_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        w.write_record(["step", "pair", "victim", "features", "accuracy"])?;
        w.write_record([
            "0".to_string(),
            String::new(),
            String::new(),
            format_feature_list(&self.initial_features),
            self.baseline_accuracy.to_string(),
        ])?;
        for e in &self.trace {
            w.write_record([
                e.step.to_string(),
                e.pair.to_string(),
                e.victim.to_string(),
                format_feature_list(&e.features),
                e.accuracy.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SelectionError {
    #[error("{0}")]
    Mismatch(String),
    #[error("min_active must be at least 1")]
    InvalidMinActive,
    #[error("accuracy {accuracy} for {features:?} is outside [0, 1]")]
    BadAccuracy { features: Vec<FeatureId>, accuracy: f64 },
    /// The evaluator failed; `partial` holds every step completed before it.
    #[error("evaluation failed after {} step(s): {source}", partial.trace.len())]
    Evaluator {
        partial: Box<SelectionOutcome>,
        source: ClassifyError,
    },
}

impl SelectionError {
    pub fn partial(&self) -> Option<&SelectionOutcome> {
        match self {
            SelectionError::Evaluator { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// Of the pair's members, the one `fc` ranks lower: the worse score under
/// the list's direction, then the worse rank position, then the higher id.
fn victim_of(pair: &PairScore, fc: &RankedList) -> FeatureId {
    let key = |f: FeatureId| {
        let score = fc.score_of(f).expect("checked against fc");
        let goodness = if fc.method.descending() { score } else { -score };
        (goodness, fc.rank_of(f).expect("checked against fc"), f)
    };
    let (a, b) = (key(pair.a), key(pair.b));
    let a_worse = match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => (a.1, a.2) > (b.1, b.2),
    };
    if a_worse {
        pair.a
    } else {
        pair.b
    }
}

fn sorted(features: &[FeatureId]) -> Vec<FeatureId> {
    let mut v = features.to_vec();
    v.sort();
    v
}

/// Runs the elimination loop over `features`.
pub fn select_features(
    features: &[FeatureId],
    fc: &RankedList,
    ff: &PairQueue,
    evaluator: &dyn AccuracyEvaluator,
    options: &SelectionOptions,
) -> Result<SelectionOutcome, SelectionError> {
    if options.min_active == 0 {
        return Err(SelectionError::InvalidMinActive);
    }
    let mut active = sorted(features);
    active.dedup();
    if active.len() != features.len() {
        return Err(SelectionError::Mismatch("duplicate features in the starting set".into()));
    }
    if let Some(f) = active.iter().find(|&&f| fc.rank_of(f).is_none()) {
        return Err(SelectionError::Mismatch(format!("feature {f} is missing from the {} ranking", fc.method)));
    }
    if let Some(p) = ff.pairs.iter().find(|p| !active.contains(&p.a) || !active.contains(&p.b)) {
        return Err(SelectionError::Mismatch(format!("pair {p} references a feature outside the starting set")));
    }

    let mut outcome = SelectionOutcome {
        evaluator: evaluator.describe(),
        policy: options.policy,
        min_active: options.min_active,
        initial_features: active.clone(),
        baseline_accuracy: 0.0,
        trace: Vec::new(),
        best_subset: active.clone(),
        d_max: 0.0,
    };
    let evaluate = |outcome: &SelectionOutcome, features: &[FeatureId]| match evaluator.accuracy(features) {
        Ok(a) if (0.0..=1.0).contains(&a) => Ok(a),
        Ok(accuracy) => Err(SelectionError::BadAccuracy {
            features: features.to_vec(),
            accuracy,
        }),
        Err(source) => Err(SelectionError::Evaluator {
            partial: Box::new(outcome.clone()),
            source,
        }),
    };

    let baseline = evaluate(&outcome, &active)?;
    outcome.baseline_accuracy = baseline;
    outcome.d_max = baseline;
    log::info!("baseline {} features: {baseline}", active.len());

    let mut queue: Vec<PairScore> = ff.pairs.clone();
    let mut previous = baseline;
    while active.len() > options.min_active {
        let Some(pos) = queue.iter().position(|p| active.contains(&p.a) && active.contains(&p.b)) else {
            break;
        };
        let pair = queue[pos];
        let victim = victim_of(&pair, fc);
        active.retain(|&f| f != victim);
        queue.retain(|p| !p.contains(victim));

        let accuracy = evaluate(&outcome, &active)?;
        let step = outcome.trace.len() + 1;
        log::info!("step {step}: pair {pair} drops {victim}, accuracy {accuracy}");
        outcome.trace.push(TraceEntry {
            step,
            pair,
            victim,
            features: active.clone(),
            accuracy,
        });
        if accuracy > outcome.d_max {
            outcome.d_max = accuracy;
            outcome.best_subset = active.clone();
        }
        if options.policy == Policy::StopOnDecline && accuracy < previous {
            break;
        }
        previous = accuracy;
    }
    Ok(outcome)
}
