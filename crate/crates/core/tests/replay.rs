mod common;

use common::replay::{class_scores, fc_list, ff_list, StubEvaluator};
use corrnet::selection::{select_features, Policy, SelectionOptions};
use corrnet::FeatureId as F;

const PREFIX: [F; 8] = [F::F1, F::F8, F::F9, F::F14, F::F6, F::F2, F::F16, F::F10];

fn options(policy: Policy, min_active: usize) -> SelectionOptions {
    SelectionOptions { policy, min_active }
}

#[test]
fn recorded_scores_are_consistent() {
    let scores = class_scores();
    assert_eq!(scores.len(), 16);
    for (f, normal, malware, diff) in &scores {
        assert!(((normal - malware).abs() - diff).abs() < 1e-8, "{f}");
    }
    assert!(scores.windows(2).all(|w| w[0].3 > w[1].3));
    let fc = fc_list();
    assert_eq!(fc.features(), scores.iter().map(|s| s.0).collect::<Vec<_>>());
    assert_eq!(ff_list().len(), 120);
}

#[test]
fn replay_reproduces_the_recorded_run() {
    let stub = StubEvaluator::load();
    let all: Vec<F> = F::all().collect();
    let outcome = select_features(&all, &fc_list(), &ff_list(), &stub, &options(Policy::Exhaustive, 1)).unwrap();
    let victims = outcome.victims();
    assert_eq!(victims[..8], PREFIX);
    assert_eq!(outcome.baseline_accuracy, 0.8112);
    assert_eq!(outcome.best_subset, vec![F::F3, F::F12]);
    assert_eq!(outcome.d_max, 0.995);
    assert_eq!(victims.len(), 15);
    for entry in &outcome.trace[..8] {
        assert_eq!(Some(entry.accuracy), stub.recorded(&entry.features), "step {}", entry.step);
    }
}

#[test]
fn stop_on_decline_halts_after_the_first_drop() {
    let stub = StubEvaluator::load();
    let all: Vec<F> = F::all().collect();
    let outcome = select_features(&all, &fc_list(), &ff_list(), &stub, &options(Policy::StopOnDecline, 1)).unwrap();
    assert_eq!(outcome.victims(), vec![F::F1, F::F8]);
    assert_eq!(outcome.best_subset.len(), 15);
    assert_eq!(outcome.d_max, 0.8162);
}

#[test]
fn min_active_keeps_enough_features() {
    let stub = StubEvaluator::load();
    let all: Vec<F> = F::all().collect();
    for min_active in [2, 5, 16] {
        let outcome = select_features(&all, &fc_list(), &ff_list(), &stub, &options(Policy::Exhaustive, min_active)).unwrap();
        let last = outcome.trace.last().map_or(16, |e| e.features.len());
        assert!(last >= min_active);
        assert_eq!(outcome.victims().len(), 16 - min_active);
    }
}

#[test]
fn trace_csv_lists_every_step() {
    let stub = StubEvaluator::load();
    let all: Vec<F> = F::all().collect();
    let outcome = select_features(&all, &fc_list(), &ff_list(), &stub, &options(Policy::Exhaustive, 1)).unwrap();
    let mut out = Vec::new();
    outcome.write_trace_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,pair,victim,features,accuracy");
    assert!(lines[1].starts_with("0,,,F1 F2 F3"));
    assert_eq!(lines[2], "1,F1-F12,F1,F2 F3 F4 F5 F6 F7 F8 F9 F10 F11 F12 F13 F14 F15 F16,0.8162");
    assert_eq!(lines.len(), 2 + outcome.trace.len());
}
