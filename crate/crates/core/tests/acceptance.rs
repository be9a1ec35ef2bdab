//! One pass/fail line per acceptance criterion. Runs without the libtest
//! harness so the lines always reach the terminal.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use corrnet::classify::{accuracy, cross_validate, train, ClassifierSpec};
use corrnet::dataset::load_csv;
use corrnet::features::compute_features;
use corrnet::flow::{assemble_flows, IdleTimeout};
use corrnet::selection::{select_features, Policy, SelectionOptions};
use corrnet::seed::stream;
use corrnet::stats::{anova_f, chi_square_score, cr_relevance, kruskal_wallis_h, mann_whitney_u, nmrs};
use corrnet::{ClassLabel, FeatureId as F, FeatureMatrix, FoldPlan};
use rand::seq::SliceRandom;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> Result<(), String> {
    ensure(elapsed < Duration::from_secs(limit_secs), || {
        format!("took {elapsed:.2?}, limit {limit_secs} s")
    })
}

fn random_labels(rng: &mut impl Rng, n: usize) -> Vec<ClassLabel> {
    loop {
        let labels: Vec<ClassLabel> = (0..n)
            .map(|_| if rng.random_bool(0.5) { ClassLabel::Malware } else { ClassLabel::Normal })
            .collect();
        if ClassLabel::BOTH.iter().all(|c| labels.contains(c)) {
            return labels;
        }
    }
}

/// Largest single-class value interval per class, by enumerating every pair of
/// distinct values as interval bounds.
fn interval_oracle(values: &[f64], labels: &[ClassLabel]) -> [f64; 2] {
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut best = [0usize; 2];
    for (i, &lo) in distinct.iter().enumerate() {
        for &hi in &distinct[i..] {
            let inside: Vec<ClassLabel> = values
                .iter()
                .zip(labels)
                .filter(|(v, _)| lo <= **v && **v <= hi)
                .map(|(_, l)| *l)
                .collect();
            for class in ClassLabel::BOTH {
                if inside.iter().all(|l| *l == class) {
                    best[class.index()] = best[class.index()].max(inside.len());
                }
            }
        }
    }
    ClassLabel::BOTH.map(|c| best[c.index()] as f64 / labels.iter().filter(|l| **l == c).count() as f64)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(1, "acceptance", 1);
    for instance in 0..200 {
        let n = rng.random_range(2..=50);
        let values: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..10))).collect();
        let labels = random_labels(&mut rng, n);
        let got = cr_relevance(&values, &labels).map_err(|e| format!("instance {instance}: {e}"))?;
        let want = interval_oracle(&values, &labels);
        ensure(got.normal == want[0] && got.malware == want[1], || {
            format!("instance {instance}: got ({}, {}), oracle ({}, {})", got.normal, got.malware, want[0], want[1])
        })?;
    }
    within(start.elapsed(), 5)?;
    Ok(format!("200 instances exact, {:.2?}", start.elapsed()))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(1, "acceptance", 2);
    let mut worst = 0.0f64;
    for case in 0..500 {
        let n = rng.random_range(1..=100);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let shift = rng.random_range(-50.0..50.0);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let score = |x: &[f64], y: &[f64]| nmrs(x, y).map_err(|e| format!("case {case}: {e}"));

        let ab = score(&a, &b)?;
        ensure((0.0..=1.0).contains(&ab), || format!("case {case}: {ab} outside [0, 1]"))?;
        let ba = score(&b, &a)?;
        let self_score = score(&a, &a)?;
        ensure(self_score == 1.0, || format!("case {case}: self score {self_score}"))?;
        let shifted: Vec<f64> = a.iter().map(|x| x + shift).collect();
        let sa = score(&shifted, &b)?;
        let sb = score(&a, &b.iter().map(|x| x - shift).collect::<Vec<_>>())?;
        let pa: Vec<f64> = order.iter().map(|&i| a[i]).collect();
        let pb: Vec<f64> = order.iter().map(|&i| b[i]).collect();
        let perm = score(&pa, &pb)?;
        for (what, v) in [("symmetry", ba), ("shift a", sa), ("shift b", sb), ("permutation", perm)] {
            let d = (v - ab).abs();
            worst = worst.max(d);
            ensure(d <= 1e-12, || format!("case {case}: {what} differs by {d:e}"))?;
        }
    }
    within(start.elapsed(), 5)?;
    Ok(format!("500 pairs, worst deviation {worst:e}, {:.2?}", start.elapsed()))
}

fn criterion_3() -> Outcome {
    use ClassLabel::{Malware as M, Normal as N};
    let close = |got: f64, want: f64, what: &str| ensure((got - want).abs() <= 1e-12, || format!("{what}: {got} vs {want}"));
    let e = |r: Result<f64, corrnet::stats::StatsError>| r.map_err(|e| e.to_string());
    close(e(chi_square_score(&[1.0, 3.0]))?, 1.0, "chi2 [1,3]")?;
    close(e(chi_square_score(&[2.0, 4.0, 6.0]))?, 2.0, "chi2 [2,4,6]")?;
    close(e(anova_f(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[N, N, N, M, M, M]))?, 13.5, "F")?;
    let u = mann_whitney_u(&[1.0, 3.0, 2.0, 4.0], &[N, N, M, M]).map_err(|e| e.to_string())?;
    close(u.u_normal, 1.0, "U1")?;
    close(u.u_malware, 3.0, "U2")?;
    close(e(kruskal_wallis_h(&[1.0, 2.0, 3.0, 4.0], &[N, N, M, M]))?, 2.4, "H")?;

    let mut rng = stream(1, "acceptance", 3);
    let transform = |x: f64| x * x * x + 2.0 * x + (x / 4.0).exp();
    let mut worst = 0.0f64;
    for case in 0..500 {
        let n = rng.random_range(2..=60);
        let values: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(-6..6))).collect();
        let labels = random_labels(&mut rng, n);
        let (n1, n2) = (
            labels.iter().filter(|l| **l == N).count(),
            labels.iter().filter(|l| **l == M).count(),
        );
        let u = mann_whitney_u(&values, &labels).map_err(|e| format!("case {case}: {e}"))?;
        ensure(u.u_normal + u.u_malware == (n1 * n2) as f64, || {
            format!("case {case}: U1 + U2 = {} vs {}", u.u_normal + u.u_malware, n1 * n2)
        })?;
        let moved: Vec<f64> = values.iter().map(|&x| transform(x)).collect();
        let ut = mann_whitney_u(&moved, &labels).map_err(|e| e.to_string())?;
        let du = (ut.u_normal - u.u_normal).abs().max((ut.u_malware - u.u_malware).abs());
        worst = worst.max(du);
        ensure(du <= 1e-9, || format!("case {case}: U moved by {du:e}"))?;
        if values.iter().any(|&v| v != values[0]) {
            let h = kruskal_wallis_h(&values, &labels).map_err(|e| e.to_string())?;
            let ht = kruskal_wallis_h(&moved, &labels).map_err(|e| e.to_string())?;
            worst = worst.max((h - ht).abs());
            ensure((h - ht).abs() <= 1e-9, || format!("case {case}: H moved by {:e}", (h - ht).abs()))?;
        }
    }
    Ok(format!("hand examples match; 500 instances, worst transform drift {worst:e}"))
}

fn criterion_4() -> Outcome {
    let mut rng = stream(1, "acceptance", 4);
    for draw in 0..1000 {
        let k = rng.random_range(2..=12);
        let normal = rng.random_range(k..=k + 80);
        let malware = rng.random_range(k..=k + 80);
        let seed: u64 = rng.random();
        let mut labels = vec![ClassLabel::Normal; normal];
        labels.extend(vec![ClassLabel::Malware; malware]);
        labels.shuffle(&mut rng);
        let plan = FoldPlan::stratified(&labels, k, seed).map_err(|e| format!("draw {draw}: {e}"))?;
        common::check_fold_plan(&labels, &plan).map_err(|e| format!("draw {draw} ({normal}, {malware}, k={k}): {e}"))?;
    }
    Ok("1000 draws partition and stratify".into())
}

fn matrix_from(columns: &[Vec<f64>], labels: &[ClassLabel]) -> FeatureMatrix {
    let ids: Vec<F> = F::all().take(columns.len()).collect();
    let mut m = FeatureMatrix::new(ids);
    for (row, &label) in labels.iter().enumerate() {
        let values: Vec<f64> = columns.iter().map(|c| c[row]).collect();
        m.push_row(format!("r{row}"), &values, label).unwrap();
    }
    m
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let spec = ClassifierSpec::default();
    let mut rng = stream(1, "acceptance", 5);

    let n = 600;
    let columns: Vec<Vec<f64>> = (0..3).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let labels = random_labels(&mut rng, n);
    let m = matrix_from(&columns, &labels);
    let model = train(&m, m.feature_ids(), &spec, 0).map_err(|e| e.to_string())?;
    let fit = accuracy(&model.predict_rows(&m).map_err(|e| e.to_string())?, m.labels());
    ensure(fit == 1.0, || format!("training accuracy {fit} on duplicate-free data"))?;

    let n = 1000;
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let nuisance: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let labels: Vec<ClassLabel> = x
        .iter()
        .map(|&v| if v < 0.5 { ClassLabel::Normal } else { ClassLabel::Malware })
        .collect();
    let m = matrix_from(&[x, nuisance], &labels);
    let separable = cross_validate(&m, m.feature_ids(), &spec, 10, 5).map_err(|e| e.to_string())?.mean_accuracy;
    ensure(separable >= 0.99, || format!("separable fixture mean accuracy {separable}"))?;

    let n = 2000;
    let columns: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let labels = random_labels(&mut rng, n);
    let m = matrix_from(&columns, &labels);
    let coin = cross_validate(&m, m.feature_ids(), &spec, 10, 5).map_err(|e| e.to_string())?.mean_accuracy;
    ensure((0.45..=0.55).contains(&coin), || format!("coin-flip mean accuracy {coin}"))?;

    within(start.elapsed(), 30)?;
    Ok(format!(
        "fit 1.0, separable {separable:.4}, coin-flip {coin:.4}, {:.2?}",
        start.elapsed()
    ))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let stub = common::replay::StubEvaluator::load();
    let all: Vec<F> = F::all().collect();
    let options = SelectionOptions {
        policy: Policy::Exhaustive,
        min_active: 1,
    };
    let fc = common::replay::fc_list();
    let ff = common::replay::ff_list();
    let outcome = select_features(&all, &fc, &ff, &stub, &options).map_err(|e| e.to_string())?;
    let prefix = [F::F1, F::F8, F::F9, F::F14, F::F6, F::F2, F::F16, F::F10];
    let victims = outcome.victims();
    ensure(victims.len() >= 8 && victims[..8] == prefix, || format!("victims {victims:?}"))?;
    ensure(outcome.best_subset == [F::F3, F::F12], || format!("best {:?}", outcome.best_subset))?;
    ensure(outcome.d_max == 0.995, || format!("d_max {}", outcome.d_max))?;
    within(start.elapsed(), 1)?;
    Ok(format!("prefix matches, best {{F3, F12}} at 0.995, {:.2?}", start.elapsed()))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("planted.csv");
    corrnet::dataset::save_csv(&common::synthetic::planted(2000, 42), &csv).map_err(|e| e.to_string())?;
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = corrnet::cli::run_with_io(["corrnet", "select", "--seed", "42", csv.to_str().unwrap()], &mut out, &mut err);
    ensure(code == 0, || format!("exit {code}: {}", String::from_utf8_lossy(&err)))?;
    let v: serde_json::Value = serde_json::from_slice(&out).map_err(|e| e.to_string())?;
    let best: Vec<String> = v["best_subset"]
        .as_array()
        .ok_or("no best_subset")?
        .iter()
        .map(|f| f.as_str().unwrap_or_default().to_string())
        .collect();
    let (d_max, baseline) = (v["d_max"].as_f64().unwrap_or(-1.0), v["baseline_accuracy"].as_f64().unwrap_or(2.0));
    ensure(best.len() <= 4 && best.iter().any(|f| f == "F3") && best.iter().any(|f| f == "F12"), || {
        format!("best subset {best:?}")
    })?;
    ensure(d_max >= baseline, || format!("best {d_max} below baseline {baseline}"))?;
    within(start.elapsed(), 60)?;
    Ok(format!(
        "best {} at {d_max:.4} vs baseline {baseline:.4}, {:.2?}",
        best.join(" "),
        start.elapsed()
    ))
}

fn criterion_8() -> Outcome {
    let fixture = common::fixture(common::pcap::GOLDEN_FILE);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let csv = dir.path().join("golden.csv");
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = ["corrnet", "extract", "--label", "normal", "-o", csv.to_str().unwrap(), fixture.to_str().unwrap()];
    let code = corrnet::cli::run_with_io(argv, &mut out, &mut err);
    ensure(code == 0, || format!("exit {code}: {}", String::from_utf8_lossy(&err)))?;
    let m = load_csv(&csv).map_err(|e| e.to_string())?;
    ensure(m.n_rows() == 1, || format!("{} rows", m.n_rows()))?;

    let cap = corrnet::capture::read_pcap(&fixture).map_err(|e| e.to_string())?;
    let flows = assemble_flows(cap.packets, IdleTimeout::default());
    let direct = compute_features(&flows[0]);
    let expected = [
        272.0,
        0.3,
        0.4,
        0.6,
        2.0 / 3.0,
        1060.0 / 300.0,
        100.0,
        3.0,
        5.0,
        2.0 / 0.6,
        2.0,
        530.0,
        300.0,
        500.0,
        1060.0,
        1060.0 / 0.6,
    ];
    for id in F::all() {
        let read = m.column(id).map_err(|e| e.to_string())?.values[0];
        ensure(read.to_bits() == direct.get(id).to_bits(), || {
            format!("{id}: CSV {read} vs computed {}", direct.get(id))
        })?;
        let want = expected[id.index()];
        ensure((read - want).abs() <= 1e-12 * want.abs().max(1.0), || format!("{id}: {read} vs {want}"))?;
    }
    Ok("16 values bit-exact after CSV round trip".into())
}

type Criterion = fn() -> Outcome;

fn main() {
    let criteria: [(&str, Criterion); 8] = [
        ("crRelevance matches interval oracle", criterion_1),
        ("NMRS properties", criterion_2),
        ("rank statistics", criterion_3),
        ("fold plans", criterion_4),
        ("classifier sanity", criterion_5),
        ("selection replay", criterion_6),
        ("synthetic pipeline", criterion_7),
        ("golden capture extraction", criterion_8),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let result = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("PASS {label}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {label}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
