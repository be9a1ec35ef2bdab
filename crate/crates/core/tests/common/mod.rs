#![allow(dead_code)]

pub mod pcap;
pub mod replay;
pub mod synthetic;

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Checks that `plan` partitions the rows and that each class spreads over the
/// folds with sizes differing by at most one.
pub fn check_fold_plan(labels: &[corrnet::ClassLabel], plan: &corrnet::FoldPlan) -> Result<(), String> {
    if plan.assignment.len() != labels.len() {
        return Err(format!("{} assignments for {} rows", plan.assignment.len(), labels.len()));
    }
    let mut seen = vec![0usize; labels.len()];
    for fold in 0..plan.k {
        for row in plan.test_rows(fold) {
            seen[row] += 1;
        }
    }
    if let Some(row) = seen.iter().position(|&n| n != 1) {
        return Err(format!("row {row} is held out {} times", seen[row]));
    }
    for class in corrnet::ClassLabel::BOTH {
        let mut sizes = vec![0usize; plan.k];
        for (row, &fold) in plan.assignment.iter().enumerate() {
            if labels[row] == class {
                sizes[fold] += 1;
            }
        }
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        if hi - lo > 1 {
            return Err(format!("{class} fold sizes {sizes:?}"));
        }
    }
    Ok(())
}
