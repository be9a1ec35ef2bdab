use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{majority, ClassifyError, TrainingSet};
use crate::dataset::{ClassLabel, FeatureMatrix};
use crate::features::FeatureId;

/// Gains at or below this are treated as zero.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.min_samples_split < 2 {
            return Err(ClassifyError::InvalidParams(format!(
                "min_samples_split must be at least 2, got {}",
                self.min_samples_split
            )));
        }
        Ok(())
    }
}

/// One node of a tree stored as a flat array.
///
/// Rows with `value <= threshold` go to `left`. Children always have larger
/// indices than their parent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        class: ClassLabel,
        samples: usize,
    },
    Split {
        feature: FeatureId,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub features: Vec<FeatureId>,
    pub params: TreeParams,
    /// `nodes[0]` is the root.
    pub nodes: Vec<Node>,
}

impl Tree {
    pub(crate) fn predict_with(&self, get: &dyn Fn(FeatureId) -> f64) -> ClassLabel {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class, .. } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if get(feature) <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            max = max.max(depth[i]);
            if let Node::Split { left, right, .. } = *node {
                depth[left] = depth[i] + 1;
                depth[right] = depth[i] + 1;
            }
        }
        max
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub(crate) fn validate(&self) -> Result<(), ClassifyError> {
        let bad = |msg: String| Err(ClassifyError::InvalidModel(msg));
        if self.nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        let mut parents = vec![0u8; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = *node
            {
                if !self.features.contains(&feature) {
                    return bad(format!("node {i} splits on untrained feature {feature}"));
                }
                if threshold.is_nan() {
                    return bad(format!("node {i} has a NaN threshold"));
                }
                for child in [left, right] {
                    if child <= i || child >= self.nodes.len() {
                        return bad(format!("node {i} has invalid child {child}"));
                    }
                    parents[child] += 1;
                }
                if left == right {
                    return bad(format!("node {i} has identical children"));
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return bad("nodes do not form a single tree".into());
        }
        Ok(())
    }
}

/// Draws the candidate features for each split.
pub(crate) struct FeatureSampler {
    pub per_split: usize,
    pub rng: ChaCha8Rng,
}

/// A threshold in `[a, b)` for `a < b`: the midpoint, or `a` when the
/// midpoint rounds up to `b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let mut m = a + (b - a) / 2.0;
    if !m.is_finite() {
        m = a / 2.0 + b / 2.0;
    }
    if m >= b || m < a {
        a
    } else {
        m
    }
}

fn entropy(c0: usize, c1: usize) -> f64 {
    let n = (c0 + c1) as f64;
    [c0, c1]
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
    n_left: usize,
}

/// Grows a tree on `set` by greedy information-gain splits.
pub(crate) fn grow(set: &TrainingSet, params: &TreeParams, mut sampler: Option<FeatureSampler>) -> Tree {
    let n = set.len();
    let d = set.features.len();
    let malware: Vec<bool> = set.labels.iter().map(|&l| l == ClassLabel::Malware).collect();
    // Per feature, sample indices sorted by value; each node owns one segment
    // of every list.
    let mut sorted: Vec<Vec<u32>> = set
        .columns
        .iter()
        .map(|col| {
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            order
        })
        .collect();
    let mut goes_left = vec![false; n];
    let mut spill: Vec<u32> = Vec::with_capacity(n);
    let mut nodes = vec![Node::Leaf {
        class: ClassLabel::Normal,
        samples: 0,
    }];
    let mut stack = vec![(0usize, 0usize, n, 0usize)];
    let mut candidates: Vec<usize> = (0..d).collect();

    while let Some((slot, start, end, depth)) = stack.pop() {
        let total = end - start;
        let c1 = sorted[0][start..end].iter().filter(|&&s| malware[s as usize]).count();
        let c0 = total - c1;
        let leaf = Node::Leaf {
            class: majority(c0, c1),
            samples: total,
        };
        if c0 == 0 || c1 == 0 || total < params.min_samples_split || params.max_depth.is_some_and(|m| depth >= m) {
            nodes[slot] = leaf;
            continue;
        }
        if let Some(s) = sampler.as_mut() {
            candidates = index::sample(&mut s.rng, d, s.per_split.min(d)).into_vec();
            candidates.sort_unstable();
        }
        let parent = entropy(c0, c1);
        let mut best: Option<Best> = None;
        for &f in &candidates {
            let col = &set.columns[f];
            let seg = &sorted[f][start..end];
            let mut l1 = 0usize;
            for p in 0..total - 1 {
                if malware[seg[p] as usize] {
                    l1 += 1;
                }
                let (a, b) = (col[seg[p] as usize], col[seg[p + 1] as usize]);
                if a == b {
                    continue;
                }
                let nl = p + 1;
                let l0 = nl - l1;
                let (r0, r1) = (c0 - l0, c1 - l1);
                let child = (nl as f64 * entropy(l0, l1) + (total - nl) as f64 * entropy(r0, r1)) / total as f64;
                // An impure node with any split position is split, at zero
                // gain if need be, so balanced XOR layouts do not stall.
                let gain = if parent - child > MIN_GAIN { parent - child } else { 0.0 };
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Best {
                        gain,
                        feature: f,
                        threshold: midpoint(a, b),
                        n_left: nl,
                    });
                }
            }
        }
        let Some(best) = best else {
            nodes[slot] = leaf;
            continue;
        };

        for &s in &sorted[best.feature][start..start + best.n_left] {
            goes_left[s as usize] = true;
        }
        for list in sorted.iter_mut() {
            let seg = &mut list[start..end];
            spill.clear();
            let mut w = 0;
            for r in 0..seg.len() {
                let s = seg[r];
                if goes_left[s as usize] {
                    seg[w] = s;
                    w += 1;
                } else {
                    spill.push(s);
                }
            }
            seg[w..].copy_from_slice(&spill);
        }
        for &s in &sorted[best.feature][start..start + best.n_left] {
            goes_left[s as usize] = false;
        }

        let left = nodes.len();
        nodes.push(leaf);
        nodes.push(leaf);
        nodes[slot] = Node::Split {
            feature: set.features[best.feature],
            threshold: best.threshold,
            left,
            right: left + 1,
        };
        let mid = start + best.n_left;
        stack.push((left + 1, mid, end, depth + 1));
        stack.push((left, start, mid, depth + 1));
    }

    Tree {
        features: set.features.clone(),
        params: *params,
        nodes,
    }
}

/// Trains a single tree on every row of `matrix`.
pub fn train_tree(matrix: &FeatureMatrix, features: &[FeatureId], params: &TreeParams) -> Result<Tree, ClassifyError> {
    params.validate()?;
    let set = TrainingSet::new(matrix, features, None)?;
    Ok(grow(&set, params, None))
}
