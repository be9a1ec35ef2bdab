//! Planted-signal datasets: two informative features and fourteen noisy copies.

use corrnet::dataset::FeatureMatrix;
use corrnet::seed::stream;
use corrnet::{ClassLabel, FeatureId, FeatureValues, FeatureVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const PLANTED: [FeatureId; 2] = [FeatureId::F3, FeatureId::F12];

/// Copy noise as a multiple of the planted grid step.
pub const COPY_SIGMA: f64 = 1.5;

/// Normal rows draw each planted feature from `0..=3` with probability 0.8 and
/// from `4..=9` otherwise; malware rows draw from `4..=9`. Every other column
/// copies one planted feature with its own offset and Gaussian noise.
pub fn planted(rows_per_class: usize, seed: u64) -> FeatureMatrix {
    let mut rng = stream(seed, "synthetic", 0);
    let noise = Normal::new(0.0, COPY_SIGMA).unwrap();
    let mut vectors = Vec::with_capacity(2 * rows_per_class);
    for (label, i) in (0..2 * rows_per_class).map(|i| {
        let label = if i < rows_per_class { ClassLabel::Normal } else { ClassLabel::Malware };
        (label, i)
    }) {
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
            let low = label == ClassLabel::Normal && rng.random_bool(0.8);
            if low {
                rng.random_range(0..=3) as f64
            } else {
                rng.random_range(4..=9) as f64
            }
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let mut values = [0.0; 16];
        for (k, id) in FeatureId::all().enumerate() {
            values[id.index()] = if id == PLANTED[0] {
                a
            } else if id == PLANTED[1] {
                b
            } else {
                let parent = if k % 2 == 0 { a } else { b };
                parent + 10.0 * k as f64 + noise.sample(&mut rng)
            };
        }
        vectors.push(FeatureVector {
            flow_id: format!("synthetic-{i}"),
            values: FeatureValues(values),
            label,
        });
    }
    FeatureMatrix::from_vectors(vectors)
}
