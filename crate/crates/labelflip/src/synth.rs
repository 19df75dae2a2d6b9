//! Seeded synthetic datasets used by tests, demos, and oracle checks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Example, Label, LabeledDataset};

/// Two 2-D Gaussian blobs centred at `(-separation/2, 0)` and
/// `(+separation/2, 0)` with standard deviation `sigma`. The positive blob is
/// on the right; rows alternate negative block first, then positive.
pub fn two_gaussian_blobs(
    n_per_class: usize,
    separation: f64,
    sigma: f64,
    seed: u64,
) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).expect("sigma must be positive");
    let half = separation / 2.0;
    let mut examples = Vec::with_capacity(2 * n_per_class);
    for (center, label) in [(-half, Label::Neg), (half, Label::Pos)] {
        for _ in 0..n_per_class {
            let x = center + noise.sample(&mut rng);
            let y = noise.sample(&mut rng);
            examples.push(Example::new(vec![x, y], label));
        }
    }
    LabeledDataset::new(examples, 2).expect("blob construction is well-formed")
}

/// Collinear 1-D points at `x = 0, 1, 2, ...` carrying the given labels.
pub fn collinear_chain(labels: &[Label]) -> LabeledDataset {
    let examples = labels
        .iter()
        .enumerate()
        .map(|(i, &l)| Example::new(vec![i as f64], l))
        .collect();
    LabeledDataset::new(examples, 1).expect("chain construction is well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blobs_have_expected_shape() {
        let d = two_gaussian_blobs(50, 6.0, 1.0, 1);
        assert_eq!(d.len(), 100);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.class_counts(), (50, 50));
        // Deterministic per seed.
        assert_eq!(two_gaussian_blobs(50, 6.0, 1.0, 1), d);
        assert_ne!(two_gaussian_blobs(50, 6.0, 1.0, 2), d);
    }

    #[test]
    fn chain_positions_are_line_indices() {
        let d = collinear_chain(&[Label::Neg, Label::Pos, Label::Pos]);
        assert_eq!(d.len(), 3);
        assert_eq!(d.get(2).features, vec![2.0]);
    }
}
