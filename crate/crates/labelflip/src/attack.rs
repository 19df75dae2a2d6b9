//! Label flipping attacks against the hinge-loss linear learner.
//!
//! The attacker may only negate labels of training points, never features.
//! [`lfa_greedy`] is the tractable heuristic: per round it retrains the
//! victim model once per remaining candidate flip and commits the flip that
//! maximizes the mean hinge loss on a held-out validation set.
//! [`brute_force_attack`] solves the underlying subset problem exactly by
//! enumeration and exists as the oracle for small instances;
//! [`random_flip`] is the label-noise baseline.

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::linear_model::{avg_loss, train_sgd, TrainConfig};
use crate::util::write_atomic;

/// Default cap on the number of subsets [`brute_force_attack`] may enumerate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000;

/// Indicator vector over the training rows whose labels are flipped;
/// exactly `budget` bits are set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlipVector {
    bits: Vec<bool>,
    budget: usize,
}

impl FlipVector {
    /// A vector of `len` zeros (no flips).
    pub fn none(len: usize) -> FlipVector {
        FlipVector {
            bits: vec![false; len],
            budget: 0,
        }
    }

    /// Builds the indicator from a set of row indices.
    pub fn from_indices(len: usize, indices: &[usize]) -> Result<FlipVector> {
        let mut bits = vec![false; len];
        for &i in indices {
            if i >= len {
                return Err(Error::InvalidParameter(format!(
                    "flip index {i} out of range for size {len}"
                )));
            }
            if bits[i] {
                return Err(Error::InvalidParameter(format!(
                    "flip index {i} given twice"
                )));
            }
            bits[i] = true;
        }
        Ok(FlipVector {
            bits,
            budget: indices.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of set bits, i.e. the attack budget `p`.
    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn is_set(&self, index: usize) -> bool {
        self.bits[index]
    }

    /// Flipped row indices in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

/// One committed greedy round: the flip chosen at `step` and the validation
/// mean hinge loss of the model retrained after that flip.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub flipped_index: usize,
    pub validation_loss: f64,
}

/// Output of an attack: the poisoned copy of the training set, the indicator
/// of flipped rows, and the per-round trace (empty for the random baseline;
/// for the exhaustive solver every entry carries the final achieved loss).
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub poisoned: LabeledDataset,
    pub flips: FlipVector,
    pub trace: Vec<TraceStep>,
}

impl AttackResult {
    /// Writes the trace as CSV with columns `step,flipped_index,validation_loss`.
    pub fn write_trace_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("step,flipped_index,validation_loss\n");
        for t in &self.trace {
            out.push_str(&format!(
                "{},{},{}\n",
                t.step, t.flipped_index, t.validation_loss
            ));
        }
        write_atomic(path, out.as_bytes())
    }

    /// Writes the flipped row indices, one per line.
    pub fn write_flip_indices(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::new();
        for i in self.flips.indices() {
            out.push_str(&i.to_string());
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }
}

/// Returns a copy of `data` with labels negated exactly where the indicator
/// is set; features are untouched.
pub fn apply_flips(data: &LabeledDataset, flips: &FlipVector) -> Result<LabeledDataset> {
    if flips.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            found: flips.len(),
        });
    }
    let mut out = data.clone();
    for i in flips.indices() {
        out.flip_label(i);
    }
    Ok(out)
}

fn check_attack_inputs(
    train: &LabeledDataset,
    validation: &LabeledDataset,
    p: usize,
) -> Result<()> {
    if p > train.len() {
        return Err(Error::BudgetTooLarge {
            budget: p,
            size: train.len(),
        });
    }
    if validation.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if validation.dim() != train.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim(),
            found: validation.dim(),
        });
    }
    Ok(())
}

/// Greedy label flipping attack.
///
/// Runs `p` rounds. In every round each remaining candidate index is flipped
/// on top of the current poisoned set, the model is retrained from scratch
/// with `config` (same seed every time, so candidate scores are comparable),
/// and the candidate's score is the retrained model's mean hinge loss on
/// `validation`. The argmax is committed; ties go to the lowest index.
///
/// Candidate evaluations run in parallel; the committed result is identical
/// to sequential execution for any thread count.
pub fn lfa_greedy(
    train: &LabeledDataset,
    validation: &LabeledDataset,
    p: usize,
    config: &TrainConfig,
) -> Result<AttackResult> {
    check_attack_inputs(train, validation, p)?;
    config.validate()?;

    let m = train.len();
    let mut poisoned = train.clone();
    let mut remaining: Vec<usize> = (0..m).collect();
    let mut flipped_indices = Vec::with_capacity(p);
    let mut trace = Vec::with_capacity(p);

    for step in 1..=p {
        let scores: Vec<(usize, f64)> = remaining
            .par_iter()
            .map(|&j| -> Result<(usize, f64)> {
                let mut candidate = poisoned.clone();
                candidate.flip_label(j);
                let weights = train_sgd(&candidate, config)?;
                Ok((j, avg_loss(&weights, validation)?))
            })
            .collect::<Result<Vec<_>>>()?;

        // `remaining` is ascending, so keeping only strictly-better scores
        // resolves ties to the lowest index.
        let (best_index, best_loss) = scores
            .iter()
            .copied()
            .fold(None::<(usize, f64)>, |acc, (j, e)| match acc {
                Some((_, be)) if e <= be => acc,
                _ => Some((j, e)),
            })
            .expect("at least one candidate per round");

        poisoned.flip_label(best_index);
        remaining.retain(|&j| j != best_index);
        flipped_indices.push(best_index);
        trace.push(TraceStep {
            step,
            flipped_index: best_index,
            validation_loss: best_loss,
        });
    }

    let flips = FlipVector::from_indices(m, &flipped_indices)?;
    debug_assert_eq!(apply_flips(train, &flips)?, poisoned);
    Ok(AttackResult {
        poisoned,
        flips,
        trace,
    })
}

/// Exact solver of the flip-subset problem by exhaustive enumeration, used
/// as the oracle for small instances (the search is combinatorial, hence the
/// cap). Ties are broken toward the lexicographically smallest index set.
pub fn brute_force_attack(
    train: &LabeledDataset,
    validation: &LabeledDataset,
    p: usize,
    config: &TrainConfig,
) -> Result<AttackResult> {
    brute_force_attack_capped(train, validation, p, config, DEFAULT_ENUMERATION_CAP)
}

/// [`brute_force_attack`] with an explicit enumeration cap.
pub fn brute_force_attack_capped(
    train: &LabeledDataset,
    validation: &LabeledDataset,
    p: usize,
    config: &TrainConfig,
    cap: u128,
) -> Result<AttackResult> {
    check_attack_inputs(train, validation, p)?;
    config.validate()?;

    let m = train.len();
    let combinations = binomial(m, p);
    if combinations > cap {
        return Err(Error::EnumerationTooLarge { combinations, cap });
    }

    let subsets: Vec<Vec<usize>> = (0..m).combinations(p).collect();
    let scored: Vec<f64> = subsets
        .par_iter()
        .map(|subset| -> Result<f64> {
            let flips = FlipVector::from_indices(m, subset)?;
            let candidate = apply_flips(train, &flips)?;
            let weights = train_sgd(&candidate, config)?;
            avg_loss(&weights, validation)
        })
        .collect::<Result<Vec<_>>>()?;

    // Subsets come out of `combinations` in lexicographic order, so keeping
    // only strictly-better scores implements the tie rule.
    let (best, _) = scored
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, &e)| match acc {
            Some((_, be)) if e <= be => acc,
            _ => Some((i, e)),
        })
        .expect("at least the empty subset is enumerated");

    let indices = &subsets[best];
    let loss = scored[best];
    let flips = FlipVector::from_indices(m, indices)?;
    let poisoned = apply_flips(train, &flips)?;
    let trace = indices
        .iter()
        .enumerate()
        .map(|(i, &idx)| TraceStep {
            step: i + 1,
            flipped_index: idx,
            validation_loss: loss,
        })
        .collect();
    Ok(AttackResult {
        poisoned,
        flips,
        trace,
    })
}

/// Flips a uniformly random `p`-subset of the training labels. Deterministic
/// given `seed`; the trace is empty.
pub fn random_flip(train: &LabeledDataset, p: usize, seed: u64) -> Result<AttackResult> {
    let m = train.len();
    if p > m {
        return Err(Error::BudgetTooLarge { budget: p, size: m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, m, p).into_vec();
    indices.sort_unstable();
    let flips = FlipVector::from_indices(m, &indices)?;
    let poisoned = apply_flips(train, &flips)?;
    Ok(AttackResult {
        poisoned,
        flips,
        trace: Vec::new(),
    })
}

/// Rounds `fraction * m` half-up to get a flip budget from a poison fraction.
pub fn budget_from_fraction(m: usize, fraction: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "poison fraction must be in [0, 1], got {fraction}"
        )));
    }
    Ok((fraction * m as f64 + 0.5).floor() as usize)
}

/// Exact binomial coefficient, saturating far above any practical cap.
fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Example, Label};
    use proptest::prelude::*;

    fn toy(labels: &[Label]) -> LabeledDataset {
        LabeledDataset::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| Example::new(vec![i as f64], l))
                .collect(),
            1,
        )
        .unwrap()
    }

    /// m=8 blob instance shared by the oracle tests: 4 negatives around
    /// (-2, 0), 4 positives around (2, 0).
    fn oracle_instance() -> (LabeledDataset, LabeledDataset, TrainConfig) {
        let train = crate::synth::two_gaussian_blobs(4, 4.0, 0.5, 21);
        let validation = crate::synth::two_gaussian_blobs(10, 4.0, 0.5, 22);
        let config = TrainConfig {
            epochs: 30,
            seed: 7,
            ..TrainConfig::default()
        };
        (train, validation, config)
    }

    #[test]
    fn binomial_values() {
        assert_eq!(binomial(8, 2), 28);
        assert_eq!(binomial(8, 0), 1);
        assert_eq!(binomial(8, 8), 1);
        assert_eq!(binomial(4, 9), 0);
        assert!(binomial(200, 100) > DEFAULT_ENUMERATION_CAP);
    }

    #[test]
    fn budget_rounds_half_up() {
        assert_eq!(budget_from_fraction(100, 0.2).unwrap(), 20);
        assert_eq!(budget_from_fraction(100, 0.0).unwrap(), 0);
        assert_eq!(budget_from_fraction(10, 0.05).unwrap(), 1); // 0.5 rounds up
        assert_eq!(budget_from_fraction(10, 0.04).unwrap(), 0);
        assert!(budget_from_fraction(10, 1.5).is_err());
    }

    #[test]
    fn apply_flips_hand_example() {
        let d = toy(&[Label::Pos, Label::Pos, Label::Neg]);
        let flips = FlipVector::from_indices(3, &[1]).unwrap();
        let out = apply_flips(&d, &flips).unwrap();
        assert_eq!(out.labels(), vec![Label::Pos, Label::Neg, Label::Neg]);
        // Features untouched.
        for (a, b) in d.examples().iter().zip(out.examples()) {
            assert_eq!(a.features, b.features);
        }
    }

    #[test]
    fn zero_flips_is_identity() {
        let d = toy(&[Label::Pos, Label::Neg]);
        let out = apply_flips(&d, &FlipVector::none(2)).unwrap();
        assert_eq!(out, d);
    }

    #[test]
    fn length_mismatch_rejected() {
        let d = toy(&[Label::Pos, Label::Neg]);
        assert!(matches!(
            apply_flips(&d, &FlipVector::none(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn greedy_p0_is_identity() {
        let (train, validation, config) = oracle_instance();
        let result = lfa_greedy(&train, &validation, 0, &config).unwrap();
        assert_eq!(result.poisoned, train);
        assert!(result.trace.is_empty());
        assert_eq!(result.flips.budget(), 0);
    }

    #[test]
    fn greedy_p_equals_m_flips_everything() {
        let (train, validation, config) = oracle_instance();
        let m = train.len();
        let result = lfa_greedy(&train, &validation, m, &config).unwrap();
        assert_eq!(result.flips.budget(), m);
        for (a, b) in train.examples().iter().zip(result.poisoned.examples()) {
            assert_eq!(a.label.flipped(), b.label);
        }
        assert_eq!(result.trace.len(), m);
    }

    #[test]
    fn greedy_budget_too_large_rejected() {
        let (train, validation, config) = oracle_instance();
        assert!(matches!(
            lfa_greedy(&train, &validation, train.len() + 1, &config),
            Err(Error::BudgetTooLarge { .. })
        ));
    }

    #[test]
    fn greedy_empty_validation_rejected() {
        let (train, _, config) = oracle_instance();
        let empty = LabeledDataset::empty(2);
        assert!(matches!(
            lfa_greedy(&train, &empty, 1, &config),
            Err(Error::EmptyDataset)
        ));
    }

    /// Independent exhaustive oracle for the first greedy round: evaluate
    /// every single-flip candidate directly, without any attack plumbing.
    fn single_flip_scores(
        train: &LabeledDataset,
        validation: &LabeledDataset,
        config: &TrainConfig,
    ) -> Vec<f64> {
        (0..train.len())
            .map(|j| {
                let mut candidate = train.clone();
                candidate.set_label(j, candidate.label(j).flipped());
                let w = train_sgd(&candidate, config).unwrap();
                avg_loss(&w, validation).unwrap()
            })
            .collect()
    }

    #[test]
    fn greedy_first_flip_matches_exhaustive_single_flip_oracle() {
        let (train, validation, config) = oracle_instance();
        let scores = single_flip_scores(&train, &validation, &config);
        let mut best = 0;
        for (j, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = j;
            }
        }
        let result = lfa_greedy(&train, &validation, 1, &config).unwrap();
        assert_eq!(result.trace[0].flipped_index, best);
        assert_eq!(result.trace[0].validation_loss, scores[best]);
    }

    #[test]
    fn greedy_trace_steps_are_round_maxima() {
        // Re-simulates each round exhaustively and checks the committed
        // index was a maximum with lowest-index tie-breaking.
        let (train, validation, config) = oracle_instance();
        let p = 3;
        let result = lfa_greedy(&train, &validation, p, &config).unwrap();
        let mut current = train.clone();
        let mut committed: Vec<usize> = Vec::new();
        for t in &result.trace {
            for j in 0..train.len() {
                if committed.contains(&j) {
                    continue;
                }
                let mut candidate = current.clone();
                candidate.set_label(j, candidate.label(j).flipped());
                let w = train_sgd(&candidate, &config).unwrap();
                let e = avg_loss(&w, &validation).unwrap();
                assert!(
                    e < t.validation_loss
                        || (e == t.validation_loss && j >= t.flipped_index),
                    "round {}: candidate {j} scored {e} vs committed {} at {}",
                    t.step,
                    t.validation_loss,
                    t.flipped_index,
                );
            }
            current.set_label(t.flipped_index, current.label(t.flipped_index).flipped());
            committed.push(t.flipped_index);
        }
        assert_eq!(current, result.poisoned);
    }

    #[test]
    fn brute_force_matches_greedy_for_single_flip_and_dominates_for_two() {
        let (train, validation, config) = oracle_instance();
        let greedy1 = lfa_greedy(&train, &validation, 1, &config).unwrap();
        let brute1 = brute_force_attack(&train, &validation, 1, &config).unwrap();
        assert_eq!(brute1.flips.indices(), greedy1.flips.indices());

        let greedy2 = lfa_greedy(&train, &validation, 2, &config).unwrap();
        let brute2 = brute_force_attack(&train, &validation, 2, &config).unwrap();
        assert!(
            brute2.trace.last().unwrap().validation_loss
                >= greedy2.trace.last().unwrap().validation_loss
        );
    }

    #[test]
    fn brute_force_p0_matches_greedy_p0() {
        let (train, validation, config) = oracle_instance();
        let b = brute_force_attack(&train, &validation, 0, &config).unwrap();
        let g = lfa_greedy(&train, &validation, 0, &config).unwrap();
        assert_eq!(b.poisoned, g.poisoned);
        assert_eq!(b.flips, g.flips);
        assert!(b.trace.is_empty());
    }

    #[test]
    fn brute_force_cap_enforced() {
        let train = crate::synth::two_gaussian_blobs(15, 4.0, 0.5, 3);
        let validation = crate::synth::two_gaussian_blobs(5, 4.0, 0.5, 4);
        let config = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        // C(30, 15) is astronomically over the default cap.
        assert!(matches!(
            brute_force_attack(&train, &validation, 15, &config),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn random_flip_is_seeded_and_bounded() {
        let d = toy(&[Label::Pos; 10]);
        let a = random_flip(&d, 4, 9).unwrap();
        let b = random_flip(&d, 4, 9).unwrap();
        assert_eq!(a.flips, b.flips);
        assert_eq!(a.flips.budget(), 4);
        assert!(a.trace.is_empty());
        assert_eq!(random_flip(&d, 0, 1).unwrap().poisoned, d);
        let all = random_flip(&d, 10, 5).unwrap();
        assert!(all.poisoned.labels().iter().all(|&l| l == Label::Neg));
        assert!(random_flip(&d, 11, 0).is_err());
    }

    #[test]
    fn trace_csv_and_flip_sidecar_format() {
        let (train, validation, config) = oracle_instance();
        let result = lfa_greedy(&train, &validation, 2, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let trace_path = dir.path().join("trace.csv");
        let flips_path = dir.path().join("flips.txt");
        result.write_trace_csv(&trace_path).unwrap();
        result.write_flip_indices(&flips_path).unwrap();
        let trace = std::fs::read_to_string(&trace_path).unwrap();
        assert!(trace.starts_with("step,flipped_index,validation_loss\n"));
        assert_eq!(trace.lines().count(), 3);
        let flips = std::fs::read_to_string(&flips_path).unwrap();
        let listed: Vec<usize> = flips
            .lines()
            .map(|l| l.parse().unwrap())
            .collect();
        assert_eq!(listed, result.flips.indices());
    }

    proptest! {
        #[test]
        fn apply_flips_is_an_involution(
            labels in proptest::collection::vec(prop::bool::ANY, 1..30),
            seed in 0u64..500,
        ) {
            let d = toy(&labels.iter().map(|&b| if b { Label::Pos } else { Label::Neg }).collect::<Vec<_>>());
            let p = (seed as usize) % (d.len() + 1);
            let result = random_flip(&d, p, seed).unwrap();
            // Hamming distance between label sequences equals the budget.
            let dist = d
                .labels()
                .iter()
                .zip(result.poisoned.labels())
                .filter(|(a, b)| **a != *b)
                .count();
            prop_assert_eq!(dist, p);
            // Applying the same flips again restores the original.
            let restored = apply_flips(&result.poisoned, &result.flips).unwrap();
            prop_assert_eq!(restored, d);
        }
    }
}
