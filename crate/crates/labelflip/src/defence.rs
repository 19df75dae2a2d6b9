//! k-NN based label sanitization.
//!
//! Each training point is relabelled to its neighbourhood's most common
//! label when that label's share reaches the confidence threshold `eta`.
//! Decisions within a pass are made against the pass's original labels and
//! applied simultaneously at the end, so the outcome does not depend on row
//! order. With an even `k` an exact 50/50 neighbourhood keeps the point's
//! own label: overriding a label without a strict majority would defeat the
//! purpose, so odd `k` is recommended.

use rayon::prelude::*;

use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::util::write_atomic;

/// Sanitizer parameters: neighbour count, confidence threshold in
/// `[0.5, 1]`, and how many passes to run at most (1 reproduces the
/// single-pass protocol; larger values iterate toward a fixpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct DefenceConfig {
    pub k: usize,
    pub eta: f64,
    pub max_passes: usize,
}

impl DefenceConfig {
    pub fn new(k: usize, eta: f64) -> Result<DefenceConfig> {
        let config = DefenceConfig {
            k,
            eta,
            max_passes: 1,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_max_passes(mut self, max_passes: usize) -> DefenceConfig {
        self.max_passes = max_passes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::KOutOfRange {
                k: self.k,
                max: usize::MAX,
            });
        }
        if !(0.5..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParameter(format!(
                "eta must be in [0.5, 1], got {}",
                self.eta
            )));
        }
        if self.max_passes == 0 {
            return Err(Error::InvalidParameter(
                "max_passes must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// One label change made by a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Relabel {
    pub index: usize,
    pub old_label: Label,
    pub new_label: Label,
}

/// What the sanitizer did: the relabels of every executed pass, how many
/// passes ran, and whether the last pass changed nothing (a fixpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct SanitizationReport {
    pub relabels_per_pass: Vec<Vec<Relabel>>,
    pub passes_run: usize,
    pub converged: bool,
}

impl SanitizationReport {
    pub fn relabeled_indices_per_pass(&self) -> Vec<Vec<usize>> {
        self.relabels_per_pass
            .iter()
            .map(|pass| pass.iter().map(|r| r.index).collect())
            .collect()
    }

    pub fn total_relabels(&self) -> usize {
        self.relabels_per_pass.iter().map(Vec::len).sum()
    }

    /// Writes the report as CSV with columns `pass,index,old_label,new_label`.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut out = String::from("pass,index,old_label,new_label\n");
        for (pass, relabels) in self.relabels_per_pass.iter().enumerate() {
            for r in relabels {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    pass + 1,
                    r.index,
                    r.old_label,
                    r.new_label
                ));
            }
        }
        write_atomic(path, out.as_bytes())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Indices of the `k` points nearest to point `index` (the point itself is
/// excluded even when a duplicate sits at distance zero). Squared euclidean
/// distance; ties broken by lower index; output sorted by (distance, index).
pub fn knn_indices(data: &LabeledDataset, index: usize, k: usize) -> Result<Vec<usize>> {
    let m = data.len();
    if index >= m {
        return Err(Error::InvalidParameter(format!(
            "query index {index} out of range for dataset of size {m}"
        )));
    }
    if k == 0 || k > m.saturating_sub(1) {
        return Err(Error::KOutOfRange {
            k,
            max: m.saturating_sub(1),
        });
    }
    let query = &data.get(index).features;
    let mut scored: Vec<(f64, usize)> = (0..m)
        .filter(|&j| j != index)
        .map(|j| (squared_distance(query, &data.get(j).features), j))
        .collect();
    scored.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, j)| j).collect())
}

fn tally(labels: &[Label]) -> Result<(usize, usize)> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter(
            "label list is empty".to_string(),
        ));
    }
    let pos = labels.iter().filter(|&&l| l == Label::Pos).count();
    Ok((pos, labels.len() - pos))
}

/// Share of the most common label, in `[0.5, 1]` for binary labels.
pub fn confidence(labels: &[Label]) -> Result<f64> {
    let (pos, neg) = tally(labels)?;
    Ok(pos.max(neg) as f64 / labels.len() as f64)
}

/// Most common label; an exact tie yields `+1` by convention. Note the
/// sanitizer itself never acts on ties (see [`sanitize_pass`]).
pub fn mode_label(labels: &[Label]) -> Result<Label> {
    let (pos, neg) = tally(labels)?;
    Ok(if pos >= neg { Label::Pos } else { Label::Neg })
}

/// One sanitization pass.
///
/// Every point's neighbourhood is computed from the labels as they were at
/// the start of the pass; all relabels apply simultaneously at the end.
/// A point is relabelled when its neighbourhood has a strict majority label
/// whose share is at least `eta` and that label differs from the point's
/// own. Returns the updated dataset and the changes made.
pub fn sanitize_pass(
    data: &LabeledDataset,
    config: &DefenceConfig,
) -> Result<(LabeledDataset, Vec<Relabel>)> {
    config.validate()?;
    let m = data.len();
    if config.k > m.saturating_sub(1) {
        return Err(Error::KOutOfRange {
            k: config.k,
            max: m.saturating_sub(1),
        });
    }

    let decisions: Vec<Option<Label>> = (0..m)
        .into_par_iter()
        .map(|i| -> Result<Option<Label>> {
            let neighbours = knn_indices(data, i, config.k)?;
            let labels: Vec<Label> = neighbours.iter().map(|&j| data.label(j)).collect();
            let (pos, neg) = tally(&labels)?;
            if pos == neg {
                return Ok(None);
            }
            let mode = if pos > neg { Label::Pos } else { Label::Neg };
            let conf = pos.max(neg) as f64 / config.k as f64;
            Ok((conf >= config.eta && mode != data.label(i)).then_some(mode))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = data.clone();
    let mut relabels = Vec::new();
    for (index, decision) in decisions.into_iter().enumerate() {
        if let Some(new_label) = decision {
            relabels.push(Relabel {
                index,
                old_label: data.label(index),
                new_label,
            });
            out.set_label(index, new_label);
        }
    }
    Ok((out, relabels))
}

/// Runs [`sanitize_pass`] until a pass relabels nothing or
/// `config.max_passes` is reached.
pub fn sanitize(
    data: &LabeledDataset,
    config: &DefenceConfig,
) -> Result<(LabeledDataset, SanitizationReport)> {
    config.validate()?;
    let mut current = data.clone();
    let mut relabels_per_pass = Vec::new();
    let mut converged = false;
    while relabels_per_pass.len() < config.max_passes {
        let (next, relabels) = sanitize_pass(&current, config)?;
        let done = relabels.is_empty();
        relabels_per_pass.push(relabels);
        current = next;
        if done {
            converged = true;
            break;
        }
    }
    let passes_run = relabels_per_pass.len();
    Ok((
        current,
        SanitizationReport {
            relabels_per_pass,
            passes_run,
            converged,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Example;
    use crate::synth::{collinear_chain, two_gaussian_blobs};
    use proptest::prelude::*;

    fn points(coords: &[(f64, f64)], labels: &[Label]) -> LabeledDataset {
        LabeledDataset::new(
            coords
                .iter()
                .zip(labels)
                .map(|(&(x, y), &l)| Example::new(vec![x, y], l))
                .collect(),
            2,
        )
        .unwrap()
    }

    fn line(xs: &[f64], labels: &[Label]) -> LabeledDataset {
        LabeledDataset::new(
            xs.iter()
                .zip(labels)
                .map(|(&x, &l)| Example::new(vec![x], l))
                .collect(),
            1,
        )
        .unwrap()
    }

    #[test]
    fn knn_nearest_by_inspection() {
        let d = line(&[0.0, 1.0, 10.0], &[Label::Pos; 3]);
        assert_eq!(knn_indices(&d, 0, 1).unwrap(), vec![1]);
        assert_eq!(knn_indices(&d, 2, 2).unwrap(), vec![1, 0]);
    }

    #[test]
    fn knn_excludes_query_even_for_duplicates() {
        let d = line(&[0.0, 5.0, 0.0], &[Label::Pos; 3]);
        // Point 2 duplicates point 0; the duplicate's index is returned.
        assert_eq!(knn_indices(&d, 0, 1).unwrap(), vec![2]);
    }

    #[test]
    fn knn_distance_tie_breaks_by_lower_index() {
        let d = points(
            &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (5.0, 5.0)],
            &[Label::Pos; 4],
        );
        assert_eq!(knn_indices(&d, 0, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn knn_k_out_of_range() {
        let d = line(&[0.0, 1.0], &[Label::Pos; 2]);
        assert!(matches!(
            knn_indices(&d, 0, 2),
            Err(Error::KOutOfRange { .. })
        ));
        assert!(matches!(
            knn_indices(&d, 0, 0),
            Err(Error::KOutOfRange { .. })
        ));
    }

    #[test]
    fn confidence_and_mode_hand_values() {
        let l = [Label::Pos, Label::Pos, Label::Neg];
        assert_eq!(confidence(&l).unwrap(), 2.0 / 3.0);
        assert_eq!(mode_label(&l).unwrap(), Label::Pos);

        let unanimous = [Label::Pos; 4];
        assert_eq!(confidence(&unanimous).unwrap(), 1.0);
        assert_eq!(mode_label(&unanimous).unwrap(), Label::Pos);

        let tie = [Label::Pos, Label::Neg];
        assert_eq!(confidence(&tie).unwrap(), 0.5);
        assert_eq!(mode_label(&tie).unwrap(), Label::Pos);
        // Symmetric handling: order does not matter.
        assert_eq!(mode_label(&[Label::Neg, Label::Pos]).unwrap(), Label::Pos);

        assert!(confidence(&[]).is_err());
        assert!(mode_label(&[]).is_err());
    }

    #[test]
    fn pure_clusters_are_untouched() {
        let d = two_gaussian_blobs(8, 10.0, 0.5, 33);
        let config = DefenceConfig::new(3, 0.5).unwrap();
        let (out, relabels) = sanitize_pass(&d, &config).unwrap();
        assert!(relabels.is_empty());
        assert_eq!(out, d);
    }

    #[test]
    fn interior_outlier_is_relabelled() {
        // One negative point inside a cluster of ten positives.
        let mut coords = vec![(0.0, 0.0)];
        let mut labels = vec![Label::Neg];
        for i in 0..10 {
            let angle = i as f64 * std::f64::consts::TAU / 10.0;
            coords.push((angle.cos() * 0.5, angle.sin() * 0.5));
            labels.push(Label::Pos);
        }
        let d = points(&coords, &labels);
        let config = DefenceConfig::new(3, 0.5).unwrap();
        let (out, relabels) = sanitize_pass(&d, &config).unwrap();
        assert_eq!(relabels.len(), 1);
        assert_eq!(relabels[0].index, 0);
        assert_eq!(relabels[0].old_label, Label::Neg);
        assert_eq!(relabels[0].new_label, Label::Pos);
        assert_eq!(out.label(0), Label::Pos);
    }

    #[test]
    fn threshold_blocks_non_unanimous_neighbourhood() {
        // Query 0 at the origin; neighbours (+1, +1, -1); eta = 1.0 demands
        // unanimity, so no relabel.
        let d = points(
            &[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)],
            &[Label::Neg, Label::Pos, Label::Pos, Label::Neg],
        );
        let strict = DefenceConfig::new(3, 1.0).unwrap();
        let (_, relabels) = sanitize_pass(&d, &strict).unwrap();
        assert!(relabels.iter().all(|r| r.index != 0));
        // With eta = 0.5 the 2/3 majority flips it.
        let loose = DefenceConfig::new(3, 0.5).unwrap();
        let (out, _) = sanitize_pass(&d, &loose).unwrap();
        assert_eq!(out.label(0), Label::Pos);
    }

    #[test]
    fn even_k_tie_keeps_original_label() {
        // Point 0 sees one label of each kind at k=2: confidence 0.5 equals
        // eta, but a tie never relabels. Point 1's neighbourhood (N, N) is a
        // strict majority and does.
        let d = line(&[0.0, 1.0, 2.0], &[Label::Neg, Label::Pos, Label::Neg]);
        let config = DefenceConfig::new(2, 0.5).unwrap();
        let (out, relabels) = sanitize_pass(&d, &config).unwrap();
        assert_eq!(out.labels(), vec![Label::Neg, Label::Neg, Label::Neg]);
        assert_eq!(relabels.len(), 1);
        assert_eq!(relabels[0].index, 1);
    }

    #[test]
    fn updates_are_simultaneous_within_a_pass() {
        // Two mutual neighbours with opposite labels swap in one pass; a
        // sequential in-place update would collapse both onto one label.
        let d = line(&[0.0, 1.0], &[Label::Pos, Label::Neg]);
        let config = DefenceConfig::new(1, 0.5).unwrap();
        let (out, relabels) = sanitize_pass(&d, &config).unwrap();
        assert_eq!(out.labels(), vec![Label::Neg, Label::Pos]);
        assert_eq!(relabels.len(), 2);
    }

    #[test]
    fn oscillating_pair_hits_max_passes_without_convergence() {
        let d = line(&[0.0, 1.0], &[Label::Pos, Label::Neg]);
        let config = DefenceConfig::new(1, 0.5).unwrap().with_max_passes(7);
        let (_, report) = sanitize(&d, &config).unwrap();
        assert_eq!(report.passes_run, 7);
        assert!(!report.converged);
        assert_eq!(report.total_relabels(), 14);
    }

    #[test]
    fn chain_fixpoint_matches_hand_simulation() {
        // Points 0..4 on a line labelled (-1, +1, +1, +1, +1), k=2, eta=1.
        // Pass 1: point 0 sees (1, 2) unanimous +1 and is relabelled; point 1
        // sees the tie (0, 2) = (-1, +1) and keeps its label; the rest see
        // unanimous +1 matching their own label. Pass 2 changes nothing.
        let d = collinear_chain(&[Label::Neg, Label::Pos, Label::Pos, Label::Pos, Label::Pos]);
        let config = DefenceConfig::new(2, 1.0).unwrap().with_max_passes(50);
        let (out, report) = sanitize(&d, &config).unwrap();
        assert_eq!(out.labels(), vec![Label::Pos; 5]);
        assert_eq!(report.passes_run, 2);
        assert!(report.converged);
        assert_eq!(report.relabeled_indices_per_pass(), vec![vec![0], vec![]]);
    }

    #[test]
    fn single_pass_default_runs_exactly_once() {
        let d = collinear_chain(&[Label::Neg, Label::Pos, Label::Pos, Label::Pos, Label::Pos]);
        let config = DefenceConfig::new(2, 1.0).unwrap();
        let (_, report) = sanitize(&d, &config).unwrap();
        assert_eq!(report.passes_run, 1);
        assert!(!report.converged); // pass 1 relabelled a point
    }

    #[test]
    fn fixpoint_input_converges_immediately() {
        let d = two_gaussian_blobs(6, 10.0, 0.5, 8);
        let config = DefenceConfig::new(3, 0.5).unwrap().with_max_passes(10);
        let (out, report) = sanitize(&d, &config).unwrap();
        assert_eq!(out, d);
        assert_eq!(report.passes_run, 1);
        assert!(report.converged);
        assert_eq!(report.total_relabels(), 0);
    }

    #[test]
    fn relabel_count_non_increasing_in_eta() {
        // Poison a blob pair and sweep eta upward.
        let clean = two_gaussian_blobs(15, 6.0, 1.0, 44);
        let poisoned = crate::attack::random_flip(&clean, 6, 5).unwrap().poisoned;
        let mut previous = usize::MAX;
        for eta in [0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
            let config = DefenceConfig::new(5, eta).unwrap();
            let (_, relabels) = sanitize_pass(&poisoned, &config).unwrap();
            assert!(
                relabels.len() <= previous,
                "relabels grew from {previous} to {} at eta={eta}",
                relabels.len()
            );
            previous = relabels.len();
        }
    }

    #[test]
    fn features_never_change() {
        let clean = two_gaussian_blobs(10, 4.0, 1.5, 14);
        let poisoned = crate::attack::random_flip(&clean, 8, 2).unwrap().poisoned;
        let config = DefenceConfig::new(3, 0.5).unwrap().with_max_passes(5);
        let (out, _) = sanitize(&poisoned, &config).unwrap();
        for (a, b) in poisoned.examples().iter().zip(out.examples()) {
            assert_eq!(a.features, b.features);
        }
    }

    #[test]
    fn dataset_too_small_for_k_rejected() {
        let d = line(&[0.0, 1.0, 2.0], &[Label::Pos; 3]);
        let config = DefenceConfig::new(3, 0.5).unwrap();
        assert!(matches!(
            sanitize_pass(&d, &config),
            Err(Error::KOutOfRange { .. })
        ));
    }

    #[test]
    fn invalid_eta_rejected() {
        assert!(DefenceConfig::new(3, 0.49).is_err());
        assert!(DefenceConfig::new(3, 1.01).is_err());
        assert!(DefenceConfig::new(0, 0.5).is_err());
    }

    #[test]
    fn report_csv_format() {
        let d = collinear_chain(&[Label::Neg, Label::Pos, Label::Pos, Label::Pos, Label::Pos]);
        let config = DefenceConfig::new(2, 1.0).unwrap().with_max_passes(50);
        let (_, report) = sanitize(&d, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        report.write_csv(&path).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        assert_eq!(content, "pass,index,old_label,new_label\n1,0,-1,1\n");
    }

    proptest! {
        /// Negating every input label negates every output label (odd k so
        /// the tie convention never engages).
        #[test]
        fn sanitize_is_label_symmetric(
            raw in proptest::collection::vec((-50i32..50, -50i32..50, prop::bool::ANY), 4..24),
            k_choice in 0usize..3,
            eta_step in 0usize..6,
        ) {
            let labels: Vec<Label> = raw
                .iter()
                .map(|&(_, _, b)| if b { Label::Pos } else { Label::Neg })
                .collect();
            let coords: Vec<(f64, f64)> = raw
                .iter()
                .map(|&(x, y, _)| (x as f64, y as f64))
                .collect();
            let d = points(&coords, &labels);
            let negated = points(
                &coords,
                &labels.iter().map(|l| l.flipped()).collect::<Vec<_>>(),
            );
            let mut max_k = d.len() - 1;
            if max_k % 2 == 0 {
                max_k -= 1;
            }
            let k = [1usize, 3, 5][k_choice].min(max_k); // odd, in range
            let eta = 0.5 + eta_step as f64 * 0.1;
            let config = DefenceConfig { k, eta, max_passes: 3 };
            let (out, _) = sanitize(&d, &config).unwrap();
            let (out_neg, _) = sanitize(&negated, &config).unwrap();
            let flipped: Vec<Label> = out.labels().iter().map(|l| l.flipped()).collect();
            prop_assert_eq!(out_neg.labels(), flipped);
        }

        /// The sanitizer is a pure function of (data, config).
        #[test]
        fn sanitize_is_deterministic(seed in 0u64..200) {
            let clean = two_gaussian_blobs(8, 5.0, 1.2, seed);
            let poisoned = crate::attack::random_flip(&clean, 3, seed).unwrap().poisoned;
            let config = DefenceConfig::new(3, 0.5).unwrap().with_max_passes(4);
            let a = sanitize(&poisoned, &config).unwrap();
            let b = sanitize(&poisoned, &config).unwrap();
            prop_assert_eq!(a.0, b.0);
            prop_assert_eq!(a.1, b.1);
        }
    }
}
