//! Evaluation protocol: repeated random splits, greedy poisoning at a sweep
//! of fractions, validation-based selection of the sanitizer's `k`, and
//! aggregation of the per-split error records.
//!
//! All randomness derives from `master_seed`: split `s` uses seed
//! `master_seed + s` for both the split itself and every model trained
//! within it, so two runs of the same config produce identical tables
//! regardless of thread count.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::attack::{budget_from_fraction, lfa_greedy};
use crate::dataset::{random_split, subsample, LabeledDataset, Standardizer};
use crate::defence::{sanitize, DefenceConfig};
use crate::error::{Error, Result};
use crate::linear_model::{train_sgd, zero_one_error, TrainConfig};
use crate::util::write_atomic;

/// Default grid for validation-based selection of the sanitizer's `k`.
pub const DEFAULT_K_GRID: [usize; 6] = [1, 3, 5, 10, 15, 20];

/// Default poison fractions swept by an experiment.
pub const DEFAULT_FRACTIONS: [f64; 5] = [0.0, 0.05, 0.1, 0.15, 0.2];

/// Full experiment definition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Dataset identifier carried into every result row.
    pub dataset: String,
    /// Poison fractions, ascending, each in `[0, 1)`.
    pub poison_fractions: Vec<f64>,
    /// Number of random splits.
    pub repetitions: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub train_config: TrainConfig,
    /// Sanitizer confidence threshold.
    pub eta: f64,
    /// Candidate neighbour counts for validation-based selection.
    pub k_grid: Vec<usize>,
    pub master_seed: u64,
    /// Sanitizer pass budget (1 = the single-pass protocol).
    pub max_passes: usize,
    /// Optional seeded row subsample applied before splitting, for
    /// desk-scale runs of large datasets.
    pub budget: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            dataset: String::new(),
            poison_fractions: DEFAULT_FRACTIONS.to_vec(),
            repetitions: 10,
            n_train: 100,
            n_val: 100,
            train_config: TrainConfig::default(),
            eta: 0.5,
            k_grid: DEFAULT_K_GRID.to_vec(),
            master_seed: 42,
            max_passes: 1,
            budget: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidParameter(
                "repetitions must be at least 1".to_string(),
            ));
        }
        if self.poison_fractions.is_empty() {
            return Err(Error::InvalidParameter(
                "at least one poison fraction is required".to_string(),
            ));
        }
        for pair in self.poison_fractions.windows(2) {
            if pair[1] < pair[0] {
                return Err(Error::InvalidParameter(
                    "poison fractions must be sorted ascending".to_string(),
                ));
            }
        }
        if let Some(&f) = self
            .poison_fractions
            .iter()
            .find(|f| !(0.0..1.0).contains(*f))
        {
            return Err(Error::InvalidParameter(format!(
                "poison fractions must be in [0, 1), got {f}"
            )));
        }
        if self.n_train == 0 || self.n_val == 0 {
            return Err(Error::InvalidParameter(
                "n_train and n_val must be positive".to_string(),
            ));
        }
        if self.k_grid.is_empty() {
            return Err(Error::InvalidParameter(
                "k grid must not be empty".to_string(),
            ));
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
        self.train_config.validate()
    }
}

/// Which pipeline produced a result row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Condition {
    /// No attack, no defence.
    Clean,
    /// Poisoned training set, no defence.
    Undefended,
    /// Poisoned training set run through the sanitizer before training.
    Defended,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Clean => write!(f, "clean"),
            Condition::Undefended => write!(f, "undefended"),
            Condition::Defended => write!(f, "defended"),
        }
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Condition> {
        match s {
            "clean" => Ok(Condition::Clean),
            "undefended" => Ok(Condition::Undefended),
            "defended" => Ok(Condition::Defended),
            other => Err(Error::InvalidParameter(format!(
                "unknown condition '{other}'"
            ))),
        }
    }
}

/// One error measurement: a (dataset, fraction, split, condition) cell plus
/// the defence parameters that produced it, when any.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub dataset: String,
    pub fraction: f64,
    pub split_id: usize,
    pub condition: Condition,
    pub k_selected: Option<usize>,
    pub eta: Option<f64>,
    pub test_error: f64,
    pub validation_error: f64,
}

impl ResultRow {
    fn key(&self) -> (String, u64, usize, Condition, Option<usize>, Option<u64>) {
        (
            self.dataset.clone(),
            self.fraction.to_bits(),
            self.split_id,
            self.condition,
            self.k_selected,
            self.eta.map(f64::to_bits),
        )
    }
}

const RESULTS_HEADER: &str =
    "dataset,fraction,split_id,condition,k_selected,eta,test_error,validation_error";

/// Ordered collection of result rows with unique
/// (dataset, fraction, split, condition, defence-parameter) keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn new() -> ResultsTable {
        ResultsTable::default()
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn push(&mut self, row: ResultRow) -> Result<()> {
        if !(0.0..=1.0).contains(&row.test_error) || !(0.0..=1.0).contains(&row.validation_error)
        {
            return Err(Error::Internal(format!(
                "error rates must lie in [0, 1], got test {} / validation {}",
                row.test_error, row.validation_error
            )));
        }
        if self.rows.iter().any(|r| r.key() == row.key()) {
            return Err(Error::Internal(format!(
                "duplicate result row for ({}, {}, {}, {})",
                row.dataset, row.fraction, row.split_id, row.condition
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    fn extend(&mut self, rows: Vec<ResultRow>) -> Result<()> {
        for row in rows {
            self.push(row)?;
        }
        Ok(())
    }

    /// Writes the table as CSV in the fixed column order
    /// `dataset,fraction,split_id,condition,k_selected,eta,test_error,validation_error`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from(RESULTS_HEADER);
        out.push('\n');
        for r in &self.rows {
            let k = r.k_selected.map(|k| k.to_string()).unwrap_or_default();
            let eta = r.eta.map(|e| e.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.dataset,
                r.fraction,
                r.split_id,
                r.condition,
                k,
                eta,
                r.test_error,
                r.validation_error
            ));
        }
        write_atomic(path, out.as_bytes())
    }

    /// Reads a table written by [`ResultsTable::write_csv`], validating the
    /// header schema.
    pub fn read_csv(path: &Path) -> Result<ResultsTable> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut lines = content.lines().enumerate();
        let header = lines.next().map(|(_, l)| l.trim_end_matches('\r'));
        if header != Some(RESULTS_HEADER) {
            return Err(Error::MalformedInput {
                path: path.to_path_buf(),
                reason: format!(
                    "unexpected results schema; expected header '{RESULTS_HEADER}'"
                ),
            });
        }
        let mut table = ResultsTable::new();
        for (idx, line) in lines {
            let row = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.trim_end_matches('\r').split(',').collect();
            if cells.len() != 8 {
                return Err(Error::RaggedRow {
                    path: path.to_path_buf(),
                    row,
                    expected: 8,
                    found: cells.len(),
                });
            }
            let parse_f64 = |column: usize, v: &str| -> Result<f64> {
                v.parse().map_err(|_| Error::InvalidNumber {
                    path: path.to_path_buf(),
                    row,
                    column,
                    value: v.to_string(),
                })
            };
            let parse_usize = |column: usize, v: &str| -> Result<usize> {
                v.parse().map_err(|_| Error::InvalidNumber {
                    path: path.to_path_buf(),
                    row,
                    column,
                    value: v.to_string(),
                })
            };
            table.push(ResultRow {
                dataset: cells[0].to_string(),
                fraction: parse_f64(2, cells[1])?,
                split_id: parse_usize(3, cells[2])?,
                condition: cells[3].parse()?,
                k_selected: if cells[4].is_empty() {
                    None
                } else {
                    Some(parse_usize(5, cells[4])?)
                },
                eta: if cells[5].is_empty() {
                    None
                } else {
                    Some(parse_f64(6, cells[5])?)
                },
                test_error: parse_f64(7, cells[6])?,
                validation_error: parse_f64(8, cells[7])?,
            })?;
        }
        Ok(table)
    }
}

/// Mean/std of the test error over splits for one
/// (dataset, fraction, condition) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub fraction: f64,
    pub condition: Condition,
    pub mean_error: f64,
    pub std_error: f64,
    pub n_splits: usize,
}

/// Like [`SummaryRow`] but additionally keyed by the defence parameters, for
/// sensitivity tables where several defended variants coexist.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummaryRow {
    pub dataset: String,
    pub fraction: f64,
    pub condition: Condition,
    pub k_selected: Option<usize>,
    pub eta: Option<f64>,
    pub mean_error: f64,
    pub std_error: f64,
    pub n_splits: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups the table by (dataset, fraction, condition) and reports mean and
/// population standard deviation of the test error over splits. Output rows
/// are ordered by the group key.
pub fn aggregate(table: &ResultsTable) -> Result<Vec<SummaryRow>> {
    if table.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot aggregate an empty results table".to_string(),
        ));
    }
    let mut groups: Vec<((String, u64, Condition), Vec<f64>)> = Vec::new();
    for r in table.rows() {
        let key = (r.dataset.clone(), r.fraction.to_bits(), r.condition);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, values)) => values.push(r.test_error),
            None => groups.push((key, vec![r.test_error])),
        }
    }
    groups.sort_by(|a, b| {
        let (ad, af, ac) = &a.0;
        let (bd, bf, bc) = &b.0;
        (ad, af, ac).cmp(&(bd, bf, bc))
    });
    Ok(groups
        .into_iter()
        .map(|((dataset, fraction_bits, condition), values)| {
            let (mean_error, std_error) = mean_std(&values);
            SummaryRow {
                dataset,
                fraction: f64::from_bits(fraction_bits),
                condition,
                mean_error,
                std_error,
                n_splits: values.len(),
            }
        })
        .collect())
}

/// Aggregation that keeps distinct defence parameter combinations apart;
/// the right view for sensitivity tables.
pub fn aggregate_by_params(table: &ResultsTable) -> Result<Vec<ParamSummaryRow>> {
    if table.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot aggregate an empty results table".to_string(),
        ));
    }
    type Key = (String, u64, Condition, Option<usize>, Option<u64>);
    let mut groups: Vec<(Key, Vec<f64>)> = Vec::new();
    for r in table.rows() {
        let key = (
            r.dataset.clone(),
            r.fraction.to_bits(),
            r.condition,
            r.k_selected,
            r.eta.map(f64::to_bits),
        );
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, values)) => values.push(r.test_error),
            None => groups.push((key, vec![r.test_error])),
        }
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(groups
        .into_iter()
        .map(|((dataset, fraction_bits, condition, k_selected, eta_bits), values)| {
            let (mean_error, std_error) = mean_std(&values);
            ParamSummaryRow {
                dataset,
                fraction: f64::from_bits(fraction_bits),
                condition,
                k_selected,
                eta: eta_bits.map(f64::from_bits),
                mean_error,
                std_error,
                n_splits: values.len(),
            }
        })
        .collect())
}

/// Writes summary rows as CSV:
/// `dataset,fraction,condition,mean_error,std_error,n_splits`.
pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut out = String::from("dataset,fraction,condition,mean_error,std_error,n_splits\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.dataset, r.fraction, r.condition, r.mean_error, r.std_error, r.n_splits
        ));
    }
    write_atomic(path, out.as_bytes())
}

/// Writes parameter-keyed summary rows as CSV:
/// `dataset,fraction,condition,k,eta,mean_error,std_error,n_splits`.
pub fn write_param_summary_csv(rows: &[ParamSummaryRow], path: &Path) -> Result<()> {
    let mut out = String::from("dataset,fraction,condition,k,eta,mean_error,std_error,n_splits\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.dataset,
            r.fraction,
            r.condition,
            r.k_selected.map(|k| k.to_string()).unwrap_or_default(),
            r.eta.map(|e| e.to_string()).unwrap_or_default(),
            r.mean_error,
            r.std_error,
            r.n_splits
        ));
    }
    write_atomic(path, out.as_bytes())
}

/// Picks the sanitizer's `k` on the trusted validation set: for each
/// candidate, sanitize the poisoned training set, retrain, and measure the
/// validation zero-one error; the smallest error wins, ties to the smallest
/// `k`.
pub fn select_k(
    poisoned_train: &LabeledDataset,
    trusted_validation: &LabeledDataset,
    k_grid: &[usize],
    eta: f64,
    max_passes: usize,
    train_config: &TrainConfig,
) -> Result<usize> {
    if k_grid.is_empty() {
        return Err(Error::InvalidParameter(
            "k grid must not be empty".to_string(),
        ));
    }
    if trusted_validation.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut grid: Vec<usize> = k_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();

    let mut best: Option<(usize, f64)> = None;
    for &k in &grid {
        let config = DefenceConfig::new(k, eta)?.with_max_passes(max_passes);
        let (sanitized, _) = sanitize(poisoned_train, &config)?;
        let weights = train_sgd(&sanitized, train_config)?;
        let error = zero_one_error(&weights, trusted_validation)?;
        if best.map_or(true, |(_, e)| error < e) {
            best = Some((k, error));
        }
    }
    Ok(best.expect("grid is nonempty").0)
}

/// How the defended condition is produced for each split/fraction cell.
enum DefencePlan<'a> {
    /// Validation-based selection of `k` from a grid.
    SelectK { k_grid: &'a [usize], eta: f64 },
    /// Fixed parameter combinations, one defended row per entry.
    Fixed(Vec<DefenceConfig>),
}

/// Values swept by [`sensitivity_sweep`]. The companion parameter stays at
/// the protocol value: `eta = 0.5` when varying `k`, `k = 10` when varying
/// `eta`.
#[derive(Debug, Clone, PartialEq)]
pub enum SensitivityValues {
    K(Vec<usize>),
    Eta(Vec<f64>),
}

/// Runs the full poisoning protocol and returns one row per
/// (split, fraction, condition).
///
/// Per split: draw a seeded 100/100/rest split (sizes from the config),
/// standardize on the training part, record the clean baseline, then for
/// every fraction run the greedy attack, record the undefended error, select
/// `k` on the trusted validation set, sanitize, retrain, and record the
/// defended error. Test error is always measured on the held-out test part.
pub fn run_poison_sweep(data: &LabeledDataset, config: &ExperimentConfig) -> Result<ResultsTable> {
    let plan = DefencePlan::SelectK {
        k_grid: &config.k_grid,
        eta: config.eta,
    };
    run_sweep(data, config, &plan)
}

/// Like [`run_poison_sweep`] but with fixed defence parameter grids instead
/// of validation-based selection; emits one defended row per value in
/// `values` for every (split, fraction) cell.
pub fn sensitivity_sweep(
    data: &LabeledDataset,
    config: &ExperimentConfig,
    values: &SensitivityValues,
) -> Result<ResultsTable> {
    let configs: Vec<DefenceConfig> = match values {
        SensitivityValues::K(ks) => {
            if ks.is_empty() {
                return Err(Error::InvalidParameter(
                    "sensitivity values must not be empty".to_string(),
                ));
            }
            ks.iter()
                .map(|&k| Ok(DefenceConfig::new(k, 0.5)?.with_max_passes(config.max_passes)))
                .collect::<Result<_>>()?
        }
        SensitivityValues::Eta(etas) => {
            if etas.is_empty() {
                return Err(Error::InvalidParameter(
                    "sensitivity values must not be empty".to_string(),
                ));
            }
            etas.iter()
                .map(|&eta| Ok(DefenceConfig::new(10, eta)?.with_max_passes(config.max_passes)))
                .collect::<Result<_>>()?
        }
    };
    let plan = DefencePlan::Fixed(configs);
    run_sweep(data, config, &plan)
}

fn run_sweep(
    data: &LabeledDataset,
    config: &ExperimentConfig,
    plan: &DefencePlan,
) -> Result<ResultsTable> {
    config.validate()?;

    let working;
    let source = match config.budget {
        Some(b) if b < data.len() => {
            working = subsample(data, b, config.master_seed)?;
            &working
        }
        _ => data,
    };

    if let DefencePlan::SelectK { k_grid, .. } = plan {
        if let Some(&k) = k_grid.iter().find(|&&k| k + 1 > config.n_train) {
            return Err(Error::KOutOfRange {
                k,
                max: config.n_train.saturating_sub(1),
            });
        }
    }

    let split_rows: Vec<Vec<ResultRow>> = (0..config.repetitions)
        .into_par_iter()
        .map(|split_id| run_split(source, config, plan, split_id))
        .collect::<Result<Vec<_>>>()?;

    let mut table = ResultsTable::new();
    for rows in split_rows {
        table.extend(rows)?;
    }
    Ok(table)
}

fn run_split(
    source: &LabeledDataset,
    config: &ExperimentConfig,
    plan: &DefencePlan,
    split_id: usize,
) -> Result<Vec<ResultRow>> {
    let seed = config.master_seed + split_id as u64;
    let split = random_split(source, config.n_train, config.n_val, seed)?;
    let standardizer = Standardizer::fit(&split.train)?;
    let train = standardizer.apply(&split.train)?;
    let validation = standardizer.apply(&split.validation)?;
    let test = standardizer.apply(&split.test)?;

    // The attack's inner retraining reuses the split seed so candidate
    // scores stay comparable across rounds and runs.
    let train_config = TrainConfig {
        seed,
        ..config.train_config.clone()
    };

    let mut rows = Vec::new();
    let mut record = |fraction: f64,
                      condition: Condition,
                      k_selected: Option<usize>,
                      eta: Option<f64>,
                      weights: &crate::linear_model::Weights|
     -> Result<()> {
        rows.push(ResultRow {
            dataset: config.dataset.clone(),
            fraction,
            split_id,
            condition,
            k_selected,
            eta,
            test_error: zero_one_error(weights, &test)?,
            validation_error: zero_one_error(weights, &validation)?,
        });
        Ok(())
    };

    let clean_weights = train_sgd(&train, &train_config)?;
    record(0.0, Condition::Clean, None, None, &clean_weights)?;

    for &fraction in &config.poison_fractions {
        let p = budget_from_fraction(config.n_train, fraction)?;
        let attack = lfa_greedy(&train, &validation, p, &train_config)?;
        let poisoned = attack.poisoned;

        let undefended_weights = train_sgd(&poisoned, &train_config)?;
        record(
            fraction,
            Condition::Undefended,
            None,
            None,
            &undefended_weights,
        )?;

        match plan {
            DefencePlan::SelectK { k_grid, eta } => {
                let k = select_k(
                    &poisoned,
                    &validation,
                    k_grid,
                    *eta,
                    config.max_passes,
                    &train_config,
                )?;
                let defence = DefenceConfig::new(k, *eta)?.with_max_passes(config.max_passes);
                let (sanitized, _) = sanitize(&poisoned, &defence)?;
                let defended_weights = train_sgd(&sanitized, &train_config)?;
                record(
                    fraction,
                    Condition::Defended,
                    Some(k),
                    Some(*eta),
                    &defended_weights,
                )?;
            }
            DefencePlan::Fixed(configs) => {
                for defence in configs {
                    let (sanitized, _) = sanitize(&poisoned, defence)?;
                    let defended_weights = train_sgd(&sanitized, &train_config)?;
                    record(
                        fraction,
                        Condition::Defended,
                        Some(defence.k),
                        Some(defence.eta),
                        &defended_weights,
                    )?;
                }
            }
        }
    }
    Ok(rows)
}

/// Mean test error for one (condition, fraction) cell of a summary. Small
/// convenience used by reporting and the acceptance checks.
pub fn summary_mean(
    rows: &[SummaryRow],
    condition: Condition,
    fraction: f64,
) -> Option<f64> {
    rows.iter()
        .find(|r| r.condition == condition && r.fraction == fraction)
        .map(|r| r.mean_error)
}

/// All split ids present in a table; handy for audits.
pub fn split_ids(table: &ResultsTable) -> Vec<usize> {
    let mut ids: Vec<usize> = table
        .rows()
        .iter()
        .map(|r| r.split_id)
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    ids.sort_unstable();
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::two_gaussian_blobs;

    fn toy_config(dataset: &str) -> ExperimentConfig {
        ExperimentConfig {
            dataset: dataset.to_string(),
            poison_fractions: vec![0.0, 0.1],
            repetitions: 1,
            n_train: 20,
            n_val: 20,
            train_config: TrainConfig {
                epochs: 30,
                ..TrainConfig::default()
            },
            k_grid: vec![1, 3, 5],
            master_seed: 3,
            ..ExperimentConfig::default()
        }
    }

    fn toy_data() -> LabeledDataset {
        two_gaussian_blobs(40, 5.0, 1.0, 17)
    }

    #[test]
    fn select_k_single_candidate_returned() {
        let d = toy_data();
        let tc = TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        };
        let k = select_k(&d, &d, &[5], 0.5, 1, &tc).unwrap();
        assert_eq!(k, 5);
    }

    #[test]
    fn select_k_ties_go_to_smallest() {
        // Clean separable data: every k gives validation error 0.
        let d = two_gaussian_blobs(20, 8.0, 0.5, 9);
        let val = two_gaussian_blobs(10, 8.0, 0.5, 10);
        let tc = TrainConfig {
            epochs: 50,
            ..TrainConfig::default()
        };
        let k = select_k(&d, &val, &[5, 1, 3], 0.5, 1, &tc).unwrap();
        assert_eq!(k, 1);
    }

    #[test]
    fn select_k_matches_two_candidate_oracle() {
        let clean = two_gaussian_blobs(15, 5.0, 1.0, 31);
        let val = two_gaussian_blobs(15, 5.0, 1.0, 32);
        let tc = TrainConfig {
            epochs: 30,
            seed: 5,
            ..TrainConfig::default()
        };
        let poisoned = crate::attack::random_flip(&clean, 8, 6).unwrap().poisoned;

        // Independent evaluation of both candidates.
        let eval = |k: usize| {
            let cfg = DefenceConfig::new(k, 0.5).unwrap();
            let (s, _) = sanitize(&poisoned, &cfg).unwrap();
            let w = train_sgd(&s, &tc).unwrap();
            zero_one_error(&w, &val).unwrap()
        };
        let (e1, e5) = (eval(1), eval(5));
        let expected = if e5 < e1 { 5 } else { 1 };

        assert_eq!(select_k(&poisoned, &val, &[1, 5], 0.5, 1, &tc).unwrap(), expected);
    }

    #[test]
    fn select_k_rejects_empty_grid_and_oversized_k() {
        let d = toy_data();
        let tc = TrainConfig::default();
        assert!(select_k(&d, &d, &[], 0.5, 1, &tc).is_err());
        assert!(matches!(
            select_k(&d, &d, &[d.len()], 0.5, 1, &tc),
            Err(Error::KOutOfRange { .. })
        ));
    }

    #[test]
    fn sweep_produces_expected_row_shape() {
        let table = run_poison_sweep(&toy_data(), &toy_config("toy")).unwrap();
        // 1 split x (1 clean + 2 fractions x (undefended + defended)).
        assert_eq!(table.rows().len(), 5);
        let conditions: Vec<Condition> = table.rows().iter().map(|r| r.condition).collect();
        assert_eq!(
            conditions,
            vec![
                Condition::Clean,
                Condition::Undefended,
                Condition::Defended,
                Condition::Undefended,
                Condition::Defended,
            ]
        );
    }

    #[test]
    fn undefended_at_fraction_zero_equals_clean() {
        let table = run_poison_sweep(&toy_data(), &toy_config("toy")).unwrap();
        let clean: Vec<&ResultRow> = table
            .rows()
            .iter()
            .filter(|r| r.condition == Condition::Clean)
            .collect();
        let undef0: Vec<&ResultRow> = table
            .rows()
            .iter()
            .filter(|r| r.condition == Condition::Undefended && r.fraction == 0.0)
            .collect();
        assert_eq!(clean.len(), undef0.len());
        for (c, u) in clean.iter().zip(&undef0) {
            assert_eq!(c.test_error, u.test_error);
            assert_eq!(c.validation_error, u.validation_error);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let config = toy_config("toy");
        let d = toy_data();
        let a = run_poison_sweep(&d, &config).unwrap();
        let b = run_poison_sweep(&d, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn selected_k_always_in_grid() {
        let config = toy_config("toy");
        let table = run_poison_sweep(&toy_data(), &config).unwrap();
        for r in table.rows() {
            if let Some(k) = r.k_selected {
                assert!(config.k_grid.contains(&k));
            }
        }
    }

    #[test]
    fn budget_subsample_is_applied() {
        let mut config = toy_config("toy");
        config.budget = Some(50);
        let table = run_poison_sweep(&toy_data(), &config).unwrap();
        assert_eq!(table.rows().len(), 5);
    }

    #[test]
    fn sensitivity_emits_one_defended_row_per_value() {
        let config = toy_config("toy");
        let values = SensitivityValues::K(vec![1, 3]);
        let table = sensitivity_sweep(&toy_data(), &config, &values).unwrap();
        // 1 clean + per fraction (1 undefended + 2 defended) = 1 + 2*3 = 7.
        assert_eq!(table.rows().len(), 7);
        let ks: Vec<Option<usize>> = table
            .rows()
            .iter()
            .filter(|r| r.condition == Condition::Defended)
            .map(|r| r.k_selected)
            .collect();
        assert_eq!(ks, vec![Some(1), Some(3), Some(1), Some(3)]);
    }

    #[test]
    fn sensitivity_single_value_matches_fixed_poison_sweep_shape() {
        let config = toy_config("toy");
        let table = sensitivity_sweep(
            &toy_data(),
            &config,
            &SensitivityValues::Eta(vec![0.5]),
        )
        .unwrap();
        assert_eq!(table.rows().len(), 5);
        for r in table.rows() {
            if r.condition == Condition::Defended {
                assert_eq!(r.k_selected, Some(10));
                assert_eq!(r.eta, Some(0.5));
            }
        }
    }

    #[test]
    fn aggregate_hand_values() {
        let mut table = ResultsTable::new();
        for (split, err) in [(0, 0.2), (1, 0.4)] {
            table
                .push(ResultRow {
                    dataset: "toy".to_string(),
                    fraction: 0.1,
                    split_id: split,
                    condition: Condition::Undefended,
                    k_selected: None,
                    eta: None,
                    test_error: err,
                    validation_error: err,
                })
                .unwrap();
        }
        let summary = aggregate(&table).unwrap();
        assert_eq!(summary.len(), 1);
        assert!((summary[0].mean_error - 0.3).abs() < 1e-15);
        assert_eq!(summary[0].n_splits, 2);

        // A single row has std 0.
        let single = {
            let mut t = ResultsTable::new();
            t.push(table.rows()[0].clone()).unwrap();
            t
        };
        let s = aggregate(&single).unwrap();
        assert_eq!(s[0].mean_error, 0.2);
        assert_eq!(s[0].std_error, 0.0);

        // Aggregating twice gives identical output.
        assert_eq!(aggregate(&table).unwrap(), summary);
    }

    #[test]
    fn aggregate_rejects_empty_table() {
        assert!(aggregate(&ResultsTable::new()).is_err());
    }

    #[test]
    fn duplicate_rows_rejected() {
        let mut table = ResultsTable::new();
        let row = ResultRow {
            dataset: "toy".to_string(),
            fraction: 0.1,
            split_id: 0,
            condition: Condition::Clean,
            k_selected: None,
            eta: None,
            test_error: 0.1,
            validation_error: 0.1,
        };
        table.push(row.clone()).unwrap();
        assert!(matches!(table.push(row), Err(Error::Internal(_))));
    }

    #[test]
    fn results_csv_round_trip() {
        let table = run_poison_sweep(&toy_data(), &toy_config("toy")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        table.write_csv(&path).unwrap();
        let back = ResultsTable::read_csv(&path).unwrap();
        assert_eq!(back, table);
    }

    #[test]
    fn results_csv_schema_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b,c\n1,2,3\n").unwrap();
        assert!(matches!(
            ResultsTable::read_csv(&path),
            Err(Error::MalformedInput { .. })
        ));
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let base = toy_config("toy");
        let mut c = base.clone();
        c.repetitions = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.poison_fractions = vec![0.2, 0.1];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.poison_fractions = vec![1.0];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.eta = 0.2;
        assert!(c.validate().is_err());
        let mut c = base;
        c.k_grid.clear();
        assert!(c.validate().is_err());
    }
}
