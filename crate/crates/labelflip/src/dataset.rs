//! Dataset representation, CSV ingestion, standardization, and seeded
//! train/validation/test splitting.
//!
//! Row order is stable everywhere: index `i` keeps its meaning across every
//! operation in this crate, which is what makes flip vectors and relabel
//! reports auditable.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::util::write_atomic;

/// Standard deviations are floored at this value so constant features map to
/// zero instead of dividing by zero.
pub const STDDEV_FLOOR: f64 = 1e-8;

/// Binary class label. The only two values that ever exist are `-1` and `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    /// Numeric value used by losses and update rules: `+1.0` or `-1.0`.
    pub fn value(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    /// The opposite label.
    pub fn flipped(self) -> Label {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }

    /// Parses the canonical signed encodings `1`, `+1` and `-1`.
    pub fn parse_signed(s: &str) -> Option<Label> {
        match s.trim() {
            "1" | "+1" => Some(Label::Pos),
            "-1" => Some(Label::Neg),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Pos => write!(f, "1"),
            Label::Neg => write!(f, "-1"),
        }
    }
}

/// A single data point: feature vector plus label.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: Label,
}

impl Example {
    pub fn new(features: Vec<f64>, label: Label) -> Example {
        Example { features, label }
    }
}

/// An ordered collection of labeled examples with a fixed feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    examples: Vec<Example>,
    dim: usize,
}

impl LabeledDataset {
    /// Builds a dataset, checking that every row has dimension `dim` and that
    /// all feature values are finite.
    pub fn new(examples: Vec<Example>, dim: usize) -> Result<LabeledDataset> {
        for ex in &examples {
            if ex.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: ex.features.len(),
                });
            }
            if let Some(bad) = ex.features.iter().find(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "non-finite feature value {bad}"
                )));
            }
        }
        Ok(LabeledDataset { examples, dim })
    }

    /// An empty dataset of the given dimension.
    pub fn empty(dim: usize) -> LabeledDataset {
        LabeledDataset {
            examples: Vec::new(),
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn get(&self, index: usize) -> &Example {
        &self.examples[index]
    }

    pub fn label(&self, index: usize) -> Label {
        self.examples[index].label
    }

    pub fn labels(&self) -> Vec<Label> {
        self.examples.iter().map(|ex| ex.label).collect()
    }

    /// Number of positive and negative examples, in that order.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self
            .examples
            .iter()
            .filter(|ex| ex.label == Label::Pos)
            .count();
        (pos, self.examples.len() - pos)
    }

    pub(crate) fn set_label(&mut self, index: usize, label: Label) {
        self.examples[index].label = label;
    }

    pub(crate) fn flip_label(&mut self, index: usize) {
        self.examples[index].label = self.examples[index].label.flipped();
    }

    /// Copies the rows at `indices`, in the order given.
    pub fn select(&self, indices: &[usize]) -> Result<LabeledDataset> {
        let mut examples = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.examples.len() {
                return Err(Error::InvalidParameter(format!(
                    "row index {i} out of range for dataset of size {}",
                    self.examples.len()
                )));
            }
            examples.push(self.examples[i].clone());
        }
        Ok(LabeledDataset {
            examples,
            dim: self.dim,
        })
    }

    /// Writes the canonical CSV form: features in row order, label as the
    /// last column encoded `-1`/`1`, no header. Floats are printed in
    /// shortest round-trip form, so reloading reproduces the dataset
    /// bit-exactly.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for ex in &self.examples {
            for v in &ex.features {
                out.push_str(&v.to_string());
                out.push(',');
            }
            out.push_str(&ex.label.to_string());
            out.push('\n');
        }
        write_atomic(path, out.as_bytes())
    }
}

/// Which column of a CSV file holds the class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    /// The last column of every row.
    Last,
    /// A zero-based column index.
    Index(usize),
}

struct RawRow {
    line: usize,
    features: Vec<f64>,
    raw_label: String,
}

/// Splits a CSV file into feature/raw-label rows, validating arity and
/// numeric feature cells. A header line is detected (and skipped) when any
/// feature cell of the first non-blank line does not parse as a number.
fn scan_rows(path: &Path, label_column: LabelColumn) -> Result<Vec<RawRow>> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let reader = BufReader::new(file);

    let mut rows: Vec<RawRow> = Vec::new();
    let mut expected_cols: Option<usize> = None;
    let mut header_checked = false;

    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end_matches('\r').split(',').map(str::trim).collect();
        let ncols = cells.len();

        let label_idx = |ncols: usize| -> Result<usize> {
            match label_column {
                LabelColumn::Last => Ok(ncols - 1),
                LabelColumn::Index(i) if i < ncols => Ok(i),
                LabelColumn::Index(i) => Err(Error::MalformedInput {
                    path: path.to_path_buf(),
                    reason: format!("label column {i} out of range for {ncols} columns"),
                }),
            }
        };

        if !header_checked {
            header_checked = true;
            if ncols >= 2 {
                let li = label_idx(ncols)?;
                let looks_like_header = cells
                    .iter()
                    .enumerate()
                    .any(|(c, v)| c != li && v.parse::<f64>().is_err());
                if looks_like_header {
                    continue;
                }
            }
        }

        match expected_cols {
            None => {
                if ncols < 2 {
                    return Err(Error::MalformedInput {
                        path: path.to_path_buf(),
                        reason: format!(
                            "row {row}: need at least one feature column and a label column"
                        ),
                    });
                }
                expected_cols = Some(ncols);
            }
            Some(expected) if ncols != expected => {
                return Err(Error::RaggedRow {
                    path: path.to_path_buf(),
                    row,
                    expected,
                    found: ncols,
                });
            }
            Some(_) => {}
        }

        let li = label_idx(ncols)?;
        let mut features = Vec::with_capacity(ncols - 1);
        for (c, cell) in cells.iter().enumerate() {
            if c == li {
                continue;
            }
            let value: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or(
                Error::InvalidNumber {
                    path: path.to_path_buf(),
                    row,
                    column: c + 1,
                    value: cell.to_string(),
                },
            )?;
            features.push(value);
        }
        rows.push(RawRow {
            line: row,
            features,
            raw_label: cells[li].to_string(),
        });
    }

    if rows.is_empty() {
        return Err(Error::MalformedInput {
            path: path.to_path_buf(),
            reason: "no data rows".to_string(),
        });
    }
    Ok(rows)
}

/// Loads a plain CSV file and maps its labels onto `{-1, +1}`.
///
/// When every raw label is already in signed form (`-1`, `1`, `+1`) the
/// encoding is taken as-is, single-class files included. Otherwise the label
/// column must contain exactly two distinct raw values; the numerically (or,
/// failing that, lexicographically) smaller one maps to `-1` unless
/// `positive_value` names the value that should map to `+1`.
pub fn load_csv(
    path: &Path,
    label_column: LabelColumn,
    positive_value: Option<&str>,
) -> Result<LabeledDataset> {
    let rows = scan_rows(path, label_column)?;
    let dim = rows[0].features.len();

    let all_signed = rows
        .iter()
        .all(|r| Label::parse_signed(&r.raw_label).is_some());

    let mut distinct: Vec<String> = Vec::new();
    for r in &rows {
        if !distinct.contains(&r.raw_label) {
            if distinct.len() == 2 {
                let mut found = distinct.clone();
                found.push(r.raw_label.clone());
                return Err(Error::LabelCardinality {
                    path: path.to_path_buf(),
                    row: r.line,
                    found,
                });
            }
            distinct.push(r.raw_label.clone());
        }
    }

    let map_label: Box<dyn Fn(&str) -> Label> = if let Some(pos) = positive_value {
        if !distinct.iter().any(|v| v == pos) {
            return Err(Error::InvalidParameter(format!(
                "positive label value '{pos}' does not occur in the file (labels seen: {distinct:?})"
            )));
        }
        let pos = pos.to_string();
        Box::new(move |raw: &str| if raw == pos { Label::Pos } else { Label::Neg })
    } else if all_signed {
        Box::new(|raw: &str| Label::parse_signed(raw).expect("checked signed"))
    } else {
        if distinct.len() != 2 {
            let last = rows.last().expect("nonempty");
            return Err(Error::LabelCardinality {
                path: path.to_path_buf(),
                row: last.line,
                found: distinct,
            });
        }
        // Numerically smaller raw value maps to -1 when both parse as
        // numbers; otherwise lexicographically smaller maps to -1.
        let (a, b) = (distinct[0].clone(), distinct[1].clone());
        let positive = match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                if x < y {
                    b.clone()
                } else {
                    a.clone()
                }
            }
            _ => {
                if a < b {
                    b.clone()
                } else {
                    a.clone()
                }
            }
        };
        Box::new(move |raw: &str| if raw == positive { Label::Pos } else { Label::Neg })
    };

    let examples = rows
        .into_iter()
        .map(|r| Example::new(r.features, map_label(&r.raw_label)))
        .collect();
    LabeledDataset::new(examples, dim)
}

/// Reads a canonical CSV as written by [`LabeledDataset::write_csv`]: the
/// last column must be a signed label (`-1`, `1`, `+1`). Single-class files
/// are accepted.
pub fn read_canonical_csv(path: &Path) -> Result<LabeledDataset> {
    let rows = scan_rows(path, LabelColumn::Last)?;
    let dim = rows[0].features.len();
    let mut examples = Vec::with_capacity(rows.len());
    for r in rows {
        let label = Label::parse_signed(&r.raw_label).ok_or_else(|| Error::MalformedInput {
            path: path.to_path_buf(),
            reason: format!(
                "row {}: label '{}' is not a signed -1/+1 value",
                r.line, r.raw_label
            ),
        })?;
        examples.push(Example::new(r.features, label));
    }
    LabeledDataset::new(examples, dim)
}

/// Disjoint train/validation/test parts of a source dataset, together with
/// the source row indices each part was drawn from.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Uniformly random disjoint split: `n_train` rows to train, `n_val` to
/// validation, the remainder to test. Sampling is a seeded shuffle of the
/// row indices, so the split is deterministic given `seed`. Within each part
/// rows keep their source order.
pub fn random_split(
    data: &LabeledDataset,
    n_train: usize,
    n_val: usize,
    seed: u64,
) -> Result<DataSplit> {
    let m = data.len();
    if n_train + n_val >= m {
        return Err(Error::SplitTooLarge {
            n_train,
            n_val,
            size: m,
        });
    }
    let mut indices: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);

    let mut train_indices: Vec<usize> = indices[..n_train].to_vec();
    let mut validation_indices: Vec<usize> = indices[n_train..n_train + n_val].to_vec();
    let mut test_indices: Vec<usize> = indices[n_train + n_val..].to_vec();
    train_indices.sort_unstable();
    validation_indices.sort_unstable();
    test_indices.sort_unstable();

    Ok(DataSplit {
        train: data.select(&train_indices)?,
        validation: data.select(&validation_indices)?,
        test: data.select(&test_indices)?,
        seed,
        train_indices,
        validation_indices,
        test_indices,
    })
}

/// Keeps a seeded uniform subsample of `n` rows (without replacement), in
/// source order. `n == len` returns the dataset unchanged.
pub fn subsample(data: &LabeledDataset, n: usize, seed: u64) -> Result<LabeledDataset> {
    let m = data.len();
    if n > m {
        return Err(Error::InvalidParameter(format!(
            "subsample size {n} exceeds dataset size {m}"
        )));
    }
    let mut indices: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut keep: Vec<usize> = indices[..n].to_vec();
    keep.sort_unstable();
    data.select(&keep)
}

/// Per-feature affine transform `x -> (x - mean) / stddev` fitted on training
/// data, with the population standard deviation floored at [`STDDEV_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    stddev: Vec<f64>,
}

impl Standardizer {
    /// Fits mean and (floored) population standard deviation per feature.
    pub fn fit(train: &LabeledDataset) -> Result<Standardizer> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let m = train.len() as f64;
        let d = train.dim();
        let mut mean = vec![0.0; d];
        for ex in train.examples() {
            for (acc, x) in mean.iter_mut().zip(&ex.features) {
                *acc += x;
            }
        }
        for v in &mut mean {
            *v /= m;
        }
        let mut var = vec![0.0; d];
        for ex in train.examples() {
            for (j, x) in ex.features.iter().enumerate() {
                let c = x - mean[j];
                var[j] += c * c;
            }
        }
        let stddev = var
            .into_iter()
            .map(|v| (v / m).sqrt().max(STDDEV_FLOOR))
            .collect();
        Ok(Standardizer { mean, stddev })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn stddev(&self) -> &[f64] {
        &self.stddev
    }

    /// Applies the transform; labels are untouched.
    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        if data.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                found: data.dim(),
            });
        }
        let examples = data
            .examples()
            .iter()
            .map(|ex| {
                let features = ex
                    .features
                    .iter()
                    .zip(self.mean.iter().zip(&self.stddev))
                    .map(|(x, (mu, sd))| (x - mu) / sd)
                    .collect();
                Example::new(features, ex.label)
            })
            .collect();
        LabeledDataset::new(examples, data.dim())
    }
}

/// True when the three index sets are pairwise disjoint. Exposed for audit
/// checks in tests and the harness.
pub fn indices_disjoint(split: &DataSplit) -> bool {
    let mut seen = HashSet::new();
    split
        .train_indices
        .iter()
        .chain(&split.validation_indices)
        .chain(&split.test_indices)
        .all(|&i| seen.insert(i))
}
