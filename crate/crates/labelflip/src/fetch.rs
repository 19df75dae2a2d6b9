//! Dataset acquisition: converts the benchmark sources into the canonical
//! CSV form and maintains a checksum manifest for idempotent re-runs.
//!
//! No network access happens here. Conversions read local raw files (the UCI
//! distributions or the MNIST IDX pair) from a source directory — by default
//! the `LABELFLIP_DATA_DIR` environment variable or `./data` — and each
//! dataset's documented upstream URL is reported when no source is found.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::{read_canonical_csv, Example, Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::mnist::{binarize_mnist, MnistSource};
use crate::util::{sha256_hex, write_atomic};

/// Environment variable naming the directory searched for raw or
/// pre-converted dataset files.
pub const DATA_DIR_ENV: &str = "LABELFLIP_DATA_DIR";

const MANIFEST_NAME: &str = "MANIFEST.txt";

/// The benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetId {
    /// UCI Breast Cancer Wisconsin (Diagnostic): 569 rows, 30 features,
    /// malignant mapped to +1.
    BreastCancer,
    /// UCI Spambase with the 54 frequency features (the three capital-run
    /// statistics are dropped); spam mapped to +1.
    Spambase,
    /// MNIST training digits 1 (mapped to +1) versus 7 (mapped to -1).
    Mnist17,
}

impl DatasetId {
    pub fn all() -> [DatasetId; 3] {
        [DatasetId::BreastCancer, DatasetId::Spambase, DatasetId::Mnist17]
    }

    pub fn id(self) -> &'static str {
        match self {
            DatasetId::BreastCancer => "breastcancer",
            DatasetId::Spambase => "spambase",
            DatasetId::Mnist17 => "mnist17",
        }
    }

    /// File name of the canonical CSV this dataset converts to.
    pub fn canonical_filename(self) -> &'static str {
        match self {
            DatasetId::BreastCancer => "breastcancer.csv",
            DatasetId::Spambase => "spambase.csv",
            DatasetId::Mnist17 => "mnist17.csv",
        }
    }

    /// Upstream location of the raw data, for the user-facing hint.
    pub fn source_hint(self) -> &'static str {
        match self {
            DatasetId::BreastCancer => {
                "place wdbc.data (https://archive.ics.uci.edu/dataset/17/breast+cancer+wisconsin+diagnostic) \
                 or a canonical breastcancer.csv in the source directory"
            }
            DatasetId::Spambase => {
                "place spambase.data (https://archive.ics.uci.edu/dataset/94/spambase) \
                 or a canonical spambase.csv in the source directory"
            }
            DatasetId::Mnist17 => {
                "place train-images-idx3-ubyte and train-labels-idx1-ubyte (optionally .gz, \
                 https://yann.lecun.com/exdb/mnist/) or a canonical mnist17.csv in the source directory"
            }
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

impl FromStr for DatasetId {
    type Err = Error;

    fn from_str(s: &str) -> Result<DatasetId> {
        match s.to_ascii_lowercase().as_str() {
            "breastcancer" | "breast-cancer" | "wdbc" => Ok(DatasetId::BreastCancer),
            "spambase" => Ok(DatasetId::Spambase),
            "mnist17" | "mnist" => Ok(DatasetId::Mnist17),
            other => Err(Error::InvalidParameter(format!(
                "unknown dataset '{other}' (expected breastcancer, spambase, or mnist17)"
            ))),
        }
    }
}

/// What a fetch produced.
#[derive(Debug, Clone, PartialEq)]
pub struct FetchOutcome {
    pub path: PathBuf,
    pub rows: usize,
    pub dim: usize,
    pub positives: usize,
    pub negatives: usize,
    /// True when the output already existed with a matching checksum and
    /// nothing was written.
    pub up_to_date: bool,
}

/// Converts (or validates) `id` into `out_dir` as canonical CSV and records
/// its checksum in `out_dir/MANIFEST.txt`.
///
/// The search order for sources is: an existing up-to-date output, then raw
/// files in `source_dir` (or `LABELFLIP_DATA_DIR`, or `./data`), then a
/// pre-converted canonical CSV in the same place. An existing output whose
/// checksum disagrees with the manifest is an error rather than silently
/// overwritten.
pub fn fetch(id: DatasetId, out_dir: &Path, source_dir: Option<&Path>) -> Result<FetchOutcome> {
    let out_path = out_dir.join(id.canonical_filename());
    let manifest_path = out_dir.join(MANIFEST_NAME);

    if out_path.exists() {
        let bytes = std::fs::read(&out_path).map_err(|e| Error::Io {
            path: out_path.clone(),
            source: e,
        })?;
        let actual = sha256_hex(&bytes);
        if let Some(expected) = manifest_entry(&manifest_path, id.canonical_filename())? {
            if expected != actual {
                return Err(Error::MalformedInput {
                    path: out_path,
                    reason: format!(
                        "checksum mismatch against {MANIFEST_NAME}: expected {expected}, found {actual}; \
                         delete the file to re-fetch"
                    ),
                });
            }
            let data = read_canonical_csv(&out_path)?;
            let (positives, negatives) = data.class_counts();
            return Ok(FetchOutcome {
                path: out_path,
                rows: data.len(),
                dim: data.dim(),
                positives,
                negatives,
                up_to_date: true,
            });
        }
    }

    let search_dir = source_dir
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"));

    let data = load_from_source(id, &search_dir)?;
    data.write_csv(&out_path)?;
    let bytes = std::fs::read(&out_path).map_err(|e| Error::Io {
        path: out_path.clone(),
        source: e,
    })?;
    update_manifest(&manifest_path, id.canonical_filename(), &sha256_hex(&bytes))?;

    let (positives, negatives) = data.class_counts();
    Ok(FetchOutcome {
        path: out_path,
        rows: data.len(),
        dim: data.dim(),
        positives,
        negatives,
        up_to_date: false,
    })
}

fn load_from_source(id: DatasetId, dir: &Path) -> Result<LabeledDataset> {
    match id {
        DatasetId::BreastCancer => {
            let raw = dir.join("wdbc.data");
            if raw.exists() {
                return convert_wdbc(&raw);
            }
            let canonical = dir.join("breastcancer.csv");
            if canonical.exists() {
                return read_canonical_csv(&canonical);
            }
        }
        DatasetId::Spambase => {
            let raw = dir.join("spambase.data");
            if raw.exists() {
                return convert_spambase(&raw);
            }
            let canonical = dir.join("spambase.csv");
            if canonical.exists() {
                return read_canonical_csv(&canonical);
            }
        }
        DatasetId::Mnist17 => {
            for (images, labels) in [
                ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
                ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"),
                ("train-images.idx3-ubyte", "train-labels.idx1-ubyte"),
            ] {
                let (ip, lp) = (dir.join(images), dir.join(labels));
                if ip.exists() && lp.exists() {
                    return binarize_mnist(
                        &MnistSource::Idx {
                            images: &ip,
                            labels: &lp,
                        },
                        1,
                        7,
                    );
                }
            }
            let canonical = dir.join("mnist17.csv");
            if canonical.exists() {
                return read_canonical_csv(&canonical);
            }
        }
    }
    Err(Error::SourceUnavailable {
        id: id.id().to_string(),
        hint: format!("searched {}; {}", dir.display(), id.source_hint()),
    })
}

/// Converts the raw UCI `wdbc.data` file: column 0 is the record id
/// (dropped), column 1 the diagnosis (`M` maps to +1, `B` to -1), columns
/// 2..32 the thirty features.
pub fn convert_wdbc(path: &Path) -> Result<LabeledDataset> {
    let rows = read_raw_rows(path, 32)?;
    let mut examples = Vec::with_capacity(rows.len());
    for (row, cells) in rows {
        let label = match cells[1].as_str() {
            "M" => Label::Pos,
            "B" => Label::Neg,
            other => {
                return Err(Error::MalformedInput {
                    path: path.to_path_buf(),
                    reason: format!("row {row}: diagnosis '{other}' is not M or B"),
                })
            }
        };
        let features = parse_feature_cells(path, row, &cells[2..], 2)?;
        examples.push(Example::new(features, label));
    }
    LabeledDataset::new(examples, 30)
}

/// Converts the raw UCI `spambase.data` file. The distribution has 57
/// attributes plus the class; the three trailing capital-run statistics are
/// dropped, keeping the 54 word and character frequency features. Class 1
/// (spam) maps to +1.
pub fn convert_spambase(path: &Path) -> Result<LabeledDataset> {
    let rows = read_raw_rows(path, 58)?;
    let mut examples = Vec::with_capacity(rows.len());
    for (row, cells) in rows {
        let label = match cells[57].as_str() {
            "1" => Label::Pos,
            "0" => Label::Neg,
            other => {
                return Err(Error::MalformedInput {
                    path: path.to_path_buf(),
                    reason: format!("row {row}: class '{other}' is not 0 or 1"),
                })
            }
        };
        let features = parse_feature_cells(path, row, &cells[..54], 0)?;
        examples.push(Example::new(features, label));
    }
    LabeledDataset::new(examples, 54)
}

fn read_raw_rows(path: &Path, expected_cols: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut rows = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<String> = line
            .trim_end_matches('\r')
            .split(',')
            .map(|c| c.trim().to_string())
            .collect();
        if cells.len() != expected_cols {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row,
                expected: expected_cols,
                found: cells.len(),
            });
        }
        rows.push((row, cells));
    }
    if rows.is_empty() {
        return Err(Error::MalformedInput {
            path: path.to_path_buf(),
            reason: "no data rows".to_string(),
        });
    }
    Ok(rows)
}

fn parse_feature_cells(
    path: &Path,
    row: usize,
    cells: &[String],
    column_offset: usize,
) -> Result<Vec<f64>> {
    cells
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::InvalidNumber {
                    path: path.to_path_buf(),
                    row,
                    column: column_offset + i + 1,
                    value: cell.clone(),
                })
        })
        .collect()
}

fn manifest_entry(manifest: &Path, filename: &str) -> Result<Option<String>> {
    if !manifest.exists() {
        return Ok(None);
    }
    let content = std::fs::read_to_string(manifest).map_err(|e| Error::Io {
        path: manifest.to_path_buf(),
        source: e,
    })?;
    for line in content.lines() {
        if let Some((hash, name)) = line.split_once("  ") {
            if name == filename {
                return Ok(Some(hash.to_string()));
            }
        }
    }
    Ok(None)
}

fn update_manifest(manifest: &Path, filename: &str, hash: &str) -> Result<()> {
    let mut entries: Vec<(String, String)> = Vec::new();
    if manifest.exists() {
        let content = std::fs::read_to_string(manifest).map_err(|e| Error::Io {
            path: manifest.to_path_buf(),
            source: e,
        })?;
        for line in content.lines() {
            if let Some((h, name)) = line.split_once("  ") {
                if name != filename {
                    entries.push((h.to_string(), name.to_string()));
                }
            }
        }
    }
    entries.push((hash.to_string(), filename.to_string()));
    entries.sort_by(|a, b| a.1.cmp(&b.1));
    let mut out = String::new();
    for (h, name) in entries {
        out.push_str(&format!("{h}  {name}\n"));
    }
    write_atomic(manifest, out.as_bytes())
}
