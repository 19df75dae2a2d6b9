//! MNIST IDX ingestion and reduction to a signed binary task.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::dataset::{Example, Label, LabeledDataset};
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

/// Where the raw MNIST data comes from.
#[derive(Debug, Clone, Copy)]
pub enum MnistSource<'a> {
    /// The original IDX pair (optionally gzip-compressed).
    Idx {
        images: &'a Path,
        labels: &'a Path,
    },
    /// A pre-converted CSV with the digit in the first column followed by
    /// the 784 pixel values.
    Csv { path: &'a Path },
}

/// Keeps only the two requested digits and maps `class_a -> +1`,
/// `class_b -> -1`. Pixels are scaled to `[0, 1]` (divided by 255) before
/// any later standardization. Rows keep their source order.
pub fn binarize_mnist(source: &MnistSource, class_a: u8, class_b: u8) -> Result<LabeledDataset> {
    if class_a == class_b {
        return Err(Error::InvalidParameter(format!(
            "the two classes must differ, got {class_a} and {class_b}"
        )));
    }
    if class_a > 9 || class_b > 9 {
        return Err(Error::InvalidParameter(format!(
            "digits must be in 0..=9, got {class_a} and {class_b}"
        )));
    }

    let (digits, pixels, dim, err_path) = match source {
        MnistSource::Idx { images, labels } => {
            let image_bytes = read_maybe_gz(images)?;
            let label_bytes = read_maybe_gz(labels)?;
            let (n, rows, cols, data) = parse_idx_images(&image_bytes, images)?;
            let digits = parse_idx_labels(&label_bytes, labels)?.to_vec();
            if digits.len() != n {
                return Err(Error::MalformedInput {
                    path: labels.to_path_buf(),
                    reason: format!(
                        "label count {} does not match image count {n}",
                        digits.len()
                    ),
                });
            }
            let dim = rows * cols;
            let pixels: Vec<Vec<u8>> = data.chunks(dim).map(|c| c.to_vec()).collect();
            (digits, pixels, dim, images.to_path_buf())
        }
        MnistSource::Csv { path } => {
            let (digits, pixels, dim) = parse_mnist_csv(path)?;
            (digits, pixels, dim, path.to_path_buf())
        }
    };

    let mut examples = Vec::new();
    let (mut na, mut nb) = (0usize, 0usize);
    for (digit, row) in digits.iter().zip(&pixels) {
        let label = if *digit == class_a {
            na += 1;
            Label::Pos
        } else if *digit == class_b {
            nb += 1;
            Label::Neg
        } else {
            continue;
        };
        let features = row.iter().map(|&p| f64::from(p) / 255.0).collect();
        examples.push(Example::new(features, label));
    }
    if na == 0 || nb == 0 {
        let missing = if na == 0 { class_a } else { class_b };
        return Err(Error::MalformedInput {
            path: err_path,
            reason: format!("no examples of digit {missing} after filtering"),
        });
    }
    LabeledDataset::new(examples, dim)
}

/// Reads a file, transparently decompressing when it starts with the gzip
/// magic bytes.
fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(io_err)?
        .read_to_end(&mut bytes)
        .map_err(io_err)?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice())
            .read_to_end(&mut out)
            .map_err(io_err)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::MalformedInput {
            path: path.to_path_buf(),
            reason: "truncated IDX header".to_string(),
        })
}

fn parse_idx_images<'a>(
    bytes: &'a [u8],
    path: &Path,
) -> Result<(usize, usize, usize, &'a [u8])> {
    let magic = read_be_u32(bytes, 0, path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::MalformedInput {
            path: path.to_path_buf(),
            reason: format!("bad image magic {magic}, expected {IMAGE_MAGIC}"),
        });
    }
    let n = read_be_u32(bytes, 4, path)? as usize;
    let rows = read_be_u32(bytes, 8, path)? as usize;
    let cols = read_be_u32(bytes, 12, path)? as usize;
    let data = &bytes[16..];
    if data.len() != n * rows * cols {
        return Err(Error::MalformedInput {
            path: path.to_path_buf(),
            reason: format!(
                "expected {} pixel bytes for {n} images of {rows}x{cols}, found {}",
                n * rows * cols,
                data.len()
            ),
        });
    }
    Ok((n, rows, cols, data))
}

fn parse_idx_labels<'a>(bytes: &'a [u8], path: &Path) -> Result<&'a [u8]> {
    let magic = read_be_u32(bytes, 0, path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::MalformedInput {
            path: path.to_path_buf(),
            reason: format!("bad label magic {magic}, expected {LABEL_MAGIC}"),
        });
    }
    let n = read_be_u32(bytes, 4, path)? as usize;
    let data = &bytes[8..];
    if data.len() != n {
        return Err(Error::MalformedInput {
            path: path.to_path_buf(),
            reason: format!("expected {n} label bytes, found {}", data.len()),
        });
    }
    Ok(data)
}

#[allow(clippy::type_complexity)]
fn parse_mnist_csv(path: &Path) -> Result<(Vec<u8>, Vec<Vec<u8>>, usize)> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let content = std::fs::read_to_string(path).map_err(io_err)?;
    let mut digits = Vec::new();
    let mut pixels = Vec::new();
    let mut dim = None;
    for (idx, line) in content.lines().enumerate() {
        let row = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim_end_matches('\r').split(',').map(str::trim).collect();
        // Header tolerance: skip a first line that does not parse.
        if row == 1 && cells.iter().any(|c| c.parse::<u16>().is_err()) {
            continue;
        }
        let expected = *dim.get_or_insert(cells.len() - 1);
        if cells.len() - 1 != expected {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row,
                expected: expected + 1,
                found: cells.len(),
            });
        }
        let parse_cell = |column: usize, value: &str| -> Result<u16> {
            value.parse::<u16>().map_err(|_| Error::InvalidNumber {
                path: path.to_path_buf(),
                row,
                column,
                value: value.to_string(),
            })
        };
        let digit = parse_cell(1, cells[0])?;
        if digit > 9 {
            return Err(Error::MalformedInput {
                path: path.to_path_buf(),
                reason: format!("row {row}: digit {digit} out of range"),
            });
        }
        let mut px = Vec::with_capacity(expected);
        for (c, cell) in cells.iter().enumerate().skip(1) {
            let v = parse_cell(c + 1, cell)?;
            if v > 255 {
                return Err(Error::MalformedInput {
                    path: path.to_path_buf(),
                    reason: format!("row {row}: pixel value {v} out of range"),
                });
            }
            px.push(v as u8);
        }
        digits.push(digit as u8);
        pixels.push(px);
    }
    if digits.is_empty() {
        return Err(Error::MalformedInput {
            path: path.to_path_buf(),
            reason: "no data rows".to_string(),
        });
    }
    Ok((digits, pixels, dim.unwrap_or(0)))
}
