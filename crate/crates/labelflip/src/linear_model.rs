//! Binary linear classifier with hinge loss, trained by stochastic gradient
//! descent.
//!
//! The model scores a point as `w . x + bias` and predicts its sign. Training
//! minimizes the average hinge loss `max(0, 1 - y * score)` by visiting every
//! example once per epoch and stepping along the negative subgradient. The
//! bias term is an extension over the plain `w . x` form and can be disabled
//! via [`TrainConfig::use_bias`].

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Example, Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::util::write_atomic;

/// Linear model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    w: Vec<f64>,
    bias: f64,
}

impl Weights {
    pub fn zeros(dim: usize) -> Weights {
        Weights {
            w: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn new(w: Vec<f64>, bias: f64) -> Result<Weights> {
        if w.iter().chain(std::iter::once(&bias)).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "weights must be finite".to_string(),
            ));
        }
        Ok(Weights { w, bias })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Raw score `w . x + bias`.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                found: x.len(),
            });
        }
        Ok(self.score_unchecked(x))
    }

    fn score_unchecked(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(wj, xj)| wj * xj).sum::<f64>() + self.bias
    }

    /// Predicted label: `+1` when the score is `>= 0` (the sign of zero is
    /// taken as positive), `-1` otherwise.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(if self.score(x)? >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        })
    }

    /// Plain-text form: one value per line, bias last.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for v in &self.w {
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out.push_str(&self.bias.to_string());
        out.push('\n');
        write_atomic(path, out.as_bytes())
    }

    pub fn read_text(path: &Path) -> Result<Weights> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut values = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: f64 = line.trim().parse().map_err(|_| Error::InvalidNumber {
                path: path.to_path_buf(),
                row: idx + 1,
                column: 1,
                value: line.trim().to_string(),
            })?;
            values.push(v);
        }
        if values.is_empty() {
            return Err(Error::MalformedInput {
                path: path.to_path_buf(),
                reason: "no values".to_string(),
            });
        }
        let bias = values.pop().expect("nonempty");
        Weights::new(values, bias)
    }
}

/// SGD hyperparameters. Defaults follow the evaluation protocol: learning
/// rate 0.01 and 100 epochs, with a per-epoch seeded shuffle and a trainable
/// bias term.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub use_bias: bool,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 100,
            seed: 0,
            shuffle: true,
            use_bias: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidParameter(
                "epochs must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Hinge loss `max(0, 1 - y * (w . x + bias))`.
pub fn hinge_loss(weights: &Weights, example: &Example) -> Result<f64> {
    let score = weights.score(&example.features)?;
    Ok((1.0 - example.label.value() * score).max(0.0))
}

/// Subgradient of the hinge loss with respect to `(w, bias)`.
///
/// Returns `(-y * x, -y)` when the margin `y * score` is strictly below 1 and
/// zero otherwise; at the kink (margin exactly 1) the zero element of the
/// subdifferential is chosen.
pub fn hinge_subgradient(weights: &Weights, example: &Example) -> Result<(Vec<f64>, f64)> {
    let score = weights.score(&example.features)?;
    let y = example.label.value();
    if y * score < 1.0 {
        Ok((example.features.iter().map(|x| -y * x).collect(), -y))
    } else {
        Ok((vec![0.0; weights.dim()], 0.0))
    }
}

/// Trains from `w = 0, bias = 0`, visiting every example once per epoch.
///
/// With `shuffle` set the visiting order is a fresh seeded shuffle per epoch
/// (the RNG stream is derived from `(seed, epoch)`), otherwise the fixed row
/// order. The result is a pure function of `(data, config)`: repeated calls
/// are bit-identical.
pub fn train_sgd(data: &LabeledDataset, config: &TrainConfig) -> Result<Weights> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let m = data.len();
    let mut w = vec![0.0; data.dim()];
    let mut bias = 0.0;
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    for epoch in 0..config.epochs {
        if config.shuffle {
            rng.set_stream(epoch as u64);
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let ex = data.get(i);
            let score = w.iter().zip(&ex.features).map(|(wj, xj)| wj * xj).sum::<f64>() + bias;
            let y = ex.label.value();
            if y * score < 1.0 {
                for (wj, xj) in w.iter_mut().zip(&ex.features) {
                    *wj += config.learning_rate * y * xj;
                }
                if config.use_bias {
                    bias += config.learning_rate * y;
                }
            }
        }
    }
    Ok(Weights { w, bias })
}

/// Arithmetic mean of the hinge loss over a dataset.
pub fn avg_loss(weights: &Weights, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != weights.dim() {
        return Err(Error::DimensionMismatch {
            expected: weights.dim(),
            found: data.dim(),
        });
    }
    let total: f64 = data
        .examples()
        .iter()
        .map(|ex| {
            let score = weights.score_unchecked(&ex.features);
            (1.0 - ex.label.value() * score).max(0.0)
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// Fraction of examples whose predicted label differs from the recorded one.
pub fn zero_one_error(weights: &Weights, data: &LabeledDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.dim() != weights.dim() {
        return Err(Error::DimensionMismatch {
            expected: weights.dim(),
            found: data.dim(),
        });
    }
    let wrong = data
        .examples()
        .iter()
        .filter(|ex| {
            let predicted = if weights.score_unchecked(&ex.features) >= 0.0 {
                Label::Pos
            } else {
                Label::Neg
            };
            predicted != ex.label
        })
        .count();
    Ok(wrong as f64 / data.len() as f64)
}
