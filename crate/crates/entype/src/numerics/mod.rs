//! Dense f64 tensor math, elementwise activations, inverted dropout, the
//! Adam optimizer, an LSTM cell with analytic backward pass, and a
//! finite-difference gradient checker.
//!
//! Everything is plain single-threaded value math: no graph builder, no
//! threading. Gradients are per-layer analytic backward passes that
//! accumulate into [`Parameter::grad`].

mod adam;
mod gradcheck;
pub(crate) mod lstm;
mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use gradcheck::{grad_check, Differentiable, GradCheckReport};
pub use lstm::{lstm_cell_step, LstmCache, LstmWeights};
pub use tensor::{Parameter, Tensor};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("invalid shape {shape:?}: dimensions must be positive")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} expects {expected} entries, got {actual}")]
    DataLengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite entry {value}")]
    NonFiniteEntry { value: f64 },
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("dropout rate {rate} must lie in [0, 1)")]
    InvalidDropoutRate { rate: f64 },
    #[error("invalid optimizer setting: {0}")]
    InvalidOptimizerConfig(String),
    #[error("function value is not finite")]
    NonFiniteValue,
}

/// Forward-pass mode: `Train` enables dropout, `Eval` is deterministic.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Elementwise activation kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Applies sigmoid or tanh elementwise. Total on finite input; outputs lie
/// in (0, 1) and (-1, 1) respectively.
pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    let data = x
        .data()
        .iter()
        .map(|&v| match kind {
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => v.tanh(),
        })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("activation preserves shape and finiteness")
}

/// Inverted dropout. In `Eval` mode the input is returned unchanged; in
/// `Train` mode each entry is zeroed independently with probability `rate`
/// and survivors are divided by `1 - rate`.
pub fn dropout<R: Rng>(
    x: &Tensor,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<Tensor, NumericsError> {
    let (out, _) = dropout_with_mask(x, rate, mode, rng)?;
    Ok(out)
}

/// Dropout that also returns the keep mask so backward passes can mirror
/// the same scaling. Mask entries are 1.0 (kept) or 0.0 (dropped).
pub fn dropout_with_mask<R: Rng>(
    x: &Tensor,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Vec<f64>), NumericsError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NumericsError::InvalidDropoutRate { rate });
    }
    if mode == Mode::Eval {
        return Ok((x.clone(), vec![1.0; x.len()]));
    }
    let keep = 1.0 - rate;
    let mut mask = vec![1.0; x.len()];
    let mut data = x.data().to_vec();
    for (v, m) in data.iter_mut().zip(mask.iter_mut()) {
        if rng.random::<f64>() < rate {
            *v = 0.0;
            *m = 0.0;
        } else {
            *v /= keep;
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), data).expect("dropout preserves shape"),
        mask,
    ))
}

/// Applies a dropout mask produced by [`dropout_with_mask`] to a gradient.
pub(crate) fn apply_dropout_mask(grad: &[f64], mask: &[f64], rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    grad.iter()
        .zip(mask)
        .map(|(g, m)| if *m == 0.0 { 0.0 } else { g / keep })
        .collect()
}

/// Seeded uniform init in [-scale, scale], the default for all learnable
/// matrices outside LSTM biases.
pub fn uniform_init<R: Rng>(shape: Vec<usize>, scale: f64, rng: &mut R) -> Parameter {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
    Parameter::new(Tensor::new(shape, data).expect("finite uniform init"))
}

/// Default init range for learnable weights.
pub const INIT_SCALE: f64 = 0.08;
