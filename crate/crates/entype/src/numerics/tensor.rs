//! Dense row-major f64 tensors and the trainable parameter wrapper.

use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Dense 64-bit real array with an explicit shape, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, validating that the data length matches the shape
    /// product and that every entry is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumericsError> {
        let expected: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(NumericsError::InvalidShape { shape });
        }
        if data.len() != expected {
            return Err(NumericsError::DataLengthMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(NumericsError::NonFiniteEntry { value: bad });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    /// 1-D tensor from a value slice.
    pub fn vector(data: Vec<f64>) -> Result<Self, NumericsError> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    /// 2-D tensor (rows x cols) from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of rows when viewed as a matrix; 1 for vectors.
    pub fn rows(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Number of columns when viewed as a matrix.
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            0 => 0,
            1 => self.shape[0],
            _ => self.shape[1],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let c = self.cols();
        self.data[row * c + col] = value;
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Matrix-vector product: self (R x C) times x (C), yielding R values.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let (rows, cols) = (self.rows(), self.cols());
        debug_assert_eq!(cols, x.len(), "matvec dimension mismatch");
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            let row = &self.data[r * cols..(r + 1) * cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            out[r] = acc;
        }
        out
    }

    /// Transposed matrix-vector product: self^T (C x R) times g (R).
    pub fn matvec_t(&self, g: &[f64]) -> Vec<f64> {
        let (rows, cols) = (self.rows(), self.cols());
        debug_assert_eq!(rows, g.len(), "matvec_t dimension mismatch");
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            let row = &self.data[r * cols..(r + 1) * cols];
            let gr = g[r];
            if gr == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += gr * a;
            }
        }
        out
    }

    /// Rank-one update: self += g (R) outer x (C).
    pub fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        let (rows, cols) = (self.rows(), self.cols());
        debug_assert_eq!(rows, g.len());
        debug_assert_eq!(cols, x.len());
        for r in 0..rows {
            let gr = g[r];
            if gr == 0.0 {
                continue;
            }
            let row = &mut self.data[r * cols..(r + 1) * cols];
            for (o, v) in row.iter_mut().zip(x) {
                *o += gr * v;
            }
        }
    }

    pub fn add_slice(&mut self, other: &[f64]) {
        debug_assert_eq!(self.data.len(), other.len());
        for (a, b) in self.data.iter_mut().zip(other) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }
}

/// A learnable tensor with its gradient and Adam moment buffers.
///
/// All four tensors share one shape; `grad`, `m`, and `v` start at zero.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub step_count: u64,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Self {
            value,
            grad: Tensor::zeros(shape.clone()),
            m: Tensor::zeros(shape.clone()),
            v: Tensor::zeros(shape),
            step_count: 0,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}
