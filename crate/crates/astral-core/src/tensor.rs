//! Dense row-major f64 tensors.
//!
//! This is the single numeric carrier for activations, parameters and
//! gradients. Operations are deterministic: reductions run left-to-right in
//! index order, so identical inputs give bit-identical outputs everywhere.
//! Everything is 64-bit; the gradient-check tolerances in this crate assume
//! that.

use crate::error::{Error, Result};
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = check_shape(shape).expect("Tensor::zeros: invalid shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        let len = check_shape(shape).expect("Tensor::filled: invalid shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::Argument(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                len,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// 2-D constructor from rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
        if rows.is_empty() {
            return Err(Error::Argument("from_rows: no rows".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Argument("from_rows: ragged rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Tensor::from_vec(&[rows.len(), cols], data)
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
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

    /// Interpret as a matrix, returning (rows, cols). 1-D tensors are viewed
    /// as a single column.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.len() {
            1 => Ok((self.shape[0], 1)),
            2 => Ok((self.shape[0], self.shape[1])),
            _ => Err(Error::Argument(format!(
                "expected 1-D or 2-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    #[inline]
    pub fn at2(&self, row: usize, col: usize) -> f64 {
        let cols = *self.shape.last().unwrap();
        self.data[row * cols + col]
    }

    #[inline]
    pub fn set2(&mut self, row: usize, col: usize, v: f64) {
        let cols = *self.shape.last().unwrap();
        self.data[row * cols + col] = v;
    }

    #[inline]
    pub fn add2(&mut self, row: usize, col: usize, v: f64) {
        let cols = *self.shape.last().unwrap();
        self.data[row * cols + col] += v;
    }

    pub fn fill(&mut self, v: f64) {
        for x in &mut self.data {
            *x = v;
        }
    }

    /// Matrix product `self[m×k] · other[k×n]`. The inner reduction runs
    /// left-to-right over k, which pins the summation order.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(Error::dim("matmul", &self.shape, &other.shape));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a_row = &self.data[i * k..(i + 1) * k];
            for (kk, &a) in a_row.iter().enumerate() {
                let b_row = &other.data[kk * n..(kk + 1) * n];
                let o_row = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    o_row[j] += a * b_row[j];
                }
            }
        }
        Tensor::from_vec(&[m, n], out)
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::from_vec(&[n, m], out)
    }

    fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::dim(op, &self.shape, &other.shape));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "sub", |a, b| a - b)
    }

    /// Element-wise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, "mul", |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim("add_assign", &self.shape, &other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|x| c * x)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|&x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Vertical concatenation of two matrices with equal column counts.
    pub fn concat_rows(top: &Tensor, bottom: &Tensor) -> Result<Tensor> {
        let (mt, n) = top.dims2()?;
        let (mb, n2) = bottom.dims2()?;
        if n != n2 {
            return Err(Error::dim("concat_rows", top.shape(), bottom.shape()));
        }
        let mut data = Vec::with_capacity((mt + mb) * n);
        data.extend_from_slice(&top.data);
        data.extend_from_slice(&bottom.data);
        Tensor::from_vec(&[mt + mb, n], data)
    }

    /// Rows `[from, to)` of a matrix as a new tensor.
    pub fn row_slice(&self, from: usize, to: usize) -> Result<Tensor> {
        let (m, n) = self.dims2()?;
        if from > to || to > m {
            return Err(Error::Argument(format!(
                "row_slice {}..{} out of range for {} rows",
                from, to, m
            )));
        }
        Tensor::from_vec(&[to - from, n], self.data[from * n..to * n].to_vec())
    }

    /// Column `t` of a matrix as a plain vector.
    pub fn col(&self, t: usize) -> Vec<f64> {
        let (m, n) = self.dims2().expect("col: not a matrix");
        (0..m).map(|i| self.data[i * n + t]).collect()
    }

    pub fn set_col(&mut self, t: usize, v: &[f64]) {
        let (m, n) = self.dims2().expect("set_col: not a matrix");
        debug_assert_eq!(v.len(), m);
        for i in 0..m {
            self.data[i * n + t] = v[i];
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Argument(format!(
            "invalid tensor shape {:?}: dimensions must be positive",
            shape
        )));
    }
    Ok(shape.iter().product())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Parameter initialization schemes.
#[derive(Debug, Clone, Copy)]
pub enum InitScheme {
    /// Uniform in `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    ///
    /// Fans: `[n]` uses n for both; `[out, in]` uses the two axes; a 3-D
    /// convolution kernel `[out, window, in]` uses fan_in = window·in and
    /// fan_out = window·out.
    ScaledUniform,
}

/// Deterministic tensor initialization: values are drawn in flat index order
/// from `rng`, so a seed fixes the tensor exactly.
pub fn init(shape: &[usize], scheme: InitScheme, rng: &mut Rng) -> Tensor {
    let (lo, hi) = match scheme {
        InitScheme::Uniform { lo, hi } => (lo, hi),
        InitScheme::ScaledUniform => {
            let (fan_in, fan_out) = match *shape {
                [n] => (n, n),
                [out, inp] => (inp, out),
                [out, window, inp] => (window * inp, window * out),
                _ => panic!("ScaledUniform: unsupported shape {:?}", shape),
            };
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (-bound, bound)
        }
    };
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = rng.uniform(lo, hi);
    }
    t
}
