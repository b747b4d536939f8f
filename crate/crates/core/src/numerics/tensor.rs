use std::fmt;

use super::{NumericsError, Result};

/// Input floor for the logarithm inside [`cross_entropy`].
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(NumericsError::Shape(format!("invalid shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NumericsError::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; n]).expect("positive dims")
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self::new(vec![data.len()], data).expect("non-empty vector")
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericsError::Shape("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub(crate) fn rows_cols(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(NumericsError::Shape(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    /// Length of the last axis.
    pub(crate) fn last_dim(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip(&self, other: &Self, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(NumericsError::Shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, "mul", |a, b| a * b)
    }

    pub fn sigmoid(&self) -> Self {
        self.map(sigmoid)
    }

    pub fn tanh(&self) -> Self {
        self.map(f64::tanh)
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.rows_cols()?;
        let (k2, n) = other.rows_cols()?;
        if k != k2 {
            return Err(NumericsError::Shape(format!(
                "matmul: inner dimensions {k} and {k2} differ"
            )));
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Self::new(vec![m, n], out)
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.rows_cols()?;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::new(vec![c, r], out)
    }

    /// Concatenation along the last axis; all other axes must agree.
    pub fn concat(parts: &[&Tensor]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| NumericsError::Shape("concat of zero tensors".into()))?;
        let lead = &first.shape[..first.shape.len() - 1];
        for p in parts {
            if &p.shape[..p.shape.len() - 1] != lead || p.shape.len() != first.shape.len() {
                return Err(NumericsError::Shape(format!(
                    "concat: {:?} vs {:?}",
                    first.shape, p.shape
                )));
            }
        }
        let outer: usize = lead.iter().product();
        let total: usize = parts.iter().map(|p| p.last_dim()).sum();
        let mut data = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for p in parts {
                let w = p.last_dim();
                data.extend_from_slice(&p.data[o * w..(o + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        Self::new(shape, data)
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// Softmax of one row with max subtraction; masked entries become exactly 0.
pub(crate) fn softmax_row(x: &[f64], mask: Option<&[bool]>, out: &mut [f64]) -> Result<()> {
    let keep = |i: usize| mask.is_none_or(|m| m[i]);
    let max = (0..x.len())
        .filter(|&i| keep(i))
        .map(|i| x[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NumericsError::AllMasked);
    }
    let mut total = 0.0;
    for i in 0..x.len() {
        out[i] = if keep(i) { (x[i] - max).exp() } else { 0.0 };
        total += out[i];
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// Softmax along `axis` of a tensor of any rank.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(NumericsError::Shape(format!("axis {axis} out of range for {shape:?}")));
    }
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0; x.numel()];
    let mut row = vec![0.0; len];
    let mut res = vec![0.0; len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for (j, r) in row.iter_mut().enumerate() {
                *r = x.data()[base + j * inner];
            }
            softmax_row(&row, None, &mut res)?;
            for (j, r) in res.iter().enumerate() {
                out[base + j * inner] = *r;
            }
        }
    }
    Tensor::new(shape.to_vec(), out)
}

/// `-ln softmax(row)[target]` with the probability floored at [`LOG_FLOOR`].
/// Returns the loss and whether the floor was active.
pub(crate) fn row_nll(row: &[f64], target: usize) -> (f64, bool) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    let nll = lse - row[target];
    let cap = -LOG_FLOOR.ln();
    if nll > cap {
        (cap, true)
    } else {
        (nll, false)
    }
}

/// Mean negative log-likelihood over unmasked rows of `logits[T×V]`.
/// `mask[t] == true` marks a position that counts.
pub fn cross_entropy(logits: &Tensor, targets: &[usize], mask: &[bool]) -> Result<f64> {
    let (t, v) = logits.rows_cols()?;
    if targets.len() != t || mask.len() != t {
        return Err(NumericsError::Shape(format!(
            "cross_entropy: {t} rows, {} targets, {} mask entries",
            targets.len(),
            mask.len()
        )));
    }
    if let Some(&id) = targets.iter().zip(mask).filter(|(_, &m)| m).map(|(id, _)| id).find(|&&id| id >= v) {
        return Err(NumericsError::IdRange { id, size: v });
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(NumericsError::AllMasked);
    }
    let total: f64 = (0..t)
        .filter(|&i| mask[i])
        .map(|i| row_nll(&logits.data()[i * v..(i + 1) * v], targets[i]).0)
        .sum();
    Ok(total / count as f64)
}
