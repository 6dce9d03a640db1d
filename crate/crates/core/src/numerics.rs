//! Dense double-precision kernels used by the model: row-major matrices,
//! affine maps, gate nonlinearities, softmax and argmax, and the seeded
//! generator every random decision in the crate is drawn from.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vector = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims(
                "matrix construction",
                format!("{rows}x{cols} = {} values", rows * cols),
                format!("{} values", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::dims("matrix row", cols, format!("{} in row {i}", row.len())));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Fills with independent draws from `U(-limit, limit)`.
    pub fn uniform(rows: usize, cols: usize, limit: f64, rng: &mut SeededRng) -> Self {
        let data = (0..rows * cols).map(|_| rng.uniform_range(-limit, limit)).collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self += outer(left, right)`, the weight-gradient accumulation of an affine map.
    pub fn add_outer(&mut self, left: &[f64], right: &[f64]) {
        debug_assert_eq!(left.len(), self.rows);
        debug_assert_eq!(right.len(), self.cols);
        for (r, &l) in left.iter().enumerate() {
            if l == 0.0 {
                continue;
            }
            for (w, &x) in self.row_mut(r).iter_mut().zip(right) {
                *w += l * x;
            }
        }
    }

    /// `Wᵀ·v`, without materializing the transpose.
    pub fn transpose_mul(&self, v: &[f64]) -> Result<Vector> {
        if v.len() != self.rows {
            return Err(Error::dims(
                "transposed product",
                format!("vector of length {} for {}x{} matrix", self.rows, self.rows, self.cols),
                format!("length {}", v.len()),
            ));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &scale) in v.iter().enumerate() {
            if scale == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += scale * w;
            }
        }
        Ok(out)
    }
}

/// `W·x + b`.
pub fn affine(w: &Matrix, x: &[f64], b: &[f64]) -> Result<Vector> {
    if x.len() != w.cols || b.len() != w.rows {
        return Err(Error::dims(
            "affine",
            format!("W {}x{}, x [{}], b [{}]", w.rows, w.cols, w.cols, w.rows),
            format!("W {}x{}, x [{}], b [{}]", w.rows, w.cols, x.len(), b.len()),
        ));
    }
    Ok(w
        .data
        .chunks_exact(w.cols)
        .zip(b)
        .map(|(row, &bias)| row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + bias)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

pub fn sigmoid(z: f64) -> f64 {
    // Split on sign so exp never overflows.
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn activation(x: &[f64], kind: Activation) -> Vector {
    match kind {
        Activation::Sigmoid => x.iter().map(|&z| sigmoid(z)).collect(),
        Activation::Tanh => x.iter().map(|z| z.tanh()).collect(),
    }
}

/// `ln Σ exp(s_j)`, shifted by the maximum.
pub fn log_sum_exp(s: &[f64]) -> f64 {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + s.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(s: &[f64]) -> Vector {
    let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = s.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(s: &[f64]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in s.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i).ok_or_else(|| Error::dims("argmax", "non-empty vector", "empty vector"))
}

pub fn hadamard(a: &[f64], b: &[f64]) -> Vector {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}

pub fn l2_norm_squared(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Seeded generator behind every random decision: ChaCha with 8 rounds,
/// seeded through `seed_from_u64`. Independent streams of one master seed
/// are selected with the ChaCha stream counter, so drawing more values from
/// one stream never shifts another.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream `stream` of the master seed `seed`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        SeededRng { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Draws an index with probability proportional to `weights`.
    pub fn weighted_index(&mut self, weights: &[f64]) -> Option<usize> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let mut target = self.uniform() * total;
        let mut last = None;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            if target < w {
                return Some(i);
            }
            target -= w;
            last = Some(i);
        }
        last
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}
