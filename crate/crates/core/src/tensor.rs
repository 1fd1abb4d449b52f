//! Dense N-way arrays and the handful of multilinear operations the rest of
//! the crate is built on.
//!
//! Storage is row-major: the last index varies fastest. A tensor of shape
//! `(n_0, .., n_{N-1})` keeps entry `(i_0, .., i_{N-1})` at
//! `sum_k i_k * prod_{j>k} n_j`.
//!
//! The mode-`d` unfolding is the `n_d x prod_{j!=d} n_j` matrix whose column
//! index enumerates the remaining modes in their original order, again with
//! the last one fastest. Equivalently, viewing the data as a 3-way block
//! `(outer, n_d, inner)` with `outer = prod_{j<d} n_j` and
//! `inner = prod_{j>d} n_j`, entry `(o, k, i)` lands at row `k`, column
//! `o * inner + i`. Modes are zero-based throughout the API.

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Multilinear rank: one matrix rank per mode unfolding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TuckerRank {
    pub ranks: Vec<usize>,
}

impl TuckerRank {
    pub fn new(ranks: Vec<usize>) -> Self {
        Self { ranks }
    }

    /// Componentwise `self <= bound`.
    pub fn within(&self, bound: &TuckerRank) -> bool {
        self.ranks.len() == bound.ranks.len()
            && self.ranks.iter().zip(&bound.ranks).all(|(r, b)| r <= b)
    }

    pub fn order(&self) -> usize {
        self.ranks.len()
    }

    pub fn product(&self) -> usize {
        self.ranks.iter().product()
    }
}

impl std::fmt::Display for TuckerRank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.ranks.iter().map(|r| r.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) {
            return Err(CrnlError::shape(format!("invalid tensor shape {shape:?}")));
        }
        if expected != data.len() {
            return Err(CrnlError::shape(format!(
                "data length {} does not match shape {:?} ({} entries)",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(
            !shape.is_empty() && !shape.contains(&0),
            "invalid tensor shape {shape:?}"
        );
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// Builds a tensor by calling `f` with every multi-index in storage order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = vec![0usize; shape.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            for k in (0..shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.shape.len()];
        for k in (0..self.shape.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * self.shape[k + 1];
        }
        strides
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter()
            .zip(&self.shape)
            .fold(0usize, |acc, (&i, &n)| {
                debug_assert!(i < n);
                acc * n + i
            })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let k = self.linear_index(idx);
        self.data[k] = value;
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(CrnlError::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// `(outer, n_mode, inner)` block sizes for a mode.
    fn mode_blocks(shape: &[usize], mode: usize) -> (usize, usize, usize) {
        let outer = shape[..mode].iter().product();
        let inner = shape[mode + 1..].iter().product();
        (outer, shape[mode], inner)
    }

    pub fn unfold(&self, mode: usize) -> Result<Array2<f64>> {
        self.check_mode(mode)?;
        let (outer, n, inner) = Self::mode_blocks(&self.shape, mode);
        let mut m = Array2::<f64>::zeros((n, outer * inner));
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                for i in 0..inner {
                    m[[k, o * inner + i]] = self.data[base + i];
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`DenseTensor::unfold`] for a target `shape`.
    pub fn fold(matrix: &Array2<f64>, mode: usize, shape: &[usize]) -> Result<Self> {
        if mode >= shape.len() {
            return Err(CrnlError::ModeOutOfRange {
                mode,
                order: shape.len(),
            });
        }
        let (outer, n, inner) = Self::mode_blocks(shape, mode);
        if matrix.nrows() != n || matrix.ncols() != outer * inner {
            return Err(CrnlError::shape(format!(
                "cannot fold a {}x{} matrix along mode {mode} into {:?}",
                matrix.nrows(),
                matrix.ncols(),
                shape
            )));
        }
        let mut data = vec![0.0; outer * n * inner];
        for o in 0..outer {
            for k in 0..n {
                let base = (o * n + k) * inner;
                for i in 0..inner {
                    data[base + i] = matrix[[k, o * inner + i]];
                }
            }
        }
        Self::new(shape.to_vec(), data)
    }

    /// `X x_mode A`: replaces mode `mode` (size `n`) by `A.nrows()`, with
    /// `A` of shape `(rows, n)`.
    pub fn mode_product(&self, a: &Array2<f64>, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let (outer, n, inner) = Self::mode_blocks(&self.shape, mode);
        if a.ncols() != n {
            return Err(CrnlError::shape(format!(
                "mode-{mode} product needs {n} columns, matrix has {}",
                a.ncols()
            )));
        }
        let rows = a.nrows();
        let mut out = vec![0.0; outer * rows * inner];
        for o in 0..outer {
            let src = &self.data[o * n * inner..(o + 1) * n * inner];
            let dst = &mut out[o * rows * inner..(o + 1) * rows * inner];
            for r in 0..rows {
                let drow = &mut dst[r * inner..(r + 1) * inner];
                for k in 0..n {
                    let coef = a[[r, k]];
                    if coef == 0.0 {
                        continue;
                    }
                    let srow = &src[k * inner..(k + 1) * inner];
                    for (d, s) in drow.iter_mut().zip(srow) {
                        *d += coef * s;
                    }
                }
            }
        }
        let mut shape = self.shape.clone();
        shape[mode] = rows;
        Self::new(shape, out)
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.shape != other.shape {
            return Err(CrnlError::shape(format!(
                "inner product of {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Counts, per mode, the singular values of the unfolding above
    /// `tolerance * sigma_max`.
    pub fn numerical_tucker_rank(&self, tolerance: f64) -> Result<TuckerRank> {
        if self.is_empty() {
            return Err(CrnlError::Empty("tensor".into()));
        }
        if !(tolerance > 0.0) {
            return Err(CrnlError::invalid("rank tolerance must be positive"));
        }
        let mut ranks = Vec::with_capacity(self.order());
        for mode in 0..self.order() {
            let m = self.unfold(mode)?;
            let dm = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]]);
            let sv = dm.singular_values();
            let smax = sv.iter().cloned().fold(0.0f64, f64::max);
            let rank = if smax == 0.0 {
                0
            } else {
                sv.iter().filter(|&&s| s > tolerance * smax).count()
            };
            ranks.push(rank);
        }
        Ok(TuckerRank::new(ranks))
    }
}

pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-8;
