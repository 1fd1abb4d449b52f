//! Discrete observations of a function `h: R^N -> R`.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};
use crate::tensor::DenseTensor;

/// Regular lattice the observations were taken from (images, multi-band
/// cubes). Node `i` along dimension `d` sits at `origin[d] + i * spacing[d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub shape: Vec<usize>,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
}

impl GridMeta {
    /// Unit-spaced integer lattice, the convention used for image tensors.
    pub fn integer(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            origin: vec![0.0; shape.len()],
            spacing: vec![1.0; shape.len()],
        }
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn node_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn coordinate(&self, d: usize, i: usize) -> f64 {
        self.origin[d] + i as f64 * self.spacing[d]
    }

    /// All nodes as rows, in the tensor storage order (last index fastest).
    pub fn nodes(&self) -> Array2<f64> {
        let n = self.node_count();
        let dim = self.dim();
        let mut out = Array2::zeros((n, dim));
        let mut idx = vec![0usize; dim];
        for r in 0..n {
            for d in 0..dim {
                out[[r, d]] = self.coordinate(d, idx[d]);
            }
            for d in (0..dim).rev() {
                idx[d] += 1;
                if idx[d] < self.shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        out
    }
}

/// Per-dimension affine map of `[lo, hi]` onto `[-1, 1]`. Dimensions with
/// `lo == hi` map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Normalizer {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(CrnlError::invalid(format!(
                "normalizer bounds {lo:?} / {hi:?} are inconsistent"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn normalize_value(&self, d: usize, x: f64) -> f64 {
        let span = self.hi[d] - self.lo[d];
        if span == 0.0 {
            0.0
        } else {
            2.0 * (x - self.lo[d]) / span - 1.0
        }
    }

    pub fn denormalize_value(&self, d: usize, u: f64) -> f64 {
        let span = self.hi[d] - self.lo[d];
        self.lo[d] + (u + 1.0) * 0.5 * span
    }

    pub fn normalize(&self, points: ArrayView2<f64>) -> Array2<f64> {
        let mut out = points.to_owned();
        for mut row in out.rows_mut() {
            for d in 0..row.len() {
                row[d] = self.normalize_value(d, row[d]);
            }
        }
        out
    }

    pub fn normalize_point(&self, p: ArrayView1<f64>) -> Vec<f64> {
        p.iter()
            .enumerate()
            .map(|(d, &x)| self.normalize_value(d, x))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSet {
    points: Array2<f64>,
    values: Vec<f64>,
    grid: Option<GridMeta>,
}

impl ObservedSet {
    pub fn new(points: Array2<f64>, values: Vec<f64>) -> Result<Self> {
        Self::build(points, values, None)
    }

    pub fn with_grid(points: Array2<f64>, values: Vec<f64>, grid: GridMeta) -> Result<Self> {
        if grid.dim() != points.ncols() {
            return Err(CrnlError::shape(format!(
                "grid has {} dimensions, points have {}",
                grid.dim(),
                points.ncols()
            )));
        }
        Self::build(points, values, Some(grid))
    }

    fn build(points: Array2<f64>, values: Vec<f64>, grid: Option<GridMeta>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(CrnlError::Empty("observed set".into()));
        }
        if points.nrows() != values.len() {
            return Err(CrnlError::shape(format!(
                "{} points but {} values",
                points.nrows(),
                values.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(CrnlError::NonFinite("observed coordinates".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CrnlError::NonFinite("observed values".into()));
        }
        Ok(Self {
            points,
            values,
            grid,
        })
    }

    /// Observations of an image-like tensor at the entries where `mask` is
    /// true (all entries when `mask` is `None`). Coordinates are the integer
    /// tensor indices.
    pub fn from_tensor(x: &DenseTensor, mask: Option<&[bool]>) -> Result<Self> {
        if let Some(m) = mask {
            if m.len() != x.len() {
                return Err(CrnlError::shape("mask length differs from tensor size"));
            }
        }
        let grid = GridMeta::integer(x.shape());
        let nodes = grid.nodes();
        let keep: Vec<usize> = (0..x.len())
            .filter(|&i| mask.map_or(true, |m| m[i]))
            .collect();
        let mut points = Array2::zeros((keep.len(), x.order()));
        let mut values = Vec::with_capacity(keep.len());
        for (r, &i) in keep.iter().enumerate() {
            points.row_mut(r).assign(&nodes.row(i));
            values.push(x.data()[i]);
        }
        Self::with_grid(points, values, grid)
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid(&self) -> Option<&GridMeta> {
        self.grid.as_ref()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    /// Per-dimension minimum and maximum of the observed coordinates.
    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let dim = self.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for row in self.points.rows() {
            for d in 0..dim {
                lo[d] = lo[d].min(row[d]);
                hi[d] = hi[d].max(row[d]);
            }
        }
        (lo, hi)
    }

    /// Normalization used when fitting a network to this set: the grid
    /// extent for lattice data, the observed bounding box otherwise.
    pub fn normalizer(&self) -> Normalizer {
        match &self.grid {
            Some(g) => {
                let lo = g.origin.clone();
                let hi = (0..g.dim())
                    .map(|d| g.coordinate(d, g.shape[d] - 1))
                    .collect();
                Normalizer { lo, hi }
            }
            None => {
                let (lo, hi) = self.bounds();
                Normalizer { lo, hi }
            }
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut points = Array2::zeros((indices.len(), self.dim()));
        let mut values = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            points.row_mut(r).assign(&self.points.row(i));
            values.push(self.values[i]);
        }
        Self::build(points, values, self.grid.clone())
    }
}
