//! Closed-form test functions and synthetic data sets.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};
use crate::io::PointCloud;
use crate::observed::ObservedSet;
use crate::seeds::stream_rng;
use crate::tensor::DenseTensor;

/// Bivariate regression benchmarks on `[0, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticFunction {
    F1,
    F2,
    F3,
    F4,
}

impl SyntheticFunction {
    pub const ALL: [SyntheticFunction; 4] = [Self::F1, Self::F2, Self::F3, Self::F4];

    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            Self::F1 => (-(81.0 / 4.0) * ((x - 0.5).powi(2) + (y - 0.5).powi(2))).exp() / 3.0,
            Self::F2 => (1.25 + (5.4 * y).cos()) / (6.0 + 6.0 * (3.0 * x - 1.0).powi(2)),
            Self::F3 => ((9.0 - 9.0 * x - 9.0 * y).tanh() + 1.0) / 9.0,
            Self::F4 => {
                2.0 * (-30.0 * ((x - 1.0 / 3.0).powi(2) + (y - 1.0 / 3.0).powi(2))).exp()
                    - (-20.0 * ((x - 2.0 / 3.0).powi(2) + (y - 2.0 / 3.0).powi(2))).exp()
            }
        }
    }

    /// `n` points drawn uniformly from the unit square.
    pub fn sample(self, n: usize, seed: u64) -> Result<ObservedSet> {
        let mut rng = stream_rng(seed, "samples", 0);
        let pts = Array2::from_shape_fn((n, 2), |_| rng.random_range(0.0..=1.0));
        let values = pts
            .rows()
            .into_iter()
            .map(|r| self.eval(r[0], r[1]))
            .collect();
        ObservedSet::new(pts, values)
    }
}

impl fmt::Display for SyntheticFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::F1 => "f1",
            Self::F2 => "f2",
            Self::F3 => "f3",
            Self::F4 => "f4",
        };
        f.write_str(s)
    }
}

impl FromStr for SyntheticFunction {
    type Err = CrnlError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(Self::F1),
            "f2" => Ok(Self::F2),
            "f3" => Ok(Self::F3),
            "f4" => Ok(Self::F4),
            other => Err(CrnlError::invalid(format!("unknown function {other:?}"))),
        }
    }
}

/// Smooth multi-band image in `[0, 1]`: a few spatial abundance maps
/// mixed by smooth spectral signatures, plus a sharp-edged region.
pub fn multiband_image(rows: usize, cols: usize, bands: usize, seed: u64) -> DenseTensor {
    let mut rng = stream_rng(seed, "multiband", 0);
    let comps = 4;
    let centres: Vec<(f64, f64, f64)> = (0..comps)
        .map(|_| {
            (
                rng.random_range(0.15..0.85),
                rng.random_range(0.15..0.85),
                rng.random_range(0.12..0.3),
            )
        })
        .collect();
    let spectra: Vec<(f64, f64)> = (0..comps)
        .map(|_| (rng.random_range(0.5..3.0), rng.random_range(0.0..6.28)))
        .collect();
    let mut x = DenseTensor::from_fn(&[rows, cols, bands], |i| {
        let u = i[0] as f64 / rows.max(2).saturating_sub(1) as f64;
        let v = i[1] as f64 / cols.max(2).saturating_sub(1) as f64;
        let w = if bands > 1 {
            i[2] as f64 / (bands - 1) as f64
        } else {
            0.0
        };
        let mut acc = 0.0;
        for ((cx, cy, r), (freq, phase)) in centres.iter().zip(&spectra) {
            let a = (-((u - cx).powi(2) + (v - cy).powi(2)) / (2.0 * r * r)).exp();
            let s = 0.5 + 0.5 * (freq * w * std::f64::consts::PI + phase).sin();
            acc += a * s;
        }
        if u > 0.55 && v < 0.35 {
            acc += 0.25 * (1.0 - w);
        }
        acc
    });
    let max = x.max_abs().max(1e-12);
    for v in x.data_mut() {
        *v = 0.05 + 0.9 * *v / max;
    }
    x
}

/// Smooth colour image in `[0, 1]` with a few edges.
pub fn color_image(rows: usize, cols: usize, seed: u64) -> DenseTensor {
    let base = multiband_image(rows, cols, 3, seed);
    let mut x = base.clone();
    for i in 0..rows {
        for j in 0..cols {
            let stripe = ((i / 8 + j / 8) % 2) as f64;
            for c in 0..3 {
                let v = base.get(&[i, j, c]) * (0.8 + 0.2 * stripe);
                x.set(&[i, j, c], v);
            }
        }
    }
    x
}

/// Points on a wavy sheet with colours varying smoothly with position.
pub fn point_cloud(n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(CrnlError::Empty("point cloud size".into()));
    }
    let mut rng = stream_rng(seed, "cloud", 0);
    let mut pos = Array2::zeros((n, 3));
    let mut col = Array2::zeros((n, 3));
    for i in 0..n {
        let x: f64 = rng.random_range(0.0..1.0);
        let y: f64 = rng.random_range(0.0..1.0);
        let z = 0.2 * (3.0 * x).sin() * (2.0 * y).cos();
        pos[[i, 0]] = x;
        pos[[i, 1]] = y;
        pos[[i, 2]] = z;
        col[[i, 0]] = 0.5 + 0.4 * (2.5 * x + 0.5).sin();
        col[[i, 1]] = 0.5 + 0.4 * (3.0 * y - 1.0).cos() * (1.0 - 0.5 * x);
        col[[i, 2]] = 0.3 + 0.5 * (-(x - 0.4).powi(2) * 4.0 - (y - 0.6).powi(2) * 4.0).exp() + z;
    }
    PointCloud::new(pos, col)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn function_values() {
        assert!((SyntheticFunction::F1.eval(0.5, 0.5) - 1.0 / 3.0).abs() < 1e-15);
        assert!((SyntheticFunction::F2.eval(1.0 / 3.0, 0.0) - 2.25 / 6.0).abs() < 1e-15);
        assert!((SyntheticFunction::F3.eval(0.5, 0.5) - 1.0 / 9.0).abs() < 1e-15);
        let f4 = SyntheticFunction::F4.eval(1.0 / 3.0, 1.0 / 3.0);
        let want = 2.0 - (-20.0f64 * 2.0 / 9.0).exp();
        assert!((f4 - want).abs() < 1e-15);
        assert_eq!("F3".parse::<SyntheticFunction>().unwrap(), SyntheticFunction::F3);
        assert!("f9".parse::<SyntheticFunction>().is_err());
    }

    #[test]
    fn samples_deterministic() {
        let a = SyntheticFunction::F2.sample(50, 3).unwrap();
        let b = SyntheticFunction::F2.sample(50, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.points().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn images_in_range() {
        let x = multiband_image(16, 12, 8, 1);
        assert_eq!(x.shape(), &[16, 12, 8]);
        assert!(x.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let c = color_image(10, 10, 2);
        assert!(c.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let p = point_cloud(20, 0).unwrap();
        assert_eq!(p.len(), 20);
    }
}
