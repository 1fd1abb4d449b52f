//! Energy and anisotropic total-variation penalties.

use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};
use crate::tensor::DenseTensor;

/// Weighted TV penalty over an `n1 x n2 x n3` reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvSpec {
    pub gamma: f64,
    pub shape: [usize; 3],
}

impl TvSpec {
    pub fn new(gamma: f64, shape: [usize; 3]) -> Result<Self> {
        if !(gamma >= 0.0) {
            return Err(CrnlError::invalid(format!("TV weight must be >= 0, got {gamma}")));
        }
        Ok(Self { gamma, shape })
    }
}

fn image_dims(x: &DenseTensor) -> Result<(usize, usize, usize)> {
    let (n1, n2, n3) = match *x.shape() {
        [a, b] => (a, b, 1),
        [a, b, c] => (a, b, c),
        ref s => {
            return Err(CrnlError::shape(format!(
                "TV needs a 2- or 3-mode tensor, got shape {s:?}"
            )))
        }
    };
    if n1 < 2 || n2 < 2 {
        return Err(CrnlError::shape(format!(
            "TV differences need at least 2 entries along modes 1 and 2, got {n1}x{n2}"
        )));
    }
    Ok((n1, n2, n3))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Anisotropic TV: l1 norm of first differences along the first two modes.
pub fn tv_norm(x: &DenseTensor) -> Result<f64> {
    Ok(tv_norm_and_subgradient(x, false)?.0)
}

/// TV value and its subgradient (`sign(0) = 0`).
pub fn tv_subgradient(x: &DenseTensor) -> Result<(f64, DenseTensor)> {
    let (v, g) = tv_norm_and_subgradient(x, true)?;
    Ok((v, g.expect("requested")))
}

fn tv_norm_and_subgradient(
    x: &DenseTensor,
    want_grad: bool,
) -> Result<(f64, Option<DenseTensor>)> {
    let (n1, n2, n3) = image_dims(x)?;
    let d = x.data();
    let at = |i: usize, j: usize, k: usize| (i * n2 + j) * n3 + k;
    let mut grad = want_grad.then(|| DenseTensor::zeros(x.shape()));
    let mut total = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..n3 {
                let here = d[at(i, j, k)];
                if i + 1 < n1 {
                    let diff = d[at(i + 1, j, k)] - here;
                    total += diff.abs();
                    if let Some(g) = grad.as_mut() {
                        let s = sign(diff);
                        g.data_mut()[at(i + 1, j, k)] += s;
                        g.data_mut()[at(i, j, k)] -= s;
                    }
                }
                if j + 1 < n2 {
                    let diff = d[at(i, j + 1, k)] - here;
                    total += diff.abs();
                    if let Some(g) = grad.as_mut() {
                        let s = sign(diff);
                        g.data_mut()[at(i, j + 1, k)] += s;
                        g.data_mut()[at(i, j, k)] -= s;
                    }
                }
            }
        }
    }
    Ok((total, grad))
}

/// Sum of squared entries over a set of parameter tensors.
pub fn energy_norm(params: &[&[f64]]) -> f64 {
    params
        .iter()
        .map(|p| p.iter().map(|v| v * v).sum::<f64>())
        .sum()
}
