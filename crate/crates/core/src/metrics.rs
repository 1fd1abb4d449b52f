//! Reconstruction quality: PSNR, SSIM, NRMSE and R-square.
//!
//! Multi-band images are `n_1 x n_2 x n_3` tensors; PSNR and SSIM are
//! computed per band (last mode) and averaged.

use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};
use crate::tensor::DenseTensor;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn same_shape(x: &DenseTensor, reference: &DenseTensor) -> Result<()> {
    if x.shape() != reference.shape() {
        return Err(CrnlError::shape(format!(
            "shapes {:?} and {:?} differ",
            x.shape(),
            reference.shape()
        )));
    }
    Ok(())
}

/// Image as `(rows, cols, bands)`.
fn bands(x: &DenseTensor) -> Result<(usize, usize, usize)> {
    match x.shape() {
        [a, b] => Ok((*a, *b, 1)),
        [a, b, c] => Ok((*a, *b, *c)),
        s => Err(CrnlError::shape(format!("expected a 2- or 3-D image, got {s:?}"))),
    }
}

fn band(x: &DenseTensor, k: usize) -> Vec<f64> {
    let (_, _, nb) = bands(x).expect("checked");
    x.data().iter().skip(k).step_by(nb).copied().collect()
}

fn psnr_slice(x: &[f64], r: &[f64], peak: f64) -> f64 {
    let mse = x.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// Per-band PSNR values.
pub fn psnr_bands(x: &DenseTensor, reference: &DenseTensor, peak: f64) -> Result<Vec<f64>> {
    same_shape(x, reference)?;
    let (_, _, nb) = bands(x)?;
    Ok((0..nb)
        .map(|k| psnr_slice(&band(x, k), &band(reference, k), peak))
        .collect())
}

/// `10 log10(peak^2 / MSE)`, averaged over bands; infinite when equal.
pub fn psnr(x: &DenseTensor, reference: &DenseTensor, peak: f64) -> Result<f64> {
    let per = psnr_bands(x, reference, peak)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// `|x - ref|_F / |ref|_F`.
pub fn nrmse(x: &[f64], reference: &[f64]) -> Result<f64> {
    if x.len() != reference.len() {
        return Err(CrnlError::shape("nrmse inputs differ in length"));
    }
    let den: f64 = reference.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(CrnlError::invalid("reference has zero norm"));
    }
    let num: f64 = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((num / den).sqrt())
}

/// `1 - SS_res / SS_tot`.
pub fn r_square(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(CrnlError::shape("r_square inputs differ in length"));
    }
    if truth.len() < 2 {
        return Err(CrnlError::invalid("r_square needs at least two samples"));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(CrnlError::invalid("r_square needs a nonconstant truth"));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - half).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filter over all fully contained windows.
fn filter_valid(img: &[f64], rows: usize, cols: usize, w: &[f64]) -> Vec<f64> {
    let k = w.len();
    let oc = cols - k + 1;
    let or = rows - k + 1;
    let mut tmp = vec![0.0; rows * oc];
    for i in 0..rows {
        for j in 0..oc {
            tmp[i * oc + j] = (0..k).map(|t| w[t] * img[i * cols + j + t]).sum();
        }
    }
    let mut out = vec![0.0; or * oc];
    for i in 0..or {
        for j in 0..oc {
            out[i * oc + j] = (0..k).map(|t| w[t] * tmp[(i + t) * oc + j]).sum();
        }
    }
    out
}

fn ssim_band(x: &[f64], y: &[f64], rows: usize, cols: usize, range: f64) -> f64 {
    let w = gaussian_window();
    let c1 = (0.01 * range).powi(2);
    let c2 = (0.03 * range).powi(2);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, rows, cols, &w);
    let my = filter_valid(y, rows, cols, &w);
    let sxx = filter_valid(&xx, rows, cols, &w);
    let syy = filter_valid(&yy, rows, cols, &w);
    let sxy = filter_valid(&xy, rows, cols, &w);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (a, b) = (mx[i], my[i]);
        let vx = sxx[i] - a * a;
        let vy = syy[i] - b * b;
        let cxy = sxy[i] - a * b;
        total += ((2.0 * a * b + c1) * (2.0 * cxy + c2))
            / ((a * a + b * b + c1) * (vx + vy + c2));
    }
    total / mx.len() as f64
}

/// Per-band mean SSIM (11x11 Gaussian window, sigma 1.5).
pub fn ssim_bands(x: &DenseTensor, reference: &DenseTensor, range: f64) -> Result<Vec<f64>> {
    same_shape(x, reference)?;
    let (rows, cols, nb) = bands(x)?;
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(CrnlError::shape(format!(
            "image {rows}x{cols} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    Ok((0..nb)
        .map(|k| ssim_band(&band(x, k), &band(reference, k), rows, cols, range))
        .collect())
}

pub fn ssim(x: &DenseTensor, reference: &DenseTensor, range: f64) -> Result<f64> {
    let per = ssim_bands(x, reference, range)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

/// Serializes non-finite values as strings (`"inf"`), finite ones as
/// numbers.
mod lenient_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float {other:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandMetrics {
    #[serde(with = "lenient_float")]
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    #[serde(with = "lenient_float")]
    pub psnr: f64,
    pub ssim: f64,
    pub nrmse: f64,
    pub per_band: Vec<BandMetrics>,
}

impl ImageMetrics {
    /// Metrics of `x` against `reference`, both in `[0, peak]`.
    pub fn compute(x: &DenseTensor, reference: &DenseTensor, peak: f64) -> Result<Self> {
        let p = psnr_bands(x, reference, peak)?;
        let s = ssim_bands(x, reference, peak)?;
        Ok(Self {
            psnr: p.iter().sum::<f64>() / p.len() as f64,
            ssim: s.iter().sum::<f64>() / s.len() as f64,
            nrmse: nrmse(x.data(), reference.data())?,
            per_band: p
                .into_iter()
                .zip(s)
                .map(|(psnr, ssim)| BandMetrics { psnr, ssim })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub nrmse: f64,
    pub r_square: f64,
    pub test_points: usize,
}

impl RegressionMetrics {
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(Self {
            nrmse: nrmse(pred, truth)?,
            r_square: r_square(pred, truth)?,
            test_points: truth.len(),
        })
    }
}

/// Metrics written by a task run. Image tasks report the recovered output
/// and the degraded input; regression tasks report held-out errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricReport {
    Image {
        recovered: ImageMetrics,
        observed: ImageMetrics,
    },
    Regression {
        test: RegressionMetrics,
        /// Per-channel R-square for colour point clouds.
        #[serde(skip_serializing_if = "Vec::is_empty", default)]
        per_channel_r_square: Vec<f64>,
    },
}

impl MetricReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseTensor::from_fn(shape, |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn psnr_cases() {
        let x = random(&[4, 4, 2], 1);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        let y = x.map(|v| v + 0.1);
        assert!((psnr(&y, &x, 1.0).unwrap() - 20.0).abs() < 1e-9);
        let z = random(&[4, 4, 2], 2);
        let mut acc = 0.0;
        for k in 0..2 {
            let mut mse = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    mse += (z.get(&[i, j, k]) - x.get(&[i, j, k])).powi(2);
                }
            }
            acc += 10.0 * (1.0 / (mse / 16.0)).log10();
        }
        assert!((psnr(&z, &x, 1.0).unwrap() - acc / 2.0).abs() < 1e-12);
        assert!(psnr(&z, &random(&[4, 4, 1], 0), 1.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let x = random(&[16, 16, 1], 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let base: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vals: Vec<f64> = [0.05, 0.1, 0.2]
            .iter()
            .map(|s| {
                let noisy = DenseTensor::new(
                    x.shape().to_vec(),
                    x.data().iter().zip(&base).map(|(a, b)| a + s * b).collect(),
                )
                .unwrap();
                psnr(&noisy, &x, 1.0).unwrap()
            })
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
    }

    #[test]
    fn nrmse_cases() {
        let r = vec![1.0, 2.0, 3.0];
        assert_eq!(nrmse(&r, &r).unwrap(), 0.0);
        let x = vec![1.5, 2.0, 2.0];
        let want = ((0.25f64 + 1.0) / 14.0).sqrt();
        assert!((nrmse(&x, &r).unwrap() - want).abs() < 1e-15);
        assert!(nrmse(&x, &[0.0; 3]).is_err());
    }

    #[test]
    fn zero_fill_matches_sqrt_of_missing_fraction() {
        let n = 100_000;
        let truth = vec![1.0; n];
        let observed: Vec<f64> = (0..n).map(|i| if i % 20 == 0 { 1.0 } else { 0.0 }).collect();
        assert!((nrmse(&observed, &truth).unwrap() - 0.95f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn r_square_cases() {
        let t = vec![1.0, 2.0, 4.0, 7.0];
        assert_eq!(r_square(&t, &t).unwrap(), 1.0);
        assert!(r_square(&[3.5; 4], &t).unwrap().abs() < 1e-15);
        assert!(r_square(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        let p = vec![1.1, 2.2, 3.7, 7.3];
        let ss_res = 0.01 + 0.04 + 0.09 + 0.09;
        let ss_tot = 6.25 + 2.25 + 0.25 + 12.25;
        assert!((r_square(&p, &t).unwrap() - (1.0 - ss_res / ss_tot)).abs() < 1e-12);
    }

    /// Direct windowed SSIM: every window evaluated with explicit sums.
    fn ssim_direct(x: &DenseTensor, y: &DenseTensor, range: f64) -> f64 {
        let (rows, cols) = (x.shape()[0], x.shape()[1]);
        let half = 5.0;
        let mut w = [[0.0; 11]; 11];
        let mut total_w = 0.0;
        for (a, row) in w.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                let d2 = (a as f64 - half).powi(2) + (b as f64 - half).powi(2);
                *v = (-d2 / 4.5).exp();
                total_w += *v;
            }
        }
        let c1 = (0.01 * range).powi(2);
        let c2 = (0.03 * range).powi(2);
        let mut acc = 0.0;
        let mut count = 0.0;
        for i in 0..=rows - 11 {
            for j in 0..=cols - 11 {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for a in 0..11 {
                    for b in 0..11 {
                        let g = w[a][b] / total_w;
                        let p = x.get(&[i + a, j + b]);
                        let q = y.get(&[i + a, j + b]);
                        mx += g * p;
                        my += g * q;
                        sxx += g * p * p;
                        syy += g * q * q;
                        sxy += g * p * q;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let c = sxy - mx * my;
                acc += ((2.0 * mx * my + c1) * (2.0 * c + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1.0;
            }
        }
        acc / count
    }

    #[test]
    fn ssim_cases() {
        let x = random(&[16, 14], 4);
        assert!((ssim(&x, &x, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let shifted = x.map(|v| v + 5.0);
        assert!(ssim(&shifted, &x, 1.0).unwrap() < 1.0);
        let y = random(&[16, 14], 5);
        let got = ssim(&y, &x, 1.0).unwrap();
        assert!((got - ssim_direct(&y, &x, 1.0)).abs() < 1e-10);
        assert!(ssim(&random(&[8, 20], 0), &random(&[8, 20], 1), 1.0).is_err());
    }

    #[test]
    fn report_json_keeps_infinity() {
        let x = random(&[12, 12, 1], 6);
        let m = ImageMetrics::compute(&x, &x, 1.0).unwrap();
        let report = MetricReport::Image {
            recovered: m.clone(),
            observed: m,
        };
        let text = report.to_json().unwrap();
        assert!(text.contains("\"inf\""));
        let back: MetricReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }
}
