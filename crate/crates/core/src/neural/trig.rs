//! Branch-free `sin`/`cos` over slices.
//!
//! Cody-Waite reduction by `pi/2` followed by the fdlibm minimax kernels.
//! Absolute error stays below `1e-15` for `|x| < 1e5`; larger arguments are
//! patched with the standard library afterwards. Written so the main loop
//! autovectorizes.

use std::f64::consts::FRAC_2_PI;

const PIO2_HI: f64 = 1.570_796_326_734_125_614_17e+00;
const PIO2_LO: f64 = 6.077_100_506_506_192_249_32e-11;
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
const FAST_LIMIT: f64 = 1e5;

const S1: f64 = -1.666_666_666_666_663_243_48e-01;
const S2: f64 = 8.333_333_333_322_489_461_24e-03;
const S3: f64 = -1.984_126_982_985_794_931_34e-04;
const S4: f64 = 2.755_731_370_707_006_767_89e-06;
const S5: f64 = -2.505_076_025_340_686_341_95e-08;
const S6: f64 = 1.589_690_995_211_550_102_21e-10;

const C1: f64 = 4.166_666_666_666_660_190_37e-02;
const C2: f64 = -1.388_888_888_887_410_957_49e-03;
const C3: f64 = 2.480_158_728_947_672_941_78e-05;
const C4: f64 = -2.755_731_435_139_066_330_35e-07;
const C5: f64 = 2.087_572_321_298_174_827_90e-09;
const C6: f64 = -1.135_964_755_778_819_482_65e-11;

#[inline(always)]
fn sincos_fast(x: f64) -> (f64, f64) {
    let kf = (x * FRAC_2_PI + ROUND_MAGIC) - ROUND_MAGIC;
    let q = (kf as i64) & 3;
    let r = (x - kf * PIO2_HI) - kf * PIO2_LO;
    let z = r * r;
    let s = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    let c = 1.0 - 0.5 * z + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
    let odd = (q & 1) == 1;
    let (sv, cv) = if odd { (c, s) } else { (s, c) };
    let sin_neg = (q & 2) == 2;
    let cos_neg = ((q + 1) & 2) == 2;
    (
        if sin_neg { -sv } else { sv },
        if cos_neg { -cv } else { cv },
    )
}

/// `sin` and `cos` of each entry of `x`, handling any finite magnitude.
pub fn sincos_checked(x: &[f64], sin_out: &mut [f64], cos_out: &mut [f64]) {
    assert_eq!(x.len(), sin_out.len());
    assert_eq!(x.len(), cos_out.len());
    let mut wide = false;
    for ((&v, s), c) in x.iter().zip(sin_out.iter_mut()).zip(cos_out.iter_mut()) {
        wide |= !(v.abs() < FAST_LIMIT);
        let (a, b) = sincos_fast(v);
        *s = a;
        *c = b;
    }
    if wide {
        for ((&v, s), c) in x.iter().zip(sin_out.iter_mut()).zip(cos_out.iter_mut()) {
            if !(v.abs() < FAST_LIMIT) {
                *s = v.sin();
                *c = v.cos();
            }
        }
    }
}

/// In-place `sin` of each entry.
pub fn sin_in_place(x: &mut [f64]) {
    let mut wide = false;
    for v in x.iter() {
        wide |= !(v.abs() < FAST_LIMIT);
    }
    if wide {
        for v in x.iter_mut() {
            *v = v.sin();
        }
        return;
    }
    for v in x.iter_mut() {
        *v = sincos_fast(*v).0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_std_over_wide_range() {
        let xs: Vec<f64> = (0..200_001)
            .map(|i| (i as f64 - 100_000.0) * 0.0123456789)
            .collect();
        let mut s = vec![0.0; xs.len()];
        let mut c = vec![0.0; xs.len()];
        sincos_checked(&xs, &mut s, &mut c);
        for (i, &x) in xs.iter().enumerate() {
            assert!((s[i] - x.sin()).abs() < 1e-15, "sin({x})");
            assert!((c[i] - x.cos()).abs() < 1e-15, "cos({x})");
        }
    }

    #[test]
    fn huge_arguments_fall_back() {
        let xs = [1e7, -3e9, 0.5, f64::MAX / 2.0];
        let mut s = [0.0; 4];
        let mut c = [0.0; 4];
        sincos_checked(&xs, &mut s, &mut c);
        for i in 0..4 {
            assert_eq!(s[i], xs[i].sin());
            assert_eq!(c[i], xs[i].cos());
        }
        let mut v = xs.to_vec();
        sin_in_place(&mut v);
        assert_eq!(v[0], xs[0].sin());
    }
}
