//! Empirical checks of two structural properties of the model.
//!
//! * Rank bound: any meshgrid sampling of `s_l` has Tucker rank at most the
//!   configured ranks, mode by mode.
//! * Cross-group bound: for bias-free factor networks of depth `M` with sine
//!   frequency `w`, `K = N + 1` modes and `eta` bounding the entrywise l1
//!   norm of every core and weight matrix,
//!   `|s_a(.., x', ..) - s_b(.., x'', ..)| <= d1 |x' - x''| + d2` with
//!   `d1 = eta^(MN+M+1) w^((M-1)(N+1)) xi^N`, `d2 = 2 d1 xi` and `xi` the
//!   largest absolute coordinate involved; `d2` drops out when `a == b`.
//!   Coordinates are network inputs (after normalization).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::seeds::stream_rng;
use crate::tensor::TuckerRank;

use super::model::CrnlModel;

/// Relative slack absorbing rounding in the two sides of the inequality.
const BOUND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub trials: usize,
    pub intra_group_trials: usize,
    pub violations: usize,
    /// Largest observed `lhs / bound` (0 when every bound is 0).
    pub max_ratio: f64,
    pub eta: f64,
    /// False when some factor network has biases, in which case the bound
    /// is not guaranteed.
    pub bias_free: bool,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// `max(l1 of every core, l1 of every factor weight matrix)`.
pub fn l1_bound(model: &CrnlModel) -> f64 {
    let cores = model
        .cores()
        .iter()
        .map(|c| c.l1_norm())
        .fold(0.0, f64::max);
    let nets = model
        .factors()
        .iter()
        .map(|f| f.param_l1_bound())
        .fold(0.0, f64::max);
    cores.max(nets)
}

/// Random trials of the cross-group bound. Coordinates are drawn from
/// `[-coord_range, coord_range]`; every fourth trial compares a group with
/// itself and every tenth repeats the coordinate.
pub fn lipschitz_bound_check(
    model: &CrnlModel,
    trials: usize,
    coord_range: f64,
    seed: u64,
) -> Result<BoundReport> {
    let mut rng = stream_rng(seed, "lipschitz", 0);
    let k = model.modes();
    let n = (k - 1) as f64;
    let depth = model.factors()[0].depth() as f64;
    let omega = model.layout().factor.omega;
    let eta = l1_bound(model);
    let bias_free = model.factors().iter().all(|f| !f.uses_bias());
    let mut report = BoundReport {
        trials,
        intra_group_trials: 0,
        violations: 0,
        max_ratio: 0.0,
        eta,
        bias_free,
    };
    for t in 0..trials {
        let l1 = rng.random_range(0..model.groups());
        let l2 = if t % 4 == 0 {
            l1
        } else {
            rng.random_range(0..model.groups())
        };
        let d = rng.random_range(0..k);
        let mut v: Vec<f64> = (0..k)
            .map(|_| rng.random_range(-coord_range..=coord_range))
            .collect();
        let x1 = v[d];
        let x2 = if t % 10 == 0 {
            x1
        } else {
            rng.random_range(-coord_range..=coord_range)
        };
        let a = model.evaluate_normalized(l1, &v)?;
        v[d] = x2;
        let b = model.evaluate_normalized(l2, &v)?;
        let xi = v.iter().fold(x1.abs(), |m, x| m.max(x.abs()));
        let d1 = eta.powf(depth * n + depth + 1.0) * omega.powf((depth - 1.0) * (n + 1.0)) * xi.powf(n);
        let d2 = if l1 == l2 {
            report.intra_group_trials += 1;
            0.0
        } else {
            2.0 * d1 * xi
        };
        let lhs = (a - b).abs();
        let bound = d1 * (x1 - x2).abs() + d2;
        if lhs > bound * (1.0 + BOUND_SLACK) {
            report.violations += 1;
        }
        if bound > 0.0 {
            report.max_ratio = report.max_ratio.max(lhs / bound);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub checks: usize,
    pub violations: usize,
    /// Componentwise maximum of the observed numerical ranks.
    pub max_observed: Vec<usize>,
}

impl RankReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Samples every group on `partitions` random meshgrids of the given sizes
/// (coordinates in `[-1, 1]`) and checks the numerical Tucker rank of each
/// sample against the configured ranks.
pub fn frank_bound_check(
    model: &CrnlModel,
    grid_sizes: &[usize],
    partitions: usize,
    tolerance: f64,
    seed: u64,
) -> Result<RankReport> {
    let bound = TuckerRank::new(model.ranks().to_vec());
    let mut rng = stream_rng(seed, "meshgrid", 0);
    let mut report = RankReport {
        checks: 0,
        violations: 0,
        max_observed: vec![0; model.modes()],
    };
    for l in 0..model.groups() {
        for _ in 0..partitions {
            let coords: Vec<Vec<f64>> = grid_sizes
                .iter()
                .map(|&m| {
                    let mut c: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
                    c.sort_by(f64::total_cmp);
                    c
                })
                .collect();
            let sample = model.sample_meshgrid(l, &coords)?;
            let rank = sample.numerical_tucker_rank(tolerance)?;
            for (m, r) in report.max_observed.iter_mut().zip(&rank.ranks) {
                *m = (*m).max(*r);
            }
            report.checks += 1;
            if !rank.within(&bound) {
                report.violations += 1;
            }
        }
    }
    Ok(report)
}
