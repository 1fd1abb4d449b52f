//! Self-checks run by `crnl oracles`: tensor identities, gradient checks,
//! the rank and cross-group bounds, and grouping against brute force.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::factorization::{
    frank_bound_check, lipschitz_bound_check, CrnlModel, FactorSpec, ModelLayout, Objective,
};
use crate::grouping::{cube_distance, split_domain, top_s_similar, GroupObservedSet, SampleLattice};
use crate::inr::FnField;
use crate::neural::SineMlp;
use crate::observed::{Normalizer, ObservedSet};
use crate::regularizers::tv_subgradient;
use crate::seeds::{stream_rng, sub_seed};
use crate::tensor::{DenseTensor, TuckerRank};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Largest relative error between `analytic[i]` and a central difference
/// of `f` at `x` along coordinate `i`, over `indices`.
/// Entries with both magnitudes below `floor` are compared absolutely.
pub fn gradient_check(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x: &[f64],
    analytic: &[f64],
    indices: &[usize],
    step: f64,
    floor: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut p = x.to_vec();
    for &i in indices {
        p[i] = x[i] + step;
        let up = f(&p);
        p[i] = x[i] - step;
        let dn = f(&p);
        p[i] = x[i];
        let fd = (up - dn) / (2.0 * step);
        let err = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}

pub const GRADIENT_TOLERANCE: f64 = 1e-4;

fn check(name: &str, passed: bool, detail: String) -> OracleCheck {
    OracleCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> DenseTensor {
    DenseTensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn fold_unfold(seed: u64) -> Result<OracleCheck> {
    let mut rng = stream_rng(seed, "fold", 0);
    let mut cases = 0;
    for _ in 0..20 {
        let order = rng.random_range(2..=4);
        let shape: Vec<usize> = (0..order).map(|_| rng.random_range(1..=5)).collect();
        let x = random_tensor(&mut rng, &shape);
        for d in 0..order {
            let back = DenseTensor::fold(&x.unfold(d)?, d, &shape)?;
            if back != x {
                return Ok(check("fold_unfold_round_trip", false, format!("shape {shape:?} mode {d}")));
            }
            cases += 1;
        }
    }
    Ok(check("fold_unfold_round_trip", true, format!("{cases} exact round trips")))
}

fn mode_product(seed: u64) -> Result<OracleCheck> {
    let mut rng = stream_rng(seed, "mode_product", 0);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let shape = [rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4)];
        let x = random_tensor(&mut rng, &shape);
        let d = rng.random_range(0..3);
        let rows = rng.random_range(1..=5);
        let a = Array2::from_shape_fn((rows, shape[d]), |_| rng.random_range(-1.0..1.0));
        let y = x.mode_product(&a, d)?;
        let mut out_shape = shape.to_vec();
        out_shape[d] = rows;
        let brute = DenseTensor::from_fn(&out_shape, |idx| {
            (0..shape[d])
                .map(|k| {
                    let mut src = idx.to_vec();
                    src[d] = k;
                    a[[idx[d], k]] * x.get(&src)
                })
                .sum()
        });
        for (p, q) in y.data().iter().zip(brute.data()) {
            worst = worst.max((p - q).abs() / q.abs().max(1e-300).max(1.0));
        }
    }
    Ok(check(
        "mode_product_brute_force",
        worst < 1e-12,
        format!("max relative error {worst:.3e}"),
    ))
}

/// Gradient of `sum_i w_i * net(x_i)` w.r.t. all parameters, optionally
/// perturbed by `corrupt` on the first entry (negative control).
pub fn mlp_gradient_error(seed: u64, corrupt: f64) -> Result<f64> {
    let mut net = SineMlp::siren(&[2, 8, 8, 1], 30.0, true, sub_seed(seed, "gradnet", 0))?;
    let mut rng = stream_rng(seed, "gradnet", 1);
    let x = Array2::from_shape_fn((6, 2), |_| rng.random_range(-1.0..1.0));
    let w = Array2::from_shape_fn((6, 1), |_| rng.random_range(-1.0..1.0));
    let cache = net.forward_cached(x.view())?;
    let (grad, _) = net.backward(&cache, w.view(), false)?;
    let mut analytic: Vec<f64> = grad.slices().concat();
    analytic[0] += corrupt;
    let sizes = net.param_sizes();
    let flat: Vec<f64> = net.param_slices().concat();
    let mut f = |p: &[f64]| {
        let mut off = 0;
        for (s, &n) in net.param_slices_mut().into_iter().zip(&sizes) {
            s.copy_from_slice(&p[off..off + n]);
            off += n;
        }
        let y = net.forward(x.view()).expect("forward");
        y.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>()
    };
    let all: Vec<usize> = (0..flat.len()).collect();
    Ok(gradient_check(&mut f, &flat, &analytic, &all, 1e-5, 1e-6))
}

fn small_layout(ranks: &[usize], groups: usize, use_bias: bool, hidden: Vec<usize>) -> ModelLayout {
    let k = ranks.len();
    ModelLayout {
        ranks: TuckerRank::new(ranks.to_vec()),
        groups,
        normalizer: Normalizer::new(vec![-1.0; k], vec![1.0; k]).expect("bounds"),
        grid: None,
        similar: 1,
        coupled: true,
        factor: FactorSpec {
            hidden,
            omega: 3.0,
            use_bias,
        },
    }
}

/// Finite-difference check of the factorization loss w.r.t. core entries
/// and factor-network parameters.
pub fn model_gradient_error(seed: u64) -> Result<f64> {
    let layout = small_layout(&[2, 3, 2], 2, true, vec![6]);
    let mut model = CrnlModel::init(layout.clone(), sub_seed(seed, "gradmodel", 0))?;
    let mut rng = stream_rng(seed, "gradmodel", 1);
    let sets: Vec<GroupObservedSet> = (0..2)
        .map(|l| GroupObservedSet {
            key: l,
            points: Array2::from_shape_fn((15, 3), |_| rng.random_range(-1.0..1.0)),
            values: (0..15).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let obj = Objective::new(&model, &sets, 0.0, None)?;
    let (_, grads) = obj.loss_and_grad(&model, false)?;
    let analytic: Vec<f64> = grads.concat();
    let sizes = model.param_sizes();
    let flat: Vec<f64> = model.param_slices().concat();
    let mut f = |p: &[f64]| {
        let mut off = 0;
        for (s, &n) in model.param_slices_mut().into_iter().zip(&sizes) {
            s.copy_from_slice(&p[off..off + n]);
            off += n;
        }
        obj.loss_and_grad(&model, false).expect("loss").0.data
    };
    let all: Vec<usize> = (0..flat.len()).collect();
    Ok(gradient_check(&mut f, &flat, &analytic, &all, 1e-6, 1e-6))
}

/// Finite-difference check of the TV subgradient on a tensor whose
/// differences all stay away from zero.
pub fn tv_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = stream_rng(seed, "tv", 0);
    let shape = [5, 4, 2];
    // strictly increasing base plus small jitter keeps every difference
    // at least 0.5 away from zero
    let x = DenseTensor::from_fn(&shape, |i| {
        (i[0] * 7 + i[1] * 3 + i[2]) as f64 * if i[2] == 0 { 1.0 } else { -1.0 }
            + rng.random_range(-0.2..0.2)
    });
    let (_, sub) = tv_subgradient(&x)?;
    let mut f = |p: &[f64]| {
        let t = DenseTensor::new(shape.to_vec(), p.to_vec()).expect("shape");
        tv_subgradient(&t).expect("tv").0
    };
    let all: Vec<usize> = (0..x.len()).collect();
    // subgradient entries are integers, so compare on an absolute scale of 1
    Ok(gradient_check(&mut f, x.data(), sub.data(), &all, 1e-4, 1.0))
}

fn rank_bound(seed: u64, models: usize) -> Result<OracleCheck> {
    let mut rng = stream_rng(seed, "rank", 0);
    let mut violations = 0;
    let mut checks = 0;
    for m in 0..models {
        let ranks: Vec<usize> = (0..3).map(|_| rng.random_range(1..=3)).collect();
        let model = CrnlModel::init(
            small_layout(&ranks, 1, true, vec![8]),
            sub_seed(seed, "rank_model", m as u64),
        )?;
        let r = frank_bound_check(&model, &[8, 8, 8], 1, 1e-8, sub_seed(seed, "rank_grid", m as u64))?;
        violations += r.violations;
        checks += r.checks;
    }
    Ok(check(
        "rank_bound",
        violations == 0,
        format!("{checks} sampled tensors, {violations} violations"),
    ))
}

fn cross_group_bound(seed: u64, trials: usize) -> Result<OracleCheck> {
    let models = 10;
    let per = trials.div_ceil(models);
    let mut violations = 0;
    let mut intra = 0;
    let mut total = 0;
    let mut worst: f64 = 0.0;
    for m in 0..models {
        let model = CrnlModel::init(
            small_layout(&[2, 2, 2], 3, false, vec![4, 4]),
            sub_seed(seed, "bound_model", m as u64),
        )?;
        let r = lipschitz_bound_check(&model, per, 1.0, sub_seed(seed, "bound_trials", m as u64))?;
        violations += r.violations;
        intra += r.intra_group_trials;
        total += r.trials;
        worst = worst.max(r.max_ratio);
    }
    Ok(check(
        "cross_group_bound",
        violations == 0,
        format!(
            "{total} trials ({intra} within a group), {violations} violations, max lhs/bound {worst:.3e}"
        ),
    ))
}

/// Field used by the grouping oracle: a sum of random plane waves.
pub fn wave_field(seed: u64) -> FnField<impl Fn(&[f64]) -> f64> {
    let mut rng = stream_rng(seed, "waves", 0);
    let waves: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(-6.0..6.0),
                rng.random_range(-6.0..6.0),
                rng.random_range(0.0..6.3),
            )
        })
        .collect();
    FnField::new(2, move |v: &[f64]| {
        waves
            .iter()
            .map(|(a, b, c)| (a * v[0] + b * v[1] + c).sin())
            .sum()
    })
}

/// Compares [`top_s_similar`] with a brute-force sort of pairwise
/// [`cube_distance`] values; returns the number of mismatching groups.
pub fn grouping_mismatches(seed: u64, units: usize, cube: usize, similar: usize) -> Result<usize> {
    let mut rng = stream_rng(seed, "grouping", 0);
    let mut pts = Array2::from_shape_fn((200, 2), |_| rng.random_range(0.0..1.0));
    pts.row_mut(0).fill(0.0);
    pts.row_mut(1).fill(1.0);
    let obs = ObservedSet::new(pts, vec![0.0; 200])?;
    let (domain, grid) = split_domain(&obs, units, units, cube)?;
    let lattice = SampleLattice::for_observed(&obs, &domain, 1);
    let field = wave_field(seed);
    let index = top_s_similar(&field, &grid, &lattice, similar)?;
    let mut mismatches = 0;
    for group in &index.groups {
        let own = grid.candidate_id(group.key_unit);
        let mut all: Vec<(f64, usize)> = (0..grid.candidate_count())
            .filter(|&t| Some(t) != own)
            .map(|t| {
                cube_distance(&field, &grid, &lattice, group.key_unit, grid.candidate_unit(t))
                    .map(|d| (d, t))
            })
            .collect::<Result<_>>()?;
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<Option<usize>> = std::iter::once(own)
            .chain(all.iter().take(similar - 1).map(|&(_, t)| Some(t)))
            .collect();
        let got: Vec<Option<usize>> = group.members.iter().map(|m| m.candidate).collect();
        if want != got {
            mismatches += 1;
        }
    }
    Ok(mismatches)
}

/// Runs every check. `bound_trials` sets the number of cross-group bound
/// trials.
pub fn run_oracles(seed: u64, bound_trials: usize) -> Result<OracleReport> {
    let mut checks = vec![fold_unfold(seed)?, mode_product(seed)?];
    let e = mlp_gradient_error(seed, 0.0)?;
    checks.push(check(
        "network_gradient",
        e < GRADIENT_TOLERANCE,
        format!("max relative error {e:.3e}"),
    ));
    let e = model_gradient_error(seed)?;
    checks.push(check(
        "factorization_gradient",
        e < GRADIENT_TOLERANCE,
        format!("max relative error {e:.3e}"),
    ));
    let e = tv_gradient_error(seed)?;
    checks.push(check(
        "tv_subgradient",
        e < GRADIENT_TOLERANCE,
        format!("max relative error {e:.3e}"),
    ));
    checks.push(rank_bound(seed, 50)?);
    checks.push(cross_group_bound(seed, bound_trials)?);
    let m = grouping_mismatches(seed, 6, 2, 4)?;
    checks.push(check(
        "grouping_brute_force",
        m == 0,
        format!("{m} of 9 groups differ from exhaustive sort"),
    ));
    Ok(OracleReport { checks })
}
