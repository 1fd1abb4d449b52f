use crnl::factorization::{frank_bound_check, train, CrnlModel, FactorSpec, ModelLayout, TrainConfig};
use crnl::grouping::{build_group_sets, split_domain, top_s_similar, SampleLattice};
use crnl::inr::FnField;
use crnl::metrics::{nrmse, psnr};
use crnl::neural::{AdamConfig, AdamState, SineMlp};
use crnl::observed::{Normalizer, ObservedSet};
use crnl::regularizers::tv_norm;
use crnl::synthetic::multiband_image;
use crnl::tasks::add_noise;
use crnl::{DenseTensor, GroupObservedSet, TuckerRank};
use ndarray::Array2;
use proptest::prelude::*;

fn tensor_strategy(max_order: usize, max_dim: usize) -> impl Strategy<Value = DenseTensor> {
    prop::collection::vec(1..=max_dim, 2..=max_order).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(-10.0f64..10.0, n)
            .prop_map(move |data| DenseTensor::new(shape.clone(), data).unwrap())
    })
}

/// Values on a 1/1024 grid in a small range, so sums stay exact.
fn dyadic_image() -> impl Strategy<Value = DenseTensor> {
    (2usize..7, 2usize..7, 1usize..4).prop_flat_map(|(a, b, c)| {
        prop::collection::vec(-4096i32..4096, a * b * c).prop_map(move |v| {
            DenseTensor::new(vec![a, b, c], v.into_iter().map(|k| k as f64 / 1024.0).collect())
                .unwrap()
        })
    })
}

fn float_image() -> impl Strategy<Value = DenseTensor> {
    (2usize..7, 2usize..7, 1usize..4).prop_flat_map(|(a, b, c)| {
        prop::collection::vec(-10.0f64..10.0, a * b * c)
            .prop_map(move |v| DenseTensor::new(vec![a, b, c], v).unwrap())
    })
}

fn matrix(rows: usize, cols: usize, seed: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |(i, j)| seed[(i * cols + j) % seed.len()] + (i as f64) * 0.1 - j as f64 * 0.07)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fold_inverts_unfold(x in tensor_strategy(4, 5)) {
        for d in 0..x.order() {
            let m = x.unfold(d).unwrap();
            prop_assert_eq!(m.nrows(), x.shape()[d]);
            prop_assert_eq!(DenseTensor::fold(&m, d, x.shape()).unwrap(), x.clone());
        }
    }

    #[test]
    fn mode_products_commute_across_modes(
        x in tensor_strategy(3, 4).prop_filter("order 3", |t| t.order() == 3),
        r1 in 1usize..4, r2 in 1usize..4,
        seed in prop::collection::vec(-1.0f64..1.0, 16),
    ) {
        let a = matrix(r1, x.shape()[0], &seed);
        let b = matrix(r2, x.shape()[1], &seed[3..]);
        let ab = x.mode_product(&a, 0).unwrap().mode_product(&b, 1).unwrap();
        let ba = x.mode_product(&b, 1).unwrap().mode_product(&a, 0).unwrap();
        let scale = ab.max_abs().max(1e-300);
        for (p, q) in ab.data().iter().zip(ba.data()) {
            prop_assert!((p - q).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn tucker_product_respects_core_ranks(
        ranks in prop::collection::vec(1usize..4, 3),
        extra in prop::collection::vec(0usize..4, 3),
        vals in prop::collection::vec(-1.0f64..1.0, 64),
    ) {
        let mut x = DenseTensor::from_fn(&ranks, |i| vals[(i[0] * 9 + i[1] * 3 + i[2]) % 64]);
        for d in 0..3 {
            let u = matrix(ranks[d] + extra[d], ranks[d], &vals[d * 5..]);
            x = x.mode_product(&u, d).unwrap();
        }
        let got = x.numerical_tucker_rank(1e-8).unwrap();
        prop_assert!(got.within(&TuckerRank::new(ranks.clone())), "{:?} vs {:?}", got, ranks);
    }

    #[test]
    fn tv_translation_invariant(x in dyadic_image(), c in -64i32..64) {
        let shifted = x.map(|v| v + c as f64 / 8.0);
        prop_assert_eq!(tv_norm(&shifted).unwrap(), tv_norm(&x).unwrap());
    }

    #[test]
    fn tv_scales_linearly(x in float_image(), a in -5.0f64..5.0) {
        let base = tv_norm(&x).unwrap();
        let scaled = tv_norm(&x.map(|v| a * v)).unwrap();
        prop_assert!((scaled - a.abs() * base).abs() <= 1e-12 * (a.abs() * base).max(1e-300));
    }

    #[test]
    fn sine_activations_bounded(seed in 0u64..1000, w in prop::collection::vec(-50.0f64..50.0, 10)) {
        let net = SineMlp::siren(&[2, 16, 16, 1], 30.0, true, seed).unwrap();
        let x = Array2::from_shape_vec((5, 2), w).unwrap();
        let cache = net.forward_cached(x.view()).unwrap();
        for k in 0..2 {
            prop_assert!(cache.hidden(k).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn parameter_economy(groups in 2usize..6, r in 1usize..4) {
        let layout = |coupled| ModelLayout {
            ranks: TuckerRank::new(vec![r, r, 2]),
            groups,
            normalizer: Normalizer::new(vec![0.0; 3], vec![1.0; 3]).unwrap(),
            grid: None,
            similar: 2,
            coupled,
            factor: FactorSpec { hidden: vec![5], omega: 3.0, use_bias: true },
        };
        let c = CrnlModel::init(layout(true), 0).unwrap();
        let u = CrnlModel::init(layout(false), 0).unwrap();
        let per_set = c.factor_param_count();
        prop_assert_eq!(u.param_count() - c.param_count(), (groups - 1) * per_set);
    }
}

#[test]
fn adam_steps_are_deterministic() {
    let run = || {
        let mut net = SineMlp::siren(&[2, 8, 1], 30.0, true, 11).unwrap();
        let mut adam = AdamState::new(AdamConfig::default(), &net.param_sizes());
        let x = Array2::from_shape_fn((7, 2), |(i, j)| (i as f64 - 3.0) * 0.1 + j as f64 * 0.05);
        for _ in 0..20 {
            let cache = net.forward_cached(x.view()).unwrap();
            let g = cache.output().mapv(|v| v - 0.3);
            let (grad, _) = net.backward(&cache, g.view(), false).unwrap();
            let slices = grad.slices();
            adam.step(&mut net.param_slices_mut(), &slices).unwrap();
        }
        net.param_slices().concat()
    };
    let a = run();
    let b = run();
    assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
}

fn small_problem() -> (Vec<GroupObservedSet>, ModelLayout) {
    let x = DenseTensor::from_fn(&[12, 12, 2], |i| {
        ((i[0] as f64) * 0.4).sin() * 0.5 + (i[1] as f64 * 0.3).cos() * 0.3 + i[2] as f64 * 0.1
    });
    let obs = ObservedSet::from_tensor(&x, None).unwrap();
    let (domain, grid) = split_domain(&obs, 12, 12, 4).unwrap();
    let lattice = SampleLattice::for_observed(&obs, &domain, 1);
    let field = FnField::new(3, |v: &[f64]| (v[0] * 0.4).sin() + (v[1] * 0.3).cos() + v[2]);
    let index = top_s_similar(&field, &grid, &lattice, 3).unwrap();
    let sets = build_group_sets(&obs, &grid, &index);
    let layout = ModelLayout::for_grid(
        TuckerRank::new(vec![3, 3, 2, 2]),
        &grid,
        &domain.lo,
        &domain.hi,
        3,
        true,
        FactorSpec { hidden: vec![16], omega: 10.0, use_bias: true },
    )
    .unwrap();
    (sets, layout)
}

#[test]
fn training_loss_finite_and_smoothed_nonincreasing() {
    let (sets, layout) = small_problem();
    let cfg = TrainConfig { iterations: 400, learning_rate: 1e-3, ..TrainConfig::default() };
    let (model, report) = train(&sets, layout, &cfg, None).unwrap();
    assert!(report.losses.iter().all(|l| l.is_finite()));
    let avg: Vec<f64> = report.losses.windows(50).map(|w| w.iter().sum::<f64>() / 50.0).collect();
    for pair in avg.windows(2) {
        assert!(pair[1] <= pair[0] * (1.0 + 1e-9), "moving average rose: {pair:?}");
    }
    // trained models obey the rank bound too
    let r = frank_bound_check(&model, &[6, 6, 4, 3], 2, 1e-8, 5).unwrap();
    assert_eq!(r.violations, 0);
}

#[test]
fn training_is_bit_reproducible() {
    let (sets, layout) = small_problem();
    let cfg = TrainConfig { iterations: 30, ..TrainConfig::default() };
    let (a, _) = train(&sets, layout.clone(), &cfg, None).unwrap();
    let (b, _) = train(&sets, layout, &cfg, None).unwrap();
    let pa = a.param_slices().concat();
    let pb = b.param_slices().concat();
    assert!(pa.iter().zip(&pb).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn grouping_counts_match_enumeration() {
    for (n1, n2, p) in [(12, 12, 4), (10, 7, 3), (9, 9, 2)] {
        let x = DenseTensor::from_fn(&[n1, n2, 1], |i| (i[0] * 3 + i[1]) as f64);
        let obs = ObservedSet::from_tensor(&x, None).unwrap();
        let (_, grid) = split_domain(&obs, n1, n2, p).unwrap();
        let mut candidates = 0;
        for cx in 0..n1 {
            for cy in 0..n2 {
                if cx + p <= n1 && cy + p <= n2 {
                    candidates += 1;
                }
            }
        }
        let keys = n1.div_ceil(p) * n2.div_ceil(p);
        assert_eq!(grid.candidate_count(), candidates);
        assert_eq!(grid.key_count(), keys);
    }
}

#[test]
fn key_cube_points_land_in_slot_one() {
    let (sets, _) = small_problem();
    // 12x12x2 lattice with 4x4-unit cubes: every pixel belongs to one key cube
    let total: usize = sets
        .iter()
        .map(|s| s.points.rows().into_iter().filter(|r| r[3] == 1.0).count())
        .sum();
    assert_eq!(total, 12 * 12 * 2);
    for s in &sets {
        let l = s.key;
        let (x0, y0) = ((l / 3) as f64 * 4.0, (l % 3) as f64 * 4.0);
        for r in s.points.rows() {
            if r[3] == 1.0 {
                assert!(r[0] >= x0 && r[0] < x0 + 4.0 && r[1] >= y0 && r[1] < y0 + 4.0);
            }
        }
    }
}

#[test]
fn psnr_falls_with_noise_and_argument_order_is_pinned() {
    let clean = multiband_image(24, 24, 3, 2);
    let mut last = f64::INFINITY;
    for sigma in [0.05, 0.1, 0.2] {
        let noisy = add_noise(&clean, sigma, 9).unwrap();
        let p = psnr(&noisy, &clean, 1.0).unwrap();
        assert!(p < last);
        last = p;
    }
    let a = [1.0, 2.0];
    let b = [2.0, 2.0];
    // normalized by the second argument
    assert!((nrmse(&a, &b).unwrap() - (1.0f64 / 8.0).sqrt()).abs() < 1e-15);
    assert!((nrmse(&b, &a).unwrap() - (1.0f64 / 5.0).sqrt()).abs() < 1e-15);
}
