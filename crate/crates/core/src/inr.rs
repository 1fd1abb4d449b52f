//! Continuous representation `f_theta` fitted to the observed samples.
//!
//! The objective is the sum of squared residuals over the observed points,
//! plus the energy term (applied as Adam weight decay) and, for lattice
//! data, `gamma` times the TV of the network evaluated on the full grid.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};
use crate::neural::{AdamConfig, AdamState, SineMlp};
use crate::observed::{GridMeta, Normalizer, ObservedSet};
use crate::regularizers::{energy_norm, tv_subgradient};
use crate::tensor::DenseTensor;

/// Rows per forward call when evaluating large point sets.
pub const EVAL_CHUNK: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Energy weight, applied as Adam weight decay.
    pub weight_decay: f64,
    /// TV trade-off; only used when the observed set carries a grid.
    pub gamma: f64,
    /// TV is evaluated (and its gradient applied) every this many steps.
    pub tv_interval: usize,
    pub hidden: Vec<usize>,
    pub omega: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            gamma: 0.0,
            tv_interval: 1,
            hidden: vec![256, 256],
            omega: 30.0,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(CrnlError::invalid("iterations must be >= 1"));
        }
        if !(self.gamma >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(CrnlError::invalid("gamma and weight decay must be >= 0"));
        }
        if self.tv_interval == 0 {
            return Err(CrnlError::invalid("tv_interval must be >= 1"));
        }
        Ok(())
    }
}

/// A scalar field over raw (un-normalized) coordinates.
pub trait Field {
    fn input_dim(&self) -> usize;
    fn eval(&self, points: ArrayView2<f64>) -> Result<Vec<f64>>;
}

/// Wraps a closure as a [`Field`]; handy for analytic functions.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64> Field for FnField<F> {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, points: ArrayView2<f64>) -> Result<Vec<f64>> {
        if points.ncols() != self.dim {
            return Err(CrnlError::shape(format!(
                "field takes {} coordinates, got {}",
                self.dim,
                points.ncols()
            )));
        }
        Ok(points
            .rows()
            .into_iter()
            .map(|r| (self.f)(&r.to_vec()))
            .collect())
    }
}

/// Trained network together with the coordinate normalization it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedInr {
    pub net: SineMlp,
    pub normalizer: Normalizer,
}

impl Field for FittedInr {
    fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn eval(&self, points: ArrayView2<f64>) -> Result<Vec<f64>> {
        if points.ncols() != self.input_dim() {
            return Err(CrnlError::shape(format!(
                "network takes {} coordinates, got {}",
                self.input_dim(),
                points.ncols()
            )));
        }
        let mut out = Vec::with_capacity(points.nrows());
        for chunk in points.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
            let x = self.normalizer.normalize(chunk);
            let y = self.net.forward(x.view())?;
            out.extend(y.column(0).iter().copied());
        }
        Ok(out)
    }
}

impl FittedInr {
    /// Values at every node of `grid`, shaped like the grid.
    pub fn evaluate_grid(&self, grid: &GridMeta) -> Result<DenseTensor> {
        evaluate_grid(self, grid)
    }
}

pub fn evaluate_grid(field: &dyn Field, grid: &GridMeta) -> Result<DenseTensor> {
    if grid.dim() != field.input_dim() {
        return Err(CrnlError::shape(format!(
            "grid has {} dimensions, field takes {}",
            grid.dim(),
            field.input_dim()
        )));
    }
    let values = field.eval(grid.nodes().view())?;
    DenseTensor::new(grid.shape.clone(), values)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitReport {
    /// Total objective after each iteration (data + energy + TV when
    /// evaluated that step).
    pub losses: Vec<f64>,
    pub final_data_loss: f64,
}

fn tv_shape(grid: &GridMeta) -> Result<Vec<usize>> {
    match grid.shape.len() {
        2 | 3 => Ok(grid.shape.clone()),
        n => Err(CrnlError::shape(format!("TV needs a 2- or 3-D grid, got {n}-D"))),
    }
}

pub fn fit_inr(obs: &ObservedSet, cfg: &FitConfig) -> Result<(FittedInr, FitReport)> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(CrnlError::Empty("observed set".into()));
    }
    let normalizer = obs.normalizer();
    let mut widths = vec![obs.dim()];
    widths.extend(&cfg.hidden);
    widths.push(1);
    let mut net = SineMlp::siren(&widths, cfg.omega, true, cfg.seed)?;
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
        &net.param_sizes(),
    );

    let x = normalizer.normalize(obs.points().view());
    let targets = obs.values();
    let tv_grid = match (obs.grid(), cfg.gamma > 0.0) {
        (Some(g), true) => {
            let shape = tv_shape(g)?;
            Some((normalizer.normalize(g.nodes().view()), shape))
        }
        _ => None,
    };

    let mut report = FitReport::default();
    for it in 0..cfg.iterations {
        let cache = net.forward_cached(x.view())?;
        let pred = cache.output();
        let mut grad_out = Array2::<f64>::zeros(pred.raw_dim());
        let mut data_loss = 0.0;
        for (i, (&p, &t)) in pred.column(0).iter().zip(targets).enumerate() {
            let r = p - t;
            data_loss += r * r;
            grad_out[[i, 0]] = 2.0 * r;
        }
        let (mut grads, _) = net.backward(&cache, grad_out.view(), false)?;

        let mut loss = data_loss + 0.5 * cfg.weight_decay * energy_norm(&net.param_slices());
        if let Some((nodes, shape)) = tv_grid.as_ref().filter(|_| it % cfg.tv_interval == 0) {
            let gcache = net.forward_cached(nodes.view())?;
            let img = DenseTensor::new(shape.clone(), gcache.output().column(0).to_vec())?;
            let (tv, sub) = tv_subgradient(&img)?;
            loss += cfg.gamma * tv;
            let g = Array2::from_shape_vec(
                (sub.len(), 1),
                sub.data().iter().map(|v| cfg.gamma * v).collect(),
            )
            .expect("sizes agree");
            let (tv_grads, _) = net.backward(&gcache, g.view(), false)?;
            grads.add_assign(&tv_grads);
        }

        if !loss.is_finite() {
            return Err(CrnlError::Diverged {
                iteration: it,
                loss,
            });
        }
        report.losses.push(loss);
        report.final_data_loss = data_loss;

        let gslices = grads.slices();
        let mut params = net.param_slices_mut();
        if let Err(e) = adam.step(&mut params, &gslices) {
            return Err(match e {
                CrnlError::NonFinite(_) => CrnlError::Diverged {
                    iteration: it,
                    loss,
                },
                other => other,
            });
        }
    }
    Ok((FittedInr { net, normalizer }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_data_is_fit() {
        let pts = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 7 + j * 11) % 13) as f64 / 6.0);
        let obs = ObservedSet::new(pts, vec![0.4; 40]).unwrap();
        let cfg = FitConfig {
            iterations: 500,
            hidden: vec![32, 32],
            ..FitConfig::default()
        };
        let (inr, _) = fit_inr(&obs, &cfg).unwrap();
        let pred = inr.eval(obs.points().view()).unwrap();
        let rmse = (pred.iter().map(|p| (p - 0.4).powi(2)).sum::<f64>() / 40.0).sqrt();
        assert!(rmse < 1e-2, "rmse {rmse}");
    }

    #[test]
    fn zero_iterations_rejected() {
        let obs = ObservedSet::new(array![[0.0]], vec![1.0]).unwrap();
        let cfg = FitConfig {
            iterations: 0,
            ..FitConfig::default()
        };
        assert!(fit_inr(&obs, &cfg).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let obs = ObservedSet::new(array![[0.0], [1.0]], vec![1.0, -1.0]).unwrap();
        let cfg = FitConfig {
            iterations: 5,
            learning_rate: f64::INFINITY,
            hidden: vec![4],
            ..FitConfig::default()
        };
        assert!(matches!(fit_inr(&obs, &cfg), Err(CrnlError::Diverged { .. })));
    }

    #[test]
    fn grid_evaluation_matches_pointwise() {
        let net = SineMlp::siren(&[2, 16, 1], 30.0, true, 3).unwrap();
        let grid = GridMeta::integer(&[3, 4]);
        let inr = FittedInr {
            net,
            normalizer: Normalizer::new(vec![0.0, 0.0], vec![2.0, 3.0]).unwrap(),
        };
        let t = inr.evaluate_grid(&grid).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let raw = array![[i as f64, j as f64]];
                let direct = inr.eval(raw.view()).unwrap()[0];
                assert_eq!(t.get(&[i, j]), direct);
            }
        }
        let one = GridMeta::integer(&[1, 1]);
        let single = inr.evaluate_grid(&one).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single.data()[0], inr.eval(array![[0.0, 0.0]].view()).unwrap()[0]);
    }

    #[test]
    fn grid_dimension_mismatch() {
        let inr = FittedInr {
            net: SineMlp::siren(&[2, 4, 1], 30.0, true, 0).unwrap(),
            normalizer: Normalizer::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
        };
        assert!(inr.evaluate_grid(&GridMeta::integer(&[2, 2, 2])).is_err());
    }
}
