//! Joint training of all cores and factor networks.
//!
//! Objective: the sum over groups of squared residuals on the remapped
//! observations, the energy term on every parameter (applied as Adam weight
//! decay) and, for lattice data, `gamma` times the TV of the image
//! reassembled from the key cubes at `s = 1`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};
use crate::grouping::{key_slot_queries, GroupObservedSet};
use crate::neural::{AdamConfig, AdamState};
use crate::observed::GridMeta;
use crate::regularizers::{energy_norm, tv_subgradient};
use crate::tensor::DenseTensor;

use super::engine::{Engine, EngineGrad};
use super::model::{CrnlModel, ModelLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Energy weight on cores and factor weights, applied as weight decay.
    pub weight_decay: f64,
    /// TV trade-off; only used when a lattice is supplied.
    pub gamma: f64,
    /// TV is evaluated every this many iterations.
    pub tv_interval: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            gamma: 0.0,
            tv_interval: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
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
        if !(self.learning_rate > 0.0) {
            return Err(CrnlError::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub data: f64,
    /// `gamma * TV`, zero on iterations where TV is not evaluated.
    pub tv: f64,
    /// `0.5 * weight_decay * |params|^2`, the energy matching the decay.
    pub energy: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.data + self.tv + self.energy
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub final_data_loss: f64,
}

struct TvPart {
    shape: Vec<usize>,
    /// `(set id, linear node indices)` per key cube.
    sets: Vec<(usize, Vec<usize>)>,
}

/// Data and TV terms of the training objective for a fixed model layout.
pub struct Objective {
    engine: Engine,
    data_sets: Vec<(usize, Vec<f64>)>,
    tv: Option<TvPart>,
    gamma: f64,
}

impl Objective {
    pub fn new(
        model: &CrnlModel,
        groups: &[GroupObservedSet],
        gamma: f64,
        tv_grid: Option<&GridMeta>,
    ) -> Result<Self> {
        let k = model.modes();
        let mut engine = Engine::new(model);
        let mut data_sets = Vec::with_capacity(groups.len());
        for g in groups {
            if g.key >= model.groups() {
                return Err(CrnlError::invalid(format!(
                    "group set for key {} but model has {} groups",
                    g.key,
                    model.groups()
                )));
            }
            if g.dim() != k {
                return Err(CrnlError::shape(format!(
                    "group points have {} coordinates, model expects {k}",
                    g.dim()
                )));
            }
            if g.is_empty() {
                continue;
            }
            let u = model.layout().normalizer.normalize(g.points.view());
            let id = engine.add_set(model, g.key, u.view());
            data_sets.push((id, g.values.clone()));
        }
        if data_sets.is_empty() {
            return Err(CrnlError::Empty("group observations".into()));
        }
        let tv = match tv_grid {
            Some(grid) if gamma > 0.0 => Some(Self::tv_part(model, &mut engine, grid)?),
            _ => None,
        };
        Ok(Self {
            engine,
            data_sets,
            tv,
            gamma,
        })
    }

    fn tv_part(model: &CrnlModel, engine: &mut Engine, grid: &GridMeta) -> Result<TvPart> {
        if !(2..=3).contains(&grid.dim()) || grid.dim() + 1 != model.modes() {
            return Err(CrnlError::shape("TV needs a 2- or 3-D lattice matching the model"));
        }
        let cubes = model
            .layout()
            .grid
            .as_ref()
            .ok_or_else(|| CrnlError::invalid("TV needs the cube grid"))?;
        let nodes = grid.nodes();
        let mut per_key: Vec<Vec<usize>> = vec![Vec::new(); model.groups()];
        for (i, p) in nodes.rows().into_iter().enumerate() {
            per_key[cubes.key_of(p[0], p[1])].push(i);
        }
        let mut sets = Vec::new();
        for (l, idx) in per_key.into_iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            let mut raw = Array2::zeros((idx.len(), grid.dim()));
            for (r, &i) in idx.iter().enumerate() {
                raw.row_mut(r).assign(&nodes.row(i));
            }
            let q = key_slot_queries(raw.view());
            let u = model.layout().normalizer.normalize(q.view());
            let id = engine.add_set(model, l, u.view());
            sets.push((id, idx));
        }
        Ok(TvPart {
            shape: grid.shape.clone(),
            sets,
        })
    }

    pub fn has_tv(&self) -> bool {
        self.tv.is_some()
    }

    pub(crate) fn evaluate(&self, model: &CrnlModel, with_tv: bool) -> Result<(LossParts, EngineGrad)> {
        let with_tv = with_tv && self.tv.is_some();
        let mut active = vec![false; self.engine.set_count()];
        for (id, _) in &self.data_sets {
            active[*id] = true;
        }
        if with_tv {
            for (id, _) in &self.tv.as_ref().expect("tv").sets {
                active[*id] = true;
            }
        }
        let fwd = self.engine.forward(model, Some(&active))?;
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.engine.set_count()];
        let mut parts = LossParts::default();
        for (id, targets) in &self.data_sets {
            let pred = &fwd.values[*id];
            let mut g = Vec::with_capacity(pred.len());
            for (&p, &t) in pred.iter().zip(targets) {
                let r = p - t;
                parts.data += r * r;
                g.push(2.0 * r);
            }
            grads[*id] = g;
        }
        if with_tv {
            let tv = self.tv.as_ref().expect("tv");
            let mut img = DenseTensor::zeros(&tv.shape);
            for (id, idx) in &tv.sets {
                for (&v, &i) in fwd.values[*id].iter().zip(idx) {
                    img.data_mut()[i] = v;
                }
            }
            let (norm, sub) = tv_subgradient(&img)?;
            parts.tv = self.gamma * norm;
            for (id, idx) in &tv.sets {
                grads[*id] = idx.iter().map(|&i| self.gamma * sub.data()[i]).collect();
            }
        }
        let grad = self.engine.backward(model, &fwd, &grads)?;
        Ok((parts, grad))
    }

    /// Loss terms and gradients of the data (and, when requested, TV) terms
    /// in the model's parameter order.
    pub fn loss_and_grad(&self, model: &CrnlModel, with_tv: bool) -> Result<(LossParts, Vec<Vec<f64>>)> {
        let (parts, grad) = self.evaluate(model, with_tv)?;
        Ok((parts, grad.slices().iter().map(|s| s.to_vec()).collect()))
    }
}

/// Trains a freshly initialized model on the grouped observations.
pub fn train(
    groups: &[GroupObservedSet],
    layout: ModelLayout,
    cfg: &TrainConfig,
    tv_grid: Option<&GridMeta>,
) -> Result<(CrnlModel, TrainReport)> {
    cfg.validate()?;
    let mut model = CrnlModel::init(layout, cfg.seed)?;
    let report = train_model(&mut model, groups, cfg, tv_grid)?;
    Ok((model, report))
}

/// Continues training `model` in place.
pub fn train_model(
    model: &mut CrnlModel,
    groups: &[GroupObservedSet],
    cfg: &TrainConfig,
    tv_grid: Option<&GridMeta>,
) -> Result<TrainReport> {
    cfg.validate()?;
    let objective = Objective::new(model, groups, cfg.gamma, tv_grid)?;
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
        &model.param_sizes(),
    );
    let mut report = TrainReport::default();
    for it in 0..cfg.iterations {
        let with_tv = it % cfg.tv_interval == 0;
        let (mut parts, grad) = objective.evaluate(model, with_tv)?;
        if cfg.weight_decay > 0.0 {
            parts.energy = 0.5 * cfg.weight_decay * energy_norm(&model.param_slices());
        }
        let loss = parts.total();
        if !loss.is_finite() {
            return Err(CrnlError::Diverged {
                iteration: it,
                loss,
            });
        }
        report.losses.push(loss);
        report.final_data_loss = parts.data;
        let gslices = grad.slices();
        let mut params = model.param_slices_mut();
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
    Ok(report)
}
