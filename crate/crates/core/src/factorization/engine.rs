//! Batched evaluation and gradients of a [`CrnlModel`] over point sets.
//!
//! Each factor network is run once per distinct input coordinate; point
//! sets then contract their group's core against rows of those tables.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};

use crate::error::Result;
use crate::neural::{ForwardCache, MlpGrad};

use super::model::CrnlModel;
use super::plan::{ContractionPlan, PlanForward};

#[derive(Debug, Clone, Default)]
struct Table {
    coords: Vec<f64>,
    lookup: HashMap<u64, usize>,
}

impl Table {
    fn row_of(&mut self, x: f64) -> usize {
        let x = if x == 0.0 { 0.0 } else { x };
        *self.lookup.entry(x.to_bits()).or_insert_with(|| {
            self.coords.push(x);
            self.coords.len() - 1
        })
    }

    fn input(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.coords.len(), 1), self.coords.clone()).expect("column")
    }
}

#[derive(Debug, Clone)]
struct PointSet {
    group: usize,
    nets: Vec<usize>,
    plan: ContractionPlan,
}

#[derive(Debug, Clone)]
pub(crate) struct Engine {
    tables: Vec<Table>,
    sets: Vec<PointSet>,
}

pub(crate) struct EngineForward {
    caches: Vec<Option<ForwardCache>>,
    plans: Vec<PlanForward>,
    /// Values per point set.
    pub values: Vec<Vec<f64>>,
}

/// Gradients in the model's parameter order: cores, then factor networks.
pub(crate) struct EngineGrad {
    pub cores: Vec<Vec<f64>>,
    pub nets: Vec<MlpGrad>,
}

impl EngineGrad {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.cores.iter().map(Vec::as_slice).collect();
        for n in &self.nets {
            out.extend(n.slices());
        }
        out
    }
}

impl Engine {
    pub fn new(model: &CrnlModel) -> Self {
        Self {
            tables: vec![Table::default(); model.factors().len()],
            sets: Vec::new(),
        }
    }

    pub fn set_count(&self) -> usize {
        self.sets.len()
    }

    /// Registers normalized points (one row per point, `K` columns) of
    /// group `group`; returns the set id.
    pub fn add_set(&mut self, model: &CrnlModel, group: usize, points: ArrayView2<f64>) -> usize {
        let k = model.modes();
        let nets: Vec<usize> = (0..k).map(|d| model.net_index(group, d)).collect();
        let rows: Vec<Vec<usize>> = points
            .rows()
            .into_iter()
            .map(|p| (0..k).map(|d| self.tables[nets[d]].row_of(p[d])).collect())
            .collect();
        let plan = ContractionPlan::new(model.ranks(), &rows);
        self.sets.push(PointSet { group, nets, plan });
        self.sets.len() - 1
    }

    /// Forward pass over the sets listed in `active` (all when `None`),
    /// keeping what the backward pass needs.
    pub fn forward(&self, model: &CrnlModel, active: Option<&[bool]>) -> Result<EngineForward> {
        let caches = self
            .tables
            .iter()
            .zip(model.factors())
            .map(|(t, net)| {
                if t.coords.is_empty() {
                    Ok(None)
                } else {
                    net.forward_cached(t.input().view()).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut plans = Vec::with_capacity(self.sets.len());
        let mut values = Vec::with_capacity(self.sets.len());
        for (i, set) in self.sets.iter().enumerate() {
            if active.is_some_and(|a| !a[i]) {
                plans.push(PlanForward::empty());
                values.push(Vec::new());
                continue;
            }
            let views: Vec<ArrayView2<f64>> = set
                .nets
                .iter()
                .map(|&n| caches[n].as_ref().expect("table in use").output().view())
                .collect();
            let (v, f) = set
                .plan
                .forward(model.cores()[set.group].data(), &views);
            plans.push(f);
            values.push(v);
        }
        Ok(EngineForward {
            caches,
            plans,
            values,
        })
    }

    /// Gradient of `sum_sets sum_i point_grads[set][i] * value[set][i]`.
    /// Sets with an empty gradient vector are skipped.
    pub fn backward(
        &self,
        model: &CrnlModel,
        fwd: &EngineForward,
        point_grads: &[Vec<f64>],
    ) -> Result<EngineGrad> {
        let mut dcores: Vec<Vec<f64>> =
            model.cores().iter().map(|c| vec![0.0; c.len()]).collect();
        let mut dtables: Vec<Array2<f64>> = fwd
            .caches
            .iter()
            .map(|c| match c {
                Some(c) => Array2::zeros(c.output().raw_dim()),
                None => Array2::zeros((0, 0)),
            })
            .collect();
        for (i, set) in self.sets.iter().enumerate() {
            if point_grads[i].is_empty() {
                continue;
            }
            let views: Vec<ArrayView2<f64>> = set
                .nets
                .iter()
                .map(|&n| fwd.caches[n].as_ref().expect("table in use").output().view())
                .collect();
            let mut local: Vec<Array2<f64>> = set
                .nets
                .iter()
                .map(|&n| std::mem::replace(&mut dtables[n], Array2::zeros((0, 0))))
                .collect();
            set.plan.backward(
                model.cores()[set.group].data(),
                &views,
                &fwd.plans[i],
                &point_grads[i],
                &mut dcores[set.group],
                &mut local,
            );
            for (&n, t) in set.nets.iter().zip(local) {
                dtables[n] = t;
            }
        }
        let nets = model
            .factors()
            .iter()
            .zip(&fwd.caches)
            .zip(&dtables)
            .map(|((net, cache), dt)| match cache {
                Some(c) => net.backward(c, dt.view(), false).map(|(g, _)| g),
                None => Ok(MlpGrad::zeros_like(net)),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EngineGrad {
            cores: dcores,
            nets,
        })
    }

    /// Values only (no caches kept).
    pub fn predict(&self, model: &CrnlModel) -> Result<Vec<Vec<f64>>> {
        let outputs = self
            .tables
            .iter()
            .zip(model.factors())
            .map(|(t, net)| {
                if t.coords.is_empty() {
                    Ok(None)
                } else {
                    net.forward(t.input().view()).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .sets
            .iter()
            .map(|set| {
                let views: Vec<ArrayView2<f64>> = set
                    .nets
                    .iter()
                    .map(|&n| outputs[n].as_ref().expect("table in use").view())
                    .collect();
                set.plan
                    .forward(model.cores()[set.group].data(), &views)
                    .0
            })
            .collect())
    }
}
