//! Per-group core tensors with shared (or, for ablation, per-group) factor
//! networks. Group `l` represents
//! `s_l(v) = C_l x_1 f_1(v_1) x_2 f_2(v_2) .. x_K f_K(v_K)` where the last
//! coordinate is the similar-cube index `s`.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};
use crate::grouping::CubeGrid;
use crate::neural::{MlpCheckpoint, SineMlp};
use crate::observed::Normalizer;
use crate::seeds::{stream_rng, sub_seed};
use crate::tensor::{DenseTensor, TuckerRank};

use super::engine::Engine;

/// Architecture of each factor network (input 1, output `r_d`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub hidden: Vec<usize>,
    pub omega: f64,
    pub use_bias: bool,
}

impl Default for FactorSpec {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            omega: 30.0,
            use_bias: true,
        }
    }
}

/// Everything fixed before training: ranks, group count, coordinate
/// normalization (last dimension is `s`) and, for inference, the cube grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayout {
    pub ranks: TuckerRank,
    pub groups: usize,
    pub normalizer: Normalizer,
    pub grid: Option<CubeGrid>,
    pub similar: usize,
    pub coupled: bool,
    pub factor: FactorSpec,
}

impl ModelLayout {
    /// Layout whose normalizer maps the first two coordinates over the
    /// padded cube grid, the remaining ones over `lo..hi`, and `s` over
    /// `1..=similar`.
    pub fn for_grid(
        ranks: TuckerRank,
        grid: &CubeGrid,
        lo: &[f64],
        hi: &[f64],
        similar: usize,
        coupled: bool,
        factor: FactorSpec,
    ) -> Result<Self> {
        let mut nlo = vec![grid.origin[0], grid.origin[1]];
        let mut nhi = vec![grid.padded_hi(0), grid.padded_hi(1)];
        nlo.extend_from_slice(&lo[2..]);
        nhi.extend_from_slice(&hi[2..]);
        nlo.push(1.0);
        nhi.push(similar as f64);
        if ranks.order() != nlo.len() {
            return Err(CrnlError::shape(format!(
                "{} ranks for {} coordinates (including s)",
                ranks.order(),
                nlo.len()
            )));
        }
        Ok(Self {
            ranks,
            groups: grid.key_count(),
            normalizer: Normalizer::new(nlo, nhi)?,
            grid: Some(grid.clone()),
            similar,
            coupled,
            factor,
        })
    }

    pub fn modes(&self) -> usize {
        self.ranks.order()
    }

    fn validate(&self) -> Result<()> {
        if self.ranks.ranks.iter().any(|&r| r == 0) {
            return Err(CrnlError::invalid("ranks must be positive"));
        }
        if self.groups == 0 {
            return Err(CrnlError::invalid("need at least one group"));
        }
        if self.normalizer.dim() != self.modes() {
            return Err(CrnlError::shape("normalizer and ranks disagree on order"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrnlModel {
    layout: ModelLayout,
    cores: Vec<DenseTensor>,
    factors: Vec<SineMlp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub layout: ModelLayout,
    pub cores: Vec<Vec<f64>>,
    pub factors: Vec<MlpCheckpoint>,
}

/// Contracts a core with one vector per mode, last mode first.
pub fn contract_core(core: &[f64], ranks: &[usize], vectors: &[&[f64]]) -> f64 {
    let mut cur = core.to_vec();
    for d in (0..ranks.len()).rev() {
        let r = ranks[d];
        cur = cur
            .chunks_exact(r)
            .map(|c| c.iter().zip(vectors[d]).map(|(a, b)| a * b).sum())
            .collect();
    }
    cur[0]
}

impl CrnlModel {
    /// Seeded initialization: cores uniform in `+-(prod r)^(-1/2)`, factor
    /// networks with the sine-network scheme.
    pub fn init(layout: ModelLayout, seed: u64) -> Result<Self> {
        layout.validate()?;
        let ranks = layout.ranks.ranks.clone();
        let limit = (layout.ranks.product() as f64).powf(-0.5);
        let cores = (0..layout.groups)
            .map(|l| {
                let mut rng = stream_rng(seed, "core", l as u64);
                DenseTensor::from_fn(&ranks, |_| rng.random_range(-limit..=limit))
            })
            .collect();
        let nets = if layout.coupled {
            layout.modes()
        } else {
            layout.modes() * layout.groups
        };
        let factors = (0..nets)
            .map(|i| {
                let d = i % layout.modes();
                let mut widths = vec![1];
                widths.extend(&layout.factor.hidden);
                widths.push(ranks[d]);
                SineMlp::siren(
                    &widths,
                    layout.factor.omega,
                    layout.factor.use_bias,
                    sub_seed(seed, "factor", i as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layout,
            cores,
            factors,
        })
    }

    pub fn layout(&self) -> &ModelLayout {
        &self.layout
    }

    pub fn ranks(&self) -> &[usize] {
        &self.layout.ranks.ranks
    }

    pub fn modes(&self) -> usize {
        self.layout.modes()
    }

    pub fn groups(&self) -> usize {
        self.layout.groups
    }

    pub fn is_coupled(&self) -> bool {
        self.layout.coupled
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn cores_mut(&mut self) -> &mut [DenseTensor] {
        &mut self.cores
    }

    pub fn factors(&self) -> &[SineMlp] {
        &self.factors
    }

    pub fn factors_mut(&mut self) -> &mut [SineMlp] {
        &mut self.factors
    }

    pub fn net_index(&self, group: usize, mode: usize) -> usize {
        if self.layout.coupled {
            mode
        } else {
            group * self.modes() + mode
        }
    }

    pub fn factor(&self, group: usize, mode: usize) -> &SineMlp {
        &self.factors[self.net_index(group, mode)]
    }

    /// Parameters of all factor networks.
    pub fn factor_param_count(&self) -> usize {
        self.factors.iter().map(SineMlp::param_count).sum()
    }

    pub fn param_count(&self) -> usize {
        self.factor_param_count() + self.cores.iter().map(DenseTensor::len).sum::<usize>()
    }

    /// Trainable parameters: all cores, then every factor network.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.cores.iter().map(DenseTensor::data).collect();
        for f in &self.factors {
            out.extend(f.param_slices());
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.cores.iter_mut().map(DenseTensor::data_mut).collect();
        for f in &mut self.factors {
            out.extend(f.param_slices_mut());
        }
        out
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.param_slices().iter().map(|s| s.len()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    fn check_group(&self, l: usize) -> Result<()> {
        if l >= self.groups() {
            return Err(CrnlError::invalid(format!(
                "group {l} out of range (model has {})",
                self.groups()
            )));
        }
        Ok(())
    }

    /// `s_l` at a raw coordinate (last entry is `s`).
    pub fn evaluate(&self, l: usize, v: &[f64]) -> Result<f64> {
        if v.len() != self.modes() {
            return Err(CrnlError::shape(format!(
                "expected {} coordinates, got {}",
                self.modes(),
                v.len()
            )));
        }
        let u: Vec<f64> = (0..v.len())
            .map(|d| self.layout.normalizer.normalize_value(d, v[d]))
            .collect();
        self.evaluate_normalized(l, &u)
    }

    /// Factor output of mode `d` in group `l` at a normalized coordinate.
    pub fn factor_vector(&self, l: usize, d: usize, u: f64) -> Result<Vec<f64>> {
        let x = Array2::from_elem((1, 1), u);
        Ok(self.factor(l, d).forward(x.view())?.row(0).to_vec())
    }

    /// `s_l` at a coordinate already mapped into network input space.
    pub fn evaluate_normalized(&self, l: usize, u: &[f64]) -> Result<f64> {
        self.check_group(l)?;
        if u.len() != self.modes() || u.iter().any(|x| !x.is_finite()) {
            return Err(CrnlError::invalid("coordinate has wrong length or is not finite"));
        }
        let vecs = (0..u.len())
            .map(|d| self.factor_vector(l, d, u[d]))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = vecs.iter().map(Vec::as_slice).collect();
        Ok(contract_core(self.cores[l].data(), self.ranks(), &refs))
    }

    /// Batched `s_{groups[i]}(points[i])` for raw coordinates.
    pub fn predict(&self, groups: &[usize], points: ArrayView2<f64>) -> Result<Vec<f64>> {
        if groups.len() != points.nrows() || points.ncols() != self.modes() {
            return Err(CrnlError::shape("group ids and points disagree"));
        }
        if let Some(&bad) = groups.iter().find(|&&l| l >= self.groups()) {
            self.check_group(bad)?;
        }
        let mut by_group: Vec<Vec<usize>> = vec![Vec::new(); self.groups()];
        for (i, &l) in groups.iter().enumerate() {
            by_group[l].push(i);
        }
        let mut engine = Engine::new(self);
        let mut owners = Vec::new();
        for (l, idx) in by_group.iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            let mut sub = Array2::zeros((idx.len(), self.modes()));
            for (r, &i) in idx.iter().enumerate() {
                sub.row_mut(r).assign(&points.row(i));
            }
            let normalized = self.layout.normalizer.normalize(sub.view());
            engine.add_set(self, l, normalized.view());
            owners.push(idx);
        }
        let values = engine.predict(self)?;
        let mut out = vec![0.0; groups.len()];
        for (vals, idx) in values.iter().zip(owners) {
            for (&v, &i) in vals.iter().zip(idx) {
                out[i] = v;
            }
        }
        Ok(out)
    }

    /// Predictions at raw `N`-dimensional points: each point is routed to
    /// the key cube containing it and evaluated at `s = 1`.
    pub fn infer(&self, points: ArrayView2<f64>) -> Result<Vec<f64>> {
        let grid = self
            .layout
            .grid
            .as_ref()
            .ok_or_else(|| CrnlError::invalid("model has no cube grid for inference"))?;
        if points.ncols() + 1 != self.modes() {
            return Err(CrnlError::shape(format!(
                "inference takes {} coordinates, got {}",
                self.modes() - 1,
                points.ncols()
            )));
        }
        let keys: Vec<usize> = points
            .rows()
            .into_iter()
            .map(|p| grid.key_of(p[0], p[1]))
            .collect();
        let queries = crate::grouping::key_slot_queries(points);
        self.predict(&keys, queries.view())
    }

    /// `s_l` on the meshgrid spanned by per-mode normalized coordinates.
    pub fn sample_meshgrid(&self, l: usize, coords: &[Vec<f64>]) -> Result<DenseTensor> {
        self.check_group(l)?;
        if coords.len() != self.modes() || coords.iter().any(Vec::is_empty) {
            return Err(CrnlError::shape("need a nonempty coordinate list per mode"));
        }
        let mut t = self.cores[l].clone();
        for (d, c) in coords.iter().enumerate() {
            let x = Array2::from_shape_vec((c.len(), 1), c.clone()).expect("column");
            let u = self.factor(l, d).forward(x.view())?;
            t = t.mode_product(&u, d)?;
        }
        Ok(t)
    }

    pub fn to_checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            layout: self.layout.clone(),
            cores: self.cores.iter().map(|c| c.data().to_vec()).collect(),
            factors: self.factors.iter().map(SineMlp::to_checkpoint).collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        ckpt.layout.validate()?;
        let ranks = ckpt.layout.ranks.ranks.clone();
        if ckpt.cores.len() != ckpt.layout.groups {
            return Err(CrnlError::parse("model checkpoint", "core count differs from groups"));
        }
        let cores = ckpt
            .cores
            .iter()
            .map(|c| DenseTensor::new(ranks.clone(), c.clone()))
            .collect::<Result<Vec<_>>>()?;
        let factors = ckpt
            .factors
            .iter()
            .map(SineMlp::from_checkpoint)
            .collect::<Result<Vec<_>>>()?;
        let expect = if ckpt.layout.coupled {
            ranks.len()
        } else {
            ranks.len() * ckpt.layout.groups
        };
        if factors.len() != expect {
            return Err(CrnlError::parse("model checkpoint", "wrong number of factor networks"));
        }
        for (i, f) in factors.iter().enumerate() {
            if f.input_dim() != 1 || f.output_dim() != ranks[i % ranks.len()] {
                return Err(CrnlError::parse("model checkpoint", "factor width mismatch"));
            }
        }
        Ok(Self {
            layout: ckpt.layout.clone(),
            cores,
            factors,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_checkpoint())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: ModelCheckpoint = serde_json::from_str(text)?;
        Self::from_checkpoint(&ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_layout(ranks: &[usize], groups: usize, coupled: bool) -> ModelLayout {
        let k = ranks.len();
        ModelLayout {
            ranks: TuckerRank::new(ranks.to_vec()),
            groups,
            normalizer: Normalizer::new(vec![-1.0; k], vec![1.0; k]).unwrap(),
            grid: None,
            similar: 1,
            coupled,
            factor: FactorSpec {
                hidden: vec![8],
                omega: 3.0,
                use_bias: true,
            },
        }
    }

    fn brute(model: &CrnlModel, l: usize, u: &[f64]) -> f64 {
        let core = &model.cores()[l];
        let vecs: Vec<Vec<f64>> = (0..u.len())
            .map(|d| model.factor_vector(l, d, u[d]).unwrap())
            .collect();
        let mut total = 0.0;
        for (lin, &c) in core.data().iter().enumerate() {
            let mut rem = lin;
            let mut prod = c;
            for d in (0..u.len()).rev() {
                let n = core.shape()[d];
                prod *= vecs[d][rem % n];
                rem /= n;
            }
            total += prod;
        }
        total
    }

    #[test]
    fn zero_core_gives_zero() {
        let mut m = CrnlModel::init(small_layout(&[2, 3, 2], 2, true), 0).unwrap();
        for c in m.cores_mut() {
            c.data_mut().fill(0.0);
        }
        assert_eq!(m.evaluate(1, &[0.3, -0.2, 0.9]).unwrap(), 0.0);
    }

    #[test]
    fn rank_one_is_scalar_product() {
        let m = CrnlModel::init(small_layout(&[1, 1, 1], 1, true), 4).unwrap();
        let u = [0.1, 0.5, -0.7];
        let want = m.cores()[0].data()[0]
            * (0..3)
                .map(|d| m.factor_vector(0, d, u[d]).unwrap()[0])
                .product::<f64>();
        assert_eq!(m.evaluate_normalized(0, &u).unwrap(), want);
    }

    #[test]
    fn matches_explicit_multilinear_sum() {
        let m = CrnlModel::init(small_layout(&[2, 3, 2, 2], 3, true), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let l = rng.random_range(0..3);
            let u: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = m.evaluate_normalized(l, &u).unwrap();
            let want = brute(&m, l, &u);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn batched_prediction_matches_pointwise() {
        let m = CrnlModel::init(small_layout(&[2, 2, 3], 3, false), 2).unwrap();
        let pts = array![[0.1, 0.2, 1.0], [0.1, -0.4, 1.0], [0.9, 0.2, -1.0], [0.1, 0.2, 1.0]];
        let groups = [0, 2, 1, 2];
        let got = m.predict(&groups, pts.view()).unwrap();
        for i in 0..4 {
            let want = m.evaluate(groups[i], &pts.row(i).to_vec()).unwrap();
            assert!((got[i] - want).abs() < 1e-14);
        }
        assert!(m.predict(&[5], array![[0.0, 0.0, 0.0]].view()).is_err());
    }

    #[test]
    fn invalid_group_is_rejected() {
        let m = CrnlModel::init(small_layout(&[1, 1], 2, true), 0).unwrap();
        assert!(m.evaluate(2, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn coupled_economy() {
        let coupled = CrnlModel::init(small_layout(&[2, 3, 2], 5, true), 0).unwrap();
        let uncoupled = CrnlModel::init(small_layout(&[2, 3, 2], 5, false), 0).unwrap();
        assert_eq!(coupled.factors().len(), 3);
        assert_eq!(uncoupled.factors().len(), 15);
        let per = coupled.factor_param_count();
        assert_eq!(uncoupled.param_count() - coupled.param_count(), 4 * per);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = CrnlModel::init(small_layout(&[2, 1, 2], 2, true), 3).unwrap();
        let back = CrnlModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn meshgrid_sample_matches_pointwise() {
        let m = CrnlModel::init(small_layout(&[2, 2, 2], 1, true), 5).unwrap();
        let coords = vec![vec![-0.5, 0.25], vec![0.0, 0.5, 0.75], vec![0.1]];
        let t = m.sample_meshgrid(0, &coords).unwrap();
        assert_eq!(t.shape(), &[2, 3, 1]);
        for i in 0..2 {
            for j in 0..3 {
                let v = m
                    .evaluate_normalized(0, &[coords[0][i], coords[1][j], coords[2][0]])
                    .unwrap();
                assert!((t.get(&[i, j, 0]) - v).abs() < 1e-13);
            }
        }
    }
}
