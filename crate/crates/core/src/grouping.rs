//! Continuous cube splitting and nonlocal grouping.
//!
//! The first two coordinate dimensions are split into `n_1 x n_2` basic
//! units of size `delta_1 x delta_2`; the remaining dimensions always span
//! their full extent. A cube is a `p x p` block of units. Candidate cubes
//! slide with stride 1 over the real (unpadded) units; key cubes tile the
//! replication-padded unit grid with stride `p`.
//!
//! Lattice data (images) are split with one unit per node, so the domain is
//! widened by half a spacing on each side and unit `i` is centred on node
//! `i`. Scattered data use the observed bounding box as is.
//!
//! Indexing: candidate `t = cx * (n_2 - p + 1) + cy` starts at unit
//! `(cx, cy)`; key cube `l = kx * (n_2' / p) + ky` starts at unit
//! `(kx p, ky p)`, with `n_2'` the padded unit count.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};
use crate::inr::Field;
use crate::observed::ObservedSet;

/// Extent `[lo_d, hi_d]` of every coordinate dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Domain {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeGrid {
    /// Real unit counts `(n_1, n_2)`.
    pub units: [usize; 2],
    /// Unit counts after replication padding, divisible by `cube`.
    pub padded_units: [usize; 2],
    pub origin: [f64; 2],
    pub delta: [f64; 2],
    /// Cube edge `p`, in units.
    pub cube: usize,
}

impl CubeGrid {
    pub fn padded(&self) -> [bool; 2] {
        [
            self.padded_units[0] != self.units[0],
            self.padded_units[1] != self.units[1],
        ]
    }

    fn candidates_per_axis(&self) -> [usize; 2] {
        [
            self.units[0] - self.cube + 1,
            self.units[1] - self.cube + 1,
        ]
    }

    fn keys_per_axis(&self) -> [usize; 2] {
        [
            self.padded_units[0] / self.cube,
            self.padded_units[1] / self.cube,
        ]
    }

    /// `T = (n_1 - p + 1)(n_2 - p + 1)`.
    pub fn candidate_count(&self) -> usize {
        let [a, b] = self.candidates_per_axis();
        a * b
    }

    /// `L = (n_1' / p)(n_2' / p)` over the padded grid.
    pub fn key_count(&self) -> usize {
        let [a, b] = self.keys_per_axis();
        a * b
    }

    pub fn candidate_unit(&self, t: usize) -> [usize; 2] {
        let per = self.candidates_per_axis()[1];
        [t / per, t % per]
    }

    pub fn candidate_id(&self, unit: [usize; 2]) -> Option<usize> {
        let [a, b] = self.candidates_per_axis();
        (unit[0] < a && unit[1] < b).then(|| unit[0] * b + unit[1])
    }

    pub fn key_unit(&self, l: usize) -> [usize; 2] {
        let per = self.keys_per_axis()[1];
        [(l / per) * self.cube, (l % per) * self.cube]
    }

    /// Upper end of the padded extent in a split dimension.
    pub fn padded_hi(&self, d: usize) -> f64 {
        self.origin[d] + self.padded_units[d] as f64 * self.delta[d]
    }

    pub fn unit_lo(&self, d: usize, u: usize) -> f64 {
        self.origin[d] + u as f64 * self.delta[d]
    }

    /// Real unit containing coordinate `x` of split dimension `d`; the upper
    /// boundary belongs to the last unit.
    pub fn unit_of(&self, d: usize, x: f64) -> usize {
        let u = ((x - self.origin[d]) / self.delta[d]).floor();
        if u < 0.0 {
            0
        } else {
            (u as usize).min(self.units[d] - 1)
        }
    }

    /// Key cube holding a point with split coordinates `(x, y)`.
    pub fn key_of(&self, x: f64, y: f64) -> usize {
        let ux = self.unit_of(0, x) / self.cube;
        let uy = self.unit_of(1, y) / self.cube;
        ux * self.keys_per_axis()[1] + uy
    }

    /// `[lo, hi]` extent of the key cube `l` in split dimension `d`.
    pub fn key_extent(&self, l: usize, d: usize) -> (f64, f64) {
        let u = self.key_unit(l)[d];
        (self.unit_lo(d, u), self.unit_lo(d, u + self.cube))
    }

    /// Offset `(dx, dy)` translating a cube starting at `from` onto one
    /// starting at `to`.
    pub fn offset(&self, to: [usize; 2], from: [usize; 2]) -> [f64; 2] {
        [
            (to[0] as f64 - from[0] as f64) * self.delta[0],
            (to[1] as f64 - from[1] as f64) * self.delta[1],
        ]
    }
}

/// Splits the domain spanned by `obs` into `n_1 x n_2` units for cubes of
/// `p x p` units, padding the unit counts up to multiples of `p`.
pub fn split_domain(
    obs: &ObservedSet,
    n1: usize,
    n2: usize,
    p: usize,
) -> Result<(Domain, CubeGrid)> {
    if obs.dim() < 2 {
        return Err(CrnlError::invalid(
            "cube splitting needs at least two coordinate dimensions",
        ));
    }
    if p == 0 || n1 < p || n2 < p {
        return Err(CrnlError::invalid(format!(
            "need n_1, n_2 >= p >= 1, got n_1={n1}, n_2={n2}, p={p}"
        )));
    }
    let (mut lo, mut hi) = obs.bounds();
    if let Some(g) = obs.grid() {
        for d in 0..2 {
            lo[d] -= 0.5 * g.spacing[d];
            hi[d] += 0.5 * g.spacing[d];
        }
    }
    for d in 0..2 {
        if !(hi[d] > lo[d]) {
            return Err(CrnlError::DegenerateDomain { dim: d });
        }
    }
    let units = [n1, n2];
    let padded_units = [n1.div_ceil(p) * p, n2.div_ceil(p) * p];
    let delta = [(hi[0] - lo[0]) / n1 as f64, (hi[1] - lo[1]) / n2 as f64];
    let grid = CubeGrid {
        units,
        padded_units,
        origin: [lo[0], lo[1]],
        delta,
        cube: p,
    };
    Ok((Domain { lo, hi }, grid))
}

/// Positions at which the field is compared inside a cube.
///
/// Each unit of a split dimension carries `samples_per_unit` evenly spaced
/// samples (unit centres when it is 1). Every other dimension is sampled at
/// the listed coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleLattice {
    pub samples_per_unit: usize,
    pub extra: Vec<Vec<f64>>,
}

/// Distinct values kept as-is for non-split dimensions of scattered data
/// before switching to an even resampling.
pub const MAX_DISCRETE_LEVELS: usize = 16;
/// Even samples used for continuous non-split dimensions of scattered data.
pub const EXTRA_DIM_SAMPLES: usize = 8;

impl SampleLattice {
    /// Native node coordinates for lattice data; for scattered data the
    /// distinct observed values of a dimension when there are few of them,
    /// otherwise evenly spaced samples over its extent.
    pub fn for_observed(obs: &ObservedSet, domain: &Domain, samples_per_unit: usize) -> Self {
        let extra = (2..obs.dim())
            .map(|d| match obs.grid() {
                Some(g) => (0..g.shape[d]).map(|i| g.coordinate(d, i)).collect(),
                None => {
                    let mut vals: Vec<f64> = obs.points().column(d).to_vec();
                    vals.sort_by(f64::total_cmp);
                    vals.dedup();
                    if vals.len() <= MAX_DISCRETE_LEVELS {
                        vals
                    } else {
                        let (lo, hi) = (domain.lo[d], domain.hi[d]);
                        (0..EXTRA_DIM_SAMPLES)
                            .map(|k| {
                                lo + (hi - lo) * (k as f64 + 0.5) / EXTRA_DIM_SAMPLES as f64
                            })
                            .collect()
                    }
                }
            })
            .collect();
        Self {
            samples_per_unit: samples_per_unit.max(1),
            extra,
        }
    }

    pub fn extra_count(&self) -> usize {
        self.extra.iter().map(|v| v.len()).product()
    }

    fn split_coordinate(&self, grid: &CubeGrid, d: usize, sample: usize) -> f64 {
        // padded units replicate the last real unit
        let spu = self.samples_per_unit;
        let unit = (sample / spu).min(grid.units[d] - 1);
        let frac = ((sample % spu) as f64 + 0.5) / spu as f64;
        grid.origin[d] + (unit as f64 + frac) * grid.delta[d]
    }

    /// Coordinates of every sample of the cube starting at `unit`, ordered
    /// by (split dim 1, split dim 2, extra dims...).
    pub fn cube_points(&self, grid: &CubeGrid, unit: [usize; 2]) -> Array2<f64> {
        let spu = self.samples_per_unit;
        let side = grid.cube * spu;
        let extra = self.extra_count();
        let dim = 2 + self.extra.len();
        let mut pts = Array2::zeros((side * side * extra, dim));
        let mut r = 0;
        for i in 0..side {
            let x = self.split_coordinate(grid, 0, unit[0] * spu + i);
            for j in 0..side {
                let y = self.split_coordinate(grid, 1, unit[1] * spu + j);
                for e in 0..extra {
                    pts[[r, 0]] = x;
                    pts[[r, 1]] = y;
                    self.fill_extra(e, &mut pts.row_mut(r).as_slice_mut().unwrap()[2..]);
                    r += 1;
                }
            }
        }
        pts
    }

    fn fill_extra(&self, mut e: usize, out: &mut [f64]) {
        for d in (0..self.extra.len()).rev() {
            let n = self.extra[d].len();
            out[d] = self.extra[d][e % n];
            e /= n;
        }
    }
}

/// Sum of squared differences of `f` over corresponding samples of the
/// cubes starting at units `a` and `b`.
pub fn cube_distance(
    f: &dyn Field,
    grid: &CubeGrid,
    lattice: &SampleLattice,
    a: [usize; 2],
    b: [usize; 2],
) -> Result<f64> {
    if f.input_dim() != 2 + lattice.extra.len() {
        return Err(CrnlError::shape(format!(
            "field takes {} coordinates, lattice has {}",
            f.input_dim(),
            2 + lattice.extra.len()
        )));
    }
    let va = f.eval(lattice.cube_points(grid, a).view())?;
    let vb = f.eval(lattice.cube_points(grid, b).view())?;
    Ok(va.iter().zip(&vb).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// One member of a group: a cube, its translation onto the key cube and its
/// distance to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMember {
    /// Candidate id, or `None` for a key cube that reaches into padding.
    pub candidate: Option<usize>,
    pub unit: [usize; 2],
    pub offset: [f64; 2],
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub key: usize,
    pub key_unit: [usize; 2],
    /// `members[s - 1]` is similar cube `s`; `members[0]` is the key cube.
    pub members: Vec<GroupMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupIndex {
    pub cube: usize,
    pub similar: usize,
    pub groups: Vec<Group>,
}

impl GroupIndex {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Field values on every sample of the (real) unit lattice.
struct SampledField {
    side: [usize; 2],
    extra: usize,
    values: Vec<f64>,
}

impl SampledField {
    fn new(f: &dyn Field, grid: &CubeGrid, lattice: &SampleLattice) -> Result<Self> {
        let spu = lattice.samples_per_unit;
        let side = [grid.units[0] * spu, grid.units[1] * spu];
        let extra = lattice.extra_count();
        let dim = 2 + lattice.extra.len();
        let mut pts = Array2::zeros((side[0] * side[1] * extra, dim));
        let mut r = 0;
        for i in 0..side[0] {
            let x = lattice.split_coordinate(grid, 0, i);
            for j in 0..side[1] {
                let y = lattice.split_coordinate(grid, 1, j);
                for e in 0..extra {
                    pts[[r, 0]] = x;
                    pts[[r, 1]] = y;
                    lattice.fill_extra(e, &mut pts.row_mut(r).as_slice_mut().unwrap()[2..]);
                    r += 1;
                }
            }
        }
        let values = f.eval(pts.view())?;
        Ok(Self {
            side,
            extra,
            values,
        })
    }

    /// Row of `extra` values at lattice sample `(i, j)`, clamped into the
    /// real lattice (replication padding).
    fn at(&self, i: usize, j: usize) -> &[f64] {
        let i = i.min(self.side[0] - 1);
        let j = j.min(self.side[1] - 1);
        let k = (i * self.side[1] + j) * self.extra;
        &self.values[k..k + self.extra]
    }
}

/// For every key cube, the `similar` closest cubes under [`cube_distance`].
/// The key cube is always member 1; the rest are the nearest candidates
/// other than the key cube itself, ties going to the smaller candidate id.
pub fn top_s_similar(
    f: &dyn Field,
    grid: &CubeGrid,
    lattice: &SampleLattice,
    similar: usize,
) -> Result<GroupIndex> {
    let t_count = grid.candidate_count();
    if similar == 0 || similar > t_count {
        return Err(CrnlError::invalid(format!(
            "number of similar cubes must be in 1..={t_count}, got {similar}"
        )));
    }
    if f.input_dim() != 2 + lattice.extra.len() {
        return Err(CrnlError::shape(format!(
            "field takes {} coordinates, lattice has {}",
            f.input_dim(),
            2 + lattice.extra.len()
        )));
    }
    let field = SampledField::new(f, grid, lattice)?;
    let spu = lattice.samples_per_unit;
    let side = grid.cube * spu;

    let mut groups = Vec::with_capacity(grid.key_count());
    let mut dists = vec![0.0; t_count];
    for l in 0..grid.key_count() {
        let ku = grid.key_unit(l);
        for (t, dist) in dists.iter_mut().enumerate() {
            let cu = grid.candidate_unit(t);
            let mut acc = 0.0;
            for i in 0..side {
                for j in 0..side {
                    let a = field.at(ku[0] * spu + i, ku[1] * spu + j);
                    let b = field.at(cu[0] * spu + i, cu[1] * spu + j);
                    for (x, y) in a.iter().zip(b) {
                        acc += (x - y) * (x - y);
                    }
                }
            }
            *dist = acc;
        }
        let own = grid.candidate_id(ku);
        let mut order: Vec<usize> = (0..t_count).filter(|&t| Some(t) != own).collect();
        order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));

        let mut members = Vec::with_capacity(similar);
        members.push(GroupMember {
            candidate: own,
            unit: ku,
            offset: [0.0, 0.0],
            distance: 0.0,
        });
        for &t in order.iter().take(similar - 1) {
            let cu = grid.candidate_unit(t);
            members.push(GroupMember {
                candidate: Some(t),
                unit: cu,
                offset: grid.offset(ku, cu),
                distance: dists[t],
            });
        }
        groups.push(Group {
            key: l,
            key_unit: ku,
            members,
        });
    }
    Ok(GroupIndex {
        cube: grid.cube,
        similar,
        groups,
    })
}

/// Observations of one group remapped into its key cube. Each row of
/// `points` is `(x + dx, y + dy, v_3, .., v_N, s)` with `s` in `1..=S`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupObservedSet {
    pub key: usize,
    pub points: Array2<f64>,
    pub values: Vec<f64>,
}

impl GroupObservedSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Buckets observation indices by real unit.
fn bucket_by_unit(obs: &ObservedSet, grid: &CubeGrid) -> Vec<Vec<usize>> {
    let mut buckets = vec![Vec::new(); grid.units[0] * grid.units[1]];
    for (i, p) in obs.points().rows().into_iter().enumerate() {
        let ux = grid.unit_of(0, p[0]);
        let uy = grid.unit_of(1, p[1]);
        buckets[ux * grid.units[1] + uy].push(i);
    }
    buckets
}

pub fn build_group_sets(
    obs: &ObservedSet,
    grid: &CubeGrid,
    index: &GroupIndex,
) -> Vec<GroupObservedSet> {
    let buckets = bucket_by_unit(obs, grid);
    let dim = obs.dim();
    let pts = obs.points();
    index
        .groups
        .iter()
        .map(|group| {
            let mut rows: Vec<f64> = Vec::new();
            let mut values = Vec::new();
            for (s, member) in group.members.iter().enumerate() {
                let [dx, dy] = member.offset;
                let ux_end = (member.unit[0] + grid.cube).min(grid.units[0]);
                let uy_end = (member.unit[1] + grid.cube).min(grid.units[1]);
                for ux in member.unit[0]..ux_end {
                    for uy in member.unit[1]..uy_end {
                        for &i in &buckets[ux * grid.units[1] + uy] {
                            let p = pts.row(i);
                            rows.push(p[0] + dx);
                            rows.push(p[1] + dy);
                            rows.extend(p.iter().skip(2));
                            rows.push((s + 1) as f64);
                            values.push(obs.values()[i]);
                        }
                    }
                }
            }
            let n = values.len();
            GroupObservedSet {
                key: group.key,
                points: Array2::from_shape_vec((n, dim + 1), rows).expect("row width"),
                values,
            }
        })
        .collect()
}

/// Appends the similar-index coordinate `s = 1` to raw query points, the
/// slot at which every key cube's own content is represented.
pub fn key_slot_queries(points: ArrayView2<f64>) -> Array2<f64> {
    let (n, d) = points.dim();
    let mut out = Array2::from_elem((n, d + 1), 1.0);
    out.slice_mut(ndarray::s![.., ..d]).assign(&points);
    out
}
