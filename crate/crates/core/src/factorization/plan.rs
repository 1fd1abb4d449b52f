//! Shared-prefix contraction of a core tensor with per-point factor rows.
//!
//! For points `v_1..v_m` with factor rows `u_d = U_d[j_d(v)]`, each value
//! `C x_1 u_1 x_2 .. x_K u_K` is computed by contracting the last mode
//! first. Points are sorted by `(j_K, .., j_1)` so points sharing a suffix
//! of row indices share the partially contracted tensors. Level `k` of the
//! plan holds one node per distinct `(j_K, .., j_{K-k})`.

use ndarray::{Array2, ArrayView2};

#[derive(Debug, Clone)]
struct Level {
    mode: usize,
    /// Parent node in the previous level (unused for the first level).
    parent: Vec<usize>,
    /// Row of the mode's factor table.
    row: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct ContractionPlan {
    ranks: Vec<usize>,
    /// `levels[k]` contracts mode `K - 1 - k`.
    levels: Vec<Level>,
    /// Last-level node of each point.
    leaf: Vec<usize>,
}

/// Partial contractions from a forward pass; `tensors[k]` holds one block
/// of `prod(ranks[..mode])` entries per node of level `k`.
#[derive(Debug, Clone)]
pub struct PlanForward {
    tensors: Vec<Vec<f64>>,
}

impl PlanForward {
    pub fn empty() -> Self {
        Self {
            tensors: Vec::new(),
        }
    }
}

impl ContractionPlan {
    /// `rows[i][d]` is the factor-table row used by point `i` in mode `d`.
    pub fn new(ranks: &[usize], rows: &[Vec<usize>]) -> Self {
        let k_modes = ranks.len();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| {
            for d in (0..k_modes).rev() {
                match rows[a][d].cmp(&rows[b][d]) {
                    std::cmp::Ordering::Equal => continue,
                    o => return o,
                }
            }
            a.cmp(&b)
        });
        let mut levels: Vec<Level> = (0..k_modes)
            .map(|k| Level {
                mode: k_modes - 1 - k,
                parent: Vec::new(),
                row: Vec::new(),
            })
            .collect();
        let mut leaf = vec![0; rows.len()];
        let mut prev: Option<usize> = None;
        // current node per level
        let mut cur = vec![0usize; k_modes];
        for &i in &order {
            // first level whose row differs from the previous point
            let diverge = match prev {
                None => 0,
                Some(p) => (0..k_modes)
                    .find(|&k| rows[p][k_modes - 1 - k] != rows[i][k_modes - 1 - k])
                    .unwrap_or(k_modes),
            };
            for k in diverge..k_modes {
                let lvl = &mut levels[k];
                lvl.parent.push(if k == 0 { 0 } else { cur[k - 1] });
                lvl.row.push(rows[i][lvl.mode]);
                cur[k] = lvl.row.len() - 1;
            }
            leaf[i] = cur[k_modes - 1];
            prev = Some(i);
        }
        Self {
            ranks: ranks.to_vec(),
            levels,
            leaf,
        }
    }

    pub fn point_count(&self) -> usize {
        self.leaf.len()
    }

    fn block(&self, mode: usize) -> usize {
        self.ranks[..mode].iter().product()
    }

    /// Values at every point, given the core (row-major, last mode fastest)
    /// and one factor table per mode.
    pub fn forward(&self, core: &[f64], tables: &[ArrayView2<f64>]) -> (Vec<f64>, PlanForward) {
        let mut tensors: Vec<Vec<f64>> = Vec::with_capacity(self.levels.len());
        for (k, lvl) in self.levels.iter().enumerate() {
            let m = lvl.mode;
            let r = self.ranks[m];
            let out_len = self.block(m);
            let table = &tables[m];
            let mut out = vec![0.0; out_len * lvl.row.len()];
            for (n, (&parent, &row)) in lvl.parent.iter().zip(&lvl.row).enumerate() {
                let src: &[f64] = if k == 0 {
                    core
                } else {
                    let blk = out_len * r;
                    &tensors[k - 1][parent * blk..(parent + 1) * blk]
                };
                let u = table.row(row);
                let dst = &mut out[n * out_len..(n + 1) * out_len];
                for (a, o) in dst.iter_mut().enumerate() {
                    let s = &src[a * r..(a + 1) * r];
                    let mut acc = 0.0;
                    for (x, y) in s.iter().zip(u.iter()) {
                        acc += x * y;
                    }
                    *o = acc;
                }
            }
            tensors.push(out);
        }
        let last = tensors.last().expect("at least one mode");
        let values = self.leaf.iter().map(|&n| last[n]).collect();
        (values, PlanForward { tensors })
    }

    /// Accumulates gradients of `sum_i g_i * value_i` into `dcore` and the
    /// per-mode table gradients `dtables`.
    pub fn backward(
        &self,
        core: &[f64],
        tables: &[ArrayView2<f64>],
        fwd: &PlanForward,
        point_grads: &[f64],
        dcore: &mut [f64],
        dtables: &mut [Array2<f64>],
    ) {
        let k_modes = self.levels.len();
        let mut g = vec![0.0; self.levels[k_modes - 1].row.len()];
        for (&n, &gi) in self.leaf.iter().zip(point_grads) {
            g[n] += gi;
        }
        for k in (0..k_modes).rev() {
            let lvl = &self.levels[k];
            let m = lvl.mode;
            let r = self.ranks[m];
            let out_len = self.block(m);
            let blk = out_len * r;
            let mut g_parent = if k == 0 {
                Vec::new()
            } else {
                vec![0.0; self.levels[k - 1].row.len() * blk]
            };
            for (n, (&parent, &row)) in lvl.parent.iter().zip(&lvl.row).enumerate() {
                let gn = &g[n * out_len..(n + 1) * out_len];
                if gn.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let src: &[f64] = if k == 0 {
                    core
                } else {
                    &fwd.tensors[k - 1][parent * blk..(parent + 1) * blk]
                };
                let u = tables[m].row(row);
                let mut du = dtables[m].row_mut(row);
                let gp: &mut [f64] = if k == 0 {
                    &mut dcore[..]
                } else {
                    &mut g_parent[parent * blk..(parent + 1) * blk]
                };
                for (a, &ga) in gn.iter().enumerate() {
                    if ga == 0.0 {
                        continue;
                    }
                    let s = &src[a * r..(a + 1) * r];
                    let gpa = &mut gp[a * r..(a + 1) * r];
                    for i in 0..r {
                        du[i] += s[i] * ga;
                        gpa[i] += ga * u[i];
                    }
                }
            }
            g = g_parent;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(core: &DenseTensor, us: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for (lin, &c) in core.data().iter().enumerate() {
            let mut rem = lin;
            let mut prod = c;
            for d in (0..us.len()).rev() {
                let n = core.shape()[d];
                prod *= us[d][rem % n];
                rem /= n;
            }
            total += prod;
        }
        total
    }

    fn setup(seed: u64) -> (Vec<usize>, DenseTensor, Vec<Array2<f64>>, Vec<Vec<usize>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranks = vec![2, 3, 1, 4];
        let core = DenseTensor::from_fn(&ranks, |_| rng.random_range(-1.0..1.0));
        let rows_per = [5, 2, 3, 4];
        let tables: Vec<Array2<f64>> = ranks
            .iter()
            .zip(rows_per)
            .map(|(&r, n)| Array2::from_shape_fn((n, r), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let pts: Vec<Vec<usize>> = (0..40)
            .map(|_| rows_per.iter().map(|&n| rng.random_range(0..n)).collect())
            .collect();
        (ranks, core, tables, pts)
    }

    #[test]
    fn forward_matches_explicit_sum() {
        let (ranks, core, tables, pts) = setup(1);
        let plan = ContractionPlan::new(&ranks, &pts);
        let views: Vec<_> = tables.iter().map(|t| t.view()).collect();
        let (vals, _) = plan.forward(core.data(), &views);
        for (i, p) in pts.iter().enumerate() {
            let us: Vec<Vec<f64>> = p
                .iter()
                .enumerate()
                .map(|(d, &j)| tables[d].row(j).to_vec())
                .collect();
            let want = brute(&core, &us);
            assert!((vals[i] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (ranks, core, tables, pts) = setup(2);
        let plan = ContractionPlan::new(&ranks, &pts);
        let weights: Vec<f64> = (0..pts.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let objective = |core: &[f64], tables: &[Array2<f64>]| {
            let views: Vec<_> = tables.iter().map(|t| t.view()).collect();
            let (v, _) = plan.forward(core, &views);
            v.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
        };
        let views: Vec<_> = tables.iter().map(|t| t.view()).collect();
        let (_, fwd) = plan.forward(core.data(), &views);
        let mut dcore = vec![0.0; core.len()];
        let mut dtables: Vec<Array2<f64>> =
            tables.iter().map(|t| Array2::zeros(t.raw_dim())).collect();
        plan.backward(core.data(), &views, &fwd, &weights, &mut dcore, &mut dtables);
        let h = 1e-6;
        for i in 0..core.len() {
            let mut c = core.data().to_vec();
            c[i] += h;
            let up = objective(&c, &tables);
            c[i] -= 2.0 * h;
            let dn = objective(&c, &tables);
            assert!(((up - dn) / (2.0 * h) - dcore[i]).abs() < 1e-7);
        }
        for d in 0..tables.len() {
            for idx in 0..tables[d].len() {
                let (r, c) = (idx / tables[d].ncols(), idx % tables[d].ncols());
                let mut t = tables.clone();
                t[d][[r, c]] += h;
                let up = objective(core.data(), &t);
                t[d][[r, c]] -= 2.0 * h;
                let dn = objective(core.data(), &t);
                assert!(((up - dn) / (2.0 * h) - dtables[d][[r, c]]).abs() < 1e-7);
            }
        }
    }
}
