//! End-to-end task drivers: data preparation, the five pipeline stages
//! (representation fit, splitting, grouping, factorization, inference),
//! metrics and output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index::sample;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};
use crate::factorization::{train, CrnlModel, FactorSpec, ModelLayout, TrainConfig};
use crate::grouping::{build_group_sets, split_domain, top_s_similar, SampleLattice};
use crate::inr::{fit_inr, FitConfig};
use crate::io::{self, PointCloud};
use crate::metrics::{r_square, ImageMetrics, MetricReport, RegressionMetrics};
use crate::observed::ObservedSet;
use crate::seeds::stream_rng;
use crate::synthetic::{self, SyntheticFunction};
use crate::tensor::{DenseTensor, TuckerRank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Inpaint,
    Denoise,
    Regress,
    Pointcloud,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Inpaint => "inpaint",
            Task::Denoise => "denoise",
            Task::Regress => "regress",
            Task::Pointcloud => "pointcloud",
        })
    }
}

/// Full configuration of one run. Every field has a per-task default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    /// Input image / CSV / PLY. When absent a synthetic data set is used.
    pub input: Option<PathBuf>,
    pub output: PathBuf,
    pub seed: u64,
    /// Fraction of observed entries (inpainting).
    pub sampling_rate: f64,
    /// Gaussian noise level on `[0, 1]` data (denoising).
    pub sigma: f64,
    /// Fraction of samples used for training (regression, point clouds).
    pub split: f64,
    /// Synthetic regression target when no input file is given.
    pub function: SyntheticFunction,
    /// Number of synthetic regression samples / point-cloud points.
    pub samples: usize,
    /// Size of synthetic images `(rows, cols, bands)`.
    pub synthetic_shape: [usize; 3],
    pub inr: FitConfig,
    pub train: TrainConfig,
    pub factor: FactorSpec,
    /// Tucker ranks including the `s` mode; empty selects the task default
    /// for the data's shape.
    pub ranks: Vec<usize>,
    /// Cube edge `p` in units.
    pub cube: usize,
    /// Number of similar cubes `S` per group.
    pub similar: usize,
    /// Unit count per split dimension for scattered data.
    pub units: usize,
    pub samples_per_unit: usize,
    /// Factor networks shared across groups (false: one set per group).
    pub coupled: bool,
    pub save_model: bool,
}

impl RunConfig {
    pub fn defaults(task: Task) -> Self {
        let image_inr = FitConfig {
            iterations: 1000,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            gamma: 1e-6,
            tv_interval: 10,
            hidden: vec![128, 128],
            omega: 30.0,
            seed: 0,
        };
        let scattered_inr = FitConfig {
            iterations: 2000,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            gamma: 0.0,
            tv_interval: 1,
            hidden: vec![256, 256],
            omega: 30.0,
            seed: 0,
        };
        let base = Self {
            task,
            input: None,
            output: PathBuf::from("out"),
            seed: 0,
            sampling_rate: 0.2,
            sigma: 0.2,
            split: 0.2,
            function: SyntheticFunction::F1,
            samples: 3000,
            synthetic_shape: [100, 100, 3],
            inr: image_inr.clone(),
            train: TrainConfig {
                iterations: 3000,
                learning_rate: 1e-3,
                weight_decay: 0.0,
                gamma: 1e-6,
                tv_interval: 10,
                seed: 0,
            },
            factor: FactorSpec::default(),
            ranks: Vec::new(),
            cube: 6,
            similar: 20,
            units: 40,
            samples_per_unit: 1,
            coupled: true,
            save_model: true,
        };
        match task {
            Task::Inpaint => base,
            Task::Denoise => Self {
                synthetic_shape: [64, 64, 8],
                inr: FitConfig {
                    iterations: 300,
                    gamma: 0.9e-5,
                    ..image_inr
                },
                train: TrainConfig {
                    gamma: 0.9e-5,
                    ..base.train.clone()
                },
                ..base
            },
            Task::Regress => Self {
                inr: scattered_inr,
                train: TrainConfig {
                    gamma: 0.0,
                    tv_interval: 1,
                    ..base.train.clone()
                },
                factor: FactorSpec {
                    hidden: vec![64, 64],
                    ..FactorSpec::default()
                },
                cube: 20,
                similar: 10,
                ..base
            },
            Task::Pointcloud => Self {
                samples: 2000,
                inr: scattered_inr,
                train: TrainConfig {
                    gamma: 0.0,
                    tv_interval: 1,
                    ..base.train.clone()
                },
                // lower frequency: 30 overfits sparse 3-D training points
                factor: FactorSpec {
                    hidden: vec![64, 64],
                    omega: 10.0,
                    ..FactorSpec::default()
                },
                cube: 20,
                similar: 10,
                ..base
            },
        }
    }

    /// Defaults for `task`, overridden by the fields present in `json`.
    pub fn from_json_overrides(task: Task, json: &str) -> Result<Self> {
        let mut base = serde_json::to_value(Self::defaults(task))?;
        let patch: serde_json::Value = serde_json::from_str(json)?;
        if !patch.is_object() {
            return Err(CrnlError::parse("config", "top level must be an object"));
        }
        merge(&mut base, patch);
        base["task"] = serde_json::to_value(task)?;
        Ok(serde_json::from_value(base)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(CrnlError::invalid("sampling rate must be in (0, 1]"));
        }
        if !(self.sigma >= 0.0) {
            return Err(CrnlError::invalid("sigma must be >= 0"));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(CrnlError::invalid("split ratio must be in (0, 1)"));
        }
        if self.cube == 0 || self.similar == 0 || self.units < self.cube {
            return Err(CrnlError::invalid("need units >= cube >= 1 and similar >= 1"));
        }
        self.inr.validate()?;
        self.train.validate()
    }
}

fn merge(base: &mut serde_json::Value, patch: serde_json::Value) {
    match (base, patch) {
        (serde_json::Value::Object(b), serde_json::Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, p) => *b = p,
    }
}

/// Boolean mask with exactly `round(rate * count)` true entries, chosen
/// uniformly without replacement.
pub fn make_mask(count: usize, rate: f64, seed: u64) -> Result<Vec<bool>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(CrnlError::invalid("sampling rate must be in (0, 1]"));
    }
    let k = ((rate * count as f64).round() as usize).min(count);
    let mut mask = vec![false; count];
    let mut rng = stream_rng(seed, "mask", 0);
    for i in sample(&mut rng, count, k) {
        mask[i] = true;
    }
    Ok(mask)
}

/// `x` plus i.i.d. `N(0, sigma^2)` noise.
pub fn add_noise(x: &DenseTensor, sigma: f64, seed: u64) -> Result<DenseTensor> {
    if !(sigma >= 0.0) {
        return Err(CrnlError::invalid("sigma must be >= 0"));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| CrnlError::invalid(e.to_string()))?;
    let mut rng = stream_rng(seed, "noise", 0);
    let mut y = x.clone();
    for v in y.data_mut() {
        *v += normal.sample(&mut rng);
    }
    Ok(y)
}

/// Seeded split of `0..n` into `(train, test)` with `round(ratio * n)`
/// training indices, both sorted.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let k = (ratio * n as f64).round() as usize;
    if k == 0 || k >= n {
        return Err(CrnlError::invalid(format!(
            "split ratio {ratio} leaves an empty side for {n} samples"
        )));
    }
    let mut rng = stream_rng(seed, "split", 0);
    let mut train: Vec<usize> = sample(&mut rng, n, k).into_vec();
    train.sort_unstable();
    let mut is_train = vec![false; n];
    for &i in &train {
        is_train[i] = true;
    }
    let test = (0..n).filter(|&i| !is_train[i]).collect();
    Ok((train, test))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub data: f64,
    pub inr: f64,
    pub grouping: f64,
    pub train: f64,
    pub inference: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub task: Task,
    pub seed: u64,
    pub config: RunConfig,
    pub timings: StageTimings,
    pub groups: usize,
    pub parameters: usize,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: MetricReport,
    pub timings: StageTimings,
    pub model: CrnlModel,
    pub outputs: Vec<PathBuf>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn default_ranks(task: Task, obs_dim: usize, shape: Option<&[usize]>) -> Vec<usize> {
    match task {
        Task::Inpaint => {
            let bands = shape.map_or(3, |s| s[2]);
            let r3 = if bands == 3 { 3 } else { (bands / 3).max(1) };
            vec![6, 6, r3, 5]
        }
        Task::Denoise => {
            let bands = shape.map_or(8, |s| s[2]);
            vec![6, 6, bands.min(8), 1]
        }
        Task::Regress => vec![15; obs_dim + 1],
        Task::Pointcloud => {
            let mut r = vec![15; obs_dim.saturating_sub(1)];
            r.push(3);
            r.push(10);
            r
        }
    }
}

/// Stages shared by all tasks: representation fit, cube splitting and
/// grouping, then factorization. Returns the trained model and the time
/// spent per stage.
fn fit_groups(
    cfg: &RunConfig,
    obs: &ObservedSet,
    units: [usize; 2],
    ranks: Vec<usize>,
    timings: &mut StageTimings,
) -> Result<CrnlModel> {
    let t = Instant::now();
    let inr_cfg = FitConfig {
        seed: crate::seeds::sub_seed(cfg.seed, "inr", 0),
        ..cfg.inr.clone()
    };
    let (inr, _) = stage("inr", fit_inr(obs, &inr_cfg))?;
    timings.inr = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (domain, grid) = stage("split", split_domain(obs, units[0], units[1], cfg.cube))?;
    let lattice = SampleLattice::for_observed(obs, &domain, cfg.samples_per_unit);
    let index = stage("grouping", top_s_similar(&inr, &grid, &lattice, cfg.similar))?;
    let sets = build_group_sets(obs, &grid, &index);
    timings.grouping = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let layout = stage(
        "train",
        ModelLayout::for_grid(
            TuckerRank::new(ranks),
            &grid,
            &domain.lo,
            &domain.hi,
            cfg.similar,
            cfg.coupled,
            cfg.factor.clone(),
        ),
    )?;
    let train_cfg = TrainConfig {
        seed: crate::seeds::sub_seed(cfg.seed, "init", 0),
        ..cfg.train.clone()
    };
    let (model, _) = stage("train", train(&sets, layout, &train_cfg, obs.grid()))?;
    timings.train = t.elapsed().as_secs_f64();
    Ok(model)
}

fn clamp_unit(x: &mut DenseTensor) {
    for v in x.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

fn image_output_name(stem: &str, x: &DenseTensor) -> String {
    match x.shape().get(2) {
        Some(1) | Some(3) | None => format!("{stem}.png"),
        _ => format!("{stem}.json"),
    }
}

fn save_image_any(x: &DenseTensor, path: &Path) -> Result<()> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        io::save_tensor_json(x, path)
    } else {
        io::save_image(x, path)
    }
}

fn load_image_input(cfg: &RunConfig) -> Result<DenseTensor> {
    let x = match &cfg.input {
        Some(p) if p.extension().and_then(|e| e.to_str()) == Some("json") => {
            io::load_tensor_json(p)?
        }
        Some(p) => io::load_image(p)?,
        None => {
            let [r, c, b] = cfg.synthetic_shape;
            if b == 3 {
                synthetic::color_image(r, c, cfg.seed)
            } else {
                synthetic::multiband_image(r, c, b, cfg.seed)
            }
        }
    };
    match x.shape() {
        [_, _, _] => Ok(x),
        [r, c] => DenseTensor::new(vec![*r, *c, 1], x.into_data()),
        s => Err(CrnlError::shape(format!("expected an image, got shape {s:?}"))),
    }
}

fn run_image(cfg: &RunConfig) -> Result<RunOutcome> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let clean = stage("data", load_image_input(cfg))?;
    let shape = clean.shape().to_vec();
    let (obs, degraded, mask) = match cfg.task {
        Task::Inpaint => {
            let mask = make_mask(clean.len(), cfg.sampling_rate, cfg.seed)?;
            let obs = ObservedSet::from_tensor(&clean, Some(&mask))?;
            let mut zero_filled = clean.clone();
            for (v, &m) in zero_filled.data_mut().iter_mut().zip(&mask) {
                if !m {
                    *v = 0.0;
                }
            }
            (obs, zero_filled, Some(mask))
        }
        _ => {
            let noisy = add_noise(&clean, cfg.sigma, cfg.seed)?;
            (ObservedSet::from_tensor(&noisy, None)?, noisy, None)
        }
    };
    timings.data = t.elapsed().as_secs_f64();

    let ranks = if cfg.ranks.is_empty() {
        default_ranks(cfg.task, obs.dim(), Some(&shape))
    } else {
        cfg.ranks.clone()
    };
    let model = fit_groups(cfg, &obs, [shape[0], shape[1]], ranks, &mut timings)?;

    let t = Instant::now();
    let nodes = obs.grid().expect("lattice data").nodes();
    let pred = stage("inference", model.infer(nodes.view()))?;
    let mut recovered = DenseTensor::new(shape.clone(), pred)?;
    if let Some(mask) = &mask {
        for ((r, &c), &m) in recovered.data_mut().iter_mut().zip(clean.data()).zip(mask) {
            if m {
                *r = c;
            }
        }
    }
    clamp_unit(&mut recovered);
    timings.inference = t.elapsed().as_secs_f64();

    let report = MetricReport::Image {
        recovered: ImageMetrics::compute(&recovered, &clean, 1.0)?,
        observed: ImageMetrics::compute(&degraded, &clean, 1.0)?,
    };
    let mut outputs = Vec::new();
    if !cfg.output.as_os_str().is_empty() {
        fs::create_dir_all(&cfg.output)?;
        let mut observed_view = degraded.clone();
        clamp_unit(&mut observed_view);
        for (stem, img) in [("recovered", &recovered), ("observed", &observed_view)] {
            let p = cfg.output.join(image_output_name(stem, img));
            save_image_any(img, &p)?;
            outputs.push(p);
        }
    }
    Ok(RunOutcome {
        report,
        timings,
        model,
        outputs,
    })
}

fn run_regress(cfg: &RunConfig) -> Result<RunOutcome> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let all = stage(
        "data",
        match &cfg.input {
            Some(p) => io::load_points_csv(p),
            None => cfg.function.sample(cfg.samples, cfg.seed),
        },
    )?;
    let (train_idx, test_idx) = stage("data", split_indices(all.len(), cfg.split, cfg.seed))?;
    let train_set = all.subset(&train_idx)?;
    let test_set = all.subset(&test_idx)?;
    timings.data = t.elapsed().as_secs_f64();

    let ranks = if cfg.ranks.is_empty() {
        default_ranks(cfg.task, all.dim(), None)
    } else {
        cfg.ranks.clone()
    };
    let model = fit_groups(cfg, &train_set, [cfg.units, cfg.units], ranks, &mut timings)?;

    let t = Instant::now();
    let pred = stage("inference", model.infer(test_set.points().view()))?;
    timings.inference = t.elapsed().as_secs_f64();
    let report = MetricReport::Regression {
        test: RegressionMetrics::compute(&pred, test_set.values())?,
        per_channel_r_square: Vec::new(),
    };
    let mut outputs = Vec::new();
    if !cfg.output.as_os_str().is_empty() {
        fs::create_dir_all(&cfg.output)?;
        let p = cfg.output.join("predictions.csv");
        io::save_points_csv(&p, test_set.points().view(), &pred)?;
        outputs.push(p);
    }
    Ok(RunOutcome {
        report,
        timings,
        model,
        outputs,
    })
}

fn run_pointcloud(cfg: &RunConfig) -> Result<RunOutcome> {
    let mut timings = StageTimings::default();
    let t = Instant::now();
    let cloud = stage(
        "data",
        match &cfg.input {
            Some(p) => io::load_ply(p),
            None => synthetic::point_cloud(cfg.samples, cfg.seed),
        },
    )?;
    let (train_idx, test_idx) = stage("data", split_indices(cloud.len(), cfg.split, cfg.seed))?;
    let train_cloud = cloud.subset(&train_idx)?;
    let test_cloud = cloud.subset(&test_idx)?;
    let train_set = train_cloud.to_observed()?;
    let test_set = test_cloud.to_observed()?;
    timings.data = t.elapsed().as_secs_f64();

    let ranks = if cfg.ranks.is_empty() {
        default_ranks(cfg.task, train_set.dim(), None)
    } else {
        cfg.ranks.clone()
    };
    let model = fit_groups(cfg, &train_set, [cfg.units, cfg.units], ranks, &mut timings)?;

    let t = Instant::now();
    let pred = stage("inference", model.infer(test_set.points().view()))?;
    timings.inference = t.elapsed().as_secs_f64();

    let truth = test_set.values();
    let per_channel = (0..3)
        .map(|c| {
            let p: Vec<f64> = pred.iter().skip(c).step_by(3).copied().collect();
            let y: Vec<f64> = truth.iter().skip(c).step_by(3).copied().collect();
            r_square(&p, &y)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut test = RegressionMetrics::compute(&pred, truth)?;
    test.r_square = per_channel.iter().sum::<f64>() / 3.0;
    test.test_points = test_cloud.len();
    let report = MetricReport::Regression {
        test,
        per_channel_r_square: per_channel,
    };

    let mut outputs = Vec::new();
    if !cfg.output.as_os_str().is_empty() {
        fs::create_dir_all(&cfg.output)?;
        let mut colors = cloud.colors.clone();
        for (k, &i) in test_idx.iter().enumerate() {
            for c in 0..3 {
                colors[[i, c]] = pred[3 * k + c].clamp(0.0, 1.0);
            }
        }
        let p = cfg.output.join("recovered.ply");
        io::save_ply(&p, &PointCloud::new(cloud.positions.clone(), colors)?)?;
        outputs.push(p);
    }
    Ok(RunOutcome {
        report,
        timings,
        model,
        outputs,
    })
}

/// Runs the configured task and, when an output directory is set, writes
/// the recovered data, `metrics.json` and `manifest.json` into it.
pub fn run_task(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut outcome = match cfg.task {
        Task::Inpaint | Task::Denoise => run_image(cfg)?,
        Task::Regress => run_regress(cfg)?,
        Task::Pointcloud => run_pointcloud(cfg)?,
    };
    if !cfg.output.as_os_str().is_empty() {
        let metrics = cfg.output.join("metrics.json");
        fs::write(&metrics, outcome.report.to_json()?)?;
        outcome.outputs.push(metrics);
        if cfg.save_model {
            let p = cfg.output.join("model.json");
            fs::write(&p, outcome.model.to_json()?)?;
            outcome.outputs.push(p);
        }
        let manifest_path = cfg.output.join("manifest.json");
        let mut names: Vec<String> = outcome
            .outputs
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect();
        names.push("manifest.json".into());
        let manifest = Manifest {
            task: cfg.task,
            seed: cfg.seed,
            config: cfg.clone(),
            timings: outcome.timings.clone(),
            groups: outcome.model.groups(),
            parameters: outcome.model.param_count(),
            outputs: names,
        };
        fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
        outcome.outputs.push(manifest_path);
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_counts() {
        assert!(make_mask(10, 1.0, 0).unwrap().iter().all(|&m| m));
        let m = make_mask(512 * 512 * 3, 0.05, 1).unwrap();
        assert_eq!(m.iter().filter(|&&b| b).count(), 39322);
        assert_eq!(make_mask(100, 0.2, 4).unwrap(), make_mask(100, 0.2, 4).unwrap());
        assert!(make_mask(10, 0.0, 0).is_err());
    }

    #[test]
    fn zero_noise_is_identity() {
        let x = DenseTensor::from_fn(&[3, 3, 2], |i| i[0] as f64);
        assert_eq!(add_noise(&x, 0.0, 0).unwrap(), x);
        let y = add_noise(&x, 0.1, 0).unwrap();
        assert_ne!(y, x);
        assert_eq!(y, add_noise(&x, 0.1, 0).unwrap());
    }

    #[test]
    fn split_partitions() {
        let (a, b) = split_indices(100, 0.2, 3).unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(b.len(), 80);
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert!(split_indices(3, 0.1, 0).is_err());
    }

    #[test]
    fn config_overrides_merge() {
        let cfg = RunConfig::from_json_overrides(
            Task::Regress,
            r#"{"seed": 5, "train": {"iterations": 7}, "ranks": [4, 4, 2]}"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.train.iterations, 7);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(cfg.ranks, vec![4, 4, 2]);
        assert_eq!(cfg.cube, 20);
        assert!(RunConfig::from_json_overrides(Task::Regress, "[1]").is_err());
    }

    #[test]
    fn default_rank_shapes() {
        assert_eq!(default_ranks(Task::Inpaint, 3, Some(&[10, 10, 3])), vec![6, 6, 3, 5]);
        assert_eq!(default_ranks(Task::Inpaint, 3, Some(&[10, 10, 31])), vec![6, 6, 10, 5]);
        assert_eq!(default_ranks(Task::Denoise, 3, Some(&[10, 10, 8])), vec![6, 6, 8, 1]);
        assert_eq!(default_ranks(Task::Regress, 2, None), vec![15, 15, 15]);
        assert_eq!(default_ranks(Task::Pointcloud, 4, None), vec![15, 15, 15, 3, 10]);
    }

    #[test]
    fn tiny_regression_runs() {
        let mut cfg = RunConfig::defaults(Task::Regress);
        cfg.output = PathBuf::new();
        cfg.samples = 200;
        cfg.units = 8;
        cfg.cube = 4;
        cfg.similar = 3;
        cfg.inr.iterations = 20;
        cfg.inr.hidden = vec![16];
        cfg.train.iterations = 20;
        cfg.factor.hidden = vec![8];
        let out = run_task(&cfg).unwrap();
        match out.report {
            MetricReport::Regression { test, .. } => assert!(test.nrmse.is_finite()),
            _ => panic!("wrong report kind"),
        }
    }
}
