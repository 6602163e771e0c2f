//! Repeated train/test benchmarks and sample-count sweeps.
//!
//! Each run splits every class into training exemplars and held-out shapes,
//! draws `shapes_per_run` held-out shapes, perturbs them with Gaussian noise
//! and a random similarity transform, and classifies them. Two rates are
//! reported per run: the classification rate (true class ranked first) and
//! the success rate (true class within the top two).
//!
//! Randomness comes from ChaCha streams keyed by `(seed, run, shape)`, so a
//! report is reproducible from its spec, and a sweep over `n_points` sees the
//! same splits and test shapes at every `n`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{self, Aggregate};
use crate::error::{Error, Result};
use crate::likelihood::Regulators;
use crate::shape::{self, apply_transform, Family, Point2, Shape2, SimilarityTransform2};

/// Environment variable naming the default dataset root.
pub const DATA_ENV: &str = "SHAPEMAP_DATA";

const POOL_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NPoints {
    One(usize),
    Sweep(Vec<usize>),
}

impl NPoints {
    pub fn values(&self) -> Vec<usize> {
        match self {
            NPoints::One(n) => vec![*n],
            NPoints::Sweep(ns) => ns.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    /// Jittered members of synthetic families, one class per family.
    Synthetic {
        families: Vec<Family>,
        shapes_per_class: usize,
        /// Relative jitter of the family shape parameters.
        variation: f64,
    },
    /// A directory of labelled shape files, see [`shape::load_labeled_dir`].
    /// Relative paths are looked up under `$SHAPEMAP_DATA` first; an empty
    /// path means `$SHAPEMAP_DATA` itself.
    Directory {
        #[serde(default)]
        path: PathBuf,
        #[serde(default)]
        invert: bool,
    },
}

impl Default for Dataset {
    fn default() -> Self {
        Dataset::Synthetic {
            families: vec![Family::Circle, Family::Gear, Family::Square, Family::Star],
            shapes_per_class: 10,
            variation: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub runs: usize,
    /// Held-out shapes classified per run.
    pub shapes_per_run: usize,
    pub n_points: NPoints,
    /// Noise standard deviation per coordinate, relative to the RMS radius.
    pub noise_sigma: f64,
    pub dataset: Dataset,
    /// Fraction of each class used for training.
    pub split: f64,
    pub seed: u64,
    pub regs: Regulators,
    pub aggregate: Aggregate,
    /// Train on every shape and test on (perturbed copies of) the same shapes.
    pub resubstitution: bool,
    /// Apply a random rotation, scale and translation to every test shape.
    pub random_pose: bool,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        Self {
            runs: 10,
            shapes_per_run: 10,
            n_points: NPoints::One(50),
            noise_sigma: 0.02,
            dataset: Dataset::default(),
            split: 0.5,
            seed: 0,
            regs: Regulators::default(),
            aggregate: Aggregate::Mean,
            resubstitution: false,
            random_pose: true,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.runs < 1 {
            return bad("runs must be at least 1".into());
        }
        if self.shapes_per_run < 1 {
            return bad("shapes_per_run must be at least 1".into());
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!("split must lie in (0, 1), got {}", self.split));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        let ns = self.n_points.values();
        if ns.is_empty() || ns.iter().any(|&n| n < 3) {
            return bad("n_points must be at least 3".into());
        }
        if ns.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_points sweep must be strictly ascending".into());
        }
        if let Dataset::Synthetic {
            families,
            shapes_per_class,
            variation,
        } = &self.dataset
        {
            if families.is_empty() || *shapes_per_class < 1 || !(*variation >= 0.0 && *variation < 1.0) {
                return bad("synthetic dataset needs families, shapes_per_class >= 1, 0 <= variation < 1".into());
            }
        }
        self.regs.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub n_points: usize,
    pub run: usize,
    pub tested: usize,
    pub correct: usize,
    pub top2: usize,
    pub classification_rate: f64,
    pub success_rate: f64,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub mean: f64,
    pub std: f64,
}

impl RateSummary {
    pub fn of(values: &[f64]) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
        };
        Self { mean, std }
    }

    /// Standard error of the mean.
    pub fn std_error(&self, count: usize) -> f64 {
        self.std / (count as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_points: usize,
    pub classification_rate: RateSummary,
    pub success_rate: RateSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkSpec,
    pub classes: Vec<String>,
    /// Every run at every `n`, ordered by `n` then run.
    pub runs: Vec<RunResult>,
    /// Over all runs in `runs`.
    pub classification_rate: RateSummary,
    pub success_rate: RateSummary,
    pub per_n: Vec<SweepPoint>,
    /// Spearman correlation of `n` against mean classification rate; absent
    /// for a single `n` or when either series is constant.
    pub spearman: Option<f64>,
    pub warnings: Vec<String>,
    /// Not part of the reproducible content.
    pub wall_time_s: f64,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per run.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Format {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        for run in &self.runs {
            writer.serialize(run).map_err(|e| Error::Format {
                path: path.to_owned(),
                message: e.to_string(),
            })?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Benchmark at every `n` in the spec.
pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkReport> {
    let start = Instant::now();
    spec.validate()?;
    let mut warnings = Vec::new();
    let pool = load_pool(spec)?;
    let classes: Vec<String> = pool.keys().cloned().collect();
    if classes.len() == 1 {
        let msg = format!("only one class ({}); every shape is trivially classified", classes[0]);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let required = if spec.resubstitution { 1 } else { 2 };
    for (label, shapes) in &pool {
        if shapes.len() < required {
            return Err(Error::TooFewShapes {
                label: label.clone(),
                available: shapes.len(),
                required,
            });
        }
    }

    let splits: Vec<Split> = (0..spec.runs).map(|run| split_run(spec, &pool, run)).collect();
    let pooled_tests: usize = splits.iter().map(|s| s.tests.len()).min().unwrap_or(0);
    if pooled_tests < spec.shapes_per_run {
        let msg = format!(
            "only {pooled_tests} held-out shapes available, fewer than shapes_per_run = {}",
            spec.shapes_per_run
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut runs = Vec::new();
    let mut per_n = Vec::new();
    for n in spec.n_points.values() {
        let results = splits
            .par_iter()
            .enumerate()
            .map(|(run, split)| evaluate_run(spec, split, n, run))
            .collect::<Result<Vec<_>>>()?;
        let top1: Vec<f64> = results.iter().map(|r| r.classification_rate).collect();
        let top2: Vec<f64> = results.iter().map(|r| r.success_rate).collect();
        per_n.push(SweepPoint {
            n_points: n,
            classification_rate: RateSummary::of(&top1),
            success_rate: RateSummary::of(&top2),
        });
        runs.extend(results);
    }
    let top1: Vec<f64> = runs.iter().map(|r| r.classification_rate).collect();
    let top2: Vec<f64> = runs.iter().map(|r| r.success_rate).collect();
    let xs: Vec<f64> = per_n.iter().map(|p| p.n_points as f64).collect();
    let ys: Vec<f64> = per_n.iter().map(|p| p.classification_rate.mean).collect();
    Ok(BenchmarkReport {
        config: spec.clone(),
        classes,
        classification_rate: RateSummary::of(&top1),
        success_rate: RateSummary::of(&top2),
        runs,
        per_n,
        spearman: spearman(&xs, &ys),
        warnings,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}

/// [`run_benchmark`] over an ascending list of sample counts.
pub fn sweep_sample_count(spec: &BenchmarkSpec, n_values: &[usize]) -> Result<BenchmarkReport> {
    run_benchmark(&BenchmarkSpec {
        n_points: NPoints::Sweep(n_values.to_vec()),
        ..spec.clone()
    })
}

/// Resolves a dataset path against `$SHAPEMAP_DATA`.
pub fn resolve_data_path(path: &Path) -> Result<PathBuf> {
    let root = std::env::var_os(DATA_ENV).map(PathBuf::from);
    if path.as_os_str().is_empty() {
        return root.ok_or_else(|| Error::InvalidParameter(format!("no dataset path given and {DATA_ENV} is not set")));
    }
    if path.is_relative() {
        if let Some(candidate) = root.map(|r| r.join(path)).filter(|p| p.exists()) {
            return Ok(candidate);
        }
    }
    Ok(path.to_owned())
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn load_pool(spec: &BenchmarkSpec) -> Result<BTreeMap<String, Vec<Shape2>>> {
    let mut pool: BTreeMap<String, Vec<Shape2>> = BTreeMap::new();
    match &spec.dataset {
        Dataset::Synthetic {
            families,
            shapes_per_class,
            variation,
        } => {
            let mut rng = stream(spec.seed, POOL_STREAM);
            for family in families {
                let shapes = (0..*shapes_per_class)
                    .map(|_| family.instance(*variation, &mut rng))
                    .collect();
                pool.insert(family.id().to_owned(), shapes);
            }
        }
        Dataset::Directory { path, invert } => {
            let dir = resolve_data_path(path)?;
            for (label, shape) in shape::load_labeled_dir(&dir, *invert)? {
                pool.entry(label).or_default().push(shape);
            }
        }
    }
    if pool.is_empty() {
        return Err(Error::NoModels);
    }
    Ok(pool)
}

struct Split {
    train: Vec<(String, Shape2)>,
    tests: Vec<(String, Shape2)>,
}

fn split_run(spec: &BenchmarkSpec, pool: &BTreeMap<String, Vec<Shape2>>, run: usize) -> Split {
    let mut rng = stream(spec.seed, 2 * run as u64);
    let mut train = Vec::new();
    let mut held_out = Vec::new();
    for (label, shapes) in pool {
        if spec.resubstitution {
            train.extend(shapes.iter().map(|s| (label.clone(), s.clone())));
            held_out.extend(shapes.iter().map(|s| (label.clone(), s.clone())));
            continue;
        }
        let mut order: Vec<usize> = (0..shapes.len()).collect();
        order.shuffle(&mut rng);
        let k = ((spec.split * shapes.len() as f64).round() as usize).clamp(1, shapes.len() - 1);
        train.extend(order[..k].iter().map(|&i| (label.clone(), shapes[i].clone())));
        held_out.extend(order[k..].iter().map(|&i| (label.clone(), shapes[i].clone())));
    }
    let count = spec.shapes_per_run.min(held_out.len());
    let mut picked = index::sample(&mut rng, held_out.len(), count).into_vec();
    picked.sort_unstable();
    let tests = picked.into_iter().map(|i| held_out[i].clone()).collect();
    Split { train, tests }
}

fn evaluate_run(spec: &BenchmarkSpec, split: &Split, n: usize, run: usize) -> Result<RunResult> {
    let mut models = classifier::train(&split.train, n, &spec.regs)?;
    for m in &mut models {
        m.aggregate = spec.aggregate;
    }
    let (mut correct, mut top2) = (0, 0);
    for (i, (label, shape)) in split.tests.iter().enumerate() {
        let mut rng = stream(spec.seed, ((2 * run as u64 + 1) << 32) | i as u64);
        let y = perturb(&classifier::prepare(shape, n)?, spec, &mut rng)?;
        let result = classifier::classify(&y, &models)?;
        match result.rank_of(label) {
            Some(1) => {
                correct += 1;
                top2 += 1;
            }
            Some(2) => top2 += 1,
            _ => {}
        }
    }
    let tested = split.tests.len();
    Ok(RunResult {
        n_points: n,
        run,
        tested,
        correct,
        top2,
        classification_rate: correct as f64 / tested as f64,
        success_rate: top2 as f64 / tested as f64,
    })
}

fn perturb(shape: &Shape2, spec: &BenchmarkSpec, rng: &mut ChaCha8Rng) -> Result<Shape2> {
    let noisy = shape::add_noise(shape, spec.noise_sigma, rng)?;
    if !spec.random_pose {
        return Ok(noisy);
    }
    let g = SimilarityTransform2::new(
        rng.random_range(0.0..std::f64::consts::TAU),
        rng.random_range(-3.0f64..3.0).exp(),
        Point2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)),
    )?;
    apply_transform(&noisy, &g)
}

/// Average ranks, 1-based, ties sharing the mean of their positions.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let k = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / k, ry.iter().sum::<f64>() / k);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}
