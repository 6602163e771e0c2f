//! `shapemap` command-line tool.

mod verify;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use shapemap_core::classifier::{self, Aggregate};
use shapemap_core::harness::{self, BenchmarkSpec};
use shapemap_core::likelihood::{CorrespondenceMode, Regulators, ZetaScale};
use shapemap_core::quat3d::{build_rotation_kernel, rotation_marginal_mc_with, rotation_marginal_series};
use shapemap_core::shape::{load_labeled_dir, load_shape2, load_shape3};
use shapemap_core::{synth_shape, Point2, SimilarityTransform2};

#[derive(Parser)]
#[command(
    name = "shapemap",
    version,
    about = "Bayesian shape classification under similarity transforms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build class models from a directory of labelled shapes.
    Train(TrainArgs),
    /// Rank the classes of a model file for one or more shapes (JSON lines).
    Classify(ClassifyArgs),
    /// Repeated train/test benchmark.
    Benchmark(BenchmarkArgs),
    /// Benchmark over several sample counts.
    Sweep(SweepArgs),
    /// Compare closed forms with quadrature references.
    Verify(verify::VerifyArgs),
    /// Write a synthetic shape.
    Synth(SynthArgs),
    /// Spatial shape tools.
    Quat3d {
        #[command(subcommand)]
        command: Quat3dCommand,
    },
}

/// Regulator overrides. Unset flags keep the default (training) or the value
/// stored in the model file (classification).
#[derive(Args, Default)]
struct RegArgs {
    /// Scale-prior regulator B.
    #[arg(long)]
    reg_b: Option<f64>,
    /// Noise-prior exponent alpha.
    #[arg(long)]
    reg_alpha: Option<f64>,
    /// Additive regulator zeta, relative to the squared data diameter unless --zeta-absolute.
    #[arg(long)]
    reg_zeta: Option<f64>,
    /// Treat --reg-zeta as an absolute value.
    #[arg(long)]
    zeta_absolute: bool,
    #[arg(long, value_enum)]
    corr_mode: Option<CorrMode>,
    /// Also try the reversed point order in the correspondence search.
    #[arg(long)]
    allow_reversal: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrMode {
    Map,
    Marginal,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregateArg {
    Mean,
    Max,
}

impl From<AggregateArg> for Aggregate {
    fn from(a: AggregateArg) -> Self {
        match a {
            AggregateArg::Mean => Aggregate::Mean,
            AggregateArg::Max => Aggregate::Max,
        }
    }
}

impl RegArgs {
    fn apply(&self, mut regs: Regulators) -> Result<Regulators> {
        if let Some(b) = self.reg_b {
            regs.b = b;
        }
        if let Some(a) = self.reg_alpha {
            regs.alpha = a;
        }
        if let Some(z) = self.reg_zeta {
            regs.zeta = z;
            regs.zeta_scale = ZetaScale::DataRelative;
        }
        if self.zeta_absolute {
            regs.zeta_scale = ZetaScale::Absolute;
        }
        if let Some(m) = self.corr_mode {
            regs.correspondence = match m {
                CorrMode::Map => CorrespondenceMode::Map,
                CorrMode::Marginal => CorrespondenceMode::Marginal,
            };
        }
        if self.allow_reversal {
            regs.allow_reversal = true;
        }
        regs.validate()?;
        Ok(regs)
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory; defaults to $SHAPEMAP_DATA.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Points per resampled contour.
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "mean")]
    aggregate: AggregateArg,
    /// Silhouettes are light on dark.
    #[arg(long)]
    invert: bool,
    #[command(flatten)]
    regs: RegArgs,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Shape file(s) to classify.
    #[arg(long = "in", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Print only the best k classes.
    #[arg(long)]
    top: Option<usize>,
    #[arg(long, value_enum)]
    aggregate: Option<AggregateArg>,
    #[arg(long)]
    invert: bool,
    #[command(flatten)]
    regs: RegArgs,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Benchmark spec (JSON); defaults to the built-in synthetic benchmark.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-run rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Override the spec seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    bench: BenchmarkArgs,
    /// Sample counts, ascending.
    #[arg(long, value_delimiter = ',', default_value = "10,25,50,100")]
    n: Vec<usize>,
}

#[derive(Args)]
struct SynthArgs {
    /// Family name, e.g. circle, star, letter-l.
    #[arg(long)]
    family: String,
    /// Noise standard deviation per coordinate, in template units.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Rotation in radians.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    rotation: f64,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    tx: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    ty: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Quat3dCommand {
    /// Log marginal likelihood over rotations for a fixed correspondence.
    Marginal(MarginalArgs),
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Mc,
    Series,
}

#[derive(Args)]
struct MarginalArgs {
    /// Observed spatial shape (JSON).
    #[arg(long)]
    data: PathBuf,
    /// Template spatial shape (JSON), same point count.
    #[arg(long)]
    template: PathBuf,
    #[arg(long)]
    sigma: f64,
    #[arg(long, value_enum, default_value = "mc")]
    method: Method,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 4)]
    order: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(a) => train(a),
        Command::Classify(a) => classify(a),
        Command::Benchmark(a) => benchmark(a, None),
        Command::Sweep(a) => benchmark(a.bench, Some(a.n)),
        Command::Verify(a) => verify::run(a),
        Command::Synth(a) => synth(a),
        Command::Quat3d {
            command: Quat3dCommand::Marginal(a),
        } => marginal(a),
    };
    match outcome {
        Ok(true) => {}
        Ok(false) => std::process::exit(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn train(a: TrainArgs) -> Result<bool> {
    let dir = harness::resolve_data_path(a.input.as_deref().unwrap_or(Path::new("")))?;
    let shapes = load_labeled_dir(&dir, a.invert).with_context(|| format!("loading {}", dir.display()))?;
    if shapes.is_empty() {
        bail!("no shape files under {}", dir.display());
    }
    let regs = a.regs.apply(Regulators::default())?;
    let mut models = classifier::train(&shapes, a.n, &regs)?;
    for m in &mut models {
        m.aggregate = a.aggregate.into();
    }
    classifier::save_models(&models, &a.out)?;
    log::info!(
        "{} classes from {} shapes written to {}",
        models.len(),
        shapes.len(),
        a.out.display()
    );
    Ok(true)
}

fn classify(a: ClassifyArgs) -> Result<bool> {
    let mut models = classifier::load_models(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    for m in &mut models {
        m.regs = a.regs.apply(m.regs)?;
        if let Some(agg) = a.aggregate {
            m.aggregate = agg.into();
        }
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for path in &a.input {
        let shape = load_shape2(path, a.invert).with_context(|| format!("loading {}", path.display()))?;
        let result = classifier::classify(&shape, &models)?;
        let k = a.top.unwrap_or(result.ranked.len());
        for (rank, (label, lp)) in result.ranked.iter().take(k).enumerate() {
            let line = json!({
                "input": path.display().to_string(),
                "rank": rank + 1,
                "label": label,
                "log_posterior": lp,
            });
            writeln!(out, "{line}")?;
        }
    }
    Ok(true)
}

fn benchmark(a: BenchmarkArgs, sweep: Option<Vec<usize>>) -> Result<bool> {
    let mut spec: BenchmarkSpec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => BenchmarkSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let report = match sweep {
        Some(ns) => harness::sweep_sample_count(&spec, &ns)?,
        None => harness::run_benchmark(&spec)?,
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    emit(&report.to_json()?, a.out.as_deref())?;
    if let Some(csv) = &a.csv {
        report.write_csv(csv)?;
    }
    Ok(true)
}

fn synth(a: SynthArgs) -> Result<bool> {
    let g = SimilarityTransform2::new(a.rotation, a.scale, Point2::new(a.tx, a.ty))?;
    let shape = synth_shape(&a.family, a.noise, a.n, &g, a.seed)?.with_label(a.family.clone());
    emit(&serde_json::to_string_pretty(&shape)?, a.out.as_deref())?;
    Ok(true)
}

fn marginal(a: MarginalArgs) -> Result<bool> {
    let y = load_shape3(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let v = load_shape3(&a.template).with_context(|| format!("loading {}", a.template.display()))?;
    let kernel = build_rotation_kernel(&y, &v, a.sigma)?;
    let mut report = json!({
        "method": match a.method { Method::Mc => "mc", Method::Series => "series" },
        "n": kernel.n(),
        "sigma": kernel.sigma(),
        "offset": kernel.offset(),
        "eigenvalues": kernel.eigenvalues(),
        "best_rotation": kernel.top_eigenvector().to_array(),
    });
    let average = match a.method {
        Method::Mc => {
            let est = rotation_marginal_mc_with(&kernel, a.samples, a.seed, true)?;
            report["samples"] = json!(est.samples);
            report["seed"] = json!(a.seed);
            report["std_error"] = json!(est.std_error);
            est.value
        }
        Method::Series => {
            report["order"] = json!(a.order);
            rotation_marginal_series(&kernel, a.order)?
        }
    };
    report["log_rotation_average"] = json!(average);
    report["log_marginal"] = json!(kernel.offset() + average);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(true)
}
