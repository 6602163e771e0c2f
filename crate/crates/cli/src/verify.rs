//! `verify`: closed forms against brute-force quadrature on random small fixtures.

use anyhow::Result;
use clap::{Args, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use shapemap_core::likelihood::{log_marginal_kernel, suff_stats, Regulators};
use shapemap_core::oracles::{
    brute_marginal_2d_auto, brute_translation_marginal_3d, planar_normalization, spatial_translation_normalization,
    QuadratureSpec,
};
use shapemap_core::quat3d::{rotate_shape, translation_marginal_exponent, Quaternion};
use shapemap_core::{Point2, Point3, Shape2, Shape3};

#[derive(Args)]
pub struct VerifyArgs {
    #[command(subcommand)]
    check: Check,
}

#[derive(Subcommand)]
enum Check {
    /// Planar closed-form marginal vs quadrature over rotation, scale, translation and noise.
    Eq2 {
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Largest accepted distance of any offset from the analytic constant.
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// Points per shape (at most 5).
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 128)]
        steps: usize,
        #[arg(long, default_value_t = 1024)]
        max_steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Spatial translation marginal vs quadrature over translations.
    Translation3d {
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 0.35)]
        sigma: f64,
        #[arg(long, default_value_t = 128)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

pub fn run(args: VerifyArgs) -> Result<bool> {
    let (name, offsets, expected, tol) = match args.check {
        Check::Eq2 {
            trials,
            tol,
            n,
            steps,
            max_steps,
            seed,
        } => {
            anyhow::ensure!((3..=5).contains(&n), "n must be between 3 and 5");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut offsets = Vec::with_capacity(trials);
            for _ in 0..trials {
                let y = Shape2::new(points(&mut rng, n, |c| Point2::new(c[0], c[1])), true)?;
                let v = Shape2::new(points(&mut rng, n, |c| Point2::new(c[0], c[1])), true)?;
                let regs = Regulators::default().resolve_for(&y);
                let closed = log_marginal_kernel(&suff_stats(&y, &v)?, n, &regs)?;
                let (brute, _) = brute_marginal_2d_auto(&y, &v, &regs, steps, max_steps)?;
                offsets.push(brute - closed);
            }
            (
                "eq2",
                offsets,
                planar_normalization(n, Regulators::default().alpha),
                tol,
            )
        }
        Check::Translation3d {
            trials,
            tol,
            n,
            sigma,
            steps,
            seed,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut offsets = Vec::with_capacity(trials);
            for _ in 0..trials {
                let y = Shape3::new(points(&mut rng, n, |c| Point3::new(c[0], c[1], c[2])), false)?;
                let v = Shape3::new(points(&mut rng, n, |c| Point3::new(c[0], c[1], c[2])), false)?;
                let v_rot = rotate_shape(Quaternion::random_unit(&mut rng), &v)?;
                let spec = QuadratureSpec::spatial(&y, &v_rot, sigma, steps)?;
                let brute = brute_translation_marginal_3d(&y, &v_rot, sigma, &spec)?;
                offsets.push(brute - translation_marginal_exponent(&y, &v_rot, sigma)?);
            }
            (
                "translation3d",
                offsets,
                spatial_translation_normalization(n, sigma),
                tol,
            )
        }
    };
    let lo = offsets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let deviation = offsets.iter().map(|o| (o - expected).abs()).fold(0.0, f64::max);
    let pass = !offsets.is_empty() && deviation <= tol && hi - lo <= tol;
    let report = json!({
        "check": name,
        "trials": offsets.len(),
        "offsets": offsets,
        "expected_offset": expected,
        "spread": hi - lo,
        "max_deviation": deviation,
        "tolerance": tol,
        "pass": pass,
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(pass)
}

fn points<P>(rng: &mut ChaCha8Rng, n: usize, make: impl Fn([f64; 3]) -> P) -> Vec<P> {
    (0..n)
        .map(|_| {
            make([
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ])
        })
        .collect()
}
