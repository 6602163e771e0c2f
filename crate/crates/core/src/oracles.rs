//! Brute-force quadrature references for the closed-form marginals.
//!
//! # Planar prior reconstruction
//!
//! Writing the scaled rotation as one complex coefficient `a = s e^{i phi}`,
//! the planar oracle integrates
//!
//! ```text
//! (2 pi sigma^2)^-n exp(-sum_i |y_i - a v_i - t|^2 / (2 sigma^2))
//!     x p(a | sigma) x p(sigma)   over   phi, s, t in R^2, sigma
//! ```
//!
//! with a flat prior on `t` and on `phi`, and
//!
//! ```text
//! p(a | sigma) d^2a = (sum |v'|^2 + 1/B^2) / (2 pi sigma^2) exp(-|a|^2 / (2 sigma^2 B^2)) d^2a
//! p(sigma) = sigma^-(2 alpha + 3) exp(-zeta / sigma^2)
//! ```
//!
//! The first is a Jeffreys-type prior for the linear coefficient (the template
//! Fisher information over `sigma^2`) regulated by `B`. With these choices the
//! integral equals `exp` of the closed-form kernel times
//! [`planar_normalization`], a constant that depends only on `n` and `alpha`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{suff_stats, Regulators, ZetaScale};
use crate::shape::{Point, Point3, Shape2, Shape3};

/// Half-width of the planar inner window, in posterior deviations of `a`.
const WINDOW: f64 = 9.0;

/// Tensor-product trapezoid grid.
///
/// Step counts are numbers of intervals (the angle grid is periodic, so it has
/// that many nodes). For the planar oracle, `translation_range` is in units of
/// `sigma` around the least-squares translation at each `(a, sigma)`, and
/// `scale_range` bounds a per-`sigma` window placed around the least-squares
/// fit; for the spatial oracle it is an absolute per-axis coordinate range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub rotation_steps: usize,
    pub scale_steps: usize,
    pub translation_steps: usize,
    pub sigma_steps: usize,
    pub scale_range: (f64, f64),
    pub translation_range: (f64, f64),
    pub sigma_range: (f64, f64),
    /// Largest accepted Richardson error estimate on the log result.
    pub tolerance: f64,
}

impl QuadratureSpec {
    /// Ranges that cover the posterior mass of the planar integrand, with every
    /// step count set to `steps`.
    pub fn planar(y: &Shape2, v: &Shape2, regs: &Regulators, steps: usize) -> Result<Self> {
        let regs = absolute(regs)?;
        let stats = suff_stats(y, v)?;
        let n = y.len() as f64;
        let m = n + regs.alpha;
        let br = crate::likelihood::bracket(&stats, &regs);
        if !(br > 0.0) {
            return Err(Error::RegulatorUnderflow { bracket: br });
        }
        let sigma_peak = (br / (2.0 * m)).sqrt();
        let sigma_range = (sigma_peak * (-3.0f64).exp(), sigma_peak * (3.0f64.max(15.0 / m)).exp());
        let precision = n * stats.var_v + 1.0 / (regs.b * regs.b);
        let fitted = n * stats.cov_vy.norm() / precision;
        let reference = fitted.max(sigma_peak / precision.sqrt());
        let scale_range = (reference * 1e-3, fitted + 10.0 * sigma_range.1 / precision.sqrt());
        let half = 7.0 / n.sqrt();
        Ok(Self {
            rotation_steps: steps,
            scale_steps: steps,
            translation_steps: steps / 2,
            sigma_steps: steps,
            scale_range,
            translation_range: (-half, half),
            sigma_range,
            tolerance: 1e-5,
        }
        .with_min_counts())
    }

    /// Per-axis translation box covering the residual span plus `6 sigma`.
    pub fn spatial(y: &Shape3, v_rot: &Shape3, sigma: f64, steps: usize) -> Result<Self> {
        check_counts(y.len(), v_rot.len())?;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (a, b) in y.points().iter().zip(v_rot.points()) {
            for c in (*a - *b).coords() {
                lo = lo.min(c);
                hi = hi.max(c);
            }
        }
        Ok(Self {
            rotation_steps: 8,
            scale_steps: 8,
            translation_steps: steps,
            sigma_steps: 8,
            scale_range: (1.0, 1.0),
            translation_range: (lo - 6.0 * sigma, hi + 6.0 * sigma),
            sigma_range: (sigma, sigma),
            tolerance: 1e-7,
        }
        .with_min_counts())
    }

    /// Every step count doubled.
    pub fn refined(&self) -> Self {
        Self {
            rotation_steps: self.rotation_steps * 2,
            scale_steps: self.scale_steps * 2,
            translation_steps: self.translation_steps * 2,
            sigma_steps: self.sigma_steps * 2,
            ..*self
        }
    }

    fn with_min_counts(mut self) -> Self {
        for c in [
            &mut self.rotation_steps,
            &mut self.scale_steps,
            &mut self.translation_steps,
            &mut self.sigma_steps,
        ] {
            *c = (*c).max(8).next_multiple_of(2);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, c) in [
            ("rotation", self.rotation_steps),
            ("scale", self.scale_steps),
            ("translation", self.translation_steps),
            ("sigma", self.sigma_steps),
        ] {
            if c < 8 || c % 2 != 0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} steps must be even and at least 8, got {c}"
                )));
            }
        }
        let (t0, t1) = self.translation_range;
        if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
            return Err(Error::InvalidParameter(
                "translation range must be a finite interval".into(),
            ));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("tolerance must be positive".into()));
        }
        Ok(())
    }

    fn validate_positive(&self) -> Result<()> {
        for (name, (lo, hi)) in [("scale", self.scale_range), ("sigma", self.sigma_range)] {
            if !(lo > 0.0 && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "{name} range must be a positive interval, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

fn absolute(regs: &Regulators) -> Result<Regulators> {
    regs.validate()?;
    if regs.zeta_scale != ZetaScale::Absolute {
        return Err(Error::InvalidParameter(
            "oracles need an absolute zeta; resolve the regulators for the data first".into(),
        ));
    }
    Ok(*regs)
}

fn check_counts(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::CountMismatch { left, right });
    }
    Ok(())
}

/// Trapezoid nodes on `[lo, hi]` with `steps` intervals: `(node, fine weight, coarse weight)`.
/// The coarse rule uses the even nodes only, with twice the spacing.
fn trapezoid(lo: f64, hi: f64, steps: usize) -> Vec<(f64, f64, f64)> {
    let h = (hi - lo) / steps as f64;
    (0..=steps)
        .map(|i| {
            let end = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let coarse = if i % 2 == 0 { 2.0 * h * end } else { 0.0 };
            (lo + h * i as f64, h * end, coarse)
        })
        .collect()
}

/// Running `ln sum w exp(x)` without overflow.
#[derive(Debug, Clone, Copy)]
struct LogAccumulator {
    max: f64,
    sum: f64,
}

impl LogAccumulator {
    const EMPTY: Self = Self {
        max: f64::NEG_INFINITY,
        sum: 0.0,
    };

    fn add(&mut self, log_value: f64, weight: f64) {
        if weight == 0.0 || log_value == f64::NEG_INFINITY {
            return;
        }
        if log_value > self.max {
            self.sum = self.sum * (self.max - log_value).exp() + weight;
            self.max = log_value;
        } else {
            self.sum += weight * (log_value - self.max).exp();
        }
    }

    fn merge(mut self, other: Self) -> Self {
        if other.sum > 0.0 {
            self.add(other.max, other.sum);
        }
        self
    }

    fn ln(self) -> f64 {
        self.max + self.sum.ln()
    }
}

/// Fine value, with the Richardson estimate `|fine - coarse| / 3` checked
/// against `tolerance`.
fn finish(fine: LogAccumulator, coarse: LogAccumulator, tolerance: f64) -> Result<f64> {
    let (f, c) = (fine.ln(), coarse.ln());
    let estimate = (f - c).abs() / 3.0;
    if !(estimate <= tolerance) {
        return Err(Error::GridTooCoarse {
            estimate,
            tolerance,
            hint: "double the step counts or widen the ranges".into(),
        });
    }
    Ok(f)
}

/// `ln` of the planar marginal over rotation, scale, translation and noise,
/// by tensor-product quadrature. See the module notes for the priors.
///
/// `regs.zeta` must be absolute. Matches `log_marginal_kernel` plus
/// [`planar_normalization`] for the fixed pairing `y_i <-> v_i`.
pub fn brute_marginal_2d(y: &Shape2, v: &Shape2, regs: &Regulators, spec: &QuadratureSpec) -> Result<f64> {
    let regs = absolute(regs)?;
    check_counts(y.len(), v.len())?;
    spec.validate()?;
    spec.validate_positive()?;
    let n = y.len();
    let nf = n as f64;
    let ys: Vec<Complex64> = y.points().iter().map(|p| p.to_complex()).collect();
    let vs: Vec<Complex64> = v.points().iter().map(|p| p.to_complex()).collect();
    let v_mean = vs.iter().sum::<Complex64>() / nf;
    let vv: f64 = vs.iter().map(|z| (z - v_mean).norm_sqr()).sum();
    let ln_fisher = (vv + 1.0 / (regs.b * regs.b)).ln();
    let ln_2pi = TAU.ln();
    let precision = vv + 1.0 / (regs.b * regs.b);
    let a_fit = ys
        .iter()
        .zip(&vs)
        .map(|(y, v)| (v - v_mean).conj() * y)
        .sum::<Complex64>()
        / precision;
    let (s_fit, phi_fit) = a_fit.to_polar();
    let (ln_s_lo, ln_s_hi) = (spec.scale_range.0.ln(), spec.scale_range.1.ln());

    let sigmas = trapezoid(spec.sigma_range.0.ln(), spec.sigma_range.1.ln(), spec.sigma_steps);
    let shifts = trapezoid(
        spec.translation_range.0,
        spec.translation_range.1,
        spec.translation_steps,
    );

    // With t = centre + sigma t' the exponent splits as
    // sum |r - centre|^2 + n sigma^2 |t'|^2, so the t' sum is one factor.
    let translation = |coarse: bool| {
        let mut acc = LogAccumulator::EMPTY;
        for &(tx, w_x, c_x) in &shifts {
            for &(ty, w_y, c_y) in &shifts {
                let w = if coarse { c_x * c_y } else { w_x * w_y };
                acc.add(-0.5 * nf * (tx * tx + ty * ty), w);
            }
        }
        acc.ln()
    };
    let (t_fine, t_coarse) = (translation(false), translation(true));

    // At fixed sigma the integrand is Gaussian in a around a_fit with
    // per-component deviation sigma / sqrt(precision). The inner grid covers
    // a polar box around the disc of WINDOW deviations, or the full circle
    // when that disc reaches the origin.
    let per_sigma: Vec<(LogAccumulator, LogAccumulator)> = sigmas
        .par_iter()
        .map(|&(ls, w_s, c_s)| {
            let var = (2.0 * ls).exp();
            let ln_var = 2.0 * ls;
            let radius = WINDOW * ls.exp() / precision.sqrt();
            let (angles, u_lo) = if radius < 0.5 * s_fit {
                let half = (radius / s_fit).asin();
                (
                    trapezoid(phi_fit - half, phi_fit + half, spec.rotation_steps),
                    (s_fit - radius).ln().max(ln_s_lo),
                )
            } else {
                let h = TAU / spec.rotation_steps as f64;
                let periodic = (0..spec.rotation_steps)
                    .map(|k| (phi_fit + h * k as f64, h, if k % 2 == 0 { 2.0 * h } else { 0.0 }))
                    .collect();
                (periodic, ln_s_lo)
            };
            let u_hi = (s_fit + radius).ln().min(ln_s_hi);
            let mut fine = LogAccumulator::EMPTY;
            let mut coarse = LogAccumulator::EMPTY;
            if !(u_lo < u_hi) {
                return (fine, coarse);
            }
            let scales = trapezoid(u_lo, u_hi, spec.scale_steps);
            let prior_sigma = -(2.0 * regs.alpha + 3.0) * ls - regs.zeta / var;
            for &(phi, w_angle, c_angle) in &angles {
                for &(u, w_u, c_u) in &scales {
                    let a = Complex64::from_polar(u.exp(), phi);
                    let centre = ys.iter().zip(&vs).map(|(y, v)| y - a * v).sum::<Complex64>() / nf;
                    let ss: f64 = ys.iter().zip(&vs).map(|(y, v)| (y - a * v - centre).norm_sqr()).sum();
                    // d^2a = s^2 du dphi, d sigma = sigma d(ln sigma), d^2t = sigma^2 d^2t'
                    let jacobian = 2.0 * u + ls + ln_var;
                    let prior_a = ln_fisher - ln_2pi - ln_var - a.norm_sqr() / (2.0 * var * regs.b * regs.b);
                    let value = jacobian + prior_a + prior_sigma - nf * (ln_2pi + ln_var) - ss / (2.0 * var);
                    fine.add(value, w_angle * w_u * w_s);
                    coarse.add(value, c_angle * c_u * c_s);
                }
            }
            (fine, coarse)
        })
        .collect();
    let (mut fine, mut coarse) = per_sigma
        .into_iter()
        .fold((LogAccumulator::EMPTY, LogAccumulator::EMPTY), |(f, c), (pf, pc)| {
            (f.merge(pf), c.merge(pc))
        });
    fine.max += t_fine;
    coarse.max += t_coarse;
    finish(fine, coarse, spec.tolerance)
}

/// [`brute_marginal_2d`] on the automatic grid for the pair, doubling every
/// step count from `steps` until the Richardson estimate meets the tolerance
/// or the counts would exceed `max_steps`. Returns the value and the grid used.
pub fn brute_marginal_2d_auto(
    y: &Shape2,
    v: &Shape2,
    regs: &Regulators,
    steps: usize,
    max_steps: usize,
) -> Result<(f64, QuadratureSpec)> {
    let mut spec = QuadratureSpec::planar(y, v, regs, steps)?;
    loop {
        match brute_marginal_2d(y, v, regs, &spec) {
            Ok(value) => return Ok((value, spec)),
            Err(Error::GridTooCoarse { .. }) if spec.scale_steps * 2 <= max_steps => spec = spec.refined(),
            Err(e) => return Err(e),
        }
    }
}

/// `ln` of the constant relating [`brute_marginal_2d`] to the closed-form kernel:
/// `(2 pi)^(1-n) / n * Gamma(n + alpha) / 2 * 2^(n + alpha)`.
pub fn planar_normalization(n: usize, alpha: f64) -> f64 {
    let nf = n as f64;
    (1.0 - nf) * TAU.ln() - nf.ln() + libm::lgamma(nf + alpha) - 2f64.ln() + (nf + alpha) * 2f64.ln()
}

/// `ln` of the integral over spatial translations `t` of
/// `(2 pi sigma^2)^(-3n/2) exp(-sum_i |y_i - v_i - t|^2 / (2 sigma^2))`
/// on the box given by `spec.translation_range` in every axis.
pub fn brute_translation_marginal_3d(y: &Shape3, v_rot: &Shape3, sigma: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_counts(y.len(), v_rot.len())?;
    spec.validate()?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let residuals: Vec<Point3> = y.points().iter().zip(v_rot.points()).map(|(&a, &b)| a - b).collect();
    let nf = residuals.len() as f64;
    let s1 = residuals.iter().fold(Point3::ORIGIN, |acc, &r| acc + r);
    let s2: f64 = residuals.iter().map(|r| r.norm_sqr()).sum();
    let var = sigma * sigma;
    let base = -1.5 * nf * (2.0 * PI * var).ln();
    let nodes = trapezoid(
        spec.translation_range.0,
        spec.translation_range.1,
        spec.translation_steps,
    );
    let per_x: Vec<(LogAccumulator, LogAccumulator)> = nodes
        .par_iter()
        .map(|&(x, w_x, c_x)| {
            let mut fine = LogAccumulator::EMPTY;
            let mut coarse = LogAccumulator::EMPTY;
            for &(y, w_y, c_y) in &nodes {
                for &(z, w_z, c_z) in &nodes {
                    let t = Point3::new(x, y, z);
                    let ss = s2 - 2.0 * t.dot(s1) + nf * t.norm_sqr();
                    let value = base - ss / (2.0 * var);
                    fine.add(value, w_x * w_y * w_z);
                    coarse.add(value, c_x * c_y * c_z);
                }
            }
            (fine, coarse)
        })
        .collect();
    let (fine, coarse) = per_x
        .into_iter()
        .fold((LogAccumulator::EMPTY, LogAccumulator::EMPTY), |(f, c), (pf, pc)| {
            (f.merge(pf), c.merge(pc))
        });
    finish(fine, coarse, spec.tolerance)
}

/// `ln` of the constant relating [`brute_translation_marginal_3d`] to
/// `translation_marginal_exponent`: `(2 pi sigma^2)^(3(1-n)/2) n^(-3/2)`.
pub fn spatial_translation_normalization(n: usize, sigma: f64) -> f64 {
    let nf = n as f64;
    1.5 * (1.0 - nf) * (2.0 * PI * sigma * sigma).ln() - 1.5 * nf.ln()
}
