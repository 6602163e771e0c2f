//! Synthetic shape families used as fixtures and as the default benchmark data.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{apply_transform, resample_arclength, Point2, Shape2, SimilarityTransform2};
use crate::error::{Error, Result};

const CURVE_VERTICES: usize = 512;
const GEAR_TEETH: f64 = 12.0;
const GEAR_DEPTH: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Circle,
    Ellipse,
    Square,
    Rectangle,
    Triangle,
    Star,
    LetterL,
    LetterT,
    LetterE,
    LetterU,
    /// Circle with shallow sinusoidal teeth, only resolved at high sampling density.
    Gear,
}

impl Family {
    pub const ALL: [Family; 11] = [
        Family::Circle,
        Family::Ellipse,
        Family::Square,
        Family::Rectangle,
        Family::Triangle,
        Family::Star,
        Family::LetterL,
        Family::LetterT,
        Family::LetterE,
        Family::LetterU,
        Family::Gear,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Family::Circle => "circle",
            Family::Ellipse => "ellipse",
            Family::Square => "square",
            Family::Rectangle => "rectangle",
            Family::Triangle => "triangle",
            Family::Star => "star",
            Family::LetterL => "letter-l",
            Family::LetterT => "letter-t",
            Family::LetterE => "letter-e",
            Family::LetterU => "letter-u",
            Family::Gear => "gear",
        }
    }

    /// Canonical outline of the family.
    pub fn template(self) -> Shape2 {
        self.outline(1.0, 1.0)
    }

    /// A member of the family with its shape parameters perturbed.
    ///
    /// `variation` is the relative half-width of the uniform jitter applied to
    /// aspect ratios, star depth and stroke widths. The start point is moved to a
    /// uniformly random position along the contour.
    pub fn instance<R: Rng + ?Sized>(self, variation: f64, rng: &mut R) -> Shape2 {
        let mut jitter = || 1.0 + variation * (2.0 * rng.random::<f64>() - 1.0);
        let (a, b) = (jitter(), jitter());
        let outline = self.outline(a, b);
        let dense = resample_arclength(&outline, CURVE_VERTICES).expect("templates have positive length");
        let offset = rng.random_range(0..CURVE_VERTICES);
        let mut pts = dense.into_points();
        pts.rotate_left(offset);
        Shape2::new(pts, true).expect("rotation keeps a valid contour")
    }

    /// Outline with two shape parameters, both equal to 1 for the canonical member.
    fn outline(self, a: f64, b: f64) -> Shape2 {
        let poly = |v: &[(f64, f64)]| -> Vec<Point2> { v.iter().map(|&(x, y)| Point2::new(x, y)).collect() };
        let pts = match self {
            Family::Circle => curve(|t| Point2::new(t.cos(), t.sin()) * a),
            Family::Ellipse => curve(|t| Point2::new(t.cos(), 0.5 * a * t.sin())),
            Family::Gear => curve(|t| {
                let r = 1.0 + GEAR_DEPTH * a * (GEAR_TEETH * t).sin();
                Point2::new(r * t.cos(), r * t.sin())
            }),
            Family::Square => {
                let h = 0.5 * a;
                poly(&[(-h, -h), (h, -h), (h, h), (-h, h)])
            }
            Family::Rectangle => {
                let h = 0.25 * a;
                poly(&[(-0.5, -h), (0.5, -h), (0.5, h), (-0.5, h)])
            }
            Family::Triangle => {
                let top = 0.9 * a;
                poly(&[(-0.5, 0.0), (0.5, 0.0), (0.1 * (b - 1.0), top)])
            }
            Family::Star => {
                let inner = 0.45 * a;
                (0..10)
                    .map(|i| {
                        let r = if i % 2 == 0 { 1.0 } else { inner };
                        let t = TAU * i as f64 / 10.0;
                        Point2::new(r * t.cos(), r * t.sin())
                    })
                    .collect()
            }
            Family::LetterL => {
                let w = 0.3 * a;
                let len = 1.2 * b;
                poly(&[(0.0, 0.0), (len, 0.0), (len, w), (w, w), (w, 2.0), (0.0, 2.0)])
            }
            Family::LetterT => {
                let w = 0.3 * a;
                let arm = 0.8 * b;
                poly(&[
                    (-w / 2.0, 0.0),
                    (w / 2.0, 0.0),
                    (w / 2.0, 2.0 - w),
                    (arm, 2.0 - w),
                    (arm, 2.0),
                    (-arm, 2.0),
                    (-arm, 2.0 - w),
                    (-w / 2.0, 2.0 - w),
                ])
            }
            Family::LetterE => {
                let w = 0.25 * a;
                let len = 1.2 * b;
                poly(&[
                    (0.0, 0.0),
                    (len, 0.0),
                    (len, w),
                    (w, w),
                    (w, 1.0 - w / 2.0),
                    (0.8 * len, 1.0 - w / 2.0),
                    (0.8 * len, 1.0 + w / 2.0),
                    (w, 1.0 + w / 2.0),
                    (w, 2.0 - w),
                    (len, 2.0 - w),
                    (len, 2.0),
                    (0.0, 2.0),
                ])
            }
            Family::LetterU => {
                let w = 0.3 * a;
                let width = 1.2 * b;
                poly(&[
                    (0.0, 0.0),
                    (width, 0.0),
                    (width, 2.0),
                    (width - w, 2.0),
                    (width - w, w),
                    (w, w),
                    (w, 2.0),
                    (0.0, 2.0),
                ])
            }
        };
        Shape2::new(pts, true)
            .and_then(|s| s.normalized())
            .expect("family outlines are valid")
            .with_label(self.id())
    }
}

fn curve(f: impl Fn(f64) -> Point2) -> Vec<Point2> {
    (0..CURVE_VERTICES)
        .map(|i| f(TAU * i as f64 / CURVE_VERTICES as f64))
        .collect()
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Family::ALL
            .into_iter()
            .find(|f| f.id() == key)
            .ok_or_else(|| Error::UnknownFamily(s.to_owned()))
    }
}

/// Template of `family` resampled to `n` points, moved by `g`, plus isotropic
/// Gaussian noise of standard deviation `noise_sigma` on every point.
pub fn synth_shape(family: &str, noise_sigma: f64, n: usize, g: &SimilarityTransform2, seed: u64) -> Result<Shape2> {
    let family: Family = family.parse()?;
    if !(noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }
    let base = apply_transform(&resample_arclength(&family.template(), n)?, g)?;
    add_noise(&base, noise_sigma, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Adds i.i.d. isotropic Gaussian noise to every point.
pub(crate) fn add_noise<R: Rng + ?Sized>(shape: &Shape2, sigma: f64, rng: &mut R) -> Result<Shape2> {
    if sigma == 0.0 {
        return Ok(shape.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let pts: Vec<Point2> = shape
        .points()
        .iter()
        .map(|&p| p + Point2::new(normal.sample(rng), normal.sample(rng)))
        .collect();
    let mut out = Shape2::new(pts, shape.is_closed())?;
    out.set_label(shape.label().map(str::to_owned));
    Ok(out)
}
