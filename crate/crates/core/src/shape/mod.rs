//! Shape containers and the geometry around them.
//!
//! A [`Shape`] is an ordered point sequence in the plane or in space with a
//! closed/open flag. Planar points double as complex numbers for the
//! likelihood computations in [`crate::likelihood`].

mod boundary;
pub mod io;
mod resample;
mod synth;

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use boundary::{extract_boundary, BinaryImage};
pub use io::{load_labeled_dir, load_shape2, load_shape3, save_shape};
pub use resample::{arc_length, resample_arclength};
pub(crate) use synth::add_noise;
pub use synth::{synth_shape, Family};

/// Coordinate-generic point operations shared by [`Point2`] and [`Point3`].
pub trait Point:
    Copy + PartialEq + std::fmt::Debug + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync
{
    const DIM: usize;
    const ORIGIN: Self;

    fn dot(self, other: Self) -> f64;

    fn coords(&self) -> Vec<f64>;

    fn from_coords(c: &[f64]) -> Option<Self>;

    fn norm_sqr(self) -> f64 {
        self.dot(self)
    }

    fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    fn is_finite(&self) -> bool {
        self.coords().iter().all(|c| c.is_finite())
    }

    fn lerp(self, other: Self, t: f64) -> Self {
        self + (other - self) * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }

    pub fn from_complex(z: Complex64) -> Self {
        Self::new(z.re, z.im)
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl Point for Point2 {
    const DIM: usize = 2;
    const ORIGIN: Self = Point2::new(0.0, 0.0);

    fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn coords(&self) -> Vec<f64> {
        vec![self.x, self.y]
    }

    fn from_coords(c: &[f64]) -> Option<Self> {
        match *c {
            [x, y] => Some(Self::new(x, y)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }
}

impl From<[f64; 3]> for Point3 {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Self { x, y, z }
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl Add for Point3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Point for Point3 {
    const DIM: usize = 3;
    const ORIGIN: Self = Point3::new(0.0, 0.0, 0.0);

    fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    fn coords(&self) -> Vec<f64> {
        vec![self.x, self.y, self.z]
    }

    fn from_coords(c: &[f64]) -> Option<Self> {
        match *c {
            [x, y, z] => Some(Self::new(x, y, z)),
            _ => None,
        }
    }
}

/// An ordered point sequence with at least three points, all finite, and no
/// two consecutive points identical.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape<P: Point = Point2> {
    points: Vec<P>,
    closed: bool,
    label: Option<String>,
}

pub type Shape2 = Shape<Point2>;
pub type Shape3 = Shape<Point3>;

impl<P: Point> Shape<P> {
    pub fn new(points: Vec<P>, closed: bool) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidShape(format!(
                "need at least 3 points, got {}",
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidShape(format!("point {i} is not finite")));
        }
        if let Some(i) = points.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::InvalidShape(format!("points {i} and {} are identical", i + 1)));
        }
        if closed && points.first() == points.last() {
            return Err(Error::InvalidShape(
                "closed shape repeats its first point at the end".into(),
            ));
        }
        Ok(Self {
            points,
            closed,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn points(&self) -> &[P] {
        &self.points
    }

    pub fn into_points(self) -> Vec<P> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn set_label(&mut self, label: Option<String>) {
        self.label = label;
    }

    pub fn centroid(&self) -> P {
        let sum = self.points.iter().fold(P::ORIGIN, |acc, &p| acc + p);
        sum * (1.0 / self.points.len() as f64)
    }

    /// Root-mean-square distance of the points from their centroid.
    pub fn rms_radius(&self) -> f64 {
        let c = self.centroid();
        let ss: f64 = self.points.iter().map(|&p| (p - c).norm_sqr()).sum();
        (ss / self.points.len() as f64).sqrt()
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, &p) in self.points.iter().enumerate() {
            for &q in &self.points[i + 1..] {
                best = best.max((p - q).norm_sqr());
            }
        }
        best.sqrt()
    }

    /// Maps every point through `f`, keeping the closed flag and label.
    pub fn map_points(&self, f: impl Fn(P) -> P) -> Result<Self> {
        let mut out = Shape::new(self.points.iter().map(|&p| f(p)).collect(), self.closed)?;
        out.label.clone_from(&self.label);
        Ok(out)
    }

    /// Same points in the opposite order, starting from the same first point.
    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        if self.closed {
            points[1..].reverse();
        } else {
            points.reverse();
        }
        Self {
            points,
            closed: self.closed,
            label: self.label.clone(),
        }
    }

    /// Translated so the centroid sits at the origin and scaled to unit RMS radius.
    pub fn normalized(&self) -> Result<Self> {
        let c = self.centroid();
        let r = self.rms_radius();
        if r <= 0.0 || !r.is_finite() {
            return Err(Error::InvalidShape("cannot normalize a shape with zero extent".into()));
        }
        self.map_points(|p| (p - c) * (1.0 / r))
    }
}

impl Shape2 {
    /// Shoelace signed area; positive for counter-clockwise closed contours.
    pub fn signed_area(&self) -> f64 {
        let n = self.points.len();
        (0..n)
            .map(|i| self.points[i].cross(self.points[(i + 1) % n]))
            .sum::<f64>()
            / 2.0
    }
}

/// Planar similarity transform `p -> scale * R(rotation) * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform2 {
    pub rotation: f64,
    pub scale: f64,
    pub translation: Point2,
}

impl Default for SimilarityTransform2 {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl SimilarityTransform2 {
    pub const IDENTITY: Self = Self {
        rotation: 0.0,
        scale: 1.0,
        translation: Point2::new(0.0, 0.0),
    };

    pub fn new(rotation: f64, scale: f64, translation: Point2) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        if !rotation.is_finite() || !translation.is_finite() {
            return Err(Error::InvalidParameter("transform has non-finite parameters".into()));
        }
        Ok(Self {
            rotation,
            scale,
            translation,
        })
    }

    /// The scale-rotation part as a single complex factor.
    pub fn linear(&self) -> Complex64 {
        Complex64::from_polar(self.scale, self.rotation)
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::from_complex(self.linear() * p.to_complex()) + self.translation
    }

    /// `self.then(other)` applies `self` first, then `other`.
    pub fn then(&self, other: &Self) -> Self {
        let t = Point2::from_complex(other.linear() * self.translation.to_complex()) + other.translation;
        Self {
            rotation: self.rotation + other.rotation,
            scale: self.scale * other.scale,
            translation: t,
        }
    }
}

pub fn apply_transform(shape: &Shape2, g: &SimilarityTransform2) -> Result<Shape2> {
    shape.map_points(|p| g.apply(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn square() -> Shape2 {
        Shape::new(
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
            true,
        )
        .unwrap()
    }

    #[test]
    fn rejects_short_and_repeated() {
        assert!(Shape::new(vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)], true).is_err());
        let dup = vec![Point2::new(0.0, 0.0), Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)];
        assert!(Shape::new(dup, true).is_err());
        let nan = vec![Point2::new(0.0, 0.0), Point2::new(f64::NAN, 0.0), Point2::new(1.0, 0.0)];
        assert!(Shape::new(nan, false).is_err());
    }

    #[test]
    fn identity_transform() {
        let s = square();
        assert_eq!(apply_transform(&s, &SimilarityTransform2::IDENTITY).unwrap(), s);
    }

    #[test]
    fn rotation_by_pi() {
        let g = SimilarityTransform2::new(PI, 1.0, Point2::ORIGIN).unwrap();
        let p = g.apply(Point2::new(1.0, 0.0));
        assert!((p.x + 1.0).abs() < 1e-15 && p.y.abs() < 1e-15);
    }

    #[test]
    fn scale_and_translate() {
        let g = SimilarityTransform2::new(0.0, 2.0, Point2::new(1.0, 1.0)).unwrap();
        assert_eq!(g.apply(Point2::new(1.0, 0.0)), Point2::new(3.0, 1.0));
    }

    #[test]
    fn nonpositive_scale_rejected() {
        assert!(SimilarityTransform2::new(0.0, 0.0, Point2::ORIGIN).is_err());
        assert!(SimilarityTransform2::new(0.0, -1.0, Point2::ORIGIN).is_err());
    }

    #[test]
    fn reversed_keeps_start() {
        let r = square().reversed();
        assert_eq!(r.points()[0], Point2::new(0.0, 0.0));
        assert_eq!(r.points()[1], Point2::new(0.0, 1.0));
        assert!(r.signed_area() < 0.0);
    }

    #[test]
    fn normalized_is_centered_unit_rms() {
        let s = square().map_points(|p| p * 37.0 + Point2::new(5.0, -2.0)).unwrap();
        let n = s.normalized().unwrap();
        assert!(n.centroid().norm() < 1e-12);
        assert!((n.rms_radius() - 1.0).abs() < 1e-12);
    }

    fn transform_strategy() -> impl Strategy<Value = SimilarityTransform2> {
        (-10.0..10.0f64, 0.1..5.0f64, -10.0..10.0f64, -10.0..10.0f64)
            .prop_map(|(a, s, x, y)| SimilarityTransform2::new(a, s, Point2::new(x, y)).unwrap())
    }

    proptest! {
        #[test]
        fn transforms_compose(g1 in transform_strategy(), g2 in transform_strategy(),
                              x in -5.0..5.0f64, y in -5.0..5.0f64) {
            let p = Point2::new(x, y);
            let seq = g2.apply(g1.apply(p));
            let composed = g1.then(&g2).apply(p);
            prop_assert!((seq - composed).norm() < 1e-12 * (1.0 + seq.norm()));
        }
    }
}
