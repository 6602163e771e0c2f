//! Rotation marginalisation for spatial shapes via unit quaternions.
//!
//! With translation integrated out, the log likelihood of data `y` against a
//! rotated template `R(q) v` is
//!
//! ```text
//! E(q) = -sum_i |y'_i - R(q) v'_i|^2 / (2 sigma^2) = offset + scale_factor * q^T N q
//! ```
//!
//! where primes denote centred point sets, `scale_factor = 1/sigma^2` and `N`
//! is the traceless symmetric 4x4 matrix with `q^T N q = sum_i y'_i . R(q) v'_i`
//! on the unit sphere. Averaging `exp(scale_factor * q^T N q)` over uniformly
//! distributed unit quaternions marginalises the rotation under Haar measure.
//!
//! Everything here works with the convergent sign: larger `q^T N q` is a better
//! fit, so the integrand peaks at the top eigenvector of `N`.

use std::ops::{Mul, Neg};

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shape::{Point, Point3, Shape3};

const UNIT_TOLERANCE: f64 = 1e-12;
const MC_CHUNK: usize = 1 << 16;

/// `a + b i + c j + d k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Quaternion {
    pub const ONE: Self = Self::new(1.0, 0.0, 0.0, 0.0);
    pub const I: Self = Self::new(0.0, 1.0, 0.0, 0.0);
    pub const J: Self = Self::new(0.0, 0.0, 1.0, 0.0);
    pub const K: Self = Self::new(0.0, 0.0, 0.0, 1.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    /// A unit quaternion; fails unless `|q|^2 = 1` to 1e-12.
    pub fn unit(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let q = Self::new(a, b, c, d);
        q.check_unit()?;
        Ok(q)
    }

    pub fn from_vector(v: Point3) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    /// Rotation by `angle` radians about `axis`.
    pub fn from_axis_angle(axis: Point3, angle: f64) -> Result<Self> {
        let len = axis.norm();
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::InvalidParameter("rotation axis must be non-zero".into()));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let u = axis * (s / len);
        Ok(Self::new(c, u.x, u.y, u.z))
    }

    /// Uniform on the unit 3-sphere: a normalised standard Gaussian 4-vector.
    pub fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let q = Self::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            let n = q.norm();
            if n > 1e-150 {
                return q.scale(1.0 / n);
            }
        }
    }

    pub fn vector(self) -> Point3 {
        Point3::new(self.b, self.c, self.d)
    }

    pub fn conj(self) -> Self {
        Self::new(self.a, -self.b, -self.c, -self.d)
    }

    pub fn norm_sqr(self) -> f64 {
        self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn dot(self, other: Self) -> f64 {
        self.a * other.a + self.b * other.b + self.c * other.c + self.d * other.d
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    fn check_unit(self) -> Result<()> {
        let norm_sqr = self.norm_sqr();
        if (norm_sqr - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitQuaternion { norm_sqr });
        }
        Ok(())
    }
}

impl Mul for Quaternion {
    type Output = Self;

    /// Hamilton product.
    fn mul(self, q: Self) -> Self {
        let p = self;
        Self::new(
            p.a * q.a - p.b * q.b - p.c * q.c - p.d * q.d,
            p.a * q.b + p.b * q.a + p.c * q.d - p.d * q.c,
            p.a * q.c - p.b * q.d + p.c * q.a + p.d * q.b,
            p.a * q.d + p.b * q.c - p.c * q.b + p.d * q.a,
        )
    }
}

impl Neg for Quaternion {
    type Output = Self;

    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

pub fn quat_multiply(p: Quaternion, q: Quaternion) -> Quaternion {
    p * q
}

/// `pq - qp`; for pure quaternions this is `2 (p x q)`.
pub fn quat_commutator(p: Quaternion, q: Quaternion) -> Quaternion {
    let (pq, qp) = (p * q, q * p);
    Quaternion::new(pq.a - qp.a, pq.b - qp.b, pq.c - qp.c, pq.d - qp.d)
}

/// Vector part of `q (0, p) q*`.
pub fn rotate(q: Quaternion, p: Point3) -> Result<Point3> {
    q.check_unit()?;
    Ok((q * Quaternion::from_vector(p) * q.conj()).vector())
}

pub fn rotate_shape(q: Quaternion, shape: &Shape3) -> Result<Shape3> {
    q.check_unit()?;
    shape.map_points(|p| (q * Quaternion::from_vector(p) * q.conj()).vector())
}

fn check_pair(y: &Shape3, v: &Shape3, sigma: f64) -> Result<()> {
    if y.len() != v.len() {
        return Err(Error::CountMismatch {
            left: y.len(),
            right: v.len(),
        });
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    Ok(())
}

fn centred(shape: &Shape3) -> Vec<Point3> {
    let c = shape.centroid();
    shape.points().iter().map(|&p| p - c).collect()
}

/// `|sum Y|^2 / (2 n sigma^2) - sum |Y|^2 / (2 sigma^2)` with `Y = y - v_rotated`.
///
/// Evaluated as minus the centred residual sum of squares, which is the same
/// quantity without the cancellation.
pub fn translation_marginal_exponent(y: &Shape3, v_rotated: &Shape3, sigma: f64) -> Result<f64> {
    check_pair(y, v_rotated, sigma)?;
    let residuals: Vec<Point3> = y
        .points()
        .iter()
        .zip(v_rotated.points())
        .map(|(&a, &b)| a - b)
        .collect();
    let n = residuals.len() as f64;
    let mean = residuals.iter().fold(Point3::ORIGIN, |acc, &r| acc + r) * (1.0 / n);
    let ss: f64 = residuals.iter().map(|&r| (r - mean).norm_sqr()).sum();
    Ok(-ss / (2.0 * sigma * sigma))
}

/// Quadratic form in `q` for the rotation-dependent part of the exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationKernel {
    matrix: Matrix4<f64>,
    eigenvalues: [f64; 4],
    eigenvectors: [Quaternion; 4],
    n: usize,
    sigma: f64,
    scale_factor: f64,
    offset: f64,
}

impl RotationKernel {
    /// Kernel for an arbitrary symmetric `matrix`, with `scale_factor = 1/sigma^2`
    /// and no offset. Used for fixtures and for externally computed kernels.
    pub fn from_matrix(matrix: [[f64; 4]; 4], sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        let m = Matrix4::from_fn(|i, j| matrix[i][j]);
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("kernel matrix must be finite".into()));
        }
        let scale = m.amax().max(1.0);
        for i in 0..4 {
            for j in 0..i {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidParameter("kernel matrix must be symmetric".into()));
                }
            }
        }
        Ok(Self::assemble(m, 0, sigma, 0.0))
    }

    fn assemble(matrix: Matrix4<f64>, n: usize, sigma: f64, offset: f64) -> Self {
        let eig = SymmetricEigen::new(matrix);
        let mut order = [0usize, 1, 2, 3];
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let eigenvalues = order.map(|i| eig.eigenvalues[i]);
        let eigenvectors = order.map(|i| {
            let col = eig.eigenvectors.column(i);
            Quaternion::new(col[0], col[1], col[2], col[3])
        });
        Self {
            matrix,
            eigenvalues,
            eigenvectors,
            n,
            sigma,
            scale_factor: 1.0 / (sigma * sigma),
            offset,
        }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    /// Descending.
    pub fn eigenvalues(&self) -> [f64; 4] {
        self.eigenvalues
    }

    /// Unit eigenvector for the largest eigenvalue: the best-fitting rotation.
    pub fn top_eigenvector(&self) -> Quaternion {
        self.eigenvectors[0]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `1/sigma^2`.
    pub fn scale_factor(&self) -> f64 {
        self.scale_factor
    }

    /// Rotation-independent part of the exponent, `-(sum |y'|^2 + sum |v'|^2) / (2 sigma^2)`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn quadratic_form(&self, q: Quaternion) -> f64 {
        let v = nalgebra::Vector4::from(q.to_array());
        v.dot(&(self.matrix * v))
    }

    /// `offset + scale_factor * q^T N q`, the translation-marginal exponent at rotation `q`.
    pub fn exponent(&self, q: Quaternion) -> f64 {
        self.offset + self.scale_factor * self.quadratic_form(q)
    }

    fn scaled_eigenvalues(&self) -> [f64; 4] {
        self.eigenvalues.map(|l| self.scale_factor * l)
    }
}

/// Builds `N` from the 3x3 cross-covariance `S_ab = sum v'_a y'_b` of the centred sets.
pub fn build_rotation_kernel(y: &Shape3, v: &Shape3, sigma: f64) -> Result<RotationKernel> {
    check_pair(y, v, sigma)?;
    Ok(kernel_from_centred(&centred(y), &centred(v), sigma))
}

fn kernel_from_centred(yc: &[Point3], vc: &[Point3], sigma: f64) -> RotationKernel {
    let mut s = [[0.0f64; 3]; 3];
    for (p, q) in vc.iter().zip(yc) {
        let (a, b) = (p.coords(), q.coords());
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] += a[i] * b[j];
            }
        }
    }
    let [[sxx, sxy, sxz], [syx, syy, syz], [szx, szy, szz]] = s;
    let m = Matrix4::new(
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx,
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz,
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy,
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    );
    let ss: f64 = yc.iter().chain(vc).map(|p| p.norm_sqr()).sum();
    RotationKernel::assemble(m, yc.len(), sigma, -ss / (2.0 * sigma * sigma))
}

/// `det(scale_factor * N + i k I) = prod_i (scale_factor * lambda_i + i k)`.
pub fn det_m(kernel: &RotationKernel, k: f64) -> Complex64 {
    kernel
        .scaled_eigenvalues()
        .iter()
        .map(|&l| Complex64::new(l, k))
        .product()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    /// `ln mean exp(scale_factor * q^T N q)` over uniform unit quaternions.
    pub value: f64,
    /// Standard error of `value` (delta method).
    pub std_error: f64,
    pub samples: usize,
}

/// Monte Carlo average over the unit 3-sphere, see [`rotation_marginal_mc_with`].
pub fn rotation_marginal_mc(kernel: &RotationKernel, samples: usize, seed: u64) -> Result<McEstimate> {
    rotation_marginal_mc_with(kernel, samples, seed, false)
}

/// Monte Carlo average of `exp(scale_factor * q^T N q)` over uniform unit `q`.
///
/// Samples are split into fixed-size chunks, each drawn from its own ChaCha
/// stream and summed in chunk order, so the result depends only on `seed` and
/// `samples`, not on the thread count. With `hemisphere`, samples are folded to
/// `a >= 0`; the integrand is even in `q`, so the estimate is unchanged.
pub fn rotation_marginal_mc_with(
    kernel: &RotationKernel,
    samples: usize,
    seed: u64,
    hemisphere: bool,
) -> Result<McEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidParameter(format!(
            "need at least 1000 samples, got {samples}"
        )));
    }
    let sf = kernel.scale_factor;
    let shift = sf * kernel.eigenvalues[0];
    let chunks = samples.div_ceil(MC_CHUNK);
    let sums: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let mut q = Quaternion::random_unit(&mut rng);
                if hemisphere && q.a < 0.0 {
                    q = -q;
                }
                let w = (sf * kernel.quadratic_form(q) - shift).exp();
                s1 += w;
                s2 += w * w;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |acc, s| (acc.0 + s.0, acc.1 + s.1));
    let n = samples as f64;
    let mean = s1 / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        value: shift + mean.ln(),
        std_error: (var / n).sqrt() / mean,
        samples,
    })
}

/// Series for the same average as [`rotation_marginal_mc`], truncated at `order`.
///
/// Writing the scaled eigenvalues as `mean - e_i`, the inverse square root of
/// the determinant factors as `prod_i (1 + e_i z)^(-1/2) = sum_j c_j z^j`, and
/// integrating term by term against the Fourier kernel gives
/// `ln <exp> = mean + ln sum_{j <= order} c_j / (j + 1)!`. The normalisation is
/// the one for which `N = 0` gives exactly 0. The terms are bounded by
/// `rho^j / j!` with `rho = max |e_i|`; if that bound is still growing at the
/// truncation order the result is not trustworthy and an error is returned.
pub fn rotation_marginal_series(kernel: &RotationKernel, order: usize) -> Result<f64> {
    if order < 1 {
        return Err(Error::InvalidParameter("series order must be at least 1".into()));
    }
    let lambda = kernel.scaled_eigenvalues();
    let mean = lambda.iter().sum::<f64>() / 4.0;
    let eps = lambda.map(|l| mean - l);
    let spread = eps.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    if spread / (order as f64 + 1.0) >= 1.0 {
        return Err(Error::SeriesOutsideRadius { spread, order });
    }
    // ln prod (1 + e z)^(-1/2) = sum_m l_m z^m with l_m = (-1)^m p_m / (2m)
    let log_coeffs: Vec<f64> = (1..=order)
        .map(|m| {
            let p: f64 = eps.iter().map(|e| e.powi(m as i32)).sum();
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            sign * p / (2.0 * m as f64)
        })
        .collect();
    // exponentiate the power series: j c_j = sum_m m l_m c_{j-m}
    let mut c = vec![1.0];
    for j in 1..=order {
        let s: f64 = (1..=j).map(|m| m as f64 * log_coeffs[m - 1] * c[j - m]).sum();
        c.push(s / j as f64);
    }
    let mut factorial = 1.0;
    let mut total = 0.0;
    for (j, cj) in c.iter().enumerate() {
        factorial *= (j + 1) as f64;
        total += cj / factorial;
    }
    if !(total > 0.0) {
        return Err(Error::SeriesOutsideRadius { spread, order });
    }
    Ok(mean + total.ln())
}
