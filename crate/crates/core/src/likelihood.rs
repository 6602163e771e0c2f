//! Regularised marginal likelihood of a planar data shape against a template.
//!
//! Translation, rotation, scale and noise level are integrated out in closed
//! form, leaving
//!
//! ```text
//! log P(y | v) = -(n + alpha) * ln[ n Var(y) - n^2 |Cov(v, y)|^2 / (n Var(v) + 1/B^2) + 2 zeta ]
//! ```
//!
//! up to a normalisation that depends only on `n` and `alpha`. Points are
//! treated as complex numbers and `Cov(v, y) = (1/n) sum (v_i - v̄) conj(y_i - ȳ)`.
//! The sum over point correspondences is restricted to cyclic shifts of the
//! template, optionally also of its reversal.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;
use crate::shape::{Point2, Shape2};

/// How the effective sample count `ñ` is derived from the point count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectiveCount {
    #[default]
    EqualN,
}

/// Whether `zeta` is absolute or relative to the squared data diameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZetaScale {
    Absolute,
    #[default]
    DataRelative,
}

/// Reduction over the correspondence set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrespondenceMode {
    /// Best single correspondence.
    Map,
    /// Log of the uniform average over all correspondences.
    #[default]
    Marginal,
}

impl std::str::FromStr for CorrespondenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "map" => Ok(Self::Map),
            "marginal" => Ok(Self::Marginal),
            _ => Err(Error::InvalidParameter(format!("unknown correspondence mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Regulators {
    /// Scale-prior regulator; enters as `1/B^2`.
    pub b: f64,
    /// Noise-prior exponent.
    pub alpha: f64,
    /// Additive regulator; see [`ZetaScale`].
    pub zeta: f64,
    pub zeta_scale: ZetaScale,
    pub effective_count: EffectiveCount,
    pub correspondence: CorrespondenceMode,
    pub allow_reversal: bool,
}

impl Default for Regulators {
    fn default() -> Self {
        Self {
            b: 1e3,
            alpha: 1.0,
            zeta: 1e-8,
            zeta_scale: ZetaScale::DataRelative,
            effective_count: EffectiveCount::EqualN,
            correspondence: CorrespondenceMode::Marginal,
            allow_reversal: false,
        }
    }
}

impl Regulators {
    /// Regulators with an absolute `zeta`.
    pub fn absolute(b: f64, alpha: f64, zeta: f64) -> Result<Self> {
        let regs = Self {
            b,
            alpha,
            zeta,
            zeta_scale: ZetaScale::Absolute,
            ..Self::default()
        };
        regs.validate()?;
        Ok(regs)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("B", self.b), ("alpha", self.alpha), ("zeta", self.zeta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "regulator {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Copy with `zeta` made absolute for the data shape `y`.
    pub fn resolve_for(&self, y: &Shape2) -> Self {
        match self.zeta_scale {
            ZetaScale::Absolute => *self,
            ZetaScale::DataRelative => Self {
                zeta: self.zeta * y.diameter().powi(2),
                zeta_scale: ZetaScale::Absolute,
                ..*self
            },
        }
    }

    pub fn effective_count(&self, n: usize) -> f64 {
        match self.effective_count {
            EffectiveCount::EqualN => n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SufficientStats {
    pub n_tilde: f64,
    pub var_y: f64,
    pub var_v: f64,
    pub cov_vy: Complex64,
}

impl SufficientStats {
    /// `|Cov|^2 <= Var(v) Var(y)` up to rounding.
    pub fn satisfies_cauchy_schwarz(&self) -> bool {
        self.cov_vy.norm_sqr() <= self.var_v * self.var_y * (1.0 + 1e-12) + f64::MIN_POSITIVE
    }
}

fn centered(shape: &Shape2) -> Vec<Complex64> {
    let c = shape.centroid().to_complex();
    shape.points().iter().map(|p| p.to_complex() - c).collect()
}

fn mean_sqr(z: &[Complex64]) -> f64 {
    z.iter().map(|w| w.norm_sqr()).sum::<f64>() / z.len() as f64
}

pub fn suff_stats(y: &Shape2, v: &Shape2) -> Result<SufficientStats> {
    suff_stats_with(y, v, EffectiveCount::EqualN)
}

pub fn suff_stats_with(y: &Shape2, v: &Shape2, mode: EffectiveCount) -> Result<SufficientStats> {
    if y.len() != v.len() {
        return Err(Error::CountMismatch {
            left: y.len(),
            right: v.len(),
        });
    }
    let (yc, vc) = (centered(y), centered(v));
    let n = y.len() as f64;
    let n_tilde = match mode {
        EffectiveCount::EqualN => n,
    };
    let cov = vc.iter().zip(&yc).map(|(v, y)| v * y.conj()).sum::<Complex64>() / n_tilde;
    Ok(SufficientStats {
        n_tilde,
        var_y: mean_sqr(&yc) * n / n_tilde,
        var_v: mean_sqr(&vc) * n / n_tilde,
        cov_vy: cov,
    })
}

/// The bracketed quantity raised to `-(n + alpha)`.
pub fn bracket(stats: &SufficientStats, regs: &Regulators) -> f64 {
    let nt = stats.n_tilde;
    let denom = nt * stats.var_v + 1.0 / (regs.b * regs.b);
    nt * stats.var_y - nt * nt * stats.cov_vy.norm_sqr() / denom + 2.0 * regs.zeta
}

/// `-(n + alpha) ln(bracket)`, with `regs.zeta` taken as absolute.
pub fn log_marginal_kernel(stats: &SufficientStats, n: usize, regs: &Regulators) -> Result<f64> {
    kernel_from_bracket(bracket(stats, regs), n, regs)
}

/// The same bracket for centred, already-paired points, evaluated as the
/// ridge residual `min_a sum |y_i - a v_i|^2 + |a|^2 / B^2` plus `2 zeta`.
///
/// Equal to [`bracket`] with `ñ = n`, but without the cancellation that
/// formula suffers when the template fits the data almost exactly.
fn fitted_bracket(yc: &[Complex64], vc: &[Complex64], ridge: f64, zeta: f64) -> f64 {
    let inner: Complex64 = vc.iter().zip(yc).map(|(v, y)| v.conj() * y).sum();
    let vv: f64 = vc.iter().map(|v| v.norm_sqr()).sum();
    let a = inner / (vv + ridge);
    let residual: f64 = vc.iter().zip(yc).map(|(v, y)| (y - a * v).norm_sqr()).sum();
    residual + ridge * a.norm_sqr() + 2.0 * zeta
}

fn kernel_from_bracket(b: f64, n: usize, regs: &Regulators) -> Result<f64> {
    if !(b > 0.0) {
        return Err(Error::RegulatorUnderflow { bracket: b });
    }
    Ok(-(n as f64 + regs.alpha) * b.ln())
}

/// Pairs data point `i` with template point `(i + cyclic_offset) mod n` of the
/// template, or of its reversal (same start point, opposite direction).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Correspondence {
    pub cyclic_offset: usize,
    pub reversed: bool,
}

impl Correspondence {
    /// Template points reordered so that index `i` pairs with data point `i`.
    pub fn apply(&self, template: &Shape2) -> Shape2 {
        let base = if self.reversed {
            template.reversed()
        } else {
            template.clone()
        };
        let mut pts: Vec<Point2> = base.into_points();
        let k = self.cyclic_offset % pts.len();
        pts.rotate_left(k);
        let mut out = Shape2::new(pts, template.is_closed()).expect("rotation keeps a valid shape");
        out.set_label(template.label().map(str::to_owned));
        out
    }
}

/// Kernel value for every cyclic offset (and reversal if allowed), in order
/// offsets `0..n` forward, then `0..n` reversed.
pub fn correspondence_scores(
    y: &Shape2,
    template: &Shape2,
    regs: &Regulators,
    allow_reversal: bool,
) -> Result<Vec<(Correspondence, f64)>> {
    let n = y.len();
    if template.len() != n {
        return Err(Error::CountMismatch {
            left: n,
            right: template.len(),
        });
    }
    regs.validate()?;
    let regs = regs.resolve_for(y);
    let ridge = 1.0 / (regs.b * regs.b);
    let yc = centered(y);

    let orientations: &[bool] = if allow_reversal { &[false, true] } else { &[false] };
    let mut out = Vec::with_capacity(n * orientations.len());
    let mut shifted = vec![Complex64::new(0.0, 0.0); n];
    for &reversed in orientations {
        let base = if reversed {
            template.reversed()
        } else {
            template.clone()
        };
        let vc = centered(&base);
        for offset in 0..n {
            for (i, s) in shifted.iter_mut().enumerate() {
                *s = vc[(i + offset) % n];
            }
            let corr = Correspondence {
                cyclic_offset: offset,
                reversed,
            };
            let b = fitted_bracket(&yc, &shifted, ridge, regs.zeta);
            out.push((corr, kernel_from_bracket(b, n, &regs)?));
        }
    }
    Ok(out)
}

/// Best correspondence and the reduced value under `regs.correspondence`.
///
/// In marginal mode the value is `ln((1/K) sum_b exp(L_b))` over the `K`
/// correspondences searched.
pub fn best_correspondence(
    y: &Shape2,
    template: &Shape2,
    regs: &Regulators,
    allow_reversal: bool,
) -> Result<(Correspondence, f64)> {
    let scores = correspondence_scores(y, template, regs, allow_reversal)?;
    let (best, max) = scores
        .iter()
        .copied()
        .fold(None, |acc: Option<(Correspondence, f64)>, (c, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((c, v)),
        })
        .expect("at least three correspondences");
    let value = match regs.correspondence {
        CorrespondenceMode::Map => max,
        CorrespondenceMode::Marginal => {
            let values: Vec<f64> = scores.iter().map(|s| s.1).collect();
            log_sum_exp(&values) - (values.len() as f64).ln()
        }
    };
    Ok((best, value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::{resample_arclength, Family, Point, SimilarityTransform2};
    use proptest::prelude::*;

    fn square() -> Shape2 {
        Shape2::new(
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

    fn shape_from(pts: &[(f64, f64)]) -> Shape2 {
        Shape2::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect(), true).unwrap()
    }

    fn rotate(s: &Shape2, theta: f64) -> Shape2 {
        s.map_points(|p| Point2::from_complex(Complex64::from_polar(1.0, theta) * p.to_complex()))
            .unwrap()
    }

    #[test]
    fn self_covariance_equals_variance() {
        let st = suff_stats(&square(), &square()).unwrap();
        assert!((st.var_y - st.var_v).abs() < 1e-15);
        assert!((st.cov_vy.re - st.var_y).abs() < 1e-15);
        assert!(st.cov_vy.im.abs() < 1e-15);
        assert_eq!(st.n_tilde, 4.0);
        // unit square corners: centered radius^2 = 0.5
        assert!((st.var_y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn translation_leaves_stats_unchanged() {
        let v = square();
        let y = v.map_points(|p| p + Point2::new(3.5, -7.25)).unwrap();
        let a = suff_stats(&y, &v).unwrap();
        let b = suff_stats(&v, &v).unwrap();
        assert!((a.var_y - b.var_y).abs() < 1e-13);
        assert!((a.cov_vy - b.cov_vy).norm() < 1e-13);
    }

    #[test]
    fn rotation_turns_covariance_phase_backwards() {
        let v = shape_from(&[(0.0, 0.0), (2.0, 0.3), (1.1, 1.7), (-0.4, 0.9)]);
        let theta = 0.7;
        let base = suff_stats(&v, &v).unwrap();
        let rot = suff_stats(&rotate(&v, theta), &v).unwrap();
        assert!((rot.cov_vy.norm() - base.cov_vy.norm()).abs() < 1e-13);
        // direct evaluation: (1/n) sum v' conj(e^{i theta} v') = e^{-i theta} Var(v)
        let expected = Complex64::from_polar(base.var_v, -theta);
        assert!((rot.cov_vy - expected).norm() < 1e-13);
    }

    #[test]
    fn mismatched_counts() {
        let tri = shape_from(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        assert!(matches!(suff_stats(&tri, &square()), Err(Error::CountMismatch { .. })));
        let regs = Regulators::default();
        assert!(best_correspondence(&tri, &square(), &regs, false).is_err());
    }

    #[test]
    fn perfect_match_saturates_bracket() {
        let regs = Regulators::absolute(1e9, 1.0, 1e-6).unwrap();
        let st = suff_stats(&square(), &square()).unwrap();
        let value = log_marginal_kernel(&st, 4, &regs).unwrap();
        let expected = -(4.0 + 1.0) * (2e-6f64).ln();
        assert!((value - expected).abs() < 1e-6, "{value} vs {expected}");
    }

    #[test]
    fn orthogonal_template() {
        let regs = Regulators::absolute(10.0, 2.0, 0.01).unwrap();
        let st = SufficientStats {
            n_tilde: 5.0,
            var_y: 0.8,
            var_v: 1.3,
            cov_vy: Complex64::new(0.0, 0.0),
        };
        let v = log_marginal_kernel(&st, 5, &regs).unwrap();
        assert!((v + 7.0 * (5.0f64 * 0.8 + 0.02).ln()).abs() < 1e-14);
    }

    #[test]
    fn degenerate_template_reduces_to_orthogonal_case() {
        let regs = Regulators::absolute(10.0, 1.0, 0.01).unwrap();
        let st = SufficientStats {
            n_tilde: 4.0,
            var_y: 0.5,
            var_v: 0.0,
            cov_vy: Complex64::new(0.0, 0.0),
        };
        let v = log_marginal_kernel(&st, 4, &regs).unwrap();
        assert!((v + 5.0 * (2.0f64 + 0.02).ln()).abs() < 1e-14);
    }

    #[test]
    fn nonpositive_bracket_is_underflow() {
        let regs = Regulators::absolute(1e3, 1.0, 1e-300).unwrap();
        // violates Cauchy-Schwarz on purpose so the bracket goes negative
        let st = SufficientStats {
            n_tilde: 3.0,
            var_y: 1.0,
            var_v: 1.0,
            cov_vy: Complex64::new(2.0, 0.0),
        };
        assert!(matches!(
            log_marginal_kernel(&st, 3, &regs),
            Err(Error::RegulatorUnderflow { .. })
        ));
    }

    #[test]
    fn invalid_regulators() {
        assert!(Regulators::absolute(0.0, 1.0, 1.0).is_err());
        assert!(Regulators::absolute(1.0, -1.0, 1.0).is_err());
        assert!(Regulators::absolute(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn cyclic_shift_is_recovered() {
        let t = resample_arclength(&Family::LetterL.template(), 40).unwrap();
        let mut pts = t.points().to_vec();
        pts.rotate_left(7);
        let y = Shape2::new(pts, true).unwrap();
        for mode in [CorrespondenceMode::Map, CorrespondenceMode::Marginal] {
            let regs = Regulators {
                correspondence: mode,
                ..Regulators::default()
            };
            let (c, v) = best_correspondence(&y, &t, &regs, false).unwrap();
            let (c0, v0) = best_correspondence(&t, &t, &regs, false).unwrap();
            assert_eq!(c.cyclic_offset, 7);
            assert!(!c.reversed);
            assert_eq!(c0.cyclic_offset, 0);
            assert!((v - v0).abs() < 1e-9, "{v} vs {v0}");
            // applying the recovered correspondence realigns the template
            assert_eq!(c.apply(&t).points(), y.points());
        }
    }

    #[test]
    fn mirror_image_selects_reversal() {
        // T is mirror-symmetric, so its mirror image is the same outline traced
        // clockwise: only the reversed template can match it exactly.
        let outline = Family::LetterT.template();
        let pts = outline.points();
        let mid = (pts[0] + pts[1]) * 0.5;
        let mut on_axis = vec![mid];
        on_axis.extend_from_slice(&pts[1..]);
        on_axis.push(pts[0]);
        let t = resample_arclength(&Shape2::new(on_axis, true).unwrap(), 36).unwrap();
        let y = t.map_points(|p| Point2::new(-p.x, p.y)).unwrap();
        let regs = Regulators::default();
        let scores = correspondence_scores(&y, &t, &regs, true).unwrap();
        let best_fwd = scores
            .iter()
            .filter(|s| !s.0.reversed)
            .map(|s| s.1)
            .fold(f64::MIN, f64::max);
        let best_rev = scores
            .iter()
            .filter(|s| s.0.reversed)
            .map(|s| s.1)
            .fold(f64::MIN, f64::max);
        assert!(best_rev > best_fwd);
        let (c, _) = best_correspondence(&y, &t, &regs, true).unwrap();
        assert!(c.reversed);
        let (_, self_match) = best_correspondence(
            &t,
            &t,
            &Regulators {
                correspondence: CorrespondenceMode::Map,
                ..regs
            },
            true,
        )
        .unwrap();
        assert!((best_rev - self_match).abs() < 1e-6 * self_match.abs());
    }

    #[test]
    fn marginal_bounded_by_map() {
        let s = square();
        let map = Regulators {
            correspondence: CorrespondenceMode::Map,
            ..Regulators::default()
        };
        let marg = Regulators::default();
        let (_, vmap) = best_correspondence(&s, &s, &map, true).unwrap();
        let (_, vmarg) = best_correspondence(&s, &s, &marg, true).unwrap();
        assert!(vmarg >= vmap - (8f64).ln() - 1e-12);
        assert!(vmarg <= vmap + 1e-12);
    }

    #[test]
    fn data_relative_zeta_scales_with_diameter() {
        let s = square().map_points(|p| p * 10.0).unwrap();
        let r = Regulators::default().resolve_for(&s);
        assert_eq!(r.zeta_scale, ZetaScale::Absolute);
        assert!((r.zeta - 1e-8 * 200.0).abs() < 1e-18);
    }

    fn small_shape() -> impl Strategy<Value = Shape2> {
        prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 3..12)
            .prop_filter_map("valid shape", |pts| {
                Shape2::new(pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect(), true).ok()
            })
            .prop_filter("non-degenerate", |s| s.rms_radius() > 1e-3)
    }

    fn pair() -> impl Strategy<Value = (Shape2, Shape2)> {
        small_shape().prop_flat_map(|y| {
            let n = y.len();
            prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), n)
                .prop_filter_map("valid template", |pts| {
                    Shape2::new(pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect(), true).ok()
                })
                .prop_map(move |v| (y.clone(), v))
        })
    }

    proptest! {
        #[test]
        fn cauchy_schwarz_and_bracket_positive((y, v) in pair()) {
            let st = suff_stats(&y, &v).unwrap();
            prop_assert!(st.satisfies_cauchy_schwarz());
            let regs = Regulators::default().resolve_for(&y);
            prop_assert!(bracket(&st, &regs) > 0.0);
        }

        #[test]
        fn translation_and_rotation_invariance((y, v) in pair(), tx in -50.0..50.0f64,
                                               ty in -50.0..50.0f64, theta in -7.0..7.0f64) {
            let regs = Regulators::absolute(1e3, 1.0, 1e-3).unwrap();
            let n = y.len();
            let base = log_marginal_kernel(&suff_stats(&y, &v).unwrap(), n, &regs).unwrap();
            let moved = y.map_points(|p| p + Point2::new(tx, ty)).unwrap();
            let t = log_marginal_kernel(&suff_stats(&moved, &v).unwrap(), n, &regs).unwrap();
            let r = log_marginal_kernel(&suff_stats(&rotate(&y, theta), &v).unwrap(), n, &regs).unwrap();
            prop_assert!((t - base).abs() < 1e-10);
            prop_assert!((r - base).abs() < 1e-10);
        }

        #[test]
        fn residual_form_matches_stats_form((y, v) in pair()) {
            let regs = Regulators::absolute(20.0, 1.5, 1e-2).unwrap();
            let scores = correspondence_scores(&y, &v, &regs, false).unwrap();
            let direct = log_marginal_kernel(&suff_stats(&y, &v).unwrap(), y.len(), &regs).unwrap();
            prop_assert!((scores[0].1 - direct).abs() < 1e-9 * direct.abs().max(1.0));
        }

        #[test]
        fn bracket_under_data_scaling((y, v) in pair(), c in 0.1..10.0f64) {
            let regs = Regulators::absolute(50.0, 1.0, 1e-2).unwrap();
            let st = suff_stats(&y, &v).unwrap();
            let g = SimilarityTransform2::new(0.0, c, Point2::ORIGIN).unwrap();
            let scaled = crate::shape::apply_transform(&y, &g).unwrap();
            let st_c = suff_stats(&scaled, &v).unwrap();
            let b = bracket(&st, &regs);
            let expected = c * c * (b - 2.0 * regs.zeta) + 2.0 * regs.zeta;
            prop_assert!((bracket(&st_c, &regs) - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        }

        #[test]
        fn increasing_in_covariance_magnitude(var_y in 0.1..5.0f64, var_v in 0.1..5.0f64,
                                              f1 in 0.0..1.0f64, f2 in 0.0..1.0f64, phase in 0.0..std::f64::consts::TAU) {
            prop_assume!((f1 - f2).abs() > 1e-6);
            let regs = Regulators::absolute(1e3, 1.0, 1e-4).unwrap();
            let bound = (var_y * var_v).sqrt();
            let mk = |f: f64| SufficientStats {
                n_tilde: 6.0, var_y, var_v, cov_vy: Complex64::from_polar(f * bound, phase),
            };
            let (lo, hi) = if f1 < f2 { (f1, f2) } else { (f2, f1) };
            let a = log_marginal_kernel(&mk(lo), 6, &regs).unwrap();
            let b = log_marginal_kernel(&mk(hi), 6, &regs).unwrap();
            prop_assert!(b > a);
        }
    }
}
