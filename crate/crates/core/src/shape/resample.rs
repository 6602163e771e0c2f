use super::{Point, Shape};
use crate::error::{Error, Result};

/// Polyline length, including the closing segment for closed shapes.
pub fn arc_length<P: Point>(shape: &Shape<P>) -> f64 {
    segments(shape).map(|(a, b)| (b - a).norm()).sum()
}

fn segments<P: Point>(shape: &Shape<P>) -> impl Iterator<Item = (P, P)> + '_ {
    let pts = shape.points();
    let n = pts.len();
    let count = if shape.is_closed() { n } else { n - 1 };
    (0..count).map(move |i| (pts[i], pts[(i + 1) % n]))
}

/// Resamples to `n` points equally spaced in arc length, starting at the first vertex.
///
/// Closed shapes get spacing `L / n` around the loop; open shapes get `L / (n - 1)`
/// and keep both endpoints.
pub fn resample_arclength<P: Point>(shape: &Shape<P>, n: usize) -> Result<Shape<P>> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("resample needs n >= 3, got {n}")));
    }
    let segs: Vec<(P, P, f64)> = segments(shape).map(|(a, b)| (a, b, (b - a).norm())).collect();
    let total: f64 = segs.iter().map(|s| s.2).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroLength);
    }
    let step = if shape.is_closed() {
        total / n as f64
    } else {
        total / (n - 1) as f64
    };

    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..n {
        let target = k as f64 * step;
        while seg + 1 < segs.len() && seg_start + segs[seg].2 <= target {
            seg_start += segs[seg].2;
            seg += 1;
        }
        let (a, b, len) = segs[seg];
        let t = if len > 0.0 {
            ((target - seg_start) / len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        out.push(a.lerp(b, t));
    }
    if !shape.is_closed() {
        // pin the far endpoint exactly
        out[n - 1] = segs[segs.len() - 1].1;
    }

    let mut resampled = Shape::new(out, shape.is_closed())?;
    resampled.set_label(shape.label().map(str::to_owned));
    Ok(resampled)
}
