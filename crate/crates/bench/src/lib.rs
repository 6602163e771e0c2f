//! Fixtures shared by the benchmarks.

use shapemap_core::quat3d::{build_rotation_kernel, rotate_shape, Quaternion, RotationKernel};
use shapemap_core::{synth_shape, BinaryImage, Point3, Shape2, Shape3, SimilarityTransform2};

/// Noisy, moved copy of a family outline.
pub fn shape(family: &str, n: usize, seed: u64) -> Shape2 {
    let g = SimilarityTransform2::new(0.3 * seed as f64, 1.5, Default::default()).unwrap();
    synth_shape(family, 0.02, n, &g, seed).unwrap()
}

/// Filled disc of radius `size / 3` centred in a `size` x `size` image.
pub fn disc_image(size: usize) -> BinaryImage {
    let c = size as f64 / 2.0;
    let r2 = (size as f64 / 3.0).powi(2);
    BinaryImage::from_fn(size, size, |col, row| {
        let (dx, dy) = (col as f64 + 0.5 - c, row as f64 + 0.5 - c);
        dx * dx + dy * dy <= r2
    })
    .unwrap()
}

/// Rotation kernel for a helix matched against a rotated copy of itself.
pub fn helix_kernel(n: usize, sigma: f64) -> RotationKernel {
    let pts = (0..n)
        .map(|i| {
            let t = i as f64 * 0.4;
            Point3::new(t.cos(), t.sin(), 0.1 * t)
        })
        .collect();
    let v = Shape3::new(pts, false).unwrap();
    let q = Quaternion::from_axis_angle(Point3::new(1.0, 2.0, 3.0), 0.7).unwrap();
    let y = rotate_shape(q, &v).unwrap();
    build_rotation_kernel(&y, &v, sigma).unwrap()
}
