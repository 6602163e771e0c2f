//! Bayesian shape classification with similarity transforms and noise
//! marginalised in closed form.
//!
//! * [`shape`]: containers, boundary tracing, resampling, synthetic families.
//! * [`likelihood`]: the regularised planar marginal likelihood and the cyclic
//!   correspondence search.
//! * [`classifier`]: exemplar class models and MAP classification.
//! * [`quat3d`]: quaternion rotation marginalisation for spatial shapes.
//! * [`oracles`]: brute-force quadrature references for the closed forms.
//! * [`harness`]: repeated train/test benchmarks and sample-count sweeps.

pub mod classifier;
pub mod error;
pub mod harness;
pub mod likelihood;
pub mod numeric;
pub mod oracles;
pub mod quat3d;
pub mod shape;

pub use classifier::{classify, train, Aggregate, ClassModel, ClassificationResult};
pub use error::{Error, Result};
pub use harness::{run_benchmark, sweep_sample_count, BenchmarkReport, BenchmarkSpec};
pub use likelihood::{best_correspondence, log_marginal_kernel, suff_stats, CorrespondenceMode, Regulators};
pub use quat3d::{Quaternion, RotationKernel};
pub use shape::{
    apply_transform, extract_boundary, resample_arclength, synth_shape, BinaryImage, Family, Point, Point2, Point3,
    Shape, Shape2, Shape3, SimilarityTransform2,
};
