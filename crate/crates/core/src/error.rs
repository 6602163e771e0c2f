use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("no foreground")]
    NoForeground,

    #[error("degenerate region: component of {pixels} pixel(s) has no traceable boundary")]
    DegenerateRegion { pixels: usize },

    #[error("zero-length shape cannot be resampled")]
    ZeroLength,

    #[error("point count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },

    #[error("incomparable n: {expected} vs {found}")]
    IncomparableN { expected: usize, found: usize },

    #[error("expected a {expected}-dimensional shape, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("unknown shape family {0:?}")]
    UnknownFamily(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("regulator underflow: bracket {bracket:e} is not positive (zeta too small for near-degenerate data)")]
    RegulatorUnderflow { bracket: f64 },

    #[error("quaternion is not unit: |q|^2 = {norm_sqr}")]
    NonUnitQuaternion { norm_sqr: f64 },

    #[error("series outside radius: eigenvalue spread {spread:.3} too large for order {order}; use the Monte-Carlo estimate")]
    SeriesOutsideRadius { spread: f64, order: usize },

    #[error("quadrature grid too coarse: estimated error {estimate:e} exceeds tolerance {tolerance:e} ({hint})")]
    GridTooCoarse {
        estimate: f64,
        tolerance: f64,
        hint: String,
    },

    #[error("class {label:?} has {available} shape(s), needs {required} for the requested split")]
    TooFewShapes {
        label: String,
        available: usize,
        required: usize,
    },

    #[error("no classes to compare")]
    NoModels,

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
