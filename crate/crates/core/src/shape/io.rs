//! Shape files: JSON `{"dim", "closed", "label", "points"}`, headerless or
//! headed CSV for planar shapes, and binary silhouettes (PGM/PNG) traced on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{extract_boundary, BinaryImage, Point, Shape, Shape2, Shape3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ShapeRecord {
    dim: usize,
    closed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    points: Vec<Vec<f64>>,
}

impl<P: Point> Serialize for Shape<P> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ShapeRecord {
            dim: P::DIM,
            closed: self.is_closed(),
            label: self.label().map(str::to_owned),
            points: self.points().iter().map(|p| p.coords()).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de, P: Point> Deserialize<'de> for Shape<P> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let rec = ShapeRecord::deserialize(deserializer)?;
        record_to_shape(rec).map_err(D::Error::custom)
    }
}

fn record_to_shape<P: Point>(rec: ShapeRecord) -> Result<Shape<P>> {
    if rec.dim != P::DIM {
        return Err(Error::Dimension {
            expected: P::DIM,
            found: rec.dim,
        });
    }
    let points = rec
        .points
        .iter()
        .enumerate()
        .map(|(i, c)| {
            P::from_coords(c).ok_or_else(|| {
                Error::InvalidShape(format!("point {i} has {} coordinates, expected {}", c.len(), P::DIM))
            })
        })
        .collect::<Result<Vec<P>>>()?;
    let mut shape = Shape::new(points, rec.closed)?;
    shape.set_label(rec.label);
    Ok(shape)
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_owned(),
        message: message.into(),
    }
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase()
}

/// Loads a planar shape from JSON, CSV, or a binary image.
///
/// Images are traced with [`extract_boundary`]; `invert` selects light-on-dark
/// foreground. CSV shapes are taken as closed.
pub fn load_shape2(path: &Path, invert: bool) -> Result<Shape2> {
    match extension(path).as_str() {
        "json" => {
            let text = fs::read_to_string(path)?;
            let rec: ShapeRecord = serde_json::from_str(&text)?;
            record_to_shape(rec).map_err(|e| format_err(path, e.to_string()))
        }
        "csv" | "txt" => read_csv(path),
        "pgm" | "pnm" | "png" => {
            let img = BinaryImage::load(path, invert)?;
            extract_boundary(&img).map_err(|e| format_err(path, e.to_string()))
        }
        other => Err(format_err(path, format!("unsupported shape file extension {other:?}"))),
    }
}

pub fn load_shape3(path: &Path) -> Result<Shape3> {
    let text = fs::read_to_string(path)?;
    let rec: ShapeRecord = serde_json::from_str(&text)?;
    record_to_shape(rec).map_err(|e| format_err(path, e.to_string()))
}

pub fn save_shape<P: Point>(shape: &Shape<P>, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(shape)?)?;
    Ok(())
}

const SHAPE_EXTENSIONS: [&str; 6] = ["json", "csv", "txt", "pgm", "pnm", "png"];

/// Loads every planar shape under `dir` with its class label.
///
/// Either one subdirectory per class, or a flat directory where the label is
/// the file stem with trailing digits and separators removed (`bone-03.pgm`
/// and `bone3.pgm` are both `bone`). Results are sorted by label, then path.
pub fn load_labeled_dir(dir: &Path, invert: bool) -> Result<Vec<(String, Shape2)>> {
    let mut entries = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            let label = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_owned();
            for inner in fs::read_dir(&path)? {
                let file = inner?.path();
                if is_shape_file(&file) {
                    entries.push((label.clone(), file));
                }
            }
        } else if is_shape_file(&path) {
            let stem = path.file_stem().and_then(|n| n.to_str()).unwrap_or_default();
            entries.push((label_from_stem(stem), path));
        }
    }
    entries.sort();
    entries
        .into_iter()
        .map(|(label, path)| load_shape2(&path, invert).map(|s| (label.clone(), s.with_label(label))))
        .collect()
}

fn is_shape_file(path: &Path) -> bool {
    path.is_file() && SHAPE_EXTENSIONS.contains(&extension(path).as_str())
}

fn label_from_stem(stem: &str) -> String {
    let trimmed = stem.trim_end_matches(|c: char| c.is_ascii_digit() || c == '-' || c == '_' || c == ' ');
    if trimmed.is_empty() { stem } else { trimmed }.to_owned()
}

fn read_csv(path: &Path) -> Result<Shape2> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format_err(path, e.to_string()))?;
    let mut points = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(c) if c.len() == 2 => points.push(super::Point2::new(c[0], c[1])),
            // a leading header row is allowed
            Err(_) if row == 0 => continue,
            _ => return Err(format_err(path, format!("row {} is not an x,y pair", row + 1))),
        }
    }
    Shape2::new(points, true).map_err(|e| format_err(path, e.to_string()))
}
