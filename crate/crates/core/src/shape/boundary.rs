//! Outer-boundary extraction from binary silhouettes.
//!
//! Moore-neighbour tracing with Jacob's stopping criterion: the trace ends when
//! the start pixel is re-entered from the same side it was first entered.

use std::collections::VecDeque;
use std::path::Path;

use super::{Point2, Shape2};
use crate::error::{Error, Result};

/// Clockwise on screen (rows grow downwards), starting at west.
const MOORE: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    pixels: Vec<bool>,
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, pixels: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let pixels = (0..height)
            .flat_map(|r| (0..width).map(move |c| (c, r)))
            .map(|(c, r)| f(c, r))
            .collect();
        Self::new(width, height, pixels)
    }

    /// Parses rows of `#` (foreground) and `.` (background).
    pub fn from_ascii(rows: &[&str]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        if rows.iter().any(|r| r.chars().count() != width) {
            return Err(Error::InvalidParameter("ragged ascii image".into()));
        }
        let pixels = rows.iter().flat_map(|r| r.chars().map(|ch| ch == '#')).collect();
        Self::new(width, height, pixels)
    }

    /// Loads a grayscale image (PGM P2/P5, or PNG) and thresholds at 128.
    ///
    /// Foreground is dark (`< 128`) unless `invert` is set.
    pub fn load(path: &Path, invert: bool) -> Result<Self> {
        let img = image::ImageReader::open(path)?
            .with_guessed_format()?
            .decode()?
            .to_luma8();
        let (w, h) = img.dimensions();
        let pixels = img.pixels().map(|p| (p.0[0] < 128) != invert).collect();
        Self::new(w as usize, h as usize, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, col: i64, row: i64) -> bool {
        if col < 0 || row < 0 || col >= self.width as i64 || row >= self.height as i64 {
            return false;
        }
        self.pixels[row as usize * self.width + col as usize]
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Keeps only the largest 8-connected foreground component (first in raster
    /// order on ties).
    pub fn largest_component(&self) -> Option<Self> {
        let mut label = vec![usize::MAX; self.pixels.len()];
        let mut best: Option<(usize, usize)> = None; // (id, size)
        let mut next_id = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.pixels.len() {
            if !self.pixels[start] || label[start] != usize::MAX {
                continue;
            }
            let id = next_id;
            next_id += 1;
            label[start] = id;
            queue.push_back(start);
            let mut size = 0;
            while let Some(idx) = queue.pop_front() {
                size += 1;
                let (c, r) = ((idx % self.width) as i64, (idx / self.width) as i64);
                for (dc, dr) in MOORE {
                    let (nc, nr) = (c + dc, r + dr);
                    if self.get(nc, nr) {
                        let nidx = nr as usize * self.width + nc as usize;
                        if label[nidx] == usize::MAX {
                            label[nidx] = id;
                            queue.push_back(nidx);
                        }
                    }
                }
            }
            if best.is_none_or(|(_, s)| size > s) {
                best = Some((id, size));
            }
        }
        let (id, _) = best?;
        let pixels = label.iter().map(|&l| l == id).collect();
        Some(Self {
            width: self.width,
            height: self.height,
            pixels,
        })
    }
}

fn direction_index(dc: i64, dr: i64) -> usize {
    MOORE
        .iter()
        .position(|&d| d == (dc, dr))
        .expect("backtrack pixel is always a Moore neighbour")
}

/// Traces the outer boundary of the (largest) foreground component.
///
/// Pixel `(col, row)` maps to the point `(col, height - 1 - row)`, so the
/// returned contour lives in a y-up frame and is oriented counter-clockwise,
/// starting at the top-left foreground pixel.
pub fn extract_boundary(img: &BinaryImage) -> Result<Shape2> {
    let component = img.largest_component().ok_or(Error::NoForeground)?;
    let pixels = component.foreground_count();

    let start_idx = component.pixels.iter().position(|&p| p).ok_or(Error::NoForeground)?;
    let start = ((start_idx % img.width) as i64, (start_idx / img.width) as i64);
    // raster order guarantees the west neighbour is background
    let start_back = 0usize;

    let mut trace = vec![start];
    let mut current = start;
    let mut back = start_back;
    let limit = 4 * pixels + 8;
    loop {
        let mut next = None;
        for i in 1..=8 {
            let d = (back + i) % 8;
            let (dc, dr) = MOORE[d];
            if component.get(current.0 + dc, current.1 + dr) {
                next = Some(d);
                break;
            }
        }
        let Some(d) = next else {
            return Err(Error::DegenerateRegion { pixels });
        };
        let (pc, pr) = MOORE[(d + 7) % 8];
        let back_pixel = (current.0 + pc, current.1 + pr);
        let (dc, dr) = MOORE[d];
        current = (current.0 + dc, current.1 + dr);
        back = direction_index(back_pixel.0 - current.0, back_pixel.1 - current.1);

        if current == start && back == start_back {
            break;
        }
        trace.push(current);
        if trace.len() > limit {
            return Err(Error::DegenerateRegion { pixels });
        }
    }

    if trace.len() < 3 {
        return Err(Error::DegenerateRegion { pixels });
    }
    let h = img.height as f64 - 1.0;
    let points = trace
        .iter()
        .map(|&(c, r)| Point2::new(c as f64, h - r as f64))
        .collect();
    let shape = Shape2::new(points, true)?;
    Ok(if shape.signed_area() < 0.0 {
        shape.reversed()
    } else {
        shape
    })
}
