//! Binary PPM (P6) panels of scans and segmentations. Rows are beams and
//! columns are range gates.

use std::path::Path;

use crate::cluster::Detection;
use crate::dataio::{Label, LidarScan, PointCloud};
use crate::error::{Error, Result};
use crate::explain::nearest_cell;
use crate::geometry::ScanGeometry;

pub type Rgb = [u8; 3];

pub const BACKGROUND: Rgb = [128, 128, 128];
pub const PORT: Rgb = [0, 0, 255];
pub const STARBOARD: Rgb = [255, 0, 0];
pub const MARKER: Rgb = [0, 0, 0];

fn half_up(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Diverging map: 0 is blue, 0.5 white, 1 red.
pub fn velocity_color(t: f64) -> Rgb {
    let t = t.clamp(0.0, 1.0);
    if t <= 0.5 {
        let w = half_up(255.0 * t / 0.5);
        [w, w, 255]
    } else {
        let w = half_up(255.0 * (1.0 - t) / 0.5);
        [255, w, w]
    }
}

pub fn label_color(label: Label) -> Rgb {
    match label {
        Label::Background => BACKGROUND,
        Label::Port => PORT,
        Label::Starboard => STARBOARD,
    }
}

/// Row-major RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Rgb {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, color: Rgb) {
        self.pixels[row * self.width + col] = color;
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

/// Radial velocity panel, min-max scaled over the scan; a constant scan is
/// all white.
pub fn velocity_panel(scan: &LidarScan) -> Image {
    let g = scan.geometry();
    let (lo, hi) = scan
        .vr()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
    let span = hi - lo;
    let pixels = scan
        .vr()
        .iter()
        .map(|&v| {
            let t = if span > 0.0 { (v as f64 - lo) / span } else { 0.5 };
            velocity_color(t)
        })
        .collect();
    Image {
        width: g.n_gates,
        height: g.n_beams,
        pixels,
    }
}

/// Segmentation panel: sampled cells coloured by predicted class, unsampled
/// cells as background, each detection centre marked by a 5×5 cross.
pub fn segmentation_panel(geom: &ScanGeometry, cloud: &PointCloud, labels: &[Label], detections: &[Detection]) -> Result<Image> {
    if labels.len() != cloud.len() {
        return Err(Error::shape("one label per point is required"));
    }
    let mut img = Image::filled(geom.n_gates, geom.n_beams, BACKGROUND);
    for (p, &l) in cloud.points.iter().zip(labels) {
        let (beam, gate) = geom.cell_coords(p.cell);
        img.set(beam, gate, label_color(l));
    }
    for d in detections {
        let (beam, gate) = geom.cell_coords(nearest_cell(geom, d.center.0, d.center.1));
        for off in -2i64..=2 {
            let (b, g) = (beam as i64 + off, gate as i64 + off);
            if (0..geom.n_beams as i64).contains(&b) {
                img.set(b as usize, gate, MARKER);
            }
            if (0..geom.n_gates as i64).contains(&g) {
                img.set(beam, g as usize, MARKER);
            }
        }
    }
    Ok(img)
}
