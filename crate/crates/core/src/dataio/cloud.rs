//! Point clouds sampled from scans, and their labelling and normalisation.

use super::scan::LidarScan;
use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;
use crate::rng::SplitMix64;
use crate::synthgen::{VortexClass, VortexSpec};

/// Radius around a labelled core within which points take the vortex class.
pub const DEFAULT_LABEL_RADIUS: f64 = 25.0;

/// Points drawn per scan.
pub const DEFAULT_POINTS: usize = 12_000;

/// Per-point segmentation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub enum Label {
    #[default]
    Background,
    Port,
    Starboard,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Background, Label::Port, Label::Starboard];

    pub fn id(self) -> u8 {
        match self {
            Label::Background => 0,
            Label::Port => 1,
            Label::Starboard => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Label::Background),
            1 => Some(Label::Port),
            2 => Some(Label::Starboard),
            _ => None,
        }
    }

    pub fn vortex_class(self) -> Option<VortexClass> {
        match self {
            Label::Background => None,
            Label::Port => Some(VortexClass::Port),
            Label::Starboard => Some(VortexClass::Starboard),
        }
    }
}

impl From<VortexClass> for Label {
    fn from(c: VortexClass) -> Self {
        match c {
            VortexClass::Port => Label::Port,
            VortexClass::Starboard => Label::Starboard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    /// Beam-major index of the source cell.
    pub cell: usize,
    pub phi: f64,
    pub range: f64,
    pub y: f64,
    pub z: f64,
    /// Raw radial velocity, m/s.
    pub vr: f32,
    /// Min-max normalised velocity in `[0, 1]`; 0.5 until normalised.
    pub vr_norm: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub geom: ScanGeometry,
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.points.iter().map(|p| p.label).collect()
    }
}

/// Draws `n` distinct cells uniformly without replacement (partial
/// Fisher–Yates over the beam-major cell indices).
pub fn sample_points(scan: &LidarScan, n: usize, seed: u64) -> Result<PointCloud> {
    let geom = *scan.geometry();
    let total = geom.n_cells();
    if n > total {
        return Err(Error::invalid(format!(
            "cannot sample {n} points from {total} cells"
        )));
    }
    let mut rng = SplitMix64::new(seed);
    let mut cells: Vec<usize> = (0..total).collect();
    for i in 0..n {
        let j = i + rng.below(total - i);
        cells.swap(i, j);
    }
    let points = cells[..n]
        .iter()
        .map(|&cell| {
            let (beam, gate) = geom.cell_coords(cell);
            let (y, z) = geom.cell_position(cell);
            CloudPoint {
                cell,
                phi: geom.elevation(beam),
                range: geom.range(gate),
                y,
                z,
                vr: scan.vr()[cell],
                vr_norm: 0.5,
                label: Label::Background,
            }
        })
        .collect();
    Ok(PointCloud { geom, points })
}

/// Nearest truth vortex within `radius` (inclusive) of `(y, z)`. Ties go to
/// the smaller distance, then port before starboard, then list order.
pub fn nearest_vortex_within(truth: &[VortexSpec], y: f64, z: f64, radius: f64) -> Option<VortexClass> {
    truth
        .iter()
        .map(|v| ((v.center.0 - y).hypot(v.center.1 - z), v.class))
        .filter(|(d, _)| *d <= radius)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, c)| c)
}

/// Assigns each point the class of the nearest truth vortex within
/// `radius`, background otherwise.
pub fn label_points(mut cloud: PointCloud, truth: &[VortexSpec], radius: f64) -> PointCloud {
    for p in &mut cloud.points {
        p.label = nearest_vortex_within(truth, p.y, p.z, radius)
            .map(Label::from)
            .unwrap_or(Label::Background);
    }
    cloud
}

/// Min-max normalises radial velocity over the cloud; a constant cloud maps
/// to 0.5 everywhere.
pub fn normalize_velocity(mut cloud: PointCloud) -> Result<PointCloud> {
    if cloud.is_empty() {
        return Err(Error::invalid("cannot normalise an empty cloud"));
    }
    let (lo, hi) = cloud
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.vr as f64), hi.max(p.vr as f64))
        });
    let span = hi - lo;
    for p in &mut cloud.points {
        p.vr_norm = if span > 0.0 {
            ((p.vr as f64 - lo) / span).clamp(0.0, 1.0)
        } else {
            0.5
        };
    }
    Ok(cloud)
}
