//! Turning per-point class predictions into vortex detections.

mod dbscan;
mod optics;
mod ward;

use std::fmt;
use std::str::FromStr;

pub use dbscan::{core_points, dbscan};
pub use optics::{extract_dbscan, optics, OpticsOrdering};
pub use ward::{agglomerative_ward, ward_merges, Merge};

use crate::dataio::{Label, PointCloud, DEFAULT_POINTS};
use crate::error::{Error, Result};
use crate::synthgen::VortexClass;

/// Scan-plane position `(y, z)` in metres.
pub type Point = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterSummary {
    pub size: usize,
    pub centroid: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// Cluster id per input point; `None` is noise.
    pub assignment: Vec<Option<usize>>,
    pub clusters: Vec<ClusterSummary>,
}

impl ClusterResult {
    fn from_assignment(points: &[Point], assignment: Vec<Option<usize>>) -> Self {
        let n_clusters = assignment.iter().flatten().map(|&c| c + 1).max().unwrap_or(0);
        let mut acc = vec![(0usize, 0.0f64, 0.0f64); n_clusters];
        for (p, a) in points.iter().zip(&assignment) {
            if let Some(c) = a {
                acc[*c].0 += 1;
                acc[*c].1 += p.0;
                acc[*c].2 += p.1;
            }
        }
        let clusters = acc
            .into_iter()
            .map(|(n, sy, sz)| ClusterSummary {
                size: n,
                centroid: (sy / n as f64, sz / n as f64),
            })
            .collect();
        Self { assignment, clusters }
    }

    /// Clusters from a representative per point, numbered by first
    /// appearance.
    fn from_roots(points: &[Point], roots: &[usize]) -> Self {
        let mut ids = std::collections::HashMap::new();
        let assignment = roots
            .iter()
            .map(|r| {
                let next = ids.len();
                Some(*ids.entry(*r).or_insert(next))
            })
            .collect();
        Self::from_assignment(points, assignment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Algorithm {
    #[default]
    Agglomerative,
    Dbscan,
    Optics,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Agglomerative, Algorithm::Dbscan, Algorithm::Optics];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Agglomerative => "agglo",
            Algorithm::Dbscan => "dbscan",
            Algorithm::Optics => "optics",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "agglo" | "agglomerative" | "ward" => Ok(Algorithm::Agglomerative),
            "dbscan" => Ok(Algorithm::Dbscan),
            "optics" => Ok(Algorithm::Optics),
            other => Err(Error::invalid(format!("unknown clustering algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterParams {
    pub algorithm: Algorithm,
    /// Ward stopping threshold, metres.
    pub linkage_threshold: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_pts: usize,
    pub optics_min_pts: usize,
    pub optics_eps_max: f64,
    pub optics_eps: f64,
    /// Clusters smaller than this are discarded.
    pub min_cluster_size: usize,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Agglomerative,
            linkage_threshold: 30.0,
            dbscan_eps: 12.0,
            dbscan_min_pts: 10,
            optics_min_pts: 10,
            optics_eps_max: 60.0,
            optics_eps: 12.0,
            min_cluster_size: 20,
        }
    }
}

impl ClusterParams {
    /// Defaults rescaled for clouds of `n` points. Counts shrink in
    /// proportion to `n` and radii grow with the mean point spacing so that a
    /// vortex core keeps roughly the same number of neighbours. The Ward
    /// threshold is already insensitive to sampling density.
    pub fn for_point_count(n: usize) -> Self {
        let base = Self::default();
        if n == 0 || n == DEFAULT_POINTS {
            return base;
        }
        let ratio = n as f64 / DEFAULT_POINTS as f64;
        let count = |c: usize| ((c as f64 * ratio).round() as usize).max(3);
        let spacing = ratio.recip().sqrt();
        Self {
            dbscan_eps: base.dbscan_eps * spacing,
            dbscan_min_pts: count(base.dbscan_min_pts),
            optics_min_pts: count(base.optics_min_pts),
            optics_eps_max: base.optics_eps_max * spacing,
            optics_eps: base.optics_eps * spacing,
            min_cluster_size: count(base.min_cluster_size),
            ..base
        }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && !v.is_nan();
        if !positive(self.linkage_threshold)
            || !positive(self.dbscan_eps)
            || !positive(self.optics_eps_max)
            || !positive(self.optics_eps)
        {
            return Err(Error::invalid("clustering thresholds must be positive"));
        }
        if self.dbscan_min_pts == 0 || self.optics_min_pts == 0 {
            return Err(Error::invalid("min_pts must be at least 1"));
        }
        if self.optics_eps > self.optics_eps_max {
            return Err(Error::invalid("OPTICS extraction eps exceeds eps_max"));
        }
        Ok(())
    }

    /// Runs the configured algorithm.
    pub fn cluster(&self, points: &[Point]) -> ClusterResult {
        match self.algorithm {
            Algorithm::Agglomerative => agglomerative_ward(points, self.linkage_threshold),
            Algorithm::Dbscan => dbscan(points, self.dbscan_eps, self.dbscan_min_pts),
            Algorithm::Optics => {
                let ordering = optics(points, self.optics_min_pts, self.optics_eps_max);
                extract_dbscan(points, &ordering, self.optics_eps)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class: VortexClass,
    pub center: Point,
    /// Number of points in the cluster.
    pub support: usize,
}

/// Canonical detection order: descending support, then centre, then class.
pub fn detection_order(a: &Detection, b: &Detection) -> std::cmp::Ordering {
    b.support
        .cmp(&a.support)
        .then(a.center.0.total_cmp(&b.center.0))
        .then(a.center.1.total_cmp(&b.center.1))
        .then(a.class.id().cmp(&b.class.id()))
}

pub fn sort_detections(detections: &mut [Detection]) {
    detections.sort_by(detection_order);
}

/// Clusters each vortex class separately and reports the centroid of every
/// cluster with at least `min_cluster_size` points.
pub fn refine(cloud: &PointCloud, labels: &[Label], params: &ClusterParams) -> Result<Vec<Detection>> {
    if labels.len() != cloud.len() {
        return Err(Error::shape(format!(
            "{} labels for {} points",
            labels.len(),
            cloud.len()
        )));
    }
    params.validate()?;
    let mut out = Vec::new();
    for class in [VortexClass::Port, VortexClass::Starboard] {
        let points: Vec<Point> = cloud
            .points
            .iter()
            .zip(labels)
            .filter(|(_, l)| l.vortex_class() == Some(class))
            .map(|(p, _)| (p.y, p.z))
            .collect();
        if points.is_empty() {
            continue;
        }
        let result = params.cluster(&points);
        out.extend(
            result
                .clusters
                .iter()
                .filter(|c| c.size >= params.min_cluster_size && c.size > 0)
                .map(|c| Detection {
                    class,
                    center: c.centroid,
                    support: c.size,
                }),
        );
    }
    sort_detections(&mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::CloudPoint;
    use crate::geometry::ScanGeometry;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn cloud_of(points: &[(Point, Label)]) -> PointCloud {
        PointCloud {
            geom: ScanGeometry::default(),
            points: points
                .iter()
                .enumerate()
                .map(|(i, &((y, z), label))| CloudPoint {
                    cell: i,
                    phi: 0.0,
                    range: 0.0,
                    y,
                    z,
                    vr: 0.0,
                    vr_norm: 0.5,
                    label,
                })
                .collect(),
        }
    }

    fn blob(rng: &mut SplitMix64, centre: Point, n: usize, sigma: f64) -> Vec<Point> {
        (0..n)
            .map(|_| (centre.0 + sigma * rng.gaussian(), centre.1 + sigma * rng.gaussian()))
            .collect()
    }

    #[test]
    fn no_port_points_no_port_detections() {
        let mut rng = SplitMix64::new(1);
        let pts: Vec<(Point, Label)> = blob(&mut rng, (300.0, 100.0), 50, 5.0)
            .into_iter()
            .map(|p| (p, Label::Starboard))
            .collect();
        let cloud = cloud_of(&pts);
        for alg in Algorithm::ALL {
            let d = refine(&cloud, &cloud.labels(), &ClusterParams::default().with_algorithm(alg)).unwrap();
            assert!(d.iter().all(|d| d.class == VortexClass::Starboard));
            assert_eq!(d.len(), 1);
        }
    }

    #[test]
    fn blob_with_outliers_gives_one_detection() {
        let mut rng = SplitMix64::new(2);
        let core = blob(&mut rng, (400.0, 120.0), 300, 6.0);
        let mean = core.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / 300.0, a.1 + p.1 / 300.0));
        let mut pts: Vec<(Point, Label)> = core.into_iter().map(|p| (p, Label::Port)).collect();
        for (i, o) in [(150.0, 30.0), (600.0, 250.0), (250.0, 200.0), (550.0, 20.0), (200.0, 120.0)]
            .into_iter()
            .enumerate()
        {
            pts.insert(i * 37, (o, Label::Port));
        }
        let cloud = cloud_of(&pts);
        let params = ClusterParams::default().with_algorithm(Algorithm::Dbscan);
        let d = refine(&cloud, &cloud.labels(), &params).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].class, VortexClass::Port);
        assert!((d[0].center.0 - mean.0).hypot(d[0].center.1 - mean.1) < 1.0);
    }

    #[test]
    fn two_same_class_blobs_give_two_detections() {
        let mut rng = SplitMix64::new(3);
        let mut pts: Vec<(Point, Label)> = Vec::new();
        pts.extend(blob(&mut rng, (250.0, 100.0), 200, 6.0).into_iter().map(|p| (p, Label::Starboard)));
        pts.extend(blob(&mut rng, (400.0, 100.0), 150, 6.0).into_iter().map(|p| (p, Label::Starboard)));
        let cloud = cloud_of(&pts);
        for alg in Algorithm::ALL {
            let d = refine(&cloud, &cloud.labels(), &ClusterParams::default().with_algorithm(alg)).unwrap();
            assert_eq!(d.len(), 2, "{alg}");
            // Density methods may drop a few stray Gaussian tail points.
            assert!((190..=200).contains(&d[0].support), "{alg}");
            assert!((140..=150).contains(&d[1].support), "{alg}");
            assert!((d[0].center.0 - 250.0).abs() < 2.0 && (d[1].center.0 - 400.0).abs() < 2.0);
        }
    }

    #[test]
    fn label_length_mismatch_rejected() {
        let cloud = cloud_of(&[((1.0, 1.0), Label::Port)]);
        assert!(refine(&cloud, &[], &ClusterParams::default()).is_err());
    }

    #[test]
    fn scaled_parameters() {
        assert_eq!(ClusterParams::for_point_count(DEFAULT_POINTS), ClusterParams::default());
        let p = ClusterParams::for_point_count(1200);
        assert_eq!(p.min_cluster_size, 3);
        assert_eq!(p.dbscan_min_pts, 3);
        assert!((p.dbscan_eps - 12.0 * 10f64.sqrt()).abs() < 1e-9);
        assert_eq!(p.linkage_threshold, 30.0);
        p.validate().unwrap();
        let bad = ClusterParams {
            optics_eps: 100.0,
            ..ClusterParams::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!("dbscan".parse::<Algorithm>().unwrap(), Algorithm::Dbscan);
        assert!("kmeans".parse::<Algorithm>().is_err());
    }

    #[test]
    fn result_centroids_are_member_means() {
        let pts = vec![(0.0, 0.0), (2.0, 0.0), (100.0, 100.0), (104.0, 96.0)];
        let r = agglomerative_ward(&pts, 10.0);
        assert_eq!(r.assignment, vec![Some(0), Some(0), Some(1), Some(1)]);
        assert_eq!(r.clusters[0].centroid, (1.0, 0.0));
        assert_eq!(r.clusters[1].centroid, (102.0, 98.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn refine_respects_min_cluster_size(
            raw in prop::collection::vec((0.0f64..300.0, 0.0f64..300.0, 0u8..3), 1..120),
            alg in 0usize..3,
            min_size in 1usize..15,
        ) {
            let pts: Vec<(Point, Label)> = raw.iter().map(|&(y, z, l)| ((y, z), Label::from_id(l).unwrap())).collect();
            let cloud = cloud_of(&pts);
            let params = ClusterParams { min_cluster_size: min_size, ..ClusterParams::default() }
                .with_algorithm(Algorithm::ALL[alg]);
            let d = refine(&cloud, &cloud.labels(), &params).unwrap();
            prop_assert!(d.iter().all(|d| d.support >= min_size));
            prop_assert!(d.windows(2).all(|w| w[0].support >= w[1].support));
        }

        #[test]
        fn ward_threshold_extremes(raw in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..40)) {
            let mut pts = raw.clone();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            pts.dedup();
            prop_assert_eq!(agglomerative_ward(&pts, f64::INFINITY).clusters.len(), 1);
            prop_assert_eq!(agglomerative_ward(&pts, 0.0).clusters.len(), pts.len());
        }
    }
}
