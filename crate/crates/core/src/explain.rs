//! Perturbation-based explanations: edit vortex core regions of a scan,
//! rerun the pipeline on identically sampled points and compare.

use std::fmt::Write as _;

use crate::cluster::{Detection, Point};
use crate::dataio::{Label, LidarScan};
use crate::error::{Error, Result};
use crate::geometry::ScanGeometry;
use crate::pipeline::{detect, PipelineConfig, Predictor, ScanResult};
use crate::synthgen::VortexClass;

pub const DEFAULT_RADIUS: f64 = 25.0;

/// Cells whose centre lies within `radius` (inclusive) of `center`, in
/// beam-major order.
pub fn disk_cells(geom: &ScanGeometry, center: Point, radius: f64) -> Vec<usize> {
    (0..geom.n_cells())
        .filter(|&c| {
            let (y, z) = geom.cell_position(c);
            (y - center.0).hypot(z - center.1) <= radius
        })
        .collect()
}

/// Cell whose centre is closest to `(y, z)`; ties go to the lower beam, then
/// the lower gate.
pub fn nearest_cell(geom: &ScanGeometry, y: f64, z: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for c in 0..geom.n_cells() {
        let (cy, cz) = geom.cell_position(c);
        let d = (cy - y).powi(2) + (cz - z).powi(2);
        if d < best.0 {
            best = (d, c);
        }
    }
    best.1
}

fn check_radius(radius: f64) -> Result<()> {
    if radius > 0.0 && radius.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("perturbation radius {radius} must be positive")))
    }
}

fn nonempty_disk(geom: &ScanGeometry, center: Point, radius: f64) -> Result<Vec<usize>> {
    check_radius(radius)?;
    let cells = disk_cells(geom, center, radius);
    if cells.is_empty() {
        return Err(Error::invalid(format!(
            "disk of radius {radius} m at ({:.1}, {:.1}) contains no scan cell",
            center.0, center.1
        )));
    }
    Ok(cells)
}

/// Replaces every in-disk velocity with `mean`.
pub fn mask_core_with_mean(scan: &LidarScan, center: Point, radius: f64, mean: f32) -> Result<LidarScan> {
    let cells = nonempty_disk(scan.geometry(), center, radius)?;
    let mut vr = scan.vr().to_vec();
    for c in cells {
        vr[c] = mean;
    }
    scan.with_vr(vr)
}

/// Replaces every in-disk velocity with the scan-wide mean.
pub fn mask_core(scan: &LidarScan, center: Point, radius: f64) -> Result<LidarScan> {
    mask_core_with_mean(scan, center, radius, scan.mean_vr() as f32)
}

/// Copies the disk around `center` to `destination` (each source cell onto
/// the cell nearest its shifted position, later sources overwriting earlier
/// ones) and fills source cells that were not written with the scan mean.
pub fn move_core(scan: &LidarScan, center: Point, radius: f64, destination: Point) -> Result<LidarScan> {
    let geom = scan.geometry();
    let source = nonempty_disk(geom, center, radius)?;
    if !geom.contains(destination.0, destination.1) {
        return Err(Error::invalid(format!(
            "destination ({:.1}, {:.1}) lies outside the scan sector",
            destination.0, destination.1
        )));
    }
    let mean = scan.mean_vr() as f32;
    let (dy, dz) = (destination.0 - center.0, destination.1 - center.1);
    let original = scan.vr();
    let mut vr = original.to_vec();
    let mut written = vec![false; vr.len()];
    for &c in &source {
        let (y, z) = geom.cell_position(c);
        let target = nearest_cell(geom, y + dy, z + dz);
        vr[target] = original[c];
        written[target] = true;
    }
    for &c in &source {
        if !written[c] {
            vr[c] = mean;
        }
    }
    scan.with_vr(vr)
}

/// Exchanges the disks around `a` and `b`. A cell at offset `o` from one
/// centre is paired with the in-disk cell nearest the other centre plus `o`;
/// pairs are formed from `a`'s side first, then `b`'s, and each cell takes
/// part in at most one exchange. Pairing depends only on the geometry, so
/// swapping twice restores the scan.
pub fn swap_cores(scan: &LidarScan, a: Point, b: Point, radius: f64) -> Result<LidarScan> {
    check_radius(radius)?;
    let geom = scan.geometry();
    if (a.0 - b.0).hypot(a.1 - b.1) < 2.0 * radius {
        return Err(Error::invalid("swap regions overlap"));
    }
    let disk_a = nonempty_disk(geom, a, radius)?;
    let disk_b = nonempty_disk(geom, b, radius)?;
    let mut in_a = vec![false; geom.n_cells()];
    let mut in_b = vec![false; geom.n_cells()];
    disk_a.iter().for_each(|&c| in_a[c] = true);
    disk_b.iter().for_each(|&c| in_b[c] = true);

    let mut vr = scan.vr().to_vec();
    let mut used = vec![false; vr.len()];
    let mut pass = |from: &[usize], origin: Point, other: Point, accept: &[bool]| {
        for &p in from {
            let (y, z) = geom.cell_position(p);
            let q = nearest_cell(geom, y - origin.0 + other.0, z - origin.1 + other.1);
            if accept[q] && !used[p] && !used[q] {
                vr.swap(p, q);
                used[p] = true;
                used[q] = true;
            }
        }
    };
    pass(&disk_a, a, b, &in_b);
    pass(&disk_b, b, a, &in_a);
    scan.with_vr(vr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    Mask,
    Move { destination: Point },
    Swap { second: Point },
}

impl Perturbation {
    pub fn name(&self) -> &'static str {
        match self {
            Perturbation::Mask => "mask",
            Perturbation::Move { .. } => "move",
            Perturbation::Swap { .. } => "swap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub method: Perturbation,
    pub center: Point,
    pub radius: f64,
    /// Class whose response is judged; by default the majority vortex class
    /// predicted inside the disk before perturbation.
    pub target_class: Option<VortexClass>,
}

impl PerturbationSpec {
    pub fn apply(&self, scan: &LidarScan) -> Result<LidarScan> {
        match self.method {
            Perturbation::Mask => mask_core(scan, self.center, self.radius),
            Perturbation::Move { destination } => move_core(scan, self.center, self.radius, destination),
            Perturbation::Swap { second } => swap_cores(scan, self.center, second, self.radius),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerdictThresholds {
    /// Minimum relative drop of the target fraction inside the masked disk.
    pub suppression: f64,
    /// Minimum share of the ring's target fraction that must survive.
    pub ring_retention: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        Self {
            suppression: 0.8,
            ring_retention: 0.5,
        }
    }
}

/// Share of each class (background, port, starboard) among sampled points
/// in a region; all zero when the region holds no point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassFractions {
    pub points: usize,
    pub fractions: [f64; 3],
}

impl ClassFractions {
    pub fn of(&self, label: Label) -> f64 {
        self.fractions[label.id() as usize]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionReport {
    pub name: String,
    pub before: ClassFractions,
    pub after: ClassFractions,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Verdicts {
    pub masked_core_suppressed: bool,
    pub surrounding_ring_retained: bool,
    pub relocated_core_detected: bool,
    pub swap_intermingled: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainReport {
    pub spec: PerturbationSpec,
    pub target_class: Option<VortexClass>,
    pub regions: Vec<RegionReport>,
    pub detections_before: Vec<Detection>,
    pub detections_after: Vec<Detection>,
    /// Detections with no same-class counterpart within the match distance
    /// after (vanished) or before (appeared) the perturbation.
    pub vanished: Vec<Detection>,
    pub appeared: Vec<Detection>,
    pub verdicts: Verdicts,
}

fn fractions(result: &ScanResult, keep: impl Fn(Point) -> bool) -> ClassFractions {
    let mut counts = [0usize; 3];
    for (p, l) in result.cloud.points.iter().zip(&result.predicted) {
        if keep((p.y, p.z)) {
            counts[l.id() as usize] += 1;
        }
    }
    let n: usize = counts.iter().sum();
    let mut out = ClassFractions {
        points: n,
        ..Default::default()
    };
    if n > 0 {
        for (f, c) in out.fractions.iter_mut().zip(counts) {
            *f = c as f64 / n as f64;
        }
    }
    out
}

fn within(center: Point, lo: f64, hi: f64) -> impl Fn(Point) -> bool {
    move |p: Point| {
        let d = (p.0 - center.0).hypot(p.1 - center.1);
        d >= lo && d <= hi
    }
}

fn disk(center: Point, radius: f64) -> impl Fn(Point) -> bool {
    move |p: Point| (p.0 - center.0).hypot(p.1 - center.1) <= radius
}

/// Majority vortex class among predicted points in a region; port wins ties.
fn majority_class(f: &ClassFractions) -> Option<VortexClass> {
    let port = f.of(Label::Port);
    let star = f.of(Label::Starboard);
    if port == 0.0 && star == 0.0 {
        None
    } else if port >= star {
        Some(VortexClass::Port)
    } else {
        Some(VortexClass::Starboard)
    }
}

fn unmatched(from: &[Detection], against: &[Detection], d_match: f64) -> Vec<Detection> {
    from.iter()
        .filter(|d| {
            !against.iter().any(|o| {
                o.class == d.class && (o.center.0 - d.center.0).hypot(o.center.1 - d.center.1) <= d_match
            })
        })
        .copied()
        .collect()
}

/// Runs the pipeline on the scan and on its perturbed copy and judges the
/// change in predictions around the edited regions.
pub fn explain(
    scan: &LidarScan,
    predictor: &Predictor,
    spec: &PerturbationSpec,
    config: &PipelineConfig,
    thresholds: &VerdictThresholds,
) -> Result<ExplainReport> {
    let perturbed = spec.apply(scan)?;
    let before = detect(scan, predictor, config)?;
    let after = detect(&perturbed, predictor, config)?;
    let r = spec.radius;
    let c = spec.center;

    let mut regions = Vec::new();
    let mut region = |name: &str, keep: &dyn Fn(Point) -> bool| {
        let rep = RegionReport {
            name: name.to_string(),
            before: fractions(&before, keep),
            after: fractions(&after, keep),
        };
        regions.push(rep.clone());
        rep
    };
    let core = region("core", &disk(c, r));
    let ring = region("ring", &within(c, r, 2.0 * r));
    let target = spec.target_class.or_else(|| majority_class(&core.before));

    let mut verdicts = Verdicts::default();
    if let Some(t) = target {
        let label = Label::from(t);
        let (cb, ca) = (core.before.of(label), core.after.of(label));
        verdicts.masked_core_suppressed = cb > 0.0 && ca <= (1.0 - thresholds.suppression) * cb;
        let (rb, ra) = (ring.before.of(label), ring.after.of(label));
        verdicts.surrounding_ring_retained = rb > 0.0 && ra >= thresholds.ring_retention * rb;
    }
    match spec.method {
        Perturbation::Mask => {}
        Perturbation::Move { destination } => {
            region("destination", &disk(destination, r));
            if let Some(t) = target {
                verdicts.relocated_core_detected = after.detections.iter().any(|d| {
                    d.class == t && (d.center.0 - destination.0).hypot(d.center.1 - destination.1) <= config.d_match
                });
            }
        }
        Perturbation::Swap { second } => {
            let other = region("second", &disk(second, r));
            // The swapped-in class is the opposite vortex class, and only
            // counts when the second disk carried it before the swap.
            if let Some(t) = target {
                let s = Label::from(t.opposite());
                let core_after = &regions[0].after;
                verdicts.swap_intermingled = other.before.of(s) > 0.0
                    && core_after.of(s) > 0.0
                    && other.after.of(Label::from(t)) > 0.0;
            }
        }
    }
    Ok(ExplainReport {
        spec: *spec,
        target_class: target,
        regions,
        vanished: unmatched(&before.detections, &after.detections, config.d_match),
        appeared: unmatched(&after.detections, &before.detections, config.d_match),
        detections_before: before.detections,
        detections_after: after.detections,
        verdicts,
    })
}

impl ExplainReport {
    /// Line-oriented text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let s = &self.spec;
        let _ = writeln!(out, "method\t{}", s.method.name());
        let _ = writeln!(out, "center\t{:.2}\t{:.2}", s.center.0, s.center.1);
        let _ = writeln!(out, "radius\t{:.2}", s.radius);
        match s.method {
            Perturbation::Mask => {}
            Perturbation::Move { destination } => {
                let _ = writeln!(out, "destination\t{:.2}\t{:.2}", destination.0, destination.1);
            }
            Perturbation::Swap { second } => {
                let _ = writeln!(out, "second\t{:.2}\t{:.2}", second.0, second.1);
            }
        }
        let _ = writeln!(
            out,
            "target_class\t{}",
            self.target_class.map(|c| c.name()).unwrap_or("none")
        );
        for r in &self.regions {
            for (when, f) in [("before", &r.before), ("after", &r.after)] {
                let _ = writeln!(
                    out,
                    "region\t{}\t{}\tpoints={}\tbackground={:.4}\tport={:.4}\tstarboard={:.4}",
                    r.name, when, f.points, f.fractions[0], f.fractions[1], f.fractions[2]
                );
            }
        }
        let det_line = |out: &mut String, tag: &str, d: &Detection| {
            let _ = writeln!(
                out,
                "{tag}\t{}\t{:.2}\t{:.2}\tsupport={}",
                d.class.name(),
                d.center.0,
                d.center.1,
                d.support
            );
        };
        for d in &self.detections_before {
            det_line(&mut out, "detection_before", d);
        }
        for d in &self.detections_after {
            det_line(&mut out, "detection_after", d);
        }
        for d in &self.vanished {
            det_line(&mut out, "vanished", d);
        }
        for d in &self.appeared {
            det_line(&mut out, "appeared", d);
        }
        let v = &self.verdicts;
        let _ = writeln!(out, "masked_core_suppressed\t{}", v.masked_core_suppressed);
        let _ = writeln!(out, "surrounding_ring_retained\t{}", v.surrounding_ring_retained);
        if matches!(s.method, Perturbation::Move { .. }) {
            let _ = writeln!(out, "relocated_core_detected\t{}", v.relocated_core_detected);
        }
        if matches!(s.method, Perturbation::Swap { .. }) {
            let _ = writeln!(out, "swap_intermingled\t{}", v.swap_intermingled);
        }
        out
    }
}

/// An in-sector point at least `min_distance` from every truth vortex and
/// `radius` from the sector edges, as close as possible to `center`.
pub fn auto_destination(scan: &LidarScan, center: Point, radius: f64, min_distance: f64) -> Option<Point> {
    let geom = scan.geometry();
    let mut best: Option<(f64, Point)> = None;
    let step = radius / 2.0;
    let (y_max, z_max) = (geom.range_max, geom.range_max);
    let mut y = 0.0;
    while y <= y_max {
        let mut z = 0.0;
        while z <= z_max {
            if geom.boundary_clearance(y, z) >= radius
                && scan
                    .truth()
                    .iter()
                    .all(|v| (v.center.0 - y).hypot(v.center.1 - z) >= min_distance)
            {
                let d = (y - center.0).hypot(z - center.1);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, (y, z)));
                }
            }
            z += step;
        }
        y += step;
    }
    best.map(|(_, p)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::{synth_scan, SceneSpec, VortexSpec};
    use proptest::prelude::*;

    fn geom() -> ScanGeometry {
        ScanGeometry {
            n_beams: 40,
            n_gates: 40,
            ..ScanGeometry::default()
        }
    }

    fn pair_scan(seed: u64) -> LidarScan {
        let scene = SceneSpec {
            vortices: vec![
                VortexSpec {
                    class: VortexClass::Port,
                    center: (380.0, 110.0),
                    circulation: 400.0,
                    core_radius: 3.0,
                },
                VortexSpec {
                    class: VortexClass::Starboard,
                    center: (450.0, 110.0),
                    circulation: 400.0,
                    core_radius: 3.0,
                },
            ],
            crosswind: (1.0, 0.0),
            noise_sigma: 0.3,
            seed,
        };
        synth_scan(&geom(), &scene).unwrap()
    }

    fn constant_scan(v: f32) -> LidarScan {
        let g = geom();
        LidarScan::new(g, vec![v; g.n_cells()], vec![], 1).unwrap()
    }

    #[test]
    fn mask_of_constant_scan_is_identity() {
        let s = constant_scan(1.25);
        assert_eq!(mask_core(&s, (400.0, 100.0), 25.0).unwrap(), s);
    }

    #[test]
    fn mask_flattens_disk_only() {
        let s = pair_scan(1);
        let m = mask_core(&s, (380.0, 110.0), 25.0).unwrap();
        let cells = disk_cells(s.geometry(), (380.0, 110.0), 25.0);
        assert!(!cells.is_empty());
        let mean = s.mean_vr() as f32;
        for c in 0..s.vr().len() {
            if cells.contains(&c) {
                assert_eq!(m.vr()[c], mean);
            } else {
                assert_eq!(m.vr()[c].to_bits(), s.vr()[c].to_bits());
            }
        }
        // Reusing the original mean makes the mask idempotent.
        assert_eq!(mask_core_with_mean(&m, (380.0, 110.0), 25.0, mean).unwrap(), m);
    }

    #[test]
    fn mask_outside_grid_fails() {
        let s = pair_scan(1);
        assert!(mask_core(&s, (-500.0, -500.0), 25.0).is_err());
        assert!(mask_core(&s, (400.0, 100.0), 0.0).is_err());
    }

    #[test]
    fn zero_move_is_identity() {
        let s = pair_scan(2);
        assert_eq!(move_core(&s, (380.0, 110.0), 25.0, (380.0, 110.0)).unwrap(), s);
    }

    #[test]
    fn move_along_grid_carries_values() {
        let s = pair_scan(3);
        let g = *s.geometry();
        // Shift by whole gates along one beam: exact cell-to-cell copies.
        let beam = 12;
        let src = g.cell_position(g.cell_index(beam, 10));
        let dst = g.cell_position(g.cell_index(beam, 25));
        let m = move_core(&s, src, 30.0, dst).unwrap();
        let source = disk_cells(&g, src, 30.0);
        let mut exact = 0;
        for &c in &source {
            let (b, gate) = g.cell_coords(c);
            if b == beam && gate + 15 < g.n_gates && m.vr()[g.cell_index(b, gate + 15)] == s.vr()[c] {
                exact += 1;
            }
        }
        let on_beam = source.iter().filter(|&&c| g.cell_coords(c).0 == beam).count();
        assert!(exact * 10 >= on_beam * 9);
        // Source cells not overwritten hold the mean.
        let mean = s.mean_vr() as f32;
        for &c in &source {
            let (y, z) = g.cell_position(c);
            if (y - dst.0).hypot(z - dst.1) > 40.0 {
                assert_eq!(m.vr()[c], mean);
            }
        }
    }

    #[test]
    fn move_off_grid_fails() {
        let s = pair_scan(4);
        assert!(move_core(&s, (380.0, 110.0), 25.0, (-100.0, 50.0)).is_err());
    }

    #[test]
    fn swap_conserves_and_inverts() {
        let s = pair_scan(5);
        let (a, b) = ((380.0, 110.0), (450.0, 110.0));
        let once = swap_cores(&s, a, b, 25.0).unwrap();
        assert_ne!(once, s);
        assert_eq!(swap_cores(&once, a, b, 25.0).unwrap(), s);
        let mut union: Vec<usize> = disk_cells(s.geometry(), a, 25.0);
        union.extend(disk_cells(s.geometry(), b, 25.0));
        let collect = |scan: &LidarScan| {
            let mut v: Vec<u32> = union.iter().map(|&c| scan.vr()[c].to_bits()).collect();
            v.sort();
            v
        };
        assert_eq!(collect(&once), collect(&s));
        for c in 0..s.vr().len() {
            if !union.contains(&c) {
                assert_eq!(once.vr()[c], s.vr()[c]);
            }
        }
    }

    #[test]
    fn swap_of_identical_regions_is_identity() {
        let s = constant_scan(-0.5);
        assert_eq!(swap_cores(&s, (300.0, 80.0), (450.0, 80.0), 25.0).unwrap(), s);
        assert!(swap_cores(&s, (300.0, 80.0), (330.0, 80.0), 25.0).is_err());
    }

    #[test]
    fn null_explanation_raises_no_flags() {
        let g = geom();
        let scene = SceneSpec {
            vortices: vec![],
            crosswind: (1.0, 0.0),
            noise_sigma: 0.3,
            seed: 4,
        };
        let s = synth_scan(&g, &scene).unwrap();
        let spec = PerturbationSpec {
            method: Perturbation::Mask,
            center: (400.0, 100.0),
            radius: 25.0,
            target_class: None,
        };
        let config = PipelineConfig::for_points(800);
        let r = explain(&s, &Predictor::Oracle, &spec, &config, &VerdictThresholds::default()).unwrap();
        assert_eq!(r.target_class, None);
        assert_eq!(r.verdicts, Verdicts::default());
        for region in &r.regions {
            assert_eq!(region.before.of(Label::Port), 0.0);
            assert_eq!(region.after.of(Label::Starboard), 0.0);
        }
        let text = r.to_text();
        assert!(text.contains("masked_core_suppressed\tfalse\n"));
    }

    #[test]
    fn auto_destination_keeps_clear_of_vortices() {
        let s = pair_scan(6);
        let d = auto_destination(&s, (380.0, 110.0), 25.0, 100.0).unwrap();
        assert!(s.geometry().boundary_clearance(d.0, d.1) >= 25.0);
        for v in s.truth() {
            assert!((v.center.0 - d.0).hypot(v.center.1 - d.1) >= 100.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mask_mean_shift_is_bounded(
            cy in 200.0f64..600.0,
            cz in 20.0f64..200.0,
            radius in 5.0f64..60.0,
            seed in 0u64..1000,
        ) {
            let s = pair_scan(seed);
            prop_assume!(!disk_cells(s.geometry(), (cy, cz), radius).is_empty());
            let m = mask_core(&s, (cy, cz), radius).unwrap();
            let old = s.mean_vr();
            let max_dev = s.vr().iter().map(|&v| (v as f64 - old).abs()).fold(0.0, f64::max);
            let frac = disk_cells(s.geometry(), (cy, cz), radius).len() as f64 / s.vr().len() as f64;
            prop_assert!((m.mean_vr() - old).abs() <= max_dev * frac + 1e-6);
        }

        #[test]
        fn swap_twice_restores(
            ay in 200.0f64..350.0,
            by in 420.0f64..600.0,
            z in 30.0f64..150.0,
            radius in 5.0f64..30.0,
        ) {
            let s = pair_scan(9);
            let ok_a = !disk_cells(s.geometry(), (ay, z), radius).is_empty();
            let ok_b = !disk_cells(s.geometry(), (by, z), radius).is_empty();
            prop_assume!(ok_a && ok_b);
            let once = swap_cores(&s, (ay, z), (by, z), radius).unwrap();
            prop_assert_eq!(swap_cores(&once, (ay, z), (by, z), radius).unwrap(), s);
        }
    }
}
