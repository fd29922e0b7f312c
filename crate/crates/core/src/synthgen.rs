//! Synthetic Doppler-LiDAR scans with labelled wake vortices.
//!
//! Vortices follow the Burnham–Hallock tangential profile. A port vortex
//! turns counter-clockwise in the (y right, z up) plane so that a
//! low-elevation beam sees positive radial velocity below its core and
//! negative above; a starboard vortex turns the other way. Port vortices sit
//! to the right (larger `y`) of their starboard partner, which makes the pair
//! induce a downwash between the cores.

use std::f64::consts::PI;

use crate::dataio::LidarScan;
use crate::error::{Error, Result};
use crate::geometry::{beam_unit_vector, ScanGeometry};
use crate::rng::SplitMix64;

/// Rotation sense of a vortex, doubling as its segmentation class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VortexClass {
    Port,
    Starboard,
}

impl VortexClass {
    /// Class id used in labels and file formats (1 = port, 2 = starboard).
    pub fn id(self) -> u8 {
        match self {
            VortexClass::Port => 1,
            VortexClass::Starboard => 2,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(VortexClass::Port),
            2 => Some(VortexClass::Starboard),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VortexClass::Port => "port",
            VortexClass::Starboard => "starboard",
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            VortexClass::Port => VortexClass::Starboard,
            VortexClass::Starboard => VortexClass::Port,
        }
    }

    /// +1 for counter-clockwise rotation in the (y, z) plane.
    fn rotation_sign(self) -> f64 {
        match self {
            VortexClass::Port => 1.0,
            VortexClass::Starboard => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VortexSpec {
    pub class: VortexClass,
    /// Core centre `(y, z)` in meters.
    pub center: (f64, f64),
    /// Circulation magnitude in m²/s.
    pub circulation: f64,
    /// Core radius in meters.
    pub core_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub vortices: Vec<VortexSpec>,
    /// Uniform background wind `(v_y, v_z)` in m/s.
    pub crosswind: (f64, f64),
    /// Standard deviation of additive radial-velocity noise, m/s.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self, geom: &ScanGeometry) -> Result<()> {
        if self.vortices.len() > 3 {
            return Err(Error::invalid(format!(
                "a scene holds at most 3 vortices, got {}",
                self.vortices.len()
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be finite and >= 0"));
        }
        if !(self.crosswind.0.is_finite() && self.crosswind.1.is_finite()) {
            return Err(Error::invalid("crosswind must be finite"));
        }
        for v in &self.vortices {
            if !(v.circulation > 0.0 && v.circulation.is_finite()) {
                return Err(Error::invalid("circulation must be positive"));
            }
            if !(v.core_radius > 0.0 && v.core_radius.is_finite()) {
                return Err(Error::invalid("core radius must be positive"));
            }
            if !geom.contains(v.center.0, v.center.1) {
                return Err(Error::invalid(format!(
                    "vortex centre ({}, {}) outside the scan sector",
                    v.center.0, v.center.1
                )));
            }
        }
        Ok(())
    }
}

/// Burnham–Hallock tangential speed at distance `r` from the core.
pub fn tangential_speed(circulation: f64, core_radius: f64, r: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    circulation / (2.0 * PI) * r / (r * r + core_radius * core_radius)
}

/// Wind vector `(v_y, v_z)` at `(y, z)`: crosswind plus every vortex.
pub fn induced_velocity(scene: &SceneSpec, y: f64, z: f64) -> (f64, f64) {
    let (mut vy, mut vz) = scene.crosswind;
    for v in &scene.vortices {
        let dy = y - v.center.0;
        let dz = z - v.center.1;
        let r = dy.hypot(dz);
        if r == 0.0 {
            continue;
        }
        let speed = v.class.rotation_sign() * tangential_speed(v.circulation, v.core_radius, r);
        // Counter-clockwise tangent of the offset (dy, dz) is (-dz, dy).
        vy += speed * (-dz / r);
        vz += speed * (dy / r);
    }
    (vy, vz)
}

/// Samples per range gate used to average the line-of-sight wind.
pub const GATE_SAMPLES: usize = 3;

/// Renders a scene onto the scan grid.
///
/// Each cell averages the projected wind at [`GATE_SAMPLES`] midpoints of its
/// gate interval, then adds Gaussian noise drawn in beam-major order from
/// `SplitMix64::new(scene.seed)`.
pub fn synth_scan(geom: &ScanGeometry, scene: &SceneSpec) -> Result<LidarScan> {
    geom.validate()?;
    scene.validate(geom)?;
    let mut rng = SplitMix64::new(scene.seed);
    let step = geom.gate_step();
    let mut vr = Vec::with_capacity(geom.n_cells());
    for beam in 0..geom.n_beams {
        let (u_y, u_z) = beam_unit_vector(geom.elevation(beam))?;
        for gate in 0..geom.n_gates {
            let center = geom.range(gate);
            let mut acc = 0.0;
            for m in 0..GATE_SAMPLES {
                let r = center - 0.5 * step + (m as f64 + 0.5) * step / GATE_SAMPLES as f64;
                let (vy, vz) = induced_velocity(scene, r * u_y, r * u_z);
                acc += vy * u_y + vz * u_z;
            }
            let mut value = acc / GATE_SAMPLES as f64;
            if scene.noise_sigma > 0.0 {
                value += scene.noise_sigma * rng.gaussian();
            }
            vr.push(value as f32);
        }
    }
    LidarScan::new(*geom, vr, scene.vortices.clone(), scene.seed)
}

/// Parameter ranges for [`random_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    /// Inclusive range of vortex counts, drawn uniformly.
    pub count_range: (usize, usize),
    pub circulation: (f64, f64),
    pub core_radius: (f64, f64),
    /// Lateral spacing of a port/starboard pair.
    pub pair_separation: (f64, f64),
    pub height: (f64, f64),
    /// Maximum magnitude of the horizontal crosswind.
    pub max_crosswind: f64,
    pub noise_sigma: f64,
    /// Minimum distance between a core and the sector boundary.
    pub boundary_margin: f64,
    /// Minimum distance between a lone vortex and any other core.
    pub min_separation: f64,
    pub geometry: ScanGeometry,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            count_range: (1, 3),
            circulation: (150.0, 450.0),
            core_radius: (2.0, 5.0),
            pair_separation: (40.0, 60.0),
            height: (60.0, 150.0),
            max_crosswind: 3.0,
            noise_sigma: 0.3,
            boundary_margin: 30.0,
            min_separation: 100.0,
            geometry: ScanGeometry::default(),
        }
    }
}

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let (lo, hi) = self.count_range;
        if lo > hi || hi > 3 {
            return Err(Error::invalid(format!(
                "vortex count range {lo}..={hi} must lie within 0..=3"
            )));
        }
        for (name, (a, b), positive) in [
            ("circulation", self.circulation, true),
            ("core_radius", self.core_radius, true),
            ("pair_separation", self.pair_separation, true),
            ("height", self.height, true),
        ] {
            if !(a.is_finite() && b.is_finite() && a <= b) || (positive && a <= 0.0) {
                return Err(Error::invalid(format!("impossible {name} range [{a}, {b}]")));
            }
        }
        if !(self.max_crosswind >= 0.0 && self.max_crosswind.is_finite()) {
            return Err(Error::invalid("max_crosswind must be >= 0"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be >= 0"));
        }
        if !(self.boundary_margin >= 0.0 && self.min_separation >= 0.0) {
            return Err(Error::invalid("margins must be >= 0"));
        }
        Ok(())
    }

    fn placeable(&self, y: f64, z: f64) -> bool {
        self.geometry.contains(y, z) && self.geometry.boundary_clearance(y, z) >= self.boundary_margin
    }

    fn random_class(rng: &mut SplitMix64) -> VortexClass {
        if rng.next_f64() < 0.5 {
            VortexClass::Port
        } else {
            VortexClass::Starboard
        }
    }

    fn strength(&self, rng: &mut SplitMix64) -> (f64, f64) {
        let gamma = rng.uniform(self.circulation.0, self.circulation.1);
        let rc = rng.uniform(self.core_radius.0, self.core_radius.1);
        (gamma, rc)
    }

    fn place_pair(&self, rng: &mut SplitMix64) -> Result<[VortexSpec; 2]> {
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let mid = rng.uniform(0.0, self.geometry.range_max);
            let z = rng.uniform(self.height.0, self.height.1);
            let b0 = rng.uniform(self.pair_separation.0, self.pair_separation.1);
            let port = (mid + 0.5 * b0, z);
            let starboard = (mid - 0.5 * b0, z);
            if !(self.placeable(port.0, port.1) && self.placeable(starboard.0, starboard.1)) {
                continue;
            }
            // Both vortices of a pair share the aircraft's strength.
            let (gamma, rc) = self.strength(rng);
            let mk = |class, center| VortexSpec {
                class,
                center,
                circulation: gamma,
                core_radius: rc,
            };
            return Ok([mk(VortexClass::Port, port), mk(VortexClass::Starboard, starboard)]);
        }
        Err(Error::invalid("could not place a vortex pair inside the sector"))
    }

    fn place_single(&self, rng: &mut SplitMix64, others: &[VortexSpec]) -> Result<VortexSpec> {
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let y = rng.uniform(0.0, self.geometry.range_max);
            let z = rng.uniform(self.height.0, self.height.1);
            if !self.placeable(y, z) {
                continue;
            }
            let clear = others.iter().all(|o| {
                (o.center.0 - y).hypot(o.center.1 - z) >= self.min_separation
            });
            if !clear {
                continue;
            }
            let class = Self::random_class(rng);
            let (circulation, core_radius) = self.strength(rng);
            return Ok(VortexSpec {
                class,
                center: (y, z),
                circulation,
                core_radius,
            });
        }
        Err(Error::invalid("could not place a vortex inside the sector"))
    }
}

/// Draws a scene deterministically from `seed`.
///
/// One vortex is a lone vortex of random class; two are a port/starboard
/// pair at a common height; three are a pair plus an older lone vortex kept
/// at least `min_separation` away from both.
pub fn random_scene(seed: u64, config: &SceneConfig) -> Result<SceneSpec> {
    config.validate()?;
    let mut rng = SplitMix64::new(seed);
    let (lo, hi) = config.count_range;
    let count = lo + rng.below(hi - lo + 1);
    let mut vortices = Vec::with_capacity(count);
    if count >= 2 {
        vortices.extend(config.place_pair(&mut rng)?);
    }
    if count % 2 == 1 {
        let lone = config.place_single(&mut rng, &vortices)?;
        vortices.push(lone);
    }
    let crosswind = (rng.uniform(-config.max_crosswind, config.max_crosswind), 0.0);
    Ok(SceneSpec {
        vortices,
        crosswind,
        noise_sigma: config.noise_sigma,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(vortices: Vec<VortexSpec>, crosswind: (f64, f64)) -> SceneSpec {
        SceneSpec {
            vortices,
            crosswind,
            noise_sigma: 0.0,
            seed: 1,
        }
    }

    fn vortex(class: VortexClass, y: f64, z: f64) -> VortexSpec {
        VortexSpec {
            class,
            center: (y, z),
            circulation: 300.0,
            core_radius: 3.0,
        }
    }

    #[test]
    fn tangential_speed_examples() {
        assert_eq!(tangential_speed(300.0, 3.0, 0.0), 0.0);
        let at_core = tangential_speed(300.0, 3.0, 3.0);
        assert!((at_core - 300.0 / (4.0 * PI * 3.0)).abs() < 1e-12);
        assert!((at_core - 7.9577).abs() < 1e-4);
        // 300 / (2 pi) * 10 / 109
        assert!((tangential_speed(300.0, 3.0, 10.0) - 4.3804).abs() < 1e-4);
    }

    #[test]
    fn tangential_speed_peaks_at_core_radius() {
        let rc = 3.0;
        let peak = tangential_speed(300.0, rc, rc);
        for i in 1..200 {
            let r = i as f64 * 0.1;
            assert!(tangential_speed(300.0, rc, r) <= peak + 1e-12);
        }
        assert!(tangential_speed(300.0, rc, 1.0) < tangential_speed(300.0, rc, 2.0));
        assert!(tangential_speed(300.0, rc, 20.0) > tangential_speed(300.0, rc, 40.0));
    }

    #[test]
    fn empty_scene_is_crosswind() {
        let scene = quiet(vec![], (5.0, 0.0));
        assert_eq!(induced_velocity(&scene, 123.0, 45.0), (5.0, 0.0));
    }

    #[test]
    fn centre_sees_crosswind_only() {
        let scene = quiet(vec![vortex(VortexClass::Port, 300.0, 100.0)], (1.5, -0.5));
        assert_eq!(induced_velocity(&scene, 300.0, 100.0), (1.5, -0.5));
    }

    #[test]
    fn port_is_positive_below_and_negative_above_for_horizontal_beam() {
        let scene = quiet(vec![vortex(VortexClass::Port, 300.0, 100.0)], (0.0, 0.0));
        let (below, _) = induced_velocity(&scene, 300.0, 90.0);
        let (above, _) = induced_velocity(&scene, 300.0, 110.0);
        assert!(below > 0.0 && above < 0.0);
        let scene = quiet(vec![vortex(VortexClass::Starboard, 300.0, 100.0)], (0.0, 0.0));
        let (below, _) = induced_velocity(&scene, 300.0, 90.0);
        assert!(below < 0.0);
    }

    #[test]
    fn symmetric_pair_adds_downwash_at_midpoint() {
        let port = vortex(VortexClass::Port, 325.0, 100.0);
        let starboard = vortex(VortexClass::Starboard, 275.0, 100.0);
        let scene = quiet(vec![port, starboard], (0.0, 0.0));
        let (vy, vz) = induced_velocity(&scene, 300.0, 100.0);
        // Each core contributes V(25) straight down.
        let single = tangential_speed(300.0, 3.0, 25.0);
        assert!(vy.abs() < 1e-12);
        assert!((vz + 2.0 * single).abs() < 1e-12, "vz = {vz}");
    }

    #[test]
    fn empty_quiet_scan_is_zero() {
        let geom = ScanGeometry {
            n_beams: 8,
            n_gates: 10,
            ..ScanGeometry::default()
        };
        let scan = synth_scan(&geom, &quiet(vec![], (0.0, 0.0))).unwrap();
        assert!(scan.vr().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn crosswind_projects_onto_each_beam() {
        let geom = ScanGeometry {
            n_beams: 7,
            n_gates: 9,
            ..ScanGeometry::default()
        };
        let c = 4.0;
        let scan = synth_scan(&geom, &quiet(vec![], (c, 0.0))).unwrap();
        for beam in 0..geom.n_beams {
            let expected = (c * geom.elevation(beam).to_radians().cos()) as f32;
            for gate in 0..geom.n_gates {
                let v = scan.vr()[geom.cell_index(beam, gate)];
                assert!((v - expected).abs() < 1e-6, "beam {beam}: {v} vs {expected}");
            }
        }
    }

    #[test]
    fn scans_are_deterministic() {
        let config = SceneConfig::default();
        let scene = random_scene(17, &config).unwrap();
        let a = synth_scan(&config.geometry, &scene).unwrap();
        let b = synth_scan(&config.geometry, &scene).unwrap();
        assert_eq!(a, b);
        let bits_a: Vec<u32> = a.vr().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u32> = b.vr().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }

    #[test]
    fn vortex_outside_sector_is_rejected() {
        let geom = ScanGeometry::default();
        let scene = quiet(vec![vortex(VortexClass::Port, 300.0, 400.0)], (0.0, 0.0));
        assert!(synth_scan(&geom, &scene).is_err());
    }

    #[test]
    fn class_swap_negates_quiet_pair_scan() {
        // Exchanging the rotation senses of a mirror-symmetric pair is the
        // same field as reflecting it about the symmetry axis; the radial
        // component flips sign exactly.
        let geom = ScanGeometry {
            n_beams: 12,
            n_gates: 16,
            ..ScanGeometry::default()
        };
        let pair = |left: VortexClass| {
            quiet(
                vec![vortex(left.opposite(), 330.0, 90.0), vortex(left, 280.0, 90.0)],
                (0.0, 0.0),
            )
        };
        let a = synth_scan(&geom, &pair(VortexClass::Starboard)).unwrap();
        let b = synth_scan(&geom, &pair(VortexClass::Port)).unwrap();
        for (x, y) in a.vr().iter().zip(b.vr()) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn forced_pair_scene() {
        let config = SceneConfig {
            count_range: (2, 2),
            ..SceneConfig::default()
        };
        for seed in 0..50 {
            let scene = random_scene(seed, &config).unwrap();
            assert_eq!(scene.vortices.len(), 2);
            let classes: Vec<_> = scene.vortices.iter().map(|v| v.class).collect();
            assert_eq!(classes, vec![VortexClass::Port, VortexClass::Starboard]);
            assert_eq!(scene.vortices[0].center.1, scene.vortices[1].center.1);
            let sep = scene.vortices[0].center.0 - scene.vortices[1].center.0;
            assert!((40.0..=60.0).contains(&sep));
        }
    }

    #[test]
    fn random_scene_is_deterministic() {
        let config = SceneConfig::default();
        assert_eq!(random_scene(5, &config).unwrap(), random_scene(5, &config).unwrap());
        assert_ne!(random_scene(5, &config).unwrap(), random_scene(6, &config).unwrap());
    }

    #[test]
    fn thousand_scenes_respect_ranges() {
        let config = SceneConfig::default();
        let mut counts = [0usize; 4];
        for seed in 0..1000 {
            let scene = random_scene(seed, &config).unwrap();
            counts[scene.vortices.len()] += 1;
            assert!(scene.crosswind.0.abs() <= 3.0);
            for v in &scene.vortices {
                assert!(config.geometry.contains(v.center.0, v.center.1));
                assert!((150.0..=450.0).contains(&v.circulation));
                assert!((2.0..=5.0).contains(&v.core_radius));
                assert!((60.0..=150.0).contains(&v.center.1));
            }
        }
        assert_eq!(counts[0], 0);
        for c in &counts[1..] {
            assert!(*c > 250, "counts {counts:?}");
        }
    }

    #[test]
    fn impossible_ranges_rejected() {
        let bad = SceneConfig {
            circulation: (300.0, 100.0),
            ..SceneConfig::default()
        };
        assert!(random_scene(1, &bad).is_err());
        let bad = SceneConfig {
            count_range: (1, 4),
            ..SceneConfig::default()
        };
        assert!(random_scene(1, &bad).is_err());
        let unplaceable = SceneConfig {
            height: (500.0, 600.0),
            ..SceneConfig::default()
        };
        assert!(random_scene(1, &unplaceable).is_err());
    }
}
