//! Scan-plane geometry.
//!
//! The LiDAR sits at the origin of the vertical (y, z) plane; `y` runs
//! horizontally away from the instrument and `z` is height. A beam at
//! elevation `phi` (degrees above the ground) probes points at distance
//! `range` along `(cos phi, sin phi)`.

use crate::error::{Error, Result};

/// Polar scan grid: `n_beams` elevations spaced evenly over
/// `[elevation_min, elevation_max]` and `n_gates` range-gate centres spaced
/// evenly over `[range_min, range_max]`, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanGeometry {
    pub n_beams: usize,
    pub n_gates: usize,
    pub elevation_min: f64,
    pub elevation_max: f64,
    pub range_min: f64,
    pub range_max: f64,
}

impl Default for ScanGeometry {
    fn default() -> Self {
        Self {
            n_beams: 120,
            n_gates: 120,
            elevation_min: 0.0,
            elevation_max: 30.0,
            range_min: 100.0,
            range_max: 700.0,
        }
    }
}

impl ScanGeometry {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.elevation_min,
            self.elevation_max,
            self.range_min,
            self.range_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("scan geometry has non-finite bounds"));
        }
        if self.n_beams < 2 || self.n_gates < 2 {
            return Err(Error::invalid(format!(
                "scan needs at least 2 beams and 2 gates, got {}x{}",
                self.n_beams, self.n_gates
            )));
        }
        if !(0.0 <= self.elevation_min
            && self.elevation_min < self.elevation_max
            && self.elevation_max <= 90.0)
        {
            return Err(Error::invalid(format!(
                "elevation sector [{}, {}] outside 0..=90 or empty",
                self.elevation_min, self.elevation_max
            )));
        }
        if !(0.0 < self.range_min && self.range_min < self.range_max) {
            return Err(Error::invalid(format!(
                "range interval [{}, {}] must satisfy 0 < min < max",
                self.range_min, self.range_max
            )));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.n_beams * self.n_gates
    }

    pub fn beam_step(&self) -> f64 {
        (self.elevation_max - self.elevation_min) / (self.n_beams - 1) as f64
    }

    pub fn gate_step(&self) -> f64 {
        (self.range_max - self.range_min) / (self.n_gates - 1) as f64
    }

    /// Elevation of beam `i` in degrees.
    pub fn elevation(&self, beam: usize) -> f64 {
        if beam + 1 == self.n_beams {
            self.elevation_max
        } else {
            self.elevation_min + beam as f64 * self.beam_step()
        }
    }

    /// Centre range of gate `j` in meters.
    pub fn range(&self, gate: usize) -> f64 {
        if gate + 1 == self.n_gates {
            self.range_max
        } else {
            self.range_min + gate as f64 * self.gate_step()
        }
    }

    /// Beam-major flat index of a cell.
    pub fn cell_index(&self, beam: usize, gate: usize) -> usize {
        beam * self.n_gates + gate
    }

    /// `(beam, gate)` of a flat cell index.
    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        (cell / self.n_gates, cell % self.n_gates)
    }

    /// Cartesian position `(y, z)` of a cell centre.
    pub fn cell_position(&self, cell: usize) -> (f64, f64) {
        let (beam, gate) = self.cell_coords(cell);
        let (u_y, u_z) = unit(self.elevation(beam).to_radians());
        let r = self.range(gate);
        (r * u_y, r * u_z)
    }

    /// Whether a Cartesian point lies inside the scanned sector.
    pub fn contains(&self, y: f64, z: f64) -> bool {
        if !(y.is_finite() && z.is_finite()) || (y == 0.0 && z == 0.0) || z < 0.0 {
            return false;
        }
        let r = y.hypot(z);
        let phi = z.atan2(y).to_degrees();
        r >= self.range_min
            && r <= self.range_max
            && phi >= self.elevation_min
            && phi <= self.elevation_max
    }

    /// Distance from an interior point to the nearest sector boundary
    /// (the two range arcs and the two bounding beams). Negative outside.
    pub fn boundary_clearance(&self, y: f64, z: f64) -> f64 {
        let r = y.hypot(z);
        let mut clearance = (r - self.range_min).min(self.range_max - r);
        for (phi, sign) in [(self.elevation_min, 1.0), (self.elevation_max, -1.0)] {
            let (c, s) = unit(phi.to_radians());
            // Signed distance to the beam line, positive on the sector side.
            clearance = clearance.min(sign * (-s * y + c * z));
        }
        if self.contains(y, z) {
            clearance
        } else {
            -clearance.abs()
        }
    }
}

fn unit(phi_rad: f64) -> (f64, f64) {
    (phi_rad.cos(), phi_rad.sin())
}

fn check_elevation(phi: f64) -> Result<()> {
    if !phi.is_finite() || !(0.0..=90.0).contains(&phi) {
        return Err(Error::invalid(format!(
            "elevation {phi} outside [0, 90] degrees"
        )));
    }
    Ok(())
}

/// Converts a beam elevation (degrees) and range (m) to `(y, z)` meters.
pub fn polar_to_cartesian(phi: f64, range: f64) -> Result<(f64, f64)> {
    check_elevation(phi)?;
    if !range.is_finite() || range <= 0.0 {
        return Err(Error::invalid(format!("range {range} must be positive")));
    }
    let (u_y, u_z) = unit(phi.to_radians());
    Ok((range * u_y, range * u_z))
}

/// Inverse of [`polar_to_cartesian`]: returns `(phi_degrees, range_m)`.
pub fn cartesian_to_polar(y: f64, z: f64) -> Result<(f64, f64)> {
    if !(y.is_finite() && z.is_finite()) {
        return Err(Error::invalid("non-finite cartesian input"));
    }
    if y == 0.0 && z == 0.0 {
        return Err(Error::invalid("the origin has no elevation"));
    }
    if z < 0.0 {
        return Err(Error::invalid(format!("point below ground (z = {z})")));
    }
    Ok((z.atan2(y).to_degrees(), y.hypot(z)))
}

/// Beam direction onto which the wind is projected.
pub fn beam_unit_vector(phi: f64) -> Result<(f64, f64)> {
    check_elevation(phi)?;
    Ok(unit(phi.to_radians()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn polar_examples() {
        let (y, z) = polar_to_cartesian(0.0, 100.0).unwrap();
        assert!(close(y, 100.0, 1e-12) && close(z, 0.0, 1e-12));
        let (y, z) = polar_to_cartesian(90.0, 50.0).unwrap();
        assert!(close(y, 0.0, 1e-12) && close(z, 50.0, 1e-12));
        let (y, z) = polar_to_cartesian(30.0, 100.0).unwrap();
        assert!(close(y, 86.6025, 1e-4) && close(z, 50.0, 1e-12));
    }

    #[test]
    fn cartesian_examples() {
        let (phi, r) = cartesian_to_polar(100.0, 0.0).unwrap();
        assert!(close(phi, 0.0, 1e-12) && close(r, 100.0, 1e-12));
        let (phi, r) = cartesian_to_polar(0.0, 50.0).unwrap();
        assert!(close(phi, 90.0, 1e-12) && close(r, 50.0, 1e-12));
        let (phi, r) = cartesian_to_polar(86.6025, 50.0).unwrap();
        assert!(close(phi, 30.0, 1e-4) && close(r, 100.0, 1e-4));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(polar_to_cartesian(-1.0, 10.0).is_err());
        assert!(polar_to_cartesian(91.0, 10.0).is_err());
        assert!(polar_to_cartesian(10.0, 0.0).is_err());
        assert!(polar_to_cartesian(f64::NAN, 10.0).is_err());
        assert!(polar_to_cartesian(10.0, f64::INFINITY).is_err());
        assert!(cartesian_to_polar(0.0, 0.0).is_err());
        assert!(cartesian_to_polar(1.0, -1.0).is_err());
        assert!(beam_unit_vector(120.0).is_err());
    }

    #[test]
    fn unit_vector_examples() {
        let (a, b) = beam_unit_vector(0.0).unwrap();
        assert!(close(a, 1.0, 1e-15) && close(b, 0.0, 1e-15));
        let (a, b) = beam_unit_vector(90.0).unwrap();
        assert!(close(a, 0.0, 1e-15) && close(b, 1.0, 1e-15));
        let (a, b) = beam_unit_vector(45.0).unwrap();
        assert!(close(a, 0.70711, 1e-5) && close(b, 0.70711, 1e-5));
    }

    #[test]
    fn default_geometry_cells() {
        let g = ScanGeometry::default();
        g.validate().unwrap();
        assert_eq!(g.n_cells(), 14_400);
        assert_eq!(g.elevation(119), 30.0);
        assert_eq!(g.range(0), 100.0);
        assert_eq!(g.range(119), 700.0);
        assert!(g.contains(300.0, 100.0));
        assert!(!g.contains(300.0, 200.0));
        assert!(!g.contains(50.0, 10.0));
    }

    #[test]
    fn invalid_geometry_rejected() {
        let mut g = ScanGeometry::default();
        g.n_beams = 1;
        assert!(g.validate().is_err());
        let mut g = ScanGeometry::default();
        g.elevation_min = 40.0;
        assert!(g.validate().is_err());
        let mut g = ScanGeometry::default();
        g.range_min = 0.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn clearance_measures_distance_to_edges() {
        let g = ScanGeometry::default();
        // On the ground beam at range 400: clearance limited by elevation 0 line.
        assert!(close(g.boundary_clearance(400.0, 5.0), 5.0, 1e-9));
        assert!(close(g.boundary_clearance(690.0, 100.0), 700.0 - 690.0f64.hypot(100.0), 1e-9));
        assert!(g.boundary_clearance(900.0, 10.0) < 0.0);
    }

    proptest! {
        #[test]
        fn polar_round_trip(phi in 0.0f64..=90.0, range in 1e-3f64..1e5) {
            let (y, z) = polar_to_cartesian(phi, range).unwrap();
            let (phi2, r2) = cartesian_to_polar(y, z).unwrap();
            prop_assert!((r2 - range).abs() <= 1e-9 * range);
            prop_assert!((phi2 - phi).abs() <= 1e-9 * phi.max(1.0));
        }

        #[test]
        fn unit_vector_has_unit_norm(phi in 0.0f64..=90.0) {
            let (a, b) = beam_unit_vector(phi).unwrap();
            prop_assert!((a.hypot(b) - 1.0).abs() <= 1e-12);
        }
    }
}
