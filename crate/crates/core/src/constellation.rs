//! Walker-style constellation generation and the geometric queries the rest of
//! the simulator needs: circular-orbit propagation, Earth occlusion, ground
//! station elevation, and a deterministic ground-station lattice.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConstellationError {
    #[error("shell {index}: {message}")]
    InvalidShell { index: usize, message: String },
    #[error("constellation has no shells")]
    Empty,
    #[error("unknown constellation preset `{0}`")]
    UnknownPreset(String),
}

/// Physical constants of the central body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyModel {
    pub earth_radius_km: f64,
    pub mu_km3_s2: f64,
    pub c_km_per_s: f64,
}

impl BodyModel {
    pub const EARTH: BodyModel = BodyModel {
        earth_radius_km: 6371.0,
        mu_km3_s2: 398_600.441_8,
        c_km_per_s: 299_792.458,
    };
}

impl Default for BodyModel {
    fn default() -> Self {
        Self::EARTH
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

fn default_raan_spread() -> f64 {
    360.0
}

/// One shell of identical circular orbits.
///
/// `phasing_offset` is the fraction of an in-plane slot by which each plane is
/// shifted relative to the previous one. `raan_spread_deg` is the arc over
/// which the ascending nodes are spread: 360 for a Walker delta pattern, 180
/// for a polar star pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellSpec {
    pub plane_count: u32,
    pub sats_per_plane: u32,
    pub altitude_km: f64,
    pub inclination_deg: f64,
    #[serde(default)]
    pub phasing_offset: f64,
    #[serde(default)]
    pub raan0_deg: f64,
    #[serde(default = "default_raan_spread")]
    pub raan_spread_deg: f64,
}

impl ShellSpec {
    pub fn new(
        plane_count: u32,
        sats_per_plane: u32,
        altitude_km: f64,
        inclination_deg: f64,
        phasing_offset: f64,
        raan0_deg: f64,
    ) -> Result<Self, ConstellationError> {
        let spec = Self {
            plane_count,
            sats_per_plane,
            altitude_km,
            inclination_deg,
            phasing_offset,
            raan0_deg,
            raan_spread_deg: 360.0,
        };
        spec.validate(0)?;
        Ok(spec)
    }

    pub fn with_raan_spread(mut self, spread_deg: f64) -> Self {
        self.raan_spread_deg = spread_deg;
        self
    }

    pub fn satellite_count(&self) -> usize {
        self.plane_count as usize * self.sats_per_plane as usize
    }

    pub fn validate(&self, index: usize) -> Result<(), ConstellationError> {
        let bad = |message: &str| {
            Err(ConstellationError::InvalidShell {
                index,
                message: message.to_string(),
            })
        };
        if self.plane_count < 1 {
            return bad("plane_count must be >= 1");
        }
        if self.sats_per_plane < 1 {
            return bad("sats_per_plane must be >= 1");
        }
        if !(self.altitude_km.is_finite() && self.altitude_km > 0.0) {
            return bad("altitude_km must be > 0");
        }
        if !(0.0..=180.0).contains(&self.inclination_deg) {
            return bad("inclination_deg must be in [0, 180]");
        }
        if !(0.0..1.0).contains(&self.phasing_offset) {
            return bad("phasing_offset must be in [0, 1)");
        }
        if !(self.raan_spread_deg > 0.0 && self.raan_spread_deg <= 360.0) {
            return bad("raan_spread_deg must be in (0, 360]");
        }
        if !self.raan0_deg.is_finite() {
            return bad("raan0_deg must be finite");
        }
        Ok(())
    }
}

/// Orbital elements of one satellite on a circular orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteElements {
    pub shell: u32,
    pub plane: u32,
    pub slot: u32,
    pub raan_rad: f64,
    /// Argument of latitude at t = 0.
    pub phase_rad: f64,
    pub inclination_rad: f64,
    pub radius_km: f64,
    pub mean_motion_rad_s: f64,
}

impl SatelliteElements {
    pub fn period_s(&self) -> f64 {
        2.0 * PI / self.mean_motion_rad_s
    }

    /// Earth-centred inertial position at `t` seconds.
    pub fn position_at(&self, t: f64) -> Vec3 {
        let u = self.phase_rad + self.mean_motion_rad_s * t;
        let (su, cu) = u.sin_cos();
        let (si, ci) = self.inclination_rad.sin_cos();
        let (so, co) = self.raan_rad.sin_cos();
        Vec3::new(
            self.radius_km * (co * cu - so * su * ci),
            self.radius_km * (so * cu + co * su * ci),
            self.radius_km * su * si,
        )
    }
}

/// Lays out `plane_count × sats_per_plane` satellites; satellite `i` sits in
/// plane `i / sats_per_plane`, slot `i % sats_per_plane`.
pub fn generate_shell(spec: &ShellSpec, shell: u32, body: &BodyModel) -> Vec<SatelliteElements> {
    let radius_km = body.earth_radius_km + spec.altitude_km;
    let mean_motion = (body.mu_km3_s2 / radius_km.powi(3)).sqrt();
    let planes = spec.plane_count;
    let slots = spec.sats_per_plane;
    let raan_step = spec.raan_spread_deg / planes as f64;
    let slot_step = 360.0 / slots as f64;
    let mut out = Vec::with_capacity(spec.satellite_count());
    for plane in 0..planes {
        for slot in 0..slots {
            let raan = spec.raan0_deg + plane as f64 * raan_step;
            let phase = slot as f64 * slot_step + plane as f64 * spec.phasing_offset * slot_step;
            out.push(SatelliteElements {
                shell,
                plane,
                slot,
                raan_rad: raan.rem_euclid(360.0).to_radians(),
                phase_rad: phase.rem_euclid(360.0).to_radians(),
                inclination_rad: spec.inclination_deg.to_radians(),
                radius_km,
                mean_motion_rad_s: mean_motion,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationSpec {
    pub name: String,
    pub shells: Vec<ShellSpec>,
    /// `None` means ISLs are limited only by Earth occlusion.
    pub isl_max_range_km: Option<f64>,
    pub gst_elevation_mask_deg: f64,
}

impl ConstellationSpec {
    pub const PRESETS: [&'static str; 3] = ["iridium", "starlink", "leoleo"];

    pub fn iridium() -> Self {
        Self {
            name: "iridium".into(),
            shells: vec![iridium_shell()],
            isl_max_range_km: None,
            gst_elevation_mask_deg: 10.0,
        }
    }

    pub fn starlink() -> Self {
        Self {
            name: "starlink".into(),
            shells: vec![starlink_shell()],
            isl_max_range_km: None,
            gst_elevation_mask_deg: 10.0,
        }
    }

    pub fn leoleo() -> Self {
        Self {
            name: "leoleo".into(),
            shells: vec![starlink_shell(), iridium_shell()],
            isl_max_range_km: None,
            gst_elevation_mask_deg: 10.0,
        }
    }

    pub fn preset(name: &str) -> Result<Self, ConstellationError> {
        match name {
            "iridium" => Ok(Self::iridium()),
            "starlink" => Ok(Self::starlink()),
            "leoleo" => Ok(Self::leoleo()),
            other => Err(ConstellationError::UnknownPreset(other.to_string())),
        }
    }

    pub fn satellite_count(&self) -> usize {
        self.shells.iter().map(ShellSpec::satellite_count).sum()
    }

    pub fn validate(&self) -> Result<(), ConstellationError> {
        if self.shells.is_empty() {
            return Err(ConstellationError::Empty);
        }
        for (i, shell) in self.shells.iter().enumerate() {
            shell.validate(i)?;
        }
        Ok(())
    }
}

fn iridium_shell() -> ShellSpec {
    ShellSpec {
        plane_count: 6,
        sats_per_plane: 11,
        altitude_km: 780.0,
        inclination_deg: 86.4,
        phasing_offset: 0.5,
        raan0_deg: 0.0,
        raan_spread_deg: 180.0,
    }
}

fn starlink_shell() -> ShellSpec {
    ShellSpec {
        plane_count: 72,
        sats_per_plane: 22,
        altitude_km: 550.0,
        inclination_deg: 53.0,
        phasing_offset: 0.5,
        raan0_deg: 0.0,
        raan_spread_deg: 360.0,
    }
}

/// A generated constellation: satellites are numbered shell by shell.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub spec: ConstellationSpec,
    pub body: BodyModel,
    pub satellites: Vec<SatelliteElements>,
    /// First satellite index of each shell.
    pub shell_offsets: Vec<usize>,
}

impl Constellation {
    pub fn new(spec: ConstellationSpec, body: BodyModel) -> Result<Self, ConstellationError> {
        spec.validate()?;
        let mut satellites = Vec::with_capacity(spec.satellite_count());
        let mut shell_offsets = Vec::with_capacity(spec.shells.len());
        for (i, shell) in spec.shells.iter().enumerate() {
            shell_offsets.push(satellites.len());
            satellites.extend(generate_shell(shell, i as u32, &body));
        }
        Ok(Self {
            spec,
            body,
            satellites,
            shell_offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.satellites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.satellites.is_empty()
    }

    pub fn positions_at(&self, t: f64) -> Vec<Vec3> {
        self.satellites.iter().map(|s| s.position_at(t)).collect()
    }

    /// Satellite index of (shell, plane, slot).
    pub fn index_of(&self, shell: usize, plane: u32, slot: u32) -> usize {
        let spec = &self.spec.shells[shell];
        self.shell_offsets[shell] + (plane * spec.sats_per_plane + slot) as usize
    }
}

/// True iff the straight segment p1–p2 stays strictly outside the sphere.
pub fn line_of_sight(p1: Vec3, p2: Vec3, radius_km: f64) -> bool {
    let d = p2 - p1;
    let len2 = d.dot(d);
    let s = if len2 == 0.0 {
        0.0
    } else {
        (-p1.dot(d) / len2).clamp(0.0, 1.0)
    };
    let closest = p1 + d * s;
    closest.norm() > radius_km
}

/// Elevation of `sat` above the local horizon at `gst`, in degrees.
pub fn elevation_deg(gst: Vec3, sat: Vec3) -> f64 {
    let v = sat - gst;
    let range = v.norm();
    if range == 0.0 {
        return 90.0;
    }
    let up = gst * (1.0 / gst.norm());
    let vertical = v.dot(up);
    let horizontal = (v - up * vertical).norm();
    vertical.atan2(horizontal).to_degrees()
}

pub fn geodetic_to_ecef(lat_deg: f64, lon_deg: f64, radius_km: f64) -> Vec3 {
    let (slat, clat) = lat_deg.to_radians().sin_cos();
    let (slon, clon) = lon_deg.to_radians().sin_cos();
    Vec3::new(radius_km * clat * clon, radius_km * clat * slon, radius_km * slat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStationSet {
    pub count: usize,
    pub seed: u64,
    /// (latitude, longitude) in degrees.
    pub positions: Vec<(f64, f64)>,
}

impl GroundStationSet {
    pub fn ecef(&self, body: &BodyModel) -> Vec<Vec3> {
        self.positions
            .iter()
            .map(|&(lat, lon)| geodetic_to_ecef(lat, lon, body.earth_radius_km))
            .collect()
    }
}

/// Fibonacci lattice on the sphere, rotated in longitude by a seeded offset.
pub fn fibonacci_ground_stations(count: usize, seed: u64) -> GroundStationSet {
    let golden_angle = 180.0 * (3.0 - 5f64.sqrt());
    let offset: f64 = ChaCha8Rng::seed_from_u64(seed).gen_range(0.0..360.0);
    let positions = (0..count)
        .map(|i| {
            let z = 1.0 - (2 * i + 1) as f64 / count as f64;
            let lat = z.clamp(-1.0, 1.0).asin().to_degrees();
            let lon = (i as f64 * golden_angle + offset).rem_euclid(360.0);
            let lon = if lon > 180.0 { lon - 360.0 } else { lon };
            (lat, lon)
        })
        .collect();
    GroundStationSet {
        count,
        seed,
        positions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const R: f64 = 6371.0;

    fn great_circle_deg(a: (f64, f64), b: (f64, f64)) -> f64 {
        let pa = geodetic_to_ecef(a.0, a.1, 1.0);
        let pb = geodetic_to_ecef(b.0, b.1, 1.0);
        pa.dot(pb).clamp(-1.0, 1.0).acos().to_degrees()
    }

    #[test]
    fn iridium_shell_layout() {
        let spec = ShellSpec::new(6, 11, 780.0, 86.4, 0.0, 0.0).unwrap();
        let sats = generate_shell(&spec, 0, &BodyModel::EARTH);
        assert_eq!(sats.len(), 66);
        for (i, s) in sats.iter().enumerate() {
            assert_eq!(s.plane as usize, i / 11);
            assert_eq!(s.slot as usize, i % 11);
        }
    }

    #[test]
    fn degenerate_shell() {
        let spec = ShellSpec::new(1, 1, 550.0, 53.0, 0.0, 0.0).unwrap();
        let sats = generate_shell(&spec, 0, &BodyModel::EARTH);
        assert_eq!(sats.len(), 1);
        assert_eq!(sats[0].phase_rad, 0.0);
        assert_eq!(sats[0].raan_rad, 0.0);
    }

    #[test]
    fn starlink_shell_phasing_matches_walker_oracle() {
        // Independent Walker layout: plane p, slot s at RAAN 360p/P and
        // phase 360s/S + 360 f p / S (degrees).
        let (p_count, s_count, f) = (72u32, 22u32, 0.5);
        let spec = ShellSpec::new(p_count, s_count, 550.0, 53.0, f, 0.0).unwrap();
        let sats = generate_shell(&spec, 0, &BodyModel::EARTH);
        assert_eq!(sats.len(), 1584);
        for p in 0..p_count {
            for s in 0..s_count {
                let raan = 360.0 * p as f64 / p_count as f64;
                let phase = (360.0 * s as f64 / s_count as f64 + 360.0 * f * p as f64 / s_count as f64)
                    .rem_euclid(360.0);
                let sat = &sats[(p * s_count + s) as usize];
                assert!((sat.raan_rad.to_degrees() - raan).abs() < 1e-9);
                assert!((sat.phase_rad.to_degrees() - phase).abs() < 1e-9);
            }
        }
        let d = sats[22].phase_rad.to_degrees() - sats[0].phase_rad.to_degrees();
        assert!((d - 0.5 * 360.0 / 22.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_invalid_shells() {
        assert!(ShellSpec::new(0, 1, 550.0, 53.0, 0.0, 0.0).is_err());
        assert!(ShellSpec::new(1, 0, 550.0, 53.0, 0.0, 0.0).is_err());
        assert!(ShellSpec::new(1, 1, 0.0, 53.0, 0.0, 0.0).is_err());
        assert!(ShellSpec::new(1, 1, 550.0, 181.0, 0.0, 0.0).is_err());
        assert!(ShellSpec::new(1, 1, 550.0, 53.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn preset_totals() {
        assert_eq!(ConstellationSpec::iridium().satellite_count(), 66);
        assert_eq!(ConstellationSpec::starlink().satellite_count(), 1584);
        assert_eq!(ConstellationSpec::leoleo().satellite_count(), 1650);
        assert!(ConstellationSpec::preset("molniya").is_err());
    }

    #[test]
    fn orbital_period_at_550_km() {
        // T = 2 pi sqrt(a^3 / mu), evaluated directly.
        let a: f64 = 6921.0;
        let expected = 2.0 * PI * (a.powi(3) / 398_600.441_8).sqrt();
        assert!((expected - 5731.0).abs() < 1.0);
        let spec = ShellSpec::new(1, 1, 550.0, 53.0, 0.0, 0.0).unwrap();
        let sat = generate_shell(&spec, 0, &BodyModel::EARTH)[0];
        assert!((sat.period_s() - expected).abs() < 1e-9);
        for t in [0.0, 123.4, 4000.0] {
            let p0 = sat.position_at(t);
            let p1 = sat.position_at(t + sat.period_s());
            assert!(p0.distance(p1) < 1e-6);
        }
    }

    #[test]
    fn identity_orientation_on_x_axis() {
        let spec = ShellSpec::new(1, 1, 550.0, 0.0, 0.0, 0.0).unwrap();
        let sat = generate_shell(&spec, 0, &BodyModel::EARTH)[0];
        let p = sat.position_at(0.0);
        assert!((p.x - 6921.0).abs() < 1e-9 && p.y.abs() < 1e-9 && p.z.abs() < 1e-9);
    }

    #[test]
    fn line_of_sight_cases() {
        let r = R + 550.0;
        let a = Vec3::new(r, 0.0, 0.0);
        assert!(line_of_sight(a, Vec3::new(r, 1.0, 0.0), R));
        assert!(!line_of_sight(a, Vec3::new(-r, 0.0, 0.0), R));
    }

    #[test]
    fn line_of_sight_matches_tangent_chord() {
        let a = R + 550.0;
        let d_max = 2.0 * (a * a - R * R).sqrt();
        assert!((d_max - 5407.62).abs() < 0.01);
        // Two points at radius a separated by chord d subtend angle 2 asin(d / 2a).
        let at = |d: f64| {
            let half = (d / (2.0 * a)).asin();
            (
                Vec3::new(a * half.cos(), a * half.sin(), 0.0),
                Vec3::new(a * half.cos(), -a * half.sin(), 0.0),
            )
        };
        let (p, q) = at(d_max * (1.0 - 1e-6));
        assert!(line_of_sight(p, q, R));
        let (p, q) = at(d_max * (1.0 + 1e-6));
        assert!(!line_of_sight(p, q, R));
    }

    #[test]
    fn elevation_cases() {
        let g = geodetic_to_ecef(0.0, 0.0, R);
        let zenith = geodetic_to_ecef(0.0, 0.0, R + 550.0);
        assert!((elevation_deg(g, zenith) - 90.0).abs() < 1e-9);
        let horizon = g + Vec3::new(0.0, 1000.0, 0.0);
        assert!(elevation_deg(g, horizon).abs() < 1e-9);

        // Brute-force: angle between the gst->sat vector and the tangent plane,
        // via the law of cosines in the plane of the Earth centre, gst and sat.
        let sat = geodetic_to_ecef(0.0, 10.0, R + 550.0);
        let rs = R + 550.0;
        let gamma = 10f64.to_radians();
        let range = (R * R + rs * rs - 2.0 * R * rs * gamma.cos()).sqrt();
        let oracle = ((rs * gamma.cos() - R) / range).asin().to_degrees();
        assert!((elevation_deg(g, sat) - oracle).abs() < 1e-9);
    }

    #[test]
    fn fibonacci_lattice() {
        let one = fibonacci_ground_stations(1, 99);
        assert_eq!(one.positions.len(), 1);
        assert!(one.positions[0].0.abs() < 1e-12);

        let a = fibonacci_ground_stations(256, 42);
        let b = fibonacci_ground_stations(256, 42);
        assert_eq!(a, b);
        let mut min_sep = f64::INFINITY;
        for i in 0..a.positions.len() {
            for j in i + 1..a.positions.len() {
                min_sep = min_sep.min(great_circle_deg(a.positions[i], a.positions[j]));
            }
        }
        assert!(min_sep > 0.0);
    }

    #[test]
    fn radius_constant_and_symmetry() {
        let c = Constellation::new(ConstellationSpec::iridium(), BodyModel::EARTH).unwrap();
        for sat in &c.satellites {
            for t in [0.0, 100.0, 3333.3] {
                let r = sat.position_at(t).norm();
                assert!(((r - sat.radius_km) / sat.radius_km).abs() < 1e-9);
            }
        }
        let p = c.positions_at(250.0);
        for i in 0..p.len() {
            for j in 0..p.len() {
                assert_eq!(line_of_sight(p[i], p[j], R), line_of_sight(p[j], p[i], R));
            }
        }
    }

    #[test]
    fn in_plane_separation_invariant_under_time_shift() {
        let c = Constellation::new(ConstellationSpec::iridium(), BodyModel::EARTH).unwrap();
        let seps = |t: f64| {
            let p = c.positions_at(t);
            let mut v: Vec<f64> = (0..11)
                .flat_map(|i| (0..11).map(move |j| (i, j)))
                .filter(|(i, j)| i < j)
                .map(|(i, j)| (p[i].distance(p[j]) * 1e6).round() / 1e6)
                .collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let a = seps(0.0);
        let b = seps(1234.5);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}
