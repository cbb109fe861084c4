//! Parabolic-mirror geometry and solid-angle bookkeeping.
//!
//! The focus sits at the origin and the parabola is `z = h^2 / 4f - f`, so the
//! vertex is at `z = -f` and the open aperture faces `+z`. Polar angles are
//! measured from `+z`: the vertex direction is `theta = pi` and the latus
//! rectum (`h = 2f`) is at `theta = pi / 2`. Every module uses this convention.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre_on, QuadratureSpec};

/// Circular hole drilled through the mirror, described in the aperture plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoreSpec {
    /// Radial offset of the bore centre from the optical axis, mm.
    pub center_radius: f64,
    /// Bore radius, mm.
    pub radius: f64,
    /// Azimuth of the bore centre, rad.
    #[serde(default)]
    pub azimuth: f64,
}

impl BoreSpec {
    pub fn on_axis(radius: f64) -> Self {
        BoreSpec {
            center_radius: 0.0,
            radius,
            azimuth: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorGeometry {
    /// Parabola focal length, mm.
    pub focal_length: f64,
    /// Radius of the front (open) aperture, mm.
    pub front_aperture_radius: f64,
    pub bores: Vec<BoreSpec>,
    /// Optional stop in front of the mirror limiting the illuminated radius, mm.
    #[serde(default)]
    pub aperture_stop: Option<f64>,
}

impl Default for MirrorGeometry {
    /// 2.1 mm focal length, 20 mm outer diameter, a 1.5 mm bore on axis and
    /// two 0.5 mm bores 1.5 mm off axis at azimuths 0 and pi.
    fn default() -> Self {
        MirrorGeometry {
            focal_length: 2.1,
            front_aperture_radius: 10.0,
            bores: vec![
                BoreSpec::on_axis(0.75),
                BoreSpec {
                    center_radius: 1.5,
                    radius: 0.25,
                    azimuth: 0.0,
                },
                BoreSpec {
                    center_radius: 1.5,
                    radius: 0.25,
                    azimuth: PI,
                },
            ],
            aperture_stop: None,
        }
    }
}

impl MirrorGeometry {
    pub fn new(focal_length: f64, front_aperture_radius: f64, bores: Vec<BoreSpec>) -> Result<Self> {
        let g = MirrorGeometry {
            focal_length,
            front_aperture_radius,
            bores,
            aperture_stop: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// Same mirror without any bores.
    pub fn without_bores(&self) -> Self {
        MirrorGeometry {
            bores: Vec::new(),
            ..self.clone()
        }
    }

    /// Same mirror with light restricted to `h <= 2f`, i.e. focusing from the
    /// half solid angle behind the focal plane.
    pub fn half_solid_angle(&self) -> Self {
        MirrorGeometry {
            aperture_stop: Some(2.0 * self.focal_length),
            ..self.clone()
        }
    }

    /// Radius up to which the mirror is illuminated.
    pub fn illuminated_radius(&self) -> f64 {
        match self.aperture_stop {
            Some(stop) => stop.min(self.front_aperture_radius),
            None => self.front_aperture_radius,
        }
    }

    pub fn is_half_solid_angle(&self) -> bool {
        self.aperture_stop
            .is_some_and(|s| (s - 2.0 * self.focal_length).abs() < 1e-12)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_length > 0.0) || !self.focal_length.is_finite() {
            return Err(Error::invalid(format!(
                "focal length must be positive, got {}",
                self.focal_length
            )));
        }
        if !(self.front_aperture_radius > 0.0) {
            return Err(Error::invalid(format!(
                "front aperture radius must be positive, got {}",
                self.front_aperture_radius
            )));
        }
        if let Some(stop) = self.aperture_stop {
            if !(stop > 0.0) {
                return Err(Error::invalid(format!("aperture stop must be positive, got {stop}")));
            }
        }
        for (i, b) in self.bores.iter().enumerate() {
            if !(b.radius > 0.0) {
                return Err(Error::invalid(format!("bore {i}: radius must be positive")));
            }
            if b.center_radius < 0.0 {
                return Err(Error::invalid(format!("bore {i}: negative centre radius")));
            }
            if b.center_radius + b.radius > self.front_aperture_radius {
                return Err(Error::invalid(format!(
                    "bore {i} extends beyond the front aperture"
                )));
            }
        }
        Ok(())
    }
}

/// Polar angle of the mirror point at aperture radius `h` seen from the focus.
///
/// `cos(theta) = (h^2/4f - f) / (h^2/4f + f)`; equivalently `h = 2f tan((pi - theta)/2)`.
pub fn aperture_to_angle(h: f64, f: f64) -> Result<f64> {
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("aperture radius must be >= 0, got {h}")));
    }
    if !(f > 0.0) {
        return Err(Error::invalid(format!("focal length must be > 0, got {f}")));
    }
    // theta = pi - 2 atan(h / 2f) is the same angle without cancellation near h = 2f.
    Ok(PI - 2.0 * (h / (2.0 * f)).atan())
}

/// Inverse of [`aperture_to_angle`]: aperture radius of the mirror point at polar angle `theta`.
pub fn angle_to_aperture(theta: f64, f: f64) -> Result<f64> {
    if !(theta > 0.0 && theta <= PI) {
        return Err(Error::invalid(format!("polar angle must lie in (0, pi], got {theta}")));
    }
    if !(f > 0.0) {
        return Err(Error::invalid(format!("focal length must be > 0, got {f}")));
    }
    Ok(aperture_radius_unchecked(theta, f))
}

#[inline]
pub(crate) fn aperture_radius_unchecked(theta: f64, f: f64) -> f64 {
    2.0 * f * (0.5 * (PI - theta)).tan()
}

/// One quadrature node on the unit sphere. `weight` already contains the
/// solid-angle measure `sin(theta) dtheta dphi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereNode {
    pub theta: f64,
    pub phi: f64,
    pub weight: f64,
}

/// Weighted nodes covering an [`AngularDomain`].
#[derive(Debug, Clone, Default)]
pub struct SphereQuadrature {
    pub nodes: Vec<SphereNode>,
}

impl SphereQuadrature {
    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n.theta, n.phi)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Bore shadow mapped from the aperture plane onto the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Shadow {
    center_radius: f64,
    radius: f64,
    azimuth: f64,
}

/// Region of the sphere from which light reaches (or leaves) the focus.
///
/// It is the polar band `[theta_min, theta_max]` minus the shadows of
/// off-axis bores. On-axis bores simply lower `theta_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularDomain {
    theta_min: f64,
    theta_max: f64,
    focal_length: f64,
    shadows: Vec<Shadow>,
}

impl AngularDomain {
    pub fn full_sphere() -> Self {
        Self::polar_band(0.0, PI).expect("full band is valid")
    }

    /// Hemisphere on the vertex side of the focal plane, `theta in [pi/2, pi]`.
    pub fn hemisphere() -> Self {
        Self::polar_band(FRAC_PI_2, PI).expect("hemisphere is valid")
    }

    /// Polar cap of half-angle `half_angle` around `+z`.
    pub fn cap(half_angle: f64) -> Result<Self> {
        Self::polar_band(0.0, half_angle)
    }

    pub fn polar_band(theta_min: f64, theta_max: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta_min) || !(0.0..=PI).contains(&theta_max) || theta_min > theta_max {
            return Err(Error::invalid(format!(
                "invalid polar band [{theta_min}, {theta_max}]"
            )));
        }
        Ok(AngularDomain {
            theta_min,
            theta_max,
            focal_length: 1.0,
            shadows: Vec::new(),
        })
    }

    pub fn theta_min(&self) -> f64 {
        self.theta_min
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    /// Splits the polar band at `theta`, keeping bore shadows on both parts.
    pub fn split_at(&self, theta: f64) -> Result<(AngularDomain, AngularDomain)> {
        if !(theta > self.theta_min && theta < self.theta_max) {
            return Err(Error::invalid(format!(
                "split angle {theta} outside ({}, {})",
                self.theta_min, self.theta_max
            )));
        }
        let mut lo = self.clone();
        let mut hi = self.clone();
        lo.theta_max = theta;
        hi.theta_min = theta;
        Ok((lo, hi))
    }

    /// Indicator of the domain.
    pub fn contains(&self, theta: f64, phi: f64) -> bool {
        if theta < self.theta_min || theta > self.theta_max {
            return false;
        }
        if self.shadows.is_empty() {
            return true;
        }
        let h = aperture_radius_unchecked(theta, self.focal_length);
        let (x, y) = (h * phi.cos(), h * phi.sin());
        !self.shadows.iter().any(|s| {
            let dx = x - s.center_radius * s.azimuth.cos();
            let dy = y - s.center_radius * s.azimuth.sin();
            dx * dx + dy * dy < s.radius * s.radius
        })
    }

    /// Excluded azimuth intervals on the ring at polar angle `theta`.
    fn excluded_phi(&self, theta: f64) -> Vec<(f64, f64)> {
        let h = aperture_radius_unchecked(theta, self.focal_length);
        let mut gaps = Vec::new();
        for s in &self.shadows {
            let (c, r) = (s.center_radius, s.radius);
            if h + c <= r {
                return vec![(0.0, 2.0 * PI)];
            }
            if (h - c).abs() < r {
                let cos_d = ((h * h + c * c - r * r) / (2.0 * h * c)).clamp(-1.0, 1.0);
                let delta = cos_d.acos();
                let lo = (s.azimuth - delta).rem_euclid(2.0 * PI);
                let hi = lo + 2.0 * delta;
                if hi > 2.0 * PI {
                    gaps.push((lo, 2.0 * PI));
                    gaps.push((0.0, hi - 2.0 * PI));
                } else {
                    gaps.push((lo, hi));
                }
            }
        }
        gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(gaps.len());
        for g in gaps {
            match merged.last_mut() {
                Some(last) if g.0 <= last.1 => last.1 = last.1.max(g.1),
                _ => merged.push(g),
            }
        }
        merged
    }

    /// Polar angles where the structure of the azimuthal cut changes.
    fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![self.theta_min, self.theta_max];
        if self.theta_min < FRAC_PI_2 && FRAC_PI_2 < self.theta_max {
            pts.push(FRAC_PI_2);
        }
        for s in &self.shadows {
            for h in [s.center_radius + s.radius, (s.center_radius - s.radius).abs()] {
                let t = PI - 2.0 * (h / (2.0 * self.focal_length)).atan();
                if t > self.theta_min && t < self.theta_max {
                    pts.push(t);
                }
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        pts
    }

    /// Product quadrature over the domain.
    ///
    /// The polar range is split at every breakpoint and each piece gets a
    /// Gauss-Legendre rule in `cos(theta)`; `nodes_theta` is the node count
    /// for the whole sphere (`cos(theta)` in `[-1, 1]`), shared between pieces
    /// in proportion to their extent, so sub-domains reuse the same density. Complete rings use the `nodes_phi`-point trapezoid; rings cut
    /// by bore shadows use Gauss-Legendre on each remaining azimuth interval.
    pub fn quadrature(&self, spec: &QuadratureSpec) -> SphereQuadrature {
        let pts = self.breakpoints();
        let total_u = self.theta_min.cos() - self.theta_max.cos();
        if total_u <= 0.0 {
            return SphereQuadrature::default();
        }
        let n_phi = spec.nodes_phi;
        let ring_phi: Vec<f64> = (0..n_phi)
            .map(|j| 2.0 * PI * j as f64 / n_phi as f64)
            .collect();
        let ring_w = 2.0 * PI / n_phi as f64;

        let mut nodes = Vec::new();
        for seg in pts.windows(2) {
            let (t0, t1) = (seg[0], seg[1]);
            let (u_hi, u_lo) = (t0.cos(), t1.cos());
            let du = u_hi - u_lo;
            if du <= 0.0 {
                continue;
            }
            let n = ((0.5 * spec.nodes_theta as f64 * du).round() as usize).max(8);
            let (us, wus) = gauss_legendre_on(u_lo, u_hi, n);
            for (u, wu) in us.into_iter().zip(wus) {
                let theta = u.clamp(-1.0, 1.0).acos();
                let gaps = if self.shadows.is_empty() {
                    Vec::new()
                } else {
                    self.excluded_phi(theta)
                };
                if gaps.is_empty() {
                    for &phi in &ring_phi {
                        nodes.push(SphereNode {
                            theta,
                            phi,
                            weight: wu * ring_w,
                        });
                    }
                    continue;
                }
                let mut start = 0.0;
                let mut allowed = Vec::new();
                for &(lo, hi) in &gaps {
                    if lo > start {
                        allowed.push((start, lo));
                    }
                    start = start.max(hi);
                }
                if start < 2.0 * PI {
                    allowed.push((start, 2.0 * PI));
                }
                for (a, b) in allowed {
                    let len = b - a;
                    if len <= 1e-15 {
                        continue;
                    }
                    let m = ((n_phi as f64 * len / (2.0 * PI)).ceil() as usize).max(4);
                    let (ps, wps) = gauss_legendre_on(a, b, m);
                    for (phi, wp) in ps.into_iter().zip(wps) {
                        nodes.push(SphereNode {
                            theta,
                            phi,
                            weight: wu * wp,
                        });
                    }
                }
            }
        }
        SphereQuadrature { nodes }
    }

    /// Fraction of the full sphere covered, `int dOmega / 4 pi`.
    pub fn solid_angle_fraction_with(&self, spec: &QuadratureSpec) -> f64 {
        self.quadrature(spec).integrate(|_, _| 1.0) / (4.0 * PI)
    }

    /// Dipole-weighted solid angle, normalized to `8 pi / 3`.
    pub fn weighted_solid_angle_with(&self, spec: &QuadratureSpec, dipole: DipoleOrientation) -> f64 {
        let q = self.quadrature(spec);
        let norm = 3.0 / (8.0 * PI);
        match dipole {
            DipoleOrientation::Axial => norm * q.integrate(|t, _| t.sin().powi(2)),
            DipoleOrientation::Transverse => {
                norm * q.integrate(|t, p| 1.0 - (t.sin() * p.cos()).powi(2))
            }
        }
    }
}

/// Orientation of the linear dipole relative to the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DipoleOrientation {
    /// Along the optical axis: irradiance pattern `sin^2(theta)`.
    Axial,
    /// Perpendicular to the optical axis (along x).
    Transverse,
}

/// Angular domain illuminated by the mirror: from the edge of the
/// illuminated aperture down to the vertex, minus every bore.
pub fn angular_domain(geometry: &MirrorGeometry) -> Result<AngularDomain> {
    geometry.validate()?;
    let f = geometry.focal_length;
    let theta_min = aperture_to_angle(geometry.illuminated_radius(), f)?;
    let mut theta_max = PI;
    let mut shadows = Vec::new();
    for b in &geometry.bores {
        if b.center_radius <= 1e-12 {
            theta_max = theta_max.min(aperture_to_angle(b.radius, f)?);
        } else {
            shadows.push(Shadow {
                center_radius: b.center_radius,
                radius: b.radius,
                azimuth: b.azimuth,
            });
        }
    }
    Ok(AngularDomain {
        theta_min,
        theta_max: theta_max.max(theta_min),
        focal_length: f,
        shadows,
    })
}

/// `int dOmega / 4 pi` over the domain at the default quadrature.
pub fn solid_angle_fraction(domain: &AngularDomain) -> f64 {
    domain.solid_angle_fraction_with(&QuadratureSpec::default())
}

/// `(3 / 8 pi) int sin^3(theta) dtheta dphi` over the domain at the default quadrature.
pub fn weighted_solid_angle_linear(domain: &AngularDomain) -> f64 {
    domain.weighted_solid_angle_with(&QuadratureSpec::default(), DipoleOrientation::Axial)
}

/// Focusing optics compared by their weighted solid angle.
#[derive(Debug, Clone, PartialEq)]
pub enum FocusingSystem {
    SingleLens(f64),
    FourPiMicroscope(f64),
    ParabolicMirror(MirrorGeometry),
}

impl FocusingSystem {
    pub fn label(&self) -> &'static str {
        match self {
            FocusingSystem::SingleLens(_) => "single_lens",
            FocusingSystem::FourPiMicroscope(_) => "four_pi_microscope",
            FocusingSystem::ParabolicMirror(_) => "parabolic_mirror",
        }
    }

    /// Weighted solid angle of this system.
    ///
    /// Lenses are scored against a dipole perpendicular to their axis, which
    /// is the orientation a lens couples to best; the mirror against a dipole
    /// along its axis of symmetry.
    pub fn omega(&self, spec: &QuadratureSpec) -> Result<f64> {
        match self {
            FocusingSystem::SingleLens(na) => single_lens_omega(*na, spec),
            FocusingSystem::FourPiMicroscope(na) => Ok((2.0 * single_lens_omega(*na, spec)?).min(1.0)),
            FocusingSystem::ParabolicMirror(g) => Ok(angular_domain(g)?
                .weighted_solid_angle_with(spec, DipoleOrientation::Axial)),
        }
    }
}

fn single_lens_omega(na: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(0.0..=1.0).contains(&na) {
        return Err(Error::invalid(format!("NA must lie in [0, 1], got {na}")));
    }
    if na == 0.0 {
        return Ok(0.0);
    }
    Ok(AngularDomain::cap(na.asin())?.weighted_solid_angle_with(spec, DipoleOrientation::Transverse))
}

/// One row of an Omega(NA) table.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaRow {
    pub na: f64,
    pub omega: f64,
    pub system: &'static str,
}

/// Sweeps NA over `[0, NA_max]` in `samples` evenly spaced steps.
///
/// Lenses use their own NA as `NA_max`; the mirror has no NA and is reported
/// as a constant line over `[0, 1]`.
pub fn omega_curve(system: &FocusingSystem, samples: usize, spec: &QuadratureSpec) -> Result<Vec<OmegaRow>> {
    if samples < 2 {
        return Err(Error::invalid("omega curve needs at least 2 samples"));
    }
    let na_max = match system {
        FocusingSystem::SingleLens(na) | FocusingSystem::FourPiMicroscope(na) => {
            if !(0.0..=1.0).contains(na) {
                return Err(Error::invalid(format!("NA must lie in [0, 1], got {na}")));
            }
            *na
        }
        FocusingSystem::ParabolicMirror(_) => 1.0,
    };
    let mirror_omega = match system {
        FocusingSystem::ParabolicMirror(_) => Some(system.omega(spec)?),
        _ => None,
    };
    (0..samples)
        .map(|i| {
            let na = na_max * i as f64 / (samples - 1) as f64;
            let omega = match system {
                FocusingSystem::SingleLens(_) => FocusingSystem::SingleLens(na).omega(spec)?,
                FocusingSystem::FourPiMicroscope(_) => FocusingSystem::FourPiMicroscope(na).omega(spec)?,
                FocusingSystem::ParabolicMirror(_) => mirror_omega.unwrap_or_default(),
            };
            Ok(OmegaRow {
                na,
                omega,
                system: system.label(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse() -> QuadratureSpec {
        QuadratureSpec::new(128, 64).unwrap()
    }

    #[test]
    fn latus_rectum_maps_to_right_angle() {
        let t = aperture_to_angle(4.2, 2.1).unwrap();
        assert!((t - FRAC_PI_2).abs() < 1e-15);
        assert!((aperture_to_angle(0.0, 2.1).unwrap() - PI).abs() < 1e-15);
    }

    #[test]
    fn front_aperture_angle() {
        let t = aperture_to_angle(10.0, 2.1).unwrap();
        let a: f64 = 100.0 / 8.4;
        let expected = ((a - 2.1) / (a + 2.1)).acos();
        assert!((t - expected).abs() < 1e-14);
        assert!((t.cos() - 0.700).abs() < 1e-3);
        assert!((t.to_degrees() - 45.6).abs() < 0.05);
    }

    #[test]
    fn aperture_angle_round_trip() {
        for &h in &[0.05, 0.3, 1.0, 4.2, 10.0, 123.0] {
            let t = aperture_to_angle(h, 2.1).unwrap();
            let back = angle_to_aperture(t, 2.1).unwrap();
            assert!(((back - h) / h).abs() < 1e-12, "h={h} back={back}");
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(aperture_to_angle(-1.0, 2.1).is_err());
        assert!(aperture_to_angle(1.0, 0.0).is_err());
        assert!(FocusingSystem::SingleLens(1.2).omega(&coarse()).is_err());
        let bad = MirrorGeometry {
            bores: vec![BoreSpec {
                center_radius: 9.9,
                radius: 0.5,
                azimuth: 0.0,
            }],
            ..MirrorGeometry::default()
        };
        assert!(angular_domain(&bad).is_err());
    }

    #[test]
    fn full_sphere_and_hemisphere() {
        let q = coarse();
        let full = AngularDomain::full_sphere();
        assert!((full.solid_angle_fraction_with(&q) - 1.0).abs() < 1e-13);
        assert!((full.weighted_solid_angle_with(&q, DipoleOrientation::Axial) - 1.0).abs() < 1e-13);
        let hemi = AngularDomain::hemisphere();
        assert!((hemi.solid_angle_fraction_with(&q) - 0.5).abs() < 1e-13);
        assert!((hemi.weighted_solid_angle_with(&q, DipoleOrientation::Axial) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn bare_mirror_fraction_matches_closed_form() {
        let g = MirrorGeometry::default().without_bores();
        let d = angular_domain(&g).unwrap();
        let t = aperture_to_angle(10.0, 2.1).unwrap();
        let expected = (t.cos() + 1.0) / 2.0;
        assert!((d.solid_angle_fraction_with(&coarse()) - expected).abs() < 1e-12);
        assert!((expected - 0.85).abs() < 0.005);
    }

    #[test]
    fn huge_aperture_tends_to_full_sphere() {
        let g = MirrorGeometry::new(2.1, 1e6, vec![]).unwrap();
        let frac = solid_angle_fraction(&angular_domain(&g).unwrap());
        assert!((frac - 1.0).abs() < 1e-9);
    }

    #[test]
    fn indicator_excludes_bores() {
        let d = angular_domain(&MirrorGeometry::default()).unwrap();
        let t_bore = aperture_to_angle(1.5, 2.1).unwrap();
        assert!(!d.contains(t_bore, 0.0));
        assert!(!d.contains(t_bore, PI));
        assert!(d.contains(t_bore, FRAC_PI_2));
        assert!(!d.contains(PI, 0.0));
        assert!(!d.contains(0.2, 0.0));
        let nodes = d.quadrature(&coarse());
        assert!(nodes.nodes.iter().all(|n| d.contains(n.theta, n.phi)));
    }

    #[test]
    fn off_axis_bore_area_matches_planar_estimate() {
        // A small bore far from the latus rectum: dOmega = dA / (h^2/4f + f)^2.
        let f = 2.1;
        let g = MirrorGeometry::new(
            f,
            10.0,
            vec![BoreSpec {
                center_radius: 3.0,
                radius: 0.01,
                azimuth: 1.0,
            }],
        )
        .unwrap();
        let with = angular_domain(&g).unwrap();
        let without = angular_domain(&g.without_bores()).unwrap();
        let q = QuadratureSpec::new(512, 256).unwrap();
        let lost = (without.solid_angle_fraction_with(&q) - with.solid_angle_fraction_with(&q)) * 4.0 * PI;
        let r = 9.0 / (4.0 * f) + f;
        let expected = PI * 0.01f64.powi(2) / (r * r);
        assert!(((lost - expected) / expected).abs() < 1e-2, "lost={lost} expected={expected}");
    }

    #[test]
    fn single_lens_curve_endpoints() {
        let q = coarse();
        assert!((FocusingSystem::SingleLens(1.0).omega(&q).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(FocusingSystem::SingleLens(0.0).omega(&q).unwrap(), 0.0);
        let rows = omega_curve(&FocusingSystem::FourPiMicroscope(1.0), 11, &q).unwrap();
        assert_eq!(rows.len(), 11);
        assert!((rows[10].omega - 1.0).abs() < 1e-12);
        assert!(rows.windows(2).all(|w| w[1].omega >= w[0].omega));
    }

    #[test]
    fn transverse_lens_weight_matches_closed_form() {
        // (3/4)[(1 - c) - ((1 - c) - (1 - c^3)/3) / 2] with c = cos(asin NA).
        let q = coarse();
        for na in [0.3, 0.8, 0.997] {
            let c = (1.0f64 - na * na).sqrt();
            let expected = 0.75 * ((1.0 - c) - 0.5 * ((1.0 - c) - (1.0 - c.powi(3)) / 3.0));
            let got = FocusingSystem::SingleLens(na).omega(&q).unwrap();
            assert!((got - expected).abs() < 1e-12, "na={na}");
        }
    }

    #[test]
    fn omega_bounded_by_fraction() {
        let q = coarse();
        let d = angular_domain(&MirrorGeometry::default()).unwrap();
        let om = d.weighted_solid_angle_with(&q, DipoleOrientation::Axial);
        assert!(om <= 1.5 * d.solid_angle_fraction_with(&q));
    }

    #[test]
    fn split_partitions_domain() {
        let q = coarse();
        let d = angular_domain(&MirrorGeometry::default()).unwrap();
        let (a, b) = d.split_at(FRAC_PI_2).unwrap();
        let s = a.solid_angle_fraction_with(&q) + b.solid_angle_fraction_with(&q);
        assert!((s - d.solid_angle_fraction_with(&q)).abs() < 1e-14);
    }
}
