//! Incident donut mode, its projection onto the focal sphere, and the overlap
//! with an ideal linear-dipole wave.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::LAMBDA_EXC_NM;
use crate::error::{Error, Result};
use crate::geometry::{aperture_radius_unchecked, AngularDomain, MirrorGeometry};
use crate::quadrature::{maximize_bounded, QuadratureSpec};

/// Real field amplitude as a function of aperture radius `h` (mm).
pub trait RadialProfile {
    fn amplitude_at(&self, h: f64) -> f64;
}

/// Real field amplitude on the focal sphere as a function of polar angle.
/// Polarization is along `e_theta` throughout.
pub trait AngularProfile {
    fn amplitude(&self, theta: f64) -> f64;
}

impl<F: Fn(f64) -> f64> AngularProfile for F {
    fn amplitude(&self, theta: f64) -> f64 {
        self(theta)
    }
}

/// Radially polarized donut, `A(h) = A0 (h/w) exp(-h^2/w^2)`, normalized so
/// that `int 2 pi h A^2 dh = power`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DonutBeam {
    /// mm
    pub waist: f64,
    /// W
    pub power: f64,
    /// nm
    pub wavelength: f64,
}

impl DonutBeam {
    pub fn new(waist: f64, power: f64, wavelength: f64) -> Result<Self> {
        let b = DonutBeam {
            waist,
            power,
            wavelength,
        };
        b.validate()?;
        Ok(b)
    }

    /// Beam at the S1/2 - P1/2 wavelength.
    pub fn at_excitation(waist: f64, power: f64) -> Result<Self> {
        Self::new(waist, power, LAMBDA_EXC_NM)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.waist > 0.0) || !self.waist.is_finite() {
            return Err(Error::invalid(format!("waist must be positive, got {}", self.waist)));
        }
        if !(self.power >= 0.0) || !self.power.is_finite() {
            return Err(Error::invalid(format!("power must be >= 0, got {}", self.power)));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::invalid(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        Ok(())
    }

    fn peak_scale(&self) -> f64 {
        (4.0 * self.power / (PI * self.waist * self.waist)).sqrt()
    }

    /// Radius of maximum amplitude, `w / sqrt(2)`.
    pub fn ring_radius(&self) -> f64 {
        self.waist / std::f64::consts::SQRT_2
    }
}

impl RadialProfile for DonutBeam {
    fn amplitude_at(&self, h: f64) -> f64 {
        donut_amplitude(self, h)
    }
}

/// Donut amplitude at aperture radius `h` (mm); zero on axis.
pub fn donut_amplitude(beam: &DonutBeam, h: f64) -> f64 {
    let u = h / beam.waist;
    beam.peak_scale() * u * (-u * u).exp()
}

/// Energy-conserving amplitude factor from the aperture plane to the sphere,
/// `|A(h)|^2 h dh = |a(theta)|^2 sin(theta) dtheta`, which for the parabola is
/// `f / cos^2((pi - theta) / 2)`.
pub fn parabola_apodization(theta: f64, f: f64) -> f64 {
    let c = (0.5 * (PI - theta)).cos();
    f / (c * c)
}

/// A radial profile mapped onto the focal sphere by a parabolic mirror.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedBeam<P> {
    pub profile: P,
    pub focal_length: f64,
}

impl<P: RadialProfile> AngularProfile for ProjectedBeam<P> {
    fn amplitude(&self, theta: f64) -> f64 {
        if theta <= 0.0 {
            return 0.0;
        }
        let h = aperture_radius_unchecked(theta, self.focal_length);
        let a = self.profile.amplitude_at(h);
        if a == 0.0 {
            return 0.0;
        }
        a * parabola_apodization(theta, self.focal_length)
    }
}

/// Maps the incident profile onto the sphere around the focus.
pub fn project_to_sphere<P: RadialProfile>(profile: P, geometry: &MirrorGeometry) -> ProjectedBeam<P> {
    ProjectedBeam {
        profile,
        focal_length: geometry.focal_length,
    }
}

/// Ideal linear-dipole far field along the optical axis, `a = scale sin(theta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleFarField {
    pub scale: f64,
}

impl DipoleFarField {
    /// Normalized to `int |a|^2 dOmega = 1`.
    pub fn normalized() -> Self {
        Self::with_power(1.0)
    }

    /// Normalized to `int |a|^2 dOmega = power` over the full sphere.
    pub fn with_power(power: f64) -> Self {
        DipoleFarField {
            scale: (3.0 * power / (8.0 * PI)).sqrt(),
        }
    }
}

impl AngularProfile for DipoleFarField {
    fn amplitude(&self, theta: f64) -> f64 {
        self.scale * theta.sin()
    }
}

/// `int_domain |a|^2 dOmega`.
pub fn power_on_domain<A: AngularProfile + ?Sized>(a: &A, domain: &AngularDomain, quad: &QuadratureSpec) -> f64 {
    domain
        .quadrature(quad)
        .integrate(|t, _| a.amplitude(t).powi(2))
}

/// Field overlap with the linear dipole mode over `domain`,
/// `|<a, sin>| / (||a|| ||sin||)` with domain-restricted norms.
pub fn mode_overlap<A: AngularProfile + ?Sized>(a: &A, domain: &AngularDomain, quad: &QuadratureSpec) -> Result<f64> {
    let q = domain.quadrature(quad);
    let (mut cross, mut aa, mut ss) = (0.0, 0.0, 0.0);
    for n in &q.nodes {
        let s = n.theta.sin();
        let v = a.amplitude(n.theta);
        cross += n.weight * v * s;
        aa += n.weight * v * v;
        ss += n.weight * s * s;
    }
    if !(aa > 0.0) || !(ss > 0.0) {
        return Err(Error::invalid("mode overlap of a zero-norm field"));
    }
    Ok((cross.abs() / (aa.sqrt() * ss.sqrt())).min(1.0))
}

/// Waist maximizing [`mode_overlap`] on the mirror's angular domain.
///
/// Searches `[0.02 R, 1.5 R]` with `R` the illuminated radius.
pub fn optimize_waist(geometry: &MirrorGeometry, quad: &QuadratureSpec) -> Result<f64> {
    let r = geometry.illuminated_radius();
    optimize_waist_in(geometry, quad, 0.02 * r, 1.5 * r)
}

/// [`optimize_waist`] with an explicit search bracket (mm).
pub fn optimize_waist_in(geometry: &MirrorGeometry, quad: &QuadratureSpec, lo: f64, hi: f64) -> Result<f64> {
    let domain = crate::geometry::angular_domain(geometry)?;
    // The overlap is independent of power and wavelength.
    let overlap = |w: f64| {
        let beam = DonutBeam {
            waist: w,
            power: 1.0,
            wavelength: LAMBDA_EXC_NM,
        };
        mode_overlap(&project_to_sphere(beam, geometry), &domain, quad).unwrap_or(0.0)
    };
    let best = maximize_bounded(overlap, lo, hi, 1e-9, 200)?;
    Ok(best.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angular_domain;
    use crate::quadrature::gauss_legendre_on;
    use proptest::prelude::*;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::new(256, 64).unwrap()
    }

    fn radial_power<P: RadialProfile>(p: &P, h_max: f64) -> f64 {
        let (hs, ws) = gauss_legendre_on(0.0, h_max, 4000);
        hs.iter()
            .zip(&ws)
            .map(|(h, w)| w * 2.0 * PI * h * p.amplitude_at(*h).powi(2))
            .sum()
    }

    #[test]
    fn donut_null_on_axis_and_ring_maximum() {
        let b = DonutBeam::at_excitation(3.0, 1e-6).unwrap();
        assert_eq!(donut_amplitude(&b, 0.0), 0.0);
        let peak = donut_amplitude(&b, b.ring_radius());
        for dh in [-1e-3, 1e-3] {
            assert!(donut_amplitude(&b, b.ring_radius() + dh) < peak);
        }
    }

    #[test]
    fn donut_power_normalization() {
        let b = DonutBeam::at_excitation(2.5, 3.7e-9).unwrap();
        let p = radial_power(&b, 40.0);
        assert!(((p - b.power) / b.power).abs() < 1e-6);
    }

    #[test]
    fn apodization_at_latus_rectum() {
        let f = 2.1;
        assert!((parabola_apodization(PI / 2.0, f) - 2.0 * f).abs() < 1e-12);
        assert!((parabola_apodization(PI, f) - f).abs() < 1e-12);
    }

    #[test]
    fn projection_conserves_power() {
        let g = MirrorGeometry::default();
        let b = DonutBeam::at_excitation(4.0, 2.0).unwrap();
        let a = project_to_sphere(b, &g);
        let p = power_on_domain(&a, &AngularDomain::full_sphere(), &QuadratureSpec::new(512, 32).unwrap());
        assert!(((p - 2.0) / 2.0).abs() < 1e-4, "p={p}");
        assert_eq!(a.amplitude(PI), 0.0);
    }

    #[derive(Debug, Clone, Copy)]
    struct Ring {
        radius: f64,
        width: f64,
        weight: f64,
    }

    struct RingSum(Vec<Ring>);

    impl RadialProfile for RingSum {
        fn amplitude_at(&self, h: f64) -> f64 {
            self.0
                .iter()
                .map(|r| r.weight * (-((h - r.radius) / r.width).powi(2)).exp())
                .sum()
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn projection_conserves_power_for_random_profiles(
            rings in proptest::collection::vec((0.0f64..8.0, 0.6f64..3.0, -1.0f64..1.0), 1..4)
        ) {
            let prof = RingSum(rings.iter().map(|&(radius, width, weight)| Ring { radius, width, weight }).collect());
            let p_plane = radial_power(&prof, 30.0);
            prop_assume!(p_plane > 1e-3);
            let g = MirrorGeometry::default();
            let a = project_to_sphere(prof, &g);
            let p_sphere = power_on_domain(&a, &AngularDomain::full_sphere(), &QuadratureSpec::new(1024, 16).unwrap());
            prop_assert!(((p_sphere - p_plane) / p_plane).abs() < 1e-4, "plane {} sphere {}", p_plane, p_sphere);
        }
    }

    #[test]
    fn dipole_self_overlap_is_one() {
        let d = DipoleFarField::normalized();
        let eta = mode_overlap(&d, &AngularDomain::full_sphere(), &quad()).unwrap();
        assert!((eta - 1.0).abs() < 1e-12);
        let p = power_on_domain(&d, &AngularDomain::full_sphere(), &quad());
        assert!((p - 1.0).abs() < 1e-12);
        let eta = mode_overlap(&|t: f64| t.sin(), &angular_domain(&MirrorGeometry::default()).unwrap(), &quad()).unwrap();
        assert!((eta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlap_is_scale_invariant_and_bounded() {
        let g = MirrorGeometry::default();
        let dom = angular_domain(&g).unwrap();
        let a1 = project_to_sphere(DonutBeam::at_excitation(3.0, 1.0).unwrap(), &g);
        let a2 = project_to_sphere(DonutBeam::at_excitation(3.0, 17.0).unwrap(), &g);
        let e1 = mode_overlap(&a1, &dom, &quad()).unwrap();
        let e2 = mode_overlap(&a2, &dom, &quad()).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&e1));
    }

    #[test]
    fn restricting_domain_shrinks_both_norms() {
        let g = MirrorGeometry::default();
        let full = angular_domain(&g).unwrap();
        let half = angular_domain(&g.half_solid_angle()).unwrap();
        let a = project_to_sphere(DonutBeam::at_excitation(4.5, 1.0).unwrap(), &g);
        let q = quad();
        assert!(power_on_domain(&a, &half, &q) < power_on_domain(&a, &full, &q));
        let s = DipoleFarField::normalized();
        assert!(power_on_domain(&s, &half, &q) < power_on_domain(&s, &full, &q));
    }

    #[test]
    fn zero_field_overlap_is_an_error() {
        let z = |_t: f64| 0.0;
        assert!(mode_overlap(&z, &AngularDomain::full_sphere(), &quad()).is_err());
    }

    #[test]
    fn optimized_waist_is_local_maximum() {
        let g = MirrorGeometry::default();
        let q = quad();
        let w = optimize_waist(&g, &q).unwrap();
        let dom = angular_domain(&g).unwrap();
        let eta = |w: f64| mode_overlap(&project_to_sphere(DonutBeam::at_excitation(w, 1.0).unwrap(), &g), &dom, &q).unwrap();
        let best = eta(w);
        assert!(best >= eta(0.9 * w) && best >= eta(1.1 * w));
        assert!(best >= 0.97, "eta={best}");
        let w2 = optimize_waist_in(&g, &q, 1.0, 9.0).unwrap();
        assert!(((w - w2) / w).abs() < 1e-4, "w={w} w2={w2}");
    }
}
