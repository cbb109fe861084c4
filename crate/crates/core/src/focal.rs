//! Vectorial Debye integral over the mirror's angular domain.
//!
//! `E(r) = sum_nodes a(theta) exp(i Phi(theta, phi)) e_theta exp(i k s.r) dOmega`
//! with positions in nm relative to the geometric focus.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::aberrations::{evaluate_phase, WavefrontMap};
use crate::beams::{project_to_sphere, AngularProfile, DonutBeam};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{aperture_radius_unchecked, AngularDomain, MirrorGeometry};
use crate::quadrature::{minimize_bounded, QuadratureSpec};

/// Largest distance from the focus (nm) accepted along any axis.
pub const MAX_GRID_EXTENT_NM: f64 = 5000.0;

/// Allowed change of `|E|^2`, relative to the focal intensity, between the
/// requested quadrature and one with half the nodes.
const SENTINEL_TOLERANCE: f64 = 1e-3;

pub type FieldVector = [Complex64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn label(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }

    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

/// What produced a field, so that incompatible fields are not compared.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMetadata {
    /// nm
    pub wavelength: f64,
    pub domain: AngularDomain,
    pub wavefront: String,
    pub aberration_free: bool,
    pub source: String,
    pub quadrature: QuadratureSpec,
}

#[derive(Debug, Clone, Copy)]
struct PupilNode {
    k: [f64; 3],
    pol: [f64; 3],
    amp: Complex64,
}

/// Precomputed pupil: one entry per quadrature node with direction,
/// polarization and the complex weight `a exp(i Phi) dOmega`.
#[derive(Debug, Clone)]
pub struct FocusingSetup {
    nodes: Vec<PupilNode>,
    meta: FieldMetadata,
    coarse: Option<Box<FocusingSetup>>,
}

impl FocusingSetup {
    /// Setup for a donut beam reflected by `geometry`.
    pub fn new(
        geometry: &MirrorGeometry,
        beam: &DonutBeam,
        map: &WavefrontMap,
        domain: &AngularDomain,
        quad: &QuadratureSpec,
    ) -> Result<Self> {
        beam.validate()?;
        geometry.validate()?;
        quad.validate()?;
        let profile = project_to_sphere(*beam, geometry);
        let source = format!("donut w={} mm P={} W", beam.waist, beam.power);
        Self::from_profile(&profile, source, geometry, map, domain, quad, beam.wavelength)
    }

    /// Setup for an arbitrary `e_theta`-polarized angular amplitude.
    /// `geometry` only supplies the aperture normalization of `map`.
    pub fn from_profile<A: AngularProfile + ?Sized>(
        profile: &A,
        source: String,
        geometry: &MirrorGeometry,
        map: &WavefrontMap,
        domain: &AngularDomain,
        quad: &QuadratureSpec,
        wavelength: f64,
    ) -> Result<Self> {
        quad.validate()?;
        let mut setup = Self::build(profile, source, geometry, map, domain, quad, wavelength)?;
        let half = QuadratureSpec {
            nodes_theta: (quad.nodes_theta / 2).max(8),
            nodes_phi: (quad.nodes_phi / 2).max(8),
        };
        let coarse = Self::build(profile, String::new(), geometry, map, domain, &half, wavelength)?;
        setup.coarse = Some(Box::new(coarse));
        Ok(setup)
    }

    fn build<A: AngularProfile + ?Sized>(
        profile: &A,
        source: String,
        geometry: &MirrorGeometry,
        map: &WavefrontMap,
        domain: &AngularDomain,
        quad: &QuadratureSpec,
        wavelength: f64,
    ) -> Result<Self> {
        if !(wavelength > 0.0) {
            return Err(Error::invalid(format!("wavelength must be positive, got {wavelength}")));
        }
        let k = 2.0 * PI / wavelength;
        let f = geometry.focal_length;
        let zero_map = map.is_zero();
        let q = domain.quadrature(quad);
        let mut nodes = Vec::with_capacity(q.len());
        for n in &q.nodes {
            let a = profile.amplitude(n.theta);
            if a == 0.0 {
                continue;
            }
            let phase = if zero_map {
                0.0
            } else {
                let h = aperture_radius_unchecked(n.theta, f);
                evaluate_phase(map, h, n.phi, geometry.front_aperture_radius)?
            };
            let (st, ct) = n.theta.sin_cos();
            let (sp, cp) = n.phi.sin_cos();
            nodes.push(PupilNode {
                k: [k * st * cp, k * st * sp, k * ct],
                pol: [ct * cp, ct * sp, -st],
                amp: Complex64::from_polar(a * n.weight, phase),
            });
        }
        Ok(FocusingSetup {
            nodes,
            meta: FieldMetadata {
                wavelength,
                domain: domain.clone(),
                wavefront: map.describe(),
                aberration_free: zero_map,
                source,
                quadrature: *quad,
            },
            coarse: None,
        })
    }

    pub fn metadata(&self) -> &FieldMetadata {
        &self.meta
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Field vector at `r` (nm).
    pub fn field_at(&self, r: [f64; 3]) -> FieldVector {
        let (mut ex, mut ey, mut ez) = (Complex64::ZERO, Complex64::ZERO, Complex64::ZERO);
        for n in &self.nodes {
            let ph = n.k[0] * r[0] + n.k[1] * r[1] + n.k[2] * r[2];
            let (s, c) = ph.sin_cos();
            let v = n.amp * Complex64::new(c, s);
            ex += v * n.pol[0];
            ey += v * n.pol[1];
            ez += v * n.pol[2];
        }
        [ex, ey, ez]
    }

    pub fn intensity_at(&self, r: [f64; 3]) -> f64 {
        intensity(&self.field_at(r))
    }

    /// Fails with [`Error::QuadratureUnderresolved`] when halving the node
    /// counts visibly changes the intensity at the focus or at `far`.
    pub fn check_resolution(&self, far: [f64; 3]) -> Result<()> {
        check_extent(&far)?;
        let Some(coarse) = &self.coarse else {
            return Ok(());
        };
        let i0 = self.intensity_at([0.0; 3]);
        let scale = i0.max(coarse.intensity_at([0.0; 3]));
        if !(scale > 0.0) {
            return Ok(());
        }
        for r in [[0.0; 3], far] {
            let d = (self.intensity_at(r) - coarse.intensity_at(r)).abs() / scale;
            if d > SENTINEL_TOLERANCE {
                return Err(Error::QuadratureUnderresolved(format!(
                    "intensity at ({:.0}, {:.0}, {:.0}) nm changes by {:.2e} of the focal value when halving {}x{} nodes",
                    r[0], r[1], r[2], d, self.meta.quadrature.nodes_theta, self.meta.quadrature.nodes_phi
                )));
            }
        }
        Ok(())
    }

    /// Fields at every point in `points`.
    pub fn field_grid(&self, points: &[[f64; 3]], exec: Execution) -> Result<FocalFieldGrid> {
        let far = farthest(points)?;
        self.check_resolution(far)?;
        let field = exec.map(points, |r| self.field_at(*r));
        if field.iter().any(|e| !intensity(e).is_finite()) {
            return Err(Error::QuadratureUnderresolved("non-finite field".into()));
        }
        Ok(FocalFieldGrid {
            points: points.to_vec(),
            field,
            meta: self.meta.clone(),
        })
    }

    /// Maximum of `|E|^2`: coarse line searches through the focus followed
    /// by golden-section refinement along each axis.
    pub fn find_peak(&self, exec: Execution) -> Result<Peak> {
        self.check_resolution([1000.0, 1000.0, 2000.0])?;
        let coarse_step = 10.0;
        let line = |origin: [f64; 3], axis: Axis, half: f64| -> (f64, f64) {
            let n = (half / coarse_step).round() as i64;
            let offsets: Vec<f64> = (-n..=n).map(|i| i as f64 * coarse_step).collect();
            let vals = exec.map(&offsets, |d| {
                let mut r = origin;
                r[axis.index()] += d;
                self.intensity_at(r)
            });
            let (i, v) = vals
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            (origin[axis.index()] + offsets[i], v)
        };
        let mut p = [0.0; 3];
        p[2] = line(p, Axis::Z, 2000.0).0;
        p[0] = line(p, Axis::X, 500.0).0;
        p[1] = line(p, Axis::Y, 500.0).0;
        p[2] = line(p, Axis::Z, 200.0).0;
        for _ in 0..2 {
            for axis in [Axis::Z, Axis::X, Axis::Y] {
                let i = axis.index();
                let c = p[i];
                let m = minimize_bounded(
                    |t| {
                        let mut r = p;
                        r[i] = t;
                        -self.intensity_at(r)
                    },
                    c - coarse_step,
                    c + coarse_step,
                    1e-7,
                    200,
                )?;
                // Golden section never evaluates the bracket centre itself.
                if -m.value >= self.intensity_at(p) {
                    p[i] = m.x;
                }
            }
        }
        let value = self.intensity_at(p);
        if !value.is_finite() {
            return Err(Error::QuadratureUnderresolved("non-finite peak intensity".into()));
        }
        Ok(Peak {
            position: p,
            intensity: value,
        })
    }

    /// Line profile along `axis` through `center`, normalized to the largest
    /// sample.
    pub fn scan_from(&self, center: [f64; 3], axis: Axis, half_range: f64, step: f64, exec: Execution) -> Result<ScanProfile> {
        if !(step > 0.0) || !(half_range > 0.0) {
            return Err(Error::invalid(format!(
                "scan needs positive step and range, got step {step} nm, half range {half_range} nm"
            )));
        }
        let n = (half_range / step).round() as i64;
        let offsets: Vec<f64> = (-n..=n).map(|i| i as f64 * step).collect();
        let mut far = center;
        far[axis.index()] += if center[axis.index()] >= 0.0 { n as f64 * step } else { -(n as f64) * step };
        self.check_resolution(far)?;
        let raw = exec.map(&offsets, |d| {
            let mut r = center;
            r[axis.index()] += d;
            self.intensity_at(r)
        });
        ScanProfile::from_raw(axis, offsets.iter().map(|d| center[axis.index()] + d).collect(), raw, center)
    }

    /// Line profile through the intensity maximum.
    pub fn scan(&self, axis: Axis, half_range: f64, step: f64, exec: Execution) -> Result<ScanProfile> {
        let peak = self.find_peak(exec)?;
        self.scan_from(peak.position, axis, half_range, step, exec)
    }

    /// Profiles along x, y and z through one shared peak.
    pub fn scan_axes(&self, lateral_half: f64, axial_half: f64, step: f64, exec: Execution) -> Result<FocalScans> {
        let peak = self.find_peak(exec)?;
        Ok(FocalScans {
            x: self.scan_from(peak.position, Axis::X, lateral_half, step, exec)?,
            y: self.scan_from(peak.position, Axis::Y, lateral_half, step, exec)?,
            z: self.scan_from(peak.position, Axis::Z, axial_half, step, exec)?,
            peak,
        })
    }
}

fn check_extent(r: &[f64; 3]) -> Result<()> {
    if r.iter().any(|c| !c.is_finite() || c.abs() > MAX_GRID_EXTENT_NM) {
        return Err(Error::invalid(format!(
            "grid point ({}, {}, {}) nm lies beyond +-{MAX_GRID_EXTENT_NM} nm of the focus",
            r[0], r[1], r[2]
        )));
    }
    Ok(())
}

fn farthest(points: &[[f64; 3]]) -> Result<[f64; 3]> {
    let mut far = [0.0; 3];
    let mut best = -1.0;
    for p in points {
        check_extent(p)?;
        let d = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        if d > best {
            best = d;
            far = *p;
        }
    }
    Ok(far)
}

pub fn intensity(e: &FieldVector) -> f64 {
    e.iter().map(|c| c.norm_sqr()).sum()
}

/// Intensity maximum located by [`FocusingSetup::find_peak`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// nm
    pub position: [f64; 3],
    pub intensity: f64,
}

/// Complex fields sampled at arbitrary points.
#[derive(Debug, Clone)]
pub struct FocalFieldGrid {
    /// nm
    pub points: Vec<[f64; 3]>,
    pub field: Vec<FieldVector>,
    pub meta: FieldMetadata,
}

impl FocalFieldGrid {
    pub fn intensity(&self) -> Vec<f64> {
        self.field.iter().map(intensity).collect()
    }

    pub fn max_intensity(&self) -> f64 {
        self.field.iter().map(intensity).fold(0.0, f64::max)
    }
}

/// Field of a donut beam focused by `geometry` over `domain`, evaluated at
/// `grid` (nm).
pub fn focus_field(
    geometry: &MirrorGeometry,
    beam: &DonutBeam,
    map: &WavefrontMap,
    domain: &AngularDomain,
    grid: &[[f64; 3]],
    quad: &QuadratureSpec,
) -> Result<FocalFieldGrid> {
    FocusingSetup::new(geometry, beam, map, domain, quad)?.field_grid(grid, Execution::default())
}

/// Points of a regular plane through `center` spanned by axes `a` and `b`.
pub fn plane_points(center: [f64; 3], a: Axis, half_a: f64, b: Axis, half_b: f64, step: f64) -> Result<Vec<[f64; 3]>> {
    if !(step > 0.0) || a == b {
        return Err(Error::invalid("plane needs a positive step and two distinct axes"));
    }
    let na = (half_a / step).round() as i64;
    let nb = (half_b / step).round() as i64;
    let mut pts = Vec::with_capacity(((2 * na + 1) * (2 * nb + 1)) as usize);
    for j in -nb..=nb {
        for i in -na..=na {
            let mut r = center;
            r[a.index()] += i as f64 * step;
            r[b.index()] += j as f64 * step;
            pts.push(r);
        }
    }
    Ok(pts)
}

/// Intensity along one axis, normalized to peak 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanProfile {
    pub axis: Axis,
    /// nm, strictly increasing.
    pub positions: Vec<f64>,
    pub intensity: Vec<f64>,
    /// Un-normalized intensity of the brightest sample.
    pub raw_peak: f64,
    /// Point the scan passes through, nm.
    pub center: [f64; 3],
}

impl ScanProfile {
    pub fn from_raw(axis: Axis, positions: Vec<f64>, raw: Vec<f64>, center: [f64; 3]) -> Result<Self> {
        if positions.len() != raw.len() || positions.len() < 3 {
            return Err(Error::invalid("scan needs >= 3 samples with matching lengths"));
        }
        if !positions.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("scan positions must be strictly increasing"));
        }
        let peak = raw.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0) || !peak.is_finite() {
            return Err(Error::QuadratureUnderresolved("scan has no positive finite maximum".into()));
        }
        Ok(ScanProfile {
            axis,
            positions,
            intensity: raw.iter().map(|v| v / peak).collect(),
            raw_peak: peak,
            center,
        })
    }

    pub fn step(&self) -> f64 {
        self.positions[1] - self.positions[0]
    }

    /// Resamples onto a coarser step by keeping every n-th sample around the
    /// centre sample. `step` must be a multiple of the native step.
    pub fn resampled(&self, step: f64) -> Result<ScanProfile> {
        let native = self.step();
        let ratio = step / native;
        let n = ratio.round() as usize;
        if n == 0 || (ratio - n as f64).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "output step {step} nm is not a multiple of the internal step {native} nm"
            )));
        }
        let mid = self.positions.len() / 2;
        let idx: Vec<usize> = (0..self.positions.len()).filter(|i| (*i as i64 - mid as i64) % n as i64 == 0).collect();
        let raw: Vec<f64> = idx.iter().map(|&i| self.intensity[i] * self.raw_peak).collect();
        let pos: Vec<f64> = idx.iter().map(|&i| self.positions[i]).collect();
        ScanProfile::from_raw(self.axis, pos, raw, self.center)
    }
}

/// Profiles along all three axes through one peak.
#[derive(Debug, Clone)]
pub struct FocalScans {
    pub peak: Peak,
    pub x: ScanProfile,
    pub y: ScanProfile,
    pub z: ScanProfile,
}

impl FocalScans {
    pub fn axis(&self, axis: Axis) -> &ScanProfile {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }
}

/// Outcome of a width measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeakWidth {
    /// nm
    Fwhm(f64),
    /// Split or flat-topped focus, or no half-crossing in range.
    NoDistinctPeak,
}

impl PeakWidth {
    pub fn value(&self) -> Option<f64> {
        match self {
            PeakWidth::Fwhm(v) => Some(*v),
            PeakWidth::NoDistinctPeak => None,
        }
    }
}

impl std::fmt::Display for PeakWidth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PeakWidth::Fwhm(v) => write!(f, "{v:.1}"),
            PeakWidth::NoDistinctPeak => f.write_str("no distinct peak"),
        }
    }
}

/// Minimum drop between two maxima for the lower one to count as a
/// separate peak, as a fraction of the global maximum.
const PEAK_PROMINENCE: f64 = 0.02;

/// Full width at half maximum with linear interpolation of the crossings.
pub fn fwhm(profile: &ScanProfile) -> PeakWidth {
    let y = &profile.intensity;
    let x = &profile.positions;
    let n = y.len();
    let (imax, ymax) = y
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    if !(ymax > 0.0) {
        return PeakWidth::NoDistinctPeak;
    }
    let half = 0.5 * ymax;

    // Any other maximum above half height with a real dip in between.
    for i in 1..n - 1 {
        if i == imax || !(y[i] >= y[i - 1] && y[i] > y[i + 1]) || y[i] < half {
            continue;
        }
        let (a, b) = if i < imax { (i, imax) } else { (imax, i) };
        let dip = y[a..=b].iter().cloned().fold(f64::INFINITY, f64::min);
        if y[i] - dip >= PEAK_PROMINENCE * ymax {
            return PeakWidth::NoDistinctPeak;
        }
    }

    let mut left = None;
    for i in (0..imax).rev() {
        if y[i] < half {
            let t = (half - y[i]) / (y[i + 1] - y[i]);
            left = Some(x[i] + t * (x[i + 1] - x[i]));
            break;
        }
    }
    let mut right = None;
    for i in imax + 1..n {
        if y[i] < half {
            let t = (y[i - 1] - half) / (y[i - 1] - y[i]);
            right = Some(x[i - 1] + t * (x[i] - x[i - 1]));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => PeakWidth::Fwhm(r - l),
        _ => PeakWidth::NoDistinctPeak,
    }
}

/// `max |E_ab|^2 / max |E_ref|^2` over a shared grid.
pub fn strehl_ratio(aberrated: &FocalFieldGrid, reference: &FocalFieldGrid) -> Result<f64> {
    let (a, r) = (&aberrated.meta, &reference.meta);
    if !r.aberration_free {
        return Err(Error::Mismatch("reference field carries aberrations".into()));
    }
    if a.wavelength != r.wavelength || a.domain != r.domain || a.source != r.source || a.quadrature != r.quadrature {
        return Err(Error::Mismatch(
            "fields differ in wavelength, domain, beam or quadrature".into(),
        ));
    }
    if aberrated.points != reference.points {
        return Err(Error::Mismatch("fields are sampled on different grids".into()));
    }
    let peak_ref = reference.max_intensity();
    if !(peak_ref > 0.0) {
        return Err(Error::Mismatch("reference field vanishes on the grid".into()));
    }
    Ok(aberrated.max_intensity() / peak_ref)
}

/// Strehl ratio from refined peak searches of two setups.
pub fn peak_strehl(aberrated: &FocusingSetup, reference: &FocusingSetup, exec: Execution) -> Result<f64> {
    let (a, r) = (aberrated.metadata(), reference.metadata());
    if !r.aberration_free {
        return Err(Error::Mismatch("reference setup carries aberrations".into()));
    }
    if a.wavelength != r.wavelength || a.domain != r.domain || a.source != r.source || a.quadrature != r.quadrature {
        return Err(Error::Mismatch(
            "setups differ in wavelength, domain, beam or quadrature".into(),
        ));
    }
    Ok(aberrated.find_peak(exec)?.intensity / reference.find_peak(exec)?.intensity)
}
