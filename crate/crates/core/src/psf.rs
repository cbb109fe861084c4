//! Effective excitation PSF of a thermal ion and the predicted coupling
//! efficiency.

use std::f64::consts::PI;

use crate::beams::DipoleFarField;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::focal::{Axis, FocalScans, FocusingSetup, ScanProfile};
use crate::geometry::{AngularDomain, MirrorGeometry};
use crate::aberrations::WavefrontMap;
use crate::quadrature::QuadratureSpec;
use crate::thermal::ThermalState;

/// Kernel half-width in units of sigma.
const KERNEL_HALF_WIDTH: f64 = 6.0;

/// Normalized, truncated Gaussian kernel sampled at `step`.
fn gaussian_kernel(sigma: f64, step: f64) -> Vec<f64> {
    let n = (KERNEL_HALF_WIDTH * sigma / step).ceil() as i64;
    let mut k: Vec<f64> = (-n..=n)
        .map(|i| {
            let x = i as f64 * step;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

fn check_spacing(axis: char, step: f64, sigma: f64) -> Result<()> {
    if sigma > 0.0 && step > sigma / 3.0 + 1e-12 {
        return Err(Error::GridTooCoarse {
            axis,
            spacing: step,
            limit: sigma / 3.0,
        });
    }
    Ok(())
}

/// Direct-sum convolution of uniformly sampled `values` with a Gaussian,
/// zero outside the samples.
pub fn convolve_1d(values: &[f64], step: f64, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return values.to_vec();
    }
    let k = gaussian_kernel(sigma, step);
    let h = (k.len() / 2) as i64;
    let n = values.len() as i64;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let src = i + j as i64 - h;
                if (0..n).contains(&src) {
                    acc += kv * values[src as usize];
                }
            }
            acc
        })
        .collect()
}

/// 1D effective profile along the scan axis.
pub fn convolve_profile(profile: &ScanProfile, sigma: f64) -> Result<ScanProfile> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
    }
    let step = profile.step();
    check_spacing(profile.axis.label(), step, sigma)?;
    let raw: Vec<f64> = profile.intensity.iter().map(|v| v * profile.raw_peak).collect();
    let out = convolve_1d(&raw, step, sigma);
    ScanProfile::from_raw(profile.axis, profile.positions.clone(), out, profile.center)
}

/// Regular 3D intensity grid, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityGrid {
    pub dims: [usize; 3],
    /// nm
    pub spacing: [f64; 3],
    /// nm, position of sample `(0, 0, 0)`.
    pub origin: [f64; 3],
    pub values: Vec<f64>,
}

impl IntensityGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3], values: Vec<f64>) -> Result<Self> {
        if values.len() != dims.iter().product::<usize>() {
            return Err(Error::invalid("grid value count does not match its dimensions"));
        }
        if spacing.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        Ok(IntensityGrid {
            dims,
            spacing,
            origin,
            values,
        })
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn position(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Separable 3D Gaussian convolution; axes with a single sample or zero
/// width are left untouched.
pub fn convolve_grid(grid: &IntensityGrid, sigma: [f64; 3], exec: Execution) -> Result<IntensityGrid> {
    let labels = ['x', 'y', 'z'];
    for a in 0..3 {
        if grid.dims[a] > 1 {
            check_spacing(labels[a], grid.spacing[a], sigma[a])?;
        }
    }
    let mut out = grid.clone();
    for a in 0..3 {
        if grid.dims[a] <= 1 || sigma[a] == 0.0 {
            continue;
        }
        let (b, c) = match a {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let lines: Vec<(usize, usize)> = (0..grid.dims[c])
            .flat_map(|q| (0..grid.dims[b]).map(move |p| (p, q)))
            .collect();
        let src = &out;
        let convolved = exec.map(&lines, |&(p, q)| {
            let idx = |t: usize| {
                let mut ijk = [0usize; 3];
                ijk[a] = t;
                ijk[b] = p;
                ijk[c] = q;
                src.index(ijk[0], ijk[1], ijk[2])
            };
            let line: Vec<f64> = (0..grid.dims[a]).map(|t| src.values[idx(t)]).collect();
            (convolve_1d(&line, grid.spacing[a], sigma[a]), (0..grid.dims[a]).map(idx).collect::<Vec<_>>())
        });
        let mut values = out.values.clone();
        for (line, idx) in convolved {
            for (v, i) in line.into_iter().zip(idx) {
                values[i] = v;
            }
        }
        out.values = values;
    }
    Ok(out)
}

/// Focal profiles after averaging over the ion's position spread.
#[derive(Debug, Clone)]
pub struct EffectivePsf {
    pub scans: FocalScans,
    /// nm
    pub sigma: [f64; 3],
    /// Unconvolved peak intensity.
    pub focal_peak: f64,
}

impl EffectivePsf {
    pub fn axis(&self, axis: Axis) -> &ScanProfile {
        self.scans.axis(axis)
    }
}

/// Convolves each line profile with the ion's width along that line.
pub fn effective_psf(scans: &FocalScans, state: &ThermalState) -> Result<EffectivePsf> {
    let s = state.sigma;
    Ok(EffectivePsf {
        scans: FocalScans {
            peak: scans.peak,
            x: convolve_profile(&scans.x, s[0])?,
            y: convolve_profile(&scans.y, s[1])?,
            z: convolve_profile(&scans.z, s[2])?,
        },
        sigma: s,
        focal_peak: scans.peak.intensity,
    })
}

/// Focus of an ideal linear-dipole wave over the full sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceFocus {
    /// Power carried by the reference wave, in the units of `power_on_domain`.
    pub power: f64,
    /// nm
    pub wavelength: f64,
    pub peak_intensity: f64,
    pub description: String,
}

impl ReferenceFocus {
    /// Closed form: `|E(0)|^2 = P 8 pi / 3`.
    pub fn dipole(power: f64, wavelength: f64) -> Result<Self> {
        if !(power > 0.0) || !(wavelength > 0.0) {
            return Err(Error::invalid("reference needs positive power and wavelength"));
        }
        Ok(ReferenceFocus {
            power,
            wavelength,
            peak_intensity: power * 8.0 * PI / 3.0,
            description: "ideal linear dipole wave over 4pi, equal power".into(),
        })
    }

    /// Same reference evaluated with the focal-field quadrature.
    pub fn dipole_numeric(power: f64, wavelength: f64, quad: &QuadratureSpec) -> Result<Self> {
        let setup = reference_setup(power, wavelength, quad)?;
        let mut r = Self::dipole(power, wavelength)?;
        r.peak_intensity = setup.intensity_at([0.0; 3]);
        r.description.push_str(" (numeric)");
        Ok(r)
    }
}

/// Focusing setup of the reference dipole wave.
pub fn reference_setup(power: f64, wavelength: f64, quad: &QuadratureSpec) -> Result<FocusingSetup> {
    FocusingSetup::from_profile(
        &DipoleFarField::with_power(power),
        format!("dipole P={power}"),
        &MirrorGeometry::default(),
        &WavefrontMap::zero(),
        &AngularDomain::full_sphere(),
        quad,
        wavelength,
    )
}

/// Predicted fraction of the ideal dipole-mode coupling reached by the system.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingPrediction {
    pub g: f64,
    /// Focal peak of the system over the reference peak.
    pub intensity_ratio: f64,
    /// Peak reduction by the ion's spread along x, y and z.
    pub axis_factors: [f64; 3],
    pub reference: String,
}

/// `G = (I_sys / I_ref) * prod_i c_i`, where `c_i` is the drop of the peak
/// when the profile along axis `i` is convolved with the ion's spread.
///
/// `power_on_domain` is the power the system delivers through its angular
/// domain; the reference must carry the same power.
pub fn predict_coupling(
    scans: &FocalScans,
    state: &ThermalState,
    power_on_domain: f64,
    wavelength: f64,
    reference: &ReferenceFocus,
) -> Result<CouplingPrediction> {
    if !(power_on_domain > 0.0) {
        return Err(Error::invalid("system delivers no power into its domain"));
    }
    if ((reference.power - power_on_domain) / power_on_domain).abs() > 1e-9 {
        return Err(Error::Mismatch(format!(
            "reference power {} differs from system power {}",
            reference.power, power_on_domain
        )));
    }
    if reference.wavelength != wavelength {
        return Err(Error::Mismatch(format!(
            "reference wavelength {} nm differs from system wavelength {} nm",
            reference.wavelength, wavelength
        )));
    }
    let eff = effective_psf(scans, state)?;
    let mut factors = [1.0; 3];
    for axis in Axis::ALL {
        let raw = scans.axis(axis);
        let conv = eff.axis(axis);
        factors[axis.index()] = conv.raw_peak / raw.raw_peak;
    }
    let intensity_ratio = scans.peak.intensity / reference.peak_intensity;
    let g = intensity_ratio * factors.iter().product::<f64>();
    Ok(CouplingPrediction {
        g,
        intensity_ratio,
        axis_factors: factors,
        reference: reference.description.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::focal::Peak;
    use proptest::prelude::*;

    fn gaussian(sigma: f64, step: f64, half: f64) -> ScanProfile {
        let n = (half / step) as i64;
        let x: Vec<f64> = (-n..=n).map(|i| i as f64 * step).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 * (-v * v / (2.0 * sigma * sigma)).exp()).collect();
        ScanProfile::from_raw(Axis::X, x, y, [0.0; 3]).unwrap()
    }

    fn fitted_sigma(p: &ScanProfile) -> f64 {
        let (mut m0, mut m2) = (0.0, 0.0);
        for (x, y) in p.positions.iter().zip(&p.intensity) {
            m0 += y;
            m2 += y * x * x;
        }
        (m2 / m0).sqrt()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let p = gaussian(60.0, 5.0, 500.0);
        let c = convolve_profile(&p, 0.0).unwrap();
        for (a, b) in p.intensity.iter().zip(&c.intensity) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-300));
        }
        assert_eq!(c.raw_peak, p.raw_peak);
    }

    #[test]
    fn gaussian_closure() {
        let p = gaussian(60.0, 2.0, 800.0);
        let c = convolve_profile(&p, 45.0).unwrap();
        let s = fitted_sigma(&c);
        assert!((s / 75.0 - 1.0).abs() < 1e-3, "s={s}");
    }

    #[test]
    fn coarse_grid_rejected() {
        let p = gaussian(60.0, 20.0, 800.0);
        assert!(matches!(
            convolve_profile(&p, 45.0),
            Err(Error::GridTooCoarse { axis: 'x', .. })
        ));
    }

    #[test]
    fn convolution_conserves_area() {
        let p = gaussian(40.0, 2.0, 1000.0);
        let before: f64 = p.intensity.iter().sum::<f64>() * p.raw_peak;
        let c = convolve_profile(&p, 50.0).unwrap();
        let after: f64 = c.intensity.iter().sum::<f64>() * c.raw_peak;
        assert!(((after - before) / before).abs() < 1e-4);
    }

    fn grid3() -> IntensityGrid {
        let dims = [41, 41, 61];
        let spacing = [5.0, 5.0, 5.0];
        let origin = [-100.0, -100.0, -150.0];
        let mut v = Vec::new();
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let x = origin[0] + i as f64 * 5.0;
                    let y = origin[1] + j as f64 * 5.0;
                    let z = origin[2] + k as f64 * 5.0;
                    v.push((-(x * x + y * y) / (2.0 * 15f64.powi(2)) - z * z / (2.0 * 20f64.powi(2))).exp());
                }
            }
        }
        IntensityGrid::new(dims, spacing, origin, v).unwrap()
    }

    #[test]
    fn grid_convolution_conserves_and_matches_closure() {
        let g = grid3();
        let c = convolve_grid(&g, [15.0, 20.0, 16.0], Execution::Sequential).unwrap();
        assert!(((c.sum() - g.sum()) / g.sum()).abs() < 1e-4);
        // Peak of a Gaussian product after convolution.
        let oracle = (15.0 / (15f64.powi(2) + 225.0).sqrt()) * (15.0 / (15f64.powi(2) + 400.0).sqrt()) * (20.0 / (400.0f64 + 256.0).sqrt());
        assert!((c.max() / oracle - 1.0).abs() < 1e-3, "{} vs {oracle}", c.max());
        assert!(c.max() <= g.max());
        let par = convolve_grid(&g, [15.0, 20.0, 16.0], Execution::Parallel).unwrap();
        assert_eq!(par, c);
        assert!(convolve_grid(&g, [12.0, 12.0, 12.0], Execution::Sequential).is_err());
    }

    fn synthetic_scans() -> FocalScans {
        let mk = |axis: Axis, s: f64| {
            let mut p = gaussian(s, 2.0, 1200.0);
            p.axis = axis;
            p
        };
        FocalScans {
            peak: Peak {
                position: [0.0; 3],
                intensity: 3.0,
            },
            x: mk(Axis::X, 60.0),
            y: mk(Axis::Y, 62.0),
            z: mk(Axis::Z, 110.0),
        }
    }

    #[test]
    fn point_ion_coupling_is_intensity_ratio() {
        let s = synthetic_scans();
        let r = ReferenceFocus::dipole(1.0, 369.5).unwrap();
        let c = predict_coupling(&s, &ThermalState::point(), 1.0, 369.5, &r).unwrap();
        assert_eq!(c.axis_factors, [1.0; 3]);
        assert!((c.g - 3.0 / (8.0 * PI / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn mismatched_reference_rejected() {
        let s = synthetic_scans();
        let r = ReferenceFocus::dipole(2.0, 369.5).unwrap();
        assert!(matches!(
            predict_coupling(&s, &ThermalState::point(), 1.0, 369.5, &r),
            Err(Error::Mismatch(_))
        ));
        let r = ReferenceFocus::dipole(1.0, 370.0).unwrap();
        assert!(predict_coupling(&s, &ThermalState::point(), 1.0, 369.5, &r).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn coupling_decreases_with_spread(base in 6.0f64..60.0, grow in 1.0f64..20.0, axis in 0usize..3) {
            let s = synthetic_scans();
            let r = ReferenceFocus::dipole(1.0, 369.5).unwrap();
            let mut st = ThermalState::point();
            st.sigma = [base; 3];
            let g0 = predict_coupling(&s, &st, 1.0, 369.5, &r).unwrap().g;
            st.sigma[axis] += grow;
            let g1 = predict_coupling(&s, &st, 1.0, 369.5, &r).unwrap().g;
            prop_assert!(g1 < g0);
        }
    }
}
