//! Doppler-cooled motional state of the ion and its position density.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{khz_to_angular, mhz_to_angular, ATOMIC_MASS_UNIT, GAMMA_MHZ, HBAR, YB174_MASS_U};
use crate::error::{Error, Result};
use crate::geometry::AngularDomain;
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapConfig {
    /// Angular trap frequencies along x, y, z, rad/s.
    pub omega: [f64; 3],
    /// kg
    pub mass: f64,
}

impl Default for TrapConfig {
    fn default() -> Self {
        TrapConfig {
            omega: [khz_to_angular(482.6), khz_to_angular(491.7), khz_to_angular(1025.0)],
            mass: YB174_MASS_U * ATOMIC_MASS_UNIT,
        }
    }
}

impl TrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.omega.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::invalid(format!("trap frequencies must be positive, got {:?}", self.omega)));
        }
        if !(self.mass > 0.0) {
            return Err(Error::invalid(format!("ion mass must be positive, got {}", self.mass)));
        }
        Ok(())
    }
}

/// Cooling-laser parameters. Detuning is signed: red (cooling) is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingConfig {
    /// rad/s
    pub detuning: f64,
    /// rad/s
    pub linewidth: f64,
    pub saturation: f64,
    /// Fraction of spontaneous emission projected onto one axis.
    pub alpha: f64,
}

impl Default for CoolingConfig {
    fn default() -> Self {
        CoolingConfig {
            detuning: -mhz_to_angular(14.2),
            linewidth: mhz_to_angular(GAMMA_MHZ),
            saturation: 0.0,
            alpha: 1.0 / 3.0,
        }
    }
}

impl CoolingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.linewidth > 0.0) {
            return Err(Error::invalid(format!("linewidth must be positive, got {}", self.linewidth)));
        }
        if !(self.saturation >= 0.0) || !self.saturation.is_finite() {
            return Err(Error::invalid(format!("saturation must be >= 0, got {}", self.saturation)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !self.detuning.is_finite() {
            return Err(Error::invalid("detuning must be finite"));
        }
        Ok(())
    }
}

/// Excited-state population of a driven two-level system,
/// `(S/2) / (1 + (2 Delta / Gamma)^2 + S)`.
pub fn upper_state_population(detuning: f64, saturation: f64, linewidth: f64) -> f64 {
    0.5 * saturation * lorentzian(detuning, saturation, linewidth)
}

/// `rho22 / (S/2)`, finite at `S = 0`.
fn lorentzian(detuning: f64, saturation: f64, linewidth: f64) -> f64 {
    let x = 2.0 * detuning / linewidth;
    1.0 / (1.0 + x * x + saturation)
}

/// Steady-state mean phonon number along an axis with frequency `omega`
/// whose projection of the laser wavevector is `cos2` (mean `cos^2`).
pub fn mean_phonon(cool: &CoolingConfig, omega: f64, cos2: f64) -> Result<f64> {
    cool.validate()?;
    if !(omega > 0.0) {
        return Err(Error::invalid(format!("trap frequency must be positive, got {omega}")));
    }
    if !(cos2 > 0.0 && cos2 <= 1.0) {
        return Err(Error::invalid(format!("cos^2 factor must lie in (0, 1], got {cos2}")));
    }
    let (d, s, g) = (cool.detuning, cool.saturation, cool.linewidth);
    // The common S/2 factor of every population cancels.
    let carrier = lorentzian(d, s, g);
    let red = lorentzian(d - omega, s, g);
    let blue = lorentzian(d + omega, s, g);
    let denominator = cos2 * (blue - red);
    if !(denominator > 0.0) {
        return Err(Error::HeatingRegime { denominator });
    }
    Ok((cool.alpha * carrier + cos2 * red) / denominator)
}

/// Irradiance-weighted mean `cos^2` between the emission direction of an
/// axial linear dipole and the trap axes, `(axial, radial)`; exactly
/// `(1/5, 2/5)`.
pub fn dipole_overlap_factors() -> (f64, f64) {
    dipole_overlap_factors_with(&QuadratureSpec::new(64, 64).expect("valid"))
}

pub fn dipole_overlap_factors_with(quad: &QuadratureSpec) -> (f64, f64) {
    let q = AngularDomain::full_sphere().quadrature(quad);
    let norm = 3.0 / (8.0 * PI);
    let w = |t: f64| norm * t.sin().powi(2);
    let axial = q.integrate(|t, _| w(t) * t.cos().powi(2));
    let radial = q.integrate(|t, p| w(t) * (t.sin() * p.cos()).powi(2));
    (axial, radial)
}

/// Ground-state rms width `sqrt(hbar / (2 m omega))`, nm.
pub fn ground_state_sigma(omega: f64, mass: f64) -> f64 {
    (HBAR / (2.0 * mass * omega)).sqrt() * 1e9
}

/// Thermal rms width `sqrt(2 n + 1) sigma_0`, nm.
pub fn wavepacket_sigma(n_mean: f64, omega: f64, mass: f64) -> Result<f64> {
    if !(n_mean >= 0.0) || !(omega > 0.0) || !(mass > 0.0) {
        return Err(Error::invalid(format!(
            "wavepacket needs n >= 0, omega > 0, m > 0 (got {n_mean}, {omega}, {mass})"
        )));
    }
    Ok((2.0 * n_mean + 1.0).sqrt() * ground_state_sigma(omega, mass))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalState {
    pub n_mean: [f64; 3],
    /// nm
    pub sigma: [f64; 3],
    /// nm
    pub sigma0: [f64; 3],
}

impl ThermalState {
    /// Doppler-limited state, using the radial overlap for x and y and the
    /// axial overlap for z, each axis with its own frequency.
    pub fn doppler(trap: &TrapConfig, cool: &CoolingConfig) -> Result<Self> {
        trap.validate()?;
        let (ax, rad) = dipole_overlap_factors();
        let cos2 = [rad, rad, ax];
        let mut n_mean = [0.0; 3];
        let mut sigma = [0.0; 3];
        let mut sigma0 = [0.0; 3];
        for i in 0..3 {
            n_mean[i] = mean_phonon(cool, trap.omega[i], cos2[i])?;
            sigma0[i] = ground_state_sigma(trap.omega[i], trap.mass);
            sigma[i] = wavepacket_sigma(n_mean[i], trap.omega[i], trap.mass)?;
        }
        Ok(ThermalState { n_mean, sigma, sigma0 })
    }

    /// A point-like ion.
    pub fn point() -> Self {
        ThermalState {
            n_mean: [0.0; 3],
            sigma: [0.0; 3],
            sigma0: [0.0; 3],
        }
    }

    /// FWHM of the position density along each axis, nm.
    pub fn extent_fwhm(&self) -> [f64; 3] {
        self.sigma.map(|s| crate::constants::GAUSS_FWHM_PER_SIGMA * s)
    }
}

/// Separable Gaussian probability density at `r` (nm), per nm^3.
pub fn ion_density(state: &ThermalState, r: [f64; 3]) -> Result<f64> {
    if state.sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::invalid("ion density needs positive widths"));
    }
    Ok((0..3)
        .map(|i| {
            let s = state.sigma[i];
            (-r[i] * r[i] / (2.0 * s * s)).exp() / (s * (2.0 * PI).sqrt())
        })
        .product())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::gauss_legendre_on;
    use proptest::prelude::*;

    #[test]
    fn population_limits() {
        let g = mhz_to_angular(19.6);
        assert!(upper_state_population(0.0, 1e6, g) > 0.4999);
        assert!((upper_state_population(0.0, 1.0, g) - 0.25).abs() < 1e-15);
        let d = -mhz_to_angular(14.2);
        let ratio = upper_state_population(d, 1e-12, g) / 0.5e-12;
        let oracle = 1.0 / (1.0 + (2.0 * 14.2f64 / 19.6).powi(2));
        assert!((ratio - oracle).abs() < 1e-9);
        assert!((oracle - 0.3226).abs() < 1e-4);
        assert_eq!(upper_state_population(d, 0.0, g), 0.0);
    }

    #[test]
    fn doppler_phonon_numbers() {
        let c = CoolingConfig::default();
        let n = mean_phonon(&c, khz_to_angular(487.0), 0.4).unwrap();
        assert!((n - 19.0).abs() < 1.5, "n={n}");
        let nz = mean_phonon(&c, khz_to_angular(1025.0), 0.2).unwrap();
        assert!((13.0..=14.0).contains(&nz), "nz={nz}");
    }

    #[test]
    fn blue_detuning_heats() {
        let c = CoolingConfig {
            detuning: mhz_to_angular(14.2),
            ..CoolingConfig::default()
        };
        assert!(matches!(
            mean_phonon(&c, khz_to_angular(500.0), 0.4),
            Err(Error::HeatingRegime { .. })
        ));
    }

    #[test]
    fn overlap_factors() {
        let (ax, rad) = dipole_overlap_factors();
        assert!((ax - 0.2).abs() < 1e-6);
        assert!((rad - 0.4).abs() < 1e-6);
        assert!((ax + 2.0 * rad - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ground_state_width() {
        let t = TrapConfig::default();
        let s0 = ground_state_sigma(t.omega[0], t.mass);
        // hbar / (2 m omega) evaluated by hand.
        let oracle = (1.054_571_817e-34 / (2.0 * 174.0 * 1.660_539_066_6e-27 * 2.0 * PI * 482.6e3)).sqrt() * 1e9;
        assert!((s0 - oracle).abs() < 1e-6);
        assert!((s0 - 7.76).abs() < 0.01);
        assert_eq!(wavepacket_sigma(0.0, t.omega[0], t.mass).unwrap(), s0);
        let s = wavepacket_sigma(19.5, t.omega[0], t.mass).unwrap();
        assert!((49.0..=50.0).contains(&s), "s={s}");
    }

    #[test]
    fn doppler_extent_matches_quoted_scale() {
        let st = ThermalState::doppler(&TrapConfig::default(), &CoolingConfig::default()).unwrap();
        let e = st.extent_fwhm();
        assert!(((e[0] - 140.0) / 140.0).abs() < 0.25, "{e:?}");
        assert!(((e[2] - 80.0) / 80.0).abs() < 0.25, "{e:?}");
        for i in 0..3 {
            assert!(st.sigma[i] >= st.sigma0[i]);
        }
    }

    #[test]
    fn density_normalized() {
        let st = ThermalState::doppler(&TrapConfig::default(), &CoolingConfig::default()).unwrap();
        let mut total = 1.0;
        for i in 0..3 {
            let s = st.sigma[i];
            let (x, w) = gauss_legendre_on(-10.0 * s, 10.0 * s, 200);
            let mut one = 0.0;
            for (xi, wi) in x.iter().zip(&w) {
                let mut r = [0.0; 3];
                r[i] = *xi;
                let others: f64 = (0..3).filter(|j| *j != i).map(|j| 1.0 / (st.sigma[j] * (2.0 * PI).sqrt())).product();
                one += wi * ion_density(&st, r).unwrap() / others;
            }
            total *= one;
        }
        assert!((total - 1.0).abs() < 1e-6);
        let at0 = ion_density(&st, [0.0; 3]).unwrap();
        let oracle: f64 = st.sigma.iter().map(|s| 1.0 / (s * (2.0 * PI).sqrt())).product();
        assert!(((at0 - oracle) / oracle).abs() < 1e-12);
    }

    #[test]
    fn density_fwhm_along_x() {
        let st = ThermalState::doppler(&TrapConfig::default(), &CoolingConfig::default()).unwrap();
        let peak = ion_density(&st, [0.0; 3]).unwrap();
        let half = |x: f64| ion_density(&st, [x, 0.0, 0.0]).unwrap() - 0.5 * peak;
        let (mut a, mut b) = (0.0, 5.0 * st.sigma[0]);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if half(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        let w = 2.0 * a;
        assert!((w / (2.3548 * st.sigma[0]) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn phonon_number_grows_linearly_with_saturation() {
        let omega = khz_to_angular(482.6);
        let n = |s: f64| {
            let c = CoolingConfig {
                saturation: s,
                ..CoolingConfig::default()
            };
            mean_phonon(&c, omega, 0.4).unwrap()
        };
        let ss: Vec<f64> = (0..=8).map(|i| 0.025 * i as f64).collect();
        let ns: Vec<f64> = ss.iter().map(|s| n(*s)).collect();
        assert!(ns.windows(2).all(|w| w[1] > w[0]));
        let slopes: Vec<f64> = ns.windows(2).map(|w| (w[1] - w[0]) / 0.025).collect();
        let mean = slopes.iter().sum::<f64>() / slopes.len() as f64;
        for s in slopes {
            assert!((s / mean - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn doppler_limit_energy_independent_of_frequency() {
        let g = mhz_to_angular(19.6);
        let c = CoolingConfig {
            detuning: -0.5 * g,
            ..CoolingConfig::default()
        };
        let energies: Vec<f64> = [100.0, 200.0, 400.0, 800.0]
            .iter()
            .map(|khz| {
                let w = khz_to_angular(*khz);
                mean_phonon(&c, w, 0.4).unwrap() * HBAR * w
            })
            .collect();
        let e0 = energies[0];
        for e in energies {
            assert!((e / e0 - 1.0).abs() < 0.15);
        }
    }

    proptest! {
        #[test]
        fn sigma_monotone(n in 0.0f64..100.0, dn in 0.01f64..10.0, khz in 100.0f64..3000.0, f in 1.01f64..3.0) {
            let m = TrapConfig::default().mass;
            let w = khz_to_angular(khz);
            prop_assert!(wavepacket_sigma(n + dn, w, m).unwrap() > wavepacket_sigma(n, w, m).unwrap());
            prop_assert!(wavepacket_sigma(n, f * w, m).unwrap() < wavepacket_sigma(n, w, m).unwrap());
        }

        #[test]
        fn population_bounded(d in -1e9f64..1e9, s in 0.0f64..1e4) {
            let p = upper_state_population(d, s, mhz_to_angular(19.6));
            prop_assert!((0.0..0.5).contains(&p));
        }
    }
}
