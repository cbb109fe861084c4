//! Physical constants (CODATA 2018) and Yb+ transition defaults.

use std::f64::consts::PI;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK / (2.0 * PI);
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// 174Yb+ mass used for the wavepacket widths.
pub const YB174_MASS_U: f64 = 174.0;

/// S1/2 - P1/2 excitation wavelength, nm.
pub const LAMBDA_EXC_NM: f64 = 369.5;
/// D[3/2]1/2 - S1/2 detection wavelength, nm.
pub const LAMBDA_DET_NM: f64 = 297.1;
/// P1/2 natural linewidth divided by 2 pi, MHz.
pub const GAMMA_MHZ: f64 = 19.6;
/// P1/2 -> D3/2 branching ratio.
pub const BRANCHING_D: f64 = 0.005;
/// D[3/2]1/2 -> S1/2 branching ratio.
pub const BRANCHING_REPUMP: f64 = 0.982;
/// D3/2 lifetime, s.
pub const D_LIFETIME_S: f64 = 0.052;

/// 2 sqrt(2 ln 2): FWHM of a Gaussian in units of sigma.
pub const GAUSS_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Converts a frequency in MHz (divided by 2 pi) to angular frequency in rad/s.
pub fn mhz_to_angular(mhz: f64) -> f64 {
    2.0 * PI * mhz * 1e6
}

/// Converts a frequency in kHz (divided by 2 pi) to angular frequency in rad/s.
pub fn khz_to_angular(khz: f64) -> f64 {
    2.0 * PI * khz * 1e3
}
