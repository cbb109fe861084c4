//! Run configuration read from TOML. Every physical key carries its unit.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::aberrations::{load_wavefront, synthetic_spherical_map, WavefrontMap};
use crate::beams::{optimize_waist, DonutBeam};
use crate::constants::{khz_to_angular, mhz_to_angular, ATOMIC_MASS_UNIT};
use crate::error::{Error, Result};
use crate::geometry::{BoreSpec, MirrorGeometry};
use crate::quadrature::QuadratureSpec;
use crate::saturation::{DetectionChain, FitModel, TransitionConstants};
use crate::thermal::{CoolingConfig, TrapConfig};

/// Environment variable overriding the output directory.
pub const OUTPUT_DIR_ENV: &str = "PMFOCUS_OUTPUT_DIR";

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BoreConfig {
    pub center_radius_mm: f64,
    pub radius_mm: f64,
    pub azimuth_deg: f64,
}

impl Default for BoreConfig {
    fn default() -> Self {
        BoreConfig {
            center_radius_mm: 0.0,
            radius_mm: 0.75,
            azimuth_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub focal_length_mm: f64,
    pub front_aperture_radius_mm: f64,
    pub half_solid_angle: bool,
    pub bores: Vec<BoreConfig>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let g = MirrorGeometry::default();
        GeometryConfig {
            focal_length_mm: g.focal_length,
            front_aperture_radius_mm: g.front_aperture_radius,
            half_solid_angle: false,
            bores: g
                .bores
                .iter()
                .map(|b| BoreConfig {
                    center_radius_mm: b.center_radius,
                    radius_mm: b.radius,
                    azimuth_deg: b.azimuth.to_degrees(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct BeamConfig {
    /// Absent: optimized for the full mirror.
    pub waist_mm: Option<f64>,
    pub power_watt: f64,
    pub wavelength_nm: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            waist_mm: None,
            power_watt: 1e-6,
            wavelength_nm: crate::constants::LAMBDA_EXC_NM,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct WavefrontConfig {
    /// CSV map; takes precedence over `synthetic`.
    pub path: Option<PathBuf>,
    /// Used when no file is given: `"spherical"` (default) for the built-in
    /// spherical-aberration map, `"none"` to skip aberrated cases.
    pub synthetic: Option<String>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrapToml {
    pub freq_x_khz: f64,
    pub freq_y_khz: f64,
    pub freq_z_khz: f64,
    pub mass_u: f64,
}

impl Default for TrapToml {
    fn default() -> Self {
        TrapToml {
            freq_x_khz: 482.6,
            freq_y_khz: 491.7,
            freq_z_khz: 1025.0,
            mass_u: crate::constants::YB174_MASS_U,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CoolingToml {
    /// Signed; red detuning is negative.
    pub detuning_mhz: f64,
    pub linewidth_mhz: f64,
    pub saturation: f64,
    pub alpha: f64,
}

impl Default for CoolingToml {
    fn default() -> Self {
        CoolingToml {
            detuning_mhz: -14.2,
            linewidth_mhz: crate::constants::GAMMA_MHZ,
            saturation: 0.0,
            alpha: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TransitionToml {
    pub linewidth_mhz: f64,
    pub branching: f64,
    pub lambda_exc_nm: f64,
    pub lambda_det_nm: f64,
    pub repump_branching: f64,
    pub d_lifetime_s: f64,
}

impl Default for TransitionToml {
    fn default() -> Self {
        let c = TransitionConstants::default();
        TransitionToml {
            linewidth_mhz: crate::constants::GAMMA_MHZ,
            branching: c.branching,
            lambda_exc_nm: c.lambda_exc,
            lambda_det_nm: c.lambda_det,
            repump_branching: c.repump_branching,
            d_lifetime_s: c.d_lifetime,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub lateral_half_range_nm: f64,
    pub axial_half_range_nm: f64,
    pub internal_step_nm: f64,
    pub output_step_nm: f64,
    pub plane_lateral_half_range_nm: f64,
    pub plane_axial_half_range_nm: f64,
    pub plane_step_nm: f64,
    pub planes: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            lateral_half_range_nm: 1000.0,
            axial_half_range_nm: 2000.0,
            internal_step_nm: 5.0,
            output_step_nm: 25.0,
            plane_lateral_half_range_nm: 600.0,
            plane_axial_half_range_nm: 1200.0,
            plane_step_nm: 20.0,
            planes: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub dataset: Option<PathBuf>,
    pub eta_det: f64,
    pub s_max: f64,
    pub background_cps: f64,
    /// Detuning of the excitation laser during the saturation scan; the
    /// same laser also cools, so the default matches `cooling.detuning_mhz`.
    pub detuning_mhz: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            dataset: None,
            eta_det: 0.0142,
            s_max: crate::saturation::DEFAULT_S_MAX,
            background_cps: 15.0,
            detuning_mhz: -14.2,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub g: f64,
    pub points: usize,
    pub peak_rate_cps: f64,
    pub exposure_s: f64,
    pub background_cps: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            g: 0.086,
            points: 10,
            peak_rate_cps: 392.0,
            exposure_s: 1.0,
            background_cps: 15.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub name: String,
    pub efficiency: f64,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub stages: Vec<StageConfig>,
    pub pulsed_detected_counts: f64,
    pub pulsed_pulses: u64,
    pub pulsed_background_cps: f64,
    pub pulsed_gate_s: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            stages: DetectionChain::default()
                .stages
                .into_iter()
                .map(|(name, efficiency)| StageConfig { name, efficiency })
                .collect(),
            pulsed_detected_counts: 142.0,
            pulsed_pulses: 10_000,
            pulsed_background_cps: 0.0,
            pulsed_gate_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OmegaConfig {
    pub samples: usize,
    pub lens_na_max: f64,
}

impl Default for OmegaConfig {
    fn default() -> Self {
        OmegaConfig {
            samples: 101,
            lens_na_max: 1.0,
        }
    }
}

/// Parsed configuration file.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub geometry: GeometryConfig,
    pub beam: BeamConfig,
    pub wavefront: WavefrontConfig,
    pub trap: TrapToml,
    pub cooling: CoolingToml,
    pub transition: TransitionToml,
    pub scan: ScanConfig,
    pub quadrature: QuadratureSpec,
    pub fit: FitConfig,
    pub synth: SynthConfig,
    pub detection: DetectionConfig,
    pub omega: OmegaConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            output_dir: PathBuf::from("pmfocus-out"),
            geometry: GeometryConfig::default(),
            beam: BeamConfig::default(),
            wavefront: WavefrontConfig::default(),
            trap: TrapToml::default(),
            cooling: CoolingToml::default(),
            transition: TransitionToml::default(),
            scan: ScanConfig::default(),
            quadrature: QuadratureSpec::default(),
            fit: FitConfig::default(),
            synth: SynthConfig::default(),
            detection: DetectionConfig::default(),
            omega: OmegaConfig::default(),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(cfg_err(format!("`{name}` must be positive, got {v}")));
    }
    Ok(())
}

impl RunConfig {
    /// Parses and validates a TOML file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        rebase(&mut cfg.wavefront.path);
        rebase(&mut cfg.fit.dataset);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        positive("geometry.focal_length_mm", g.focal_length_mm)?;
        positive("geometry.front_aperture_radius_mm", g.front_aperture_radius_mm)?;
        self.mirror()?.validate().map_err(|e| cfg_err(e.to_string()))?;
        if let Some(w) = self.beam.waist_mm {
            positive("beam.waist_mm", w)?;
        }
        positive("beam.power_watt", self.beam.power_watt)?;
        positive("beam.wavelength_nm", self.beam.wavelength_nm)?;
        if let Some(p) = &self.wavefront.path {
            if !p.is_file() {
                return Err(cfg_err(format!("wavefront file {} does not exist", p.display())));
            }
        }
        if let Some(s) = &self.wavefront.synthetic {
            if s != "spherical" && s != "none" {
                return Err(cfg_err(format!("unknown synthetic wavefront `{s}`")));
            }
        }
        let t = &self.trap;
        for (n, v) in [("trap.freq_x_khz", t.freq_x_khz), ("trap.freq_y_khz", t.freq_y_khz), ("trap.freq_z_khz", t.freq_z_khz), ("trap.mass_u", t.mass_u)] {
            positive(n, v)?;
        }
        self.cooling_config().validate().map_err(|e| cfg_err(e.to_string()))?;
        self.transition_constants().validate().map_err(|e| cfg_err(e.to_string()))?;
        let s = &self.scan;
        for (n, v) in [
            ("scan.lateral_half_range_nm", s.lateral_half_range_nm),
            ("scan.axial_half_range_nm", s.axial_half_range_nm),
            ("scan.internal_step_nm", s.internal_step_nm),
            ("scan.output_step_nm", s.output_step_nm),
            ("scan.plane_lateral_half_range_nm", s.plane_lateral_half_range_nm),
            ("scan.plane_axial_half_range_nm", s.plane_axial_half_range_nm),
            ("scan.plane_step_nm", s.plane_step_nm),
        ] {
            positive(n, v)?;
        }
        if s.lateral_half_range_nm < s.internal_step_nm || s.axial_half_range_nm < s.internal_step_nm {
            return Err(cfg_err("scan ranges must span at least one internal step"));
        }
        let ratio = s.output_step_nm / s.internal_step_nm;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 - 1e-9 {
            return Err(cfg_err("scan.output_step_nm must be a multiple of scan.internal_step_nm"));
        }
        for (n, v) in [
            ("lateral", s.lateral_half_range_nm),
            ("axial", s.axial_half_range_nm),
            ("plane lateral", s.plane_lateral_half_range_nm),
            ("plane axial", s.plane_axial_half_range_nm),
        ] {
            if v > crate::focal::MAX_GRID_EXTENT_NM {
                return Err(cfg_err(format!("{n} scan half range exceeds {} nm", crate::focal::MAX_GRID_EXTENT_NM)));
            }
        }
        self.quadrature.validate().map_err(|e| cfg_err(e.to_string()))?;
        let f = &self.fit;
        if !(f.eta_det > 0.0 && f.eta_det <= 1.0) {
            return Err(cfg_err(format!("fit.eta_det must lie in (0, 1], got {}", f.eta_det)));
        }
        if !(f.s_max > 0.0 && f.s_max <= 1.0) {
            return Err(cfg_err(format!("fit.s_max must lie in (0, 1], got {}", f.s_max)));
        }
        if !(f.background_cps >= 0.0) {
            return Err(cfg_err("fit.background_cps must be >= 0"));
        }
        if let Some(p) = &f.dataset {
            if !p.is_file() {
                return Err(cfg_err(format!("dataset file {} does not exist", p.display())));
            }
        }
        let y = &self.synth;
        if !(0.0..=1.0).contains(&y.g) || y.points == 0 || !(y.peak_rate_cps > 0.0) || !(y.exposure_s > 0.0) || !(y.background_cps >= 0.0) {
            return Err(cfg_err("synth needs g in [0, 1], points > 0, positive rate and exposure"));
        }
        self.detection_chain().validate().map_err(|e| cfg_err(e.to_string()))?;
        if self.detection.pulsed_pulses == 0 {
            return Err(cfg_err("detection.pulsed_pulses must be > 0"));
        }
        if self.omega.samples < 2 || !(0.0..=1.0).contains(&self.omega.lens_na_max) {
            return Err(cfg_err("omega needs >= 2 samples and lens_na_max in [0, 1]"));
        }
        Ok(())
    }

    /// Mirror without aperture stop.
    pub fn mirror(&self) -> Result<MirrorGeometry> {
        let g = &self.geometry;
        Ok(MirrorGeometry {
            focal_length: g.focal_length_mm,
            front_aperture_radius: g.front_aperture_radius_mm,
            bores: g
                .bores
                .iter()
                .map(|b| BoreSpec {
                    center_radius: b.center_radius_mm,
                    radius: b.radius_mm,
                    azimuth: b.azimuth_deg.to_radians(),
                })
                .collect(),
            aperture_stop: None,
        })
    }

    /// Configured beam; the waist is optimized for the full mirror when absent.
    pub fn beam(&self) -> Result<DonutBeam> {
        let waist = match self.beam.waist_mm {
            Some(w) => w,
            None => optimize_waist(&self.mirror()?, &self.quadrature)?,
        };
        DonutBeam::new(waist, self.beam.power_watt, self.beam.wavelength_nm)
    }

    /// Map for the aberrated cases, or `None` when they are disabled.
    pub fn aberrated_map(&self) -> Result<Option<WavefrontMap>> {
        if let Some(p) = &self.wavefront.path {
            return load_wavefront(p).map(Some);
        }
        Ok(match self.wavefront.synthetic.as_deref() {
            Some("none") => None,
            _ => Some(synthetic_spherical_map()),
        })
    }

    pub fn trap_config(&self) -> TrapConfig {
        let t = &self.trap;
        TrapConfig {
            omega: [khz_to_angular(t.freq_x_khz), khz_to_angular(t.freq_y_khz), khz_to_angular(t.freq_z_khz)],
            mass: t.mass_u * ATOMIC_MASS_UNIT,
        }
    }

    pub fn cooling_config(&self) -> CoolingConfig {
        let c = &self.cooling;
        CoolingConfig {
            detuning: mhz_to_angular(c.detuning_mhz),
            linewidth: mhz_to_angular(c.linewidth_mhz),
            saturation: c.saturation,
            alpha: c.alpha,
        }
    }

    pub fn transition_constants(&self) -> TransitionConstants {
        let t = &self.transition;
        TransitionConstants {
            linewidth: mhz_to_angular(t.linewidth_mhz),
            branching: t.branching,
            lambda_exc: t.lambda_exc_nm,
            lambda_det: t.lambda_det_nm,
            repump_branching: t.repump_branching,
            d_lifetime: t.d_lifetime_s,
        }
    }

    pub fn fit_model(&self) -> FitModel {
        FitModel {
            consts: self.transition_constants(),
            detuning: mhz_to_angular(self.fit.detuning_mhz),
            eta_det: self.fit.eta_det,
            s_max: self.fit.s_max,
        }
    }

    pub fn detection_chain(&self) -> DetectionChain {
        DetectionChain {
            stages: self
                .detection
                .stages
                .iter()
                .map(|s| (s.name.clone(), s.efficiency))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        c.validate().unwrap();
        assert_eq!(c.mirror().unwrap(), MirrorGeometry::default());
        assert_eq!(c.trap_config(), TrapConfig::default());
        assert_eq!(c.cooling_config(), CoolingConfig::default());
        assert_eq!(c.transition_constants(), TransitionConstants::default());
        assert_eq!(c.detection_chain(), DetectionChain::default());
    }

    #[test]
    fn units_in_keys() {
        let c = RunConfig::parse(
            "[geometry]\nfocal_length_mm = 3.0\nbores = []\n[beam]\nwaist_mm = 4.0\n[quadrature]\nnodes_theta = 64\nnodes_phi = 32\n",
        )
        .unwrap();
        c.validate().unwrap();
        assert_eq!(c.mirror().unwrap().focal_length, 3.0);
        assert!(c.mirror().unwrap().bores.is_empty());
        assert_eq!(c.beam().unwrap().waist, 4.0);
        assert!(RunConfig::parse("[geometry]\nfocal_length = 3.0\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            "[scan]\ninternal_step_nm = 0.0\n",
            "[scan]\noutput_step_nm = 7.0\n",
            "[scan]\nlateral_half_range_nm = 0.0\n",
            "[scan]\naxial_half_range_nm = 6000.0\n",
            "[quadrature]\nnodes_theta = 8\nnodes_phi = 64\n",
            "[fit]\neta_det = 1.5\n",
            "[wavefront]\npath = \"/nonexistent/map.csv\"\n",
            "[wavefront]\nsynthetic = \"coma\"\n",
            "[cooling]\nlinewidth_mhz = -1.0\n",
            "[geometry]\nfocal_length_mm = -2.0\n",
        ] {
            let c = RunConfig::parse(bad).unwrap();
            let e = c.validate().unwrap_err();
            assert!(e.is_config_error(), "{bad}: {e}");
        }
    }
}
