//! Scenario pipeline and CSV writers shared by the command-line front end.

use std::fmt::Write as _;
use std::path::Path;

use crate::aberrations::WavefrontMap;
use crate::beams::{power_on_domain, project_to_sphere, DonutBeam};
use crate::error::Result;
use crate::exec::Execution;
use crate::focal::{fwhm, FocalFieldGrid, FocalScans, FocusingSetup, PeakWidth, ScanProfile};
use crate::geometry::{angular_domain, MirrorGeometry};
use crate::psf::{effective_psf, predict_coupling, CouplingPrediction, EffectivePsf, ReferenceFocus};
use crate::quadrature::QuadratureSpec;
use crate::thermal::ThermalState;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aperture {
    Full,
    HalfSolidAngle,
}

impl Aperture {
    pub fn label(self) -> &'static str {
        match self {
            Aperture::Full => "fsa",
            Aperture::HalfSolidAngle => "hsa",
        }
    }

    pub fn apply(self, mirror: &MirrorGeometry) -> MirrorGeometry {
        match self {
            Aperture::Full => mirror.clone(),
            Aperture::HalfSolidAngle => mirror.half_solid_angle(),
        }
    }
}

/// Line-scan extents, nm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanSettings {
    pub lateral_half_range: f64,
    pub axial_half_range: f64,
    pub step: f64,
}

impl Default for ScanSettings {
    fn default() -> Self {
        ScanSettings {
            lateral_half_range: 1000.0,
            axial_half_range: 2000.0,
            step: 5.0,
        }
    }
}

/// Everything computed for one mirror/aperture/wavefront combination.
#[derive(Debug, Clone)]
pub struct CaseResult {
    pub wavefront: &'static str,
    pub aperture: Aperture,
    pub setup: FocusingSetup,
    pub scans: FocalScans,
    pub effective: EffectivePsf,
    pub power_on_domain: f64,
    pub point: CouplingPrediction,
    pub thermal: CouplingPrediction,
}

impl CaseResult {
    pub fn name(&self) -> String {
        format!("{}_{}", self.wavefront, self.aperture.label())
    }

    /// Lateral (x) and axial FWHM of the point or thermal ion PSF.
    pub fn widths(&self, thermal: bool) -> (PeakWidth, PeakWidth) {
        let s = if thermal { &self.effective.scans } else { &self.scans };
        (fwhm(&s.x), fwhm(&s.z))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn analyze_case(
    wavefront: &'static str,
    mirror: &MirrorGeometry,
    aperture: Aperture,
    beam: &DonutBeam,
    map: &WavefrontMap,
    quad: &QuadratureSpec,
    scan: &ScanSettings,
    state: &ThermalState,
    exec: Execution,
) -> Result<CaseResult> {
    let geom = aperture.apply(mirror);
    let domain = angular_domain(&geom)?;
    let setup = FocusingSetup::new(&geom, beam, map, &domain, quad)?;
    let scans = setup.scan_axes(scan.lateral_half_range, scan.axial_half_range, scan.step, exec)?;
    let effective = effective_psf(&scans, state)?;
    let p = power_on_domain(&project_to_sphere(*beam, &geom), &domain, quad);
    let reference = ReferenceFocus::dipole(p, beam.wavelength)?;
    let point = predict_coupling(&scans, &ThermalState::point(), p, beam.wavelength, &reference)?;
    let thermal = predict_coupling(&scans, state, p, beam.wavelength, &reference)?;
    Ok(CaseResult {
        wavefront,
        aperture,
        setup,
        scans,
        effective,
        power_on_domain: p,
        point,
        thermal,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(csv_err)
}

fn csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Fixed formatting so identical inputs give identical bytes.
pub fn num(v: f64) -> String {
    format!("{v:.9e}")
}

/// Position in nm to 1 pm, without a sign on zero.
pub fn coord(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" { "0.000".into() } else { s }
}

/// `pos_nm,intensity`
pub fn write_scan(path: &Path, profile: &ScanProfile) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["pos_nm", "intensity"]).map_err(csv_err)?;
    for (p, i) in profile.positions.iter().zip(&profile.intensity) {
        w.write_record([coord(*p), num(*i)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Field grid with intensity normalized to `norm`.
pub fn write_field_grid(path: &Path, grid: &FocalFieldGrid, norm: f64) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "x_nm", "y_nm", "z_nm", "Ex_re", "Ex_im", "Ey_re", "Ey_im", "Ez_re", "Ez_im", "I_norm",
    ])
    .map_err(csv_err)?;
    for (p, e) in grid.points.iter().zip(&grid.field) {
        let i = crate::focal::intensity(e) / norm;
        let mut rec: Vec<String> = p.iter().map(|c| coord(*c)).collect();
        for c in e {
            rec.push(num(c.re));
            rec.push(num(c.im));
        }
        rec.push(num(i));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column `key,value` summary.
pub fn write_key_values(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["key", "value"]).map_err(csv_err)?;
    for (k, v) in rows {
        w.write_record([k, v]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Generic table with a header row.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text table with right-aligned columns.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec(), &mut out);
    let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
    let _ = writeln!(out, "{}", "-".repeat(total));
    for r in rows {
        line(r.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

/// Rows of the FWHM table: one per wavefront and ion model, HSA and FSA
/// side by side.
pub fn psf_table_rows(cases: &[CaseResult]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let find = |wf: &str, ap: Aperture| cases.iter().find(|c| c.wavefront == wf && c.aperture == ap);
    let mut wavefronts: Vec<&'static str> = Vec::new();
    for c in cases {
        if !wavefronts.contains(&c.wavefront) {
            wavefronts.push(c.wavefront);
        }
    }
    for wf in wavefronts {
        for thermal in [false, true] {
            let label = match (wf, thermal) {
                ("ideal", false) => "ideal mirror".to_string(),
                ("ideal", true) => "ideal mirror with ion extent".to_string(),
                (w, false) => format!("{w} mirror"),
                (w, true) => format!("{w} mirror with ion extent"),
            };
            let mut row = vec![label];
            for extract in [0usize, 1] {
                for ap in [Aperture::HalfSolidAngle, Aperture::Full] {
                    row.push(match find(wf, ap) {
                        Some(c) => {
                            let (lat, ax) = c.widths(thermal);
                            if extract == 0 { lat } else { ax }.to_string()
                        }
                        None => "-".into(),
                    });
                }
            }
            rows.push(row);
        }
    }
    rows
}

pub const PSF_TABLE_HEADER: [&str; 5] = [
    "case",
    "lateral HSA (nm)",
    "lateral FSA (nm)",
    "axial HSA (nm)",
    "axial FSA (nm)",
];
