//! Scalar wavefront maps over the mirror aperture.
//!
//! Maps are stored in waves at a reference wavelength over the normalized
//! aperture radius `rho = h / R`, and evaluated in radians.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::LAMBDA_EXC_NM;
use crate::error::{Error, Result};
use crate::geometry::MirrorGeometry;
use crate::quadrature::gauss_legendre_on;

/// One Noll-normalized Zernike term. `m > 0` is the cosine branch, `m < 0`
/// the sine branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZernikeTerm {
    pub n: u32,
    pub m: i32,
    pub waves: f64,
}

impl ZernikeTerm {
    pub fn new(n: u32, m: i32, waves: f64) -> Result<Self> {
        validate_indices(n, m)?;
        if !waves.is_finite() {
            return Err(Error::invalid(format!("Zernike ({n},{m}) coefficient is not finite")));
        }
        Ok(ZernikeTerm { n, m, waves })
    }

    pub fn from_noll(j: u32, waves: f64) -> Result<Self> {
        let (n, m) = noll_to_nm(j)?;
        Self::new(n, m, waves)
    }
}

fn validate_indices(n: u32, m: i32) -> Result<()> {
    let am = m.unsigned_abs();
    if am > n || !(n - am).is_multiple_of(2) {
        return Err(Error::invalid(format!("invalid Zernike indices (n={n}, m={m})")));
    }
    Ok(())
}

/// Noll single index to `(n, m)`.
pub fn noll_to_nm(j: u32) -> Result<(u32, i32)> {
    if j == 0 {
        return Err(Error::invalid("Noll index starts at 1"));
    }
    let mut n = 0u32;
    while (n + 1) * (n + 2) / 2 < j {
        n += 1;
    }
    let k = j - n * (n + 1) / 2 - 1;
    // Within a row |m| runs 0,2,2,4,4,.. (n even) or 1,1,3,3,.. (n odd).
    let am = if n.is_multiple_of(2) { 2 * k.div_ceil(2) } else { 2 * (k / 2) + 1 };
    let m = if am == 0 {
        0
    } else if j.is_multiple_of(2) {
        am as i32
    } else {
        -(am as i32)
    };
    Ok((n, m))
}

/// `(n, m)` to Noll single index.
pub fn nm_to_noll(n: u32, m: i32) -> Result<u32> {
    validate_indices(n, m)?;
    let first = n * (n + 1) / 2 + 1;
    for j in first..first + n + 1 {
        if noll_to_nm(j)? == (n, m) {
            return Ok(j);
        }
    }
    unreachable!("every valid (n, m) has a Noll index")
}

fn radial_polynomial(n: u32, am: u32, rho: f64) -> f64 {
    let mut sum = 0.0;
    let fact = |k: u32| (1..=k).fold(1.0f64, |a, i| a * i as f64);
    for s in 0..=((n - am) / 2) {
        let c = fact(n - s) / (fact(s) * fact((n + am) / 2 - s) * fact((n - am) / 2 - s));
        let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * c * rho.powi((n - 2 * s) as i32);
    }
    sum
}

/// Noll-normalized Zernike polynomial: unit RMS over the unit disk.
pub fn zernike(n: u32, m: i32, rho: f64, phi: f64) -> f64 {
    let am = m.unsigned_abs();
    let r = radial_polynomial(n, am, rho);
    let nf = (n + 1) as f64;
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => nf.sqrt() * r,
        std::cmp::Ordering::Greater => (2.0 * nf).sqrt() * r * (am as f64 * phi).cos(),
        std::cmp::Ordering::Less => (2.0 * nf).sqrt() * r * (am as f64 * phi).sin(),
    }
}

/// Regular polar grid of wavefront samples (waves).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledGrid {
    /// Strictly increasing, last value >= 1.
    pub rho: Vec<f64>,
    /// Strictly increasing in `[0, 360)`, periodic.
    pub phi_deg: Vec<f64>,
    /// Row-major `[rho][phi]`.
    pub waves: Vec<f64>,
}

impl SampledGrid {
    pub fn new(rho: Vec<f64>, phi_deg: Vec<f64>, waves: Vec<f64>) -> Result<Self> {
        let g = SampledGrid { rho, phi_deg, waves };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rho.len() < 2 || self.phi_deg.is_empty() {
            return Err(Error::invalid("wavefront grid needs >= 2 radii and >= 1 azimuth"));
        }
        if self.waves.len() != self.rho.len() * self.phi_deg.len() {
            return Err(Error::invalid(format!(
                "wavefront grid has {} values for {}x{} nodes",
                self.waves.len(),
                self.rho.len(),
                self.phi_deg.len()
            )));
        }
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if !increasing(&self.rho) || !increasing(&self.phi_deg) {
            return Err(Error::invalid("wavefront grid axes must be strictly increasing"));
        }
        if self.rho[0] < 0.0 || *self.rho.last().unwrap() < 1.0 - 1e-12 {
            return Err(Error::invalid("wavefront grid must cover rho up to 1"));
        }
        if self.phi_deg[0] < 0.0 || *self.phi_deg.last().unwrap() >= 360.0 {
            return Err(Error::invalid("wavefront grid azimuths must lie in [0, 360)"));
        }
        if self.waves.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("wavefront grid contains non-finite values"));
        }
        Ok(())
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.waves[i * self.phi_deg.len() + j]
    }

    /// Bilinear interpolation in `(rho, phi)`, periodic in `phi`.
    fn interpolate(&self, rho: f64, phi: f64) -> Option<f64> {
        let r = &self.rho;
        if rho < r[0] || rho > *r.last().unwrap() + 1e-12 {
            return None;
        }
        let i = r.partition_point(|&x| x <= rho).clamp(1, r.len() - 1) - 1;
        let tr = ((rho - r[i]) / (r[i + 1] - r[i])).clamp(0.0, 1.0);

        let p = &self.phi_deg;
        let np = p.len();
        if np == 1 {
            return Some(self.at(i, 0) * (1.0 - tr) + self.at(i + 1, 0) * tr);
        }
        let deg = phi.to_degrees().rem_euclid(360.0);
        let k = p.partition_point(|&x| x <= deg);
        let (j0, j1, lo, hi) = if k == 0 {
            (np - 1, 0, p[np - 1] - 360.0, p[0])
        } else if k == np {
            (np - 1, 0, p[np - 1], p[0] + 360.0)
        } else {
            (k - 1, k, p[k - 1], p[k])
        };
        let tp = ((deg - lo) / (hi - lo)).clamp(0.0, 1.0);
        let v0 = self.at(i, j0) * (1.0 - tp) + self.at(i, j1) * tp;
        let v1 = self.at(i + 1, j0) * (1.0 - tp) + self.at(i + 1, j1) * tp;
        Some(v0 * (1.0 - tr) + v1 * tr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Representation {
    ZernikeSet(Vec<ZernikeTerm>),
    SampledGrid(SampledGrid),
}

/// Wavefront aberration of the mirror over its aperture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavefrontMap {
    pub representation: Representation,
    /// nm
    pub reference_wavelength: f64,
}

impl Default for WavefrontMap {
    fn default() -> Self {
        Self::zero()
    }
}

impl WavefrontMap {
    pub fn zero() -> Self {
        WavefrontMap {
            representation: Representation::ZernikeSet(Vec::new()),
            reference_wavelength: LAMBDA_EXC_NM,
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.representation {
            Representation::ZernikeSet(t) => t.iter().all(|t| t.waves == 0.0),
            Representation::SampledGrid(g) => g.waves.iter().all(|&w| w == 0.0),
        }
    }

    /// Short text used in output metadata.
    pub fn describe(&self) -> String {
        match &self.representation {
            Representation::ZernikeSet(t) if t.is_empty() => "none".to_string(),
            Representation::ZernikeSet(t) => {
                let mut s = String::from("zernike");
                for term in t {
                    let _ = write!(s, " ({},{}):{}", term.n, term.m, term.waves);
                }
                s
            }
            Representation::SampledGrid(g) => {
                format!("grid {}x{}", g.rho.len(), g.phi_deg.len())
            }
        }
    }

    /// Wavefront in waves at normalized radius `rho` and azimuth `phi`.
    pub fn waves_at(&self, rho: f64, phi: f64) -> Option<f64> {
        if !(0.0..=1.0 + 1e-12).contains(&rho) {
            return None;
        }
        match &self.representation {
            Representation::ZernikeSet(terms) => Some(
                terms
                    .iter()
                    .map(|t| t.waves * zernike(t.n, t.m, rho, phi))
                    .sum(),
            ),
            Representation::SampledGrid(g) => g.interpolate(rho, phi),
        }
    }

    /// Same map with a constant `waves` added.
    pub fn with_piston(&self, waves: f64) -> Self {
        let mut out = self.clone();
        match &mut out.representation {
            Representation::ZernikeSet(t) => t.push(ZernikeTerm { n: 0, m: 0, waves }),
            Representation::SampledGrid(g) => g.waves.iter_mut().for_each(|w| *w += waves),
        }
        out
    }

    /// Same map scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        match &mut out.representation {
            Representation::ZernikeSet(t) => t.iter_mut().for_each(|t| t.waves *= factor),
            Representation::SampledGrid(g) => g.waves.iter_mut().for_each(|w| *w *= factor),
        }
        out
    }
}

/// Phase in radians at aperture radius `h` and azimuth `phi`.
pub fn evaluate_phase(map: &WavefrontMap, h: f64, phi: f64, aperture_radius: f64) -> Result<f64> {
    if !(aperture_radius > 0.0) {
        return Err(Error::invalid(format!(
            "aperture radius must be positive, got {aperture_radius}"
        )));
    }
    if !(h >= 0.0) || h > aperture_radius * (1.0 + 1e-12) {
        return Err(Error::OutsideAperture {
            h,
            radius: aperture_radius,
        });
    }
    map.waves_at((h / aperture_radius).min(1.0), phi)
        .map(|w| 2.0 * PI * w)
        .ok_or(Error::OutsideAperture {
            h,
            radius: aperture_radius,
        })
}

/// [`evaluate_phase`] on a concrete mirror, normalizing by its front aperture.
/// Points inside a bore have no phase.
pub fn evaluate_phase_on_mirror(map: &WavefrontMap, geometry: &MirrorGeometry, h: f64, phi: f64) -> Result<f64> {
    let (x, y) = (h * phi.cos(), h * phi.sin());
    for b in &geometry.bores {
        let dx = x - b.center_radius * b.azimuth.cos();
        let dy = y - b.center_radius * b.azimuth.sin();
        if dx * dx + dy * dy < b.radius * b.radius {
            return Err(Error::invalid(format!(
                "no wavefront defined inside a bore (h={h} mm, phi={phi} rad)"
            )));
        }
    }
    evaluate_phase(map, h, phi, geometry.front_aperture_radius)
}

pub fn synthesize_zernike(coeffs: &[(u32, i32, f64)]) -> Result<WavefrontMap> {
    let terms = coeffs
        .iter()
        .map(|&(n, m, w)| ZernikeTerm::new(n, m, w))
        .collect::<Result<Vec<_>>>()?;
    Ok(WavefrontMap {
        representation: Representation::ZernikeSet(terms),
        reference_wavelength: LAMBDA_EXC_NM,
    })
}

/// Coefficients (n, m, waves) of the built-in spherical-aberration stand-in.
pub const SYNTHETIC_SPHERICAL: [(u32, i32, f64); 5] = [
    (4, 0, -0.385),
    (6, 0, -0.05),
    (8, 0, 0.255),
    (10, 0, -0.23),
    (12, 0, -0.075),
];

/// Rotationally symmetric high-order spherical aberration over the full
/// 10 mm aperture. The outer zone, used only when the full mirror is lit,
/// carries most of the error, so the full-aperture focus splits along the
/// axis and loses about four times more Strehl ratio than the
/// half-solid-angle focus.
pub fn synthetic_spherical_map() -> WavefrontMap {
    synthesize_zernike(&SYNTHETIC_SPHERICAL).expect("valid indices")
}

/// Annulus `inner <= rho <= outer` of the normalized aperture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annulus {
    pub inner: f64,
    pub outer: f64,
}

impl Annulus {
    pub fn disk() -> Self {
        Annulus { inner: 0.0, outer: 1.0 }
    }
}

/// Area-weighted RMS of the mean-removed wavefront, in waves.
pub fn rms_wavefront_error(map: &WavefrontMap, domain: Annulus) -> Result<f64> {
    if !(0.0..1.0 + 1e-12).contains(&domain.inner) || domain.outer <= domain.inner || domain.outer > 1.0 + 1e-12 {
        return Err(Error::invalid(format!(
            "invalid annulus [{}, {}]",
            domain.inner, domain.outer
        )));
    }
    let (rs, wr) = gauss_legendre_on(domain.inner, domain.outer, 96);
    let n_phi = 192;
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (r, w) in rs.iter().zip(&wr) {
        for k in 0..n_phi {
            let phi = 2.0 * PI * k as f64 / n_phi as f64;
            let v = map.waves_at(*r, phi).ok_or_else(|| {
                Error::invalid(format!("wavefront undefined at rho={r}"))
            })?;
            let wt = w * r;
            s0 += wt;
            s1 += wt * v;
            s2 += wt * v * v;
        }
    }
    let mean = s1 / s0;
    Ok((s2 / s0 - mean * mean).max(0.0).sqrt())
}

/// Header plus `(line, record)` pairs.
type Records = (Vec<String>, Vec<(usize, csv::StringRecord)>);

fn read_records(path: &Path) -> Result<Records> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|s| s.to_ascii_lowercase())
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec));
    }
    Ok((headers, rows))
}

fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line,
            message: format!("missing or malformed `{name}`"),
        })
}

/// Loads a map from CSV: `n,m,waves`, `j,waves` (Noll index) or
/// `rho,phi_deg,waves`.
pub fn load_wavefront(path: &Path) -> Result<WavefrontMap> {
    let (headers, rows) = read_records(path)?;
    let h: Vec<&str> = headers.iter().map(String::as_str).collect();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let representation = match h.as_slice() {
        ["n", "m", "waves"] => {
            let mut terms = Vec::with_capacity(rows.len());
            for (line, rec) in &rows {
                let n: u32 = field(path, *line, rec, 0, "n")?;
                let m: i32 = field(path, *line, rec, 1, "m")?;
                let w: f64 = field(path, *line, rec, 2, "waves")?;
                terms.push(ZernikeTerm::new(n, m, w).map_err(|e| parse_err(*line, e.to_string()))?);
            }
            Representation::ZernikeSet(terms)
        }
        ["j", "waves"] | ["noll", "waves"] => {
            let mut terms = Vec::with_capacity(rows.len());
            for (line, rec) in &rows {
                let j: u32 = field(path, *line, rec, 0, "j")?;
                let w: f64 = field(path, *line, rec, 1, "waves")?;
                terms.push(ZernikeTerm::from_noll(j, w).map_err(|e| parse_err(*line, e.to_string()))?);
            }
            Representation::ZernikeSet(terms)
        }
        ["rho", "phi_deg", "waves"] => {
            let mut samples = Vec::with_capacity(rows.len());
            for (line, rec) in &rows {
                let r: f64 = field(path, *line, rec, 0, "rho")?;
                let p: f64 = field(path, *line, rec, 1, "phi_deg")?;
                let w: f64 = field(path, *line, rec, 2, "waves")?;
                samples.push((r, p, w));
            }
            Representation::SampledGrid(grid_from_samples(&samples).map_err(|e| parse_err(0, e.to_string()))?)
        }
        _ => {
            return Err(parse_err(
                1,
                format!("unrecognized header `{}`", headers.join(",")),
            ))
        }
    };
    Ok(WavefrontMap {
        representation,
        reference_wavelength: LAMBDA_EXC_NM,
    })
}

fn grid_from_samples(samples: &[(f64, f64, f64)]) -> Result<SampledGrid> {
    let mut rho: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let mut phi: Vec<f64> = samples.iter().map(|s| s.1).collect();
    rho.sort_by(f64::total_cmp);
    rho.dedup();
    phi.sort_by(f64::total_cmp);
    phi.dedup();
    let mut waves = vec![f64::NAN; rho.len() * phi.len()];
    for &(r, p, w) in samples {
        let i = rho.binary_search_by(|x| x.total_cmp(&r)).expect("present");
        let j = phi.binary_search_by(|x| x.total_cmp(&p)).expect("present");
        waves[i * phi.len() + j] = w;
    }
    if waves.iter().any(|w| w.is_nan()) {
        return Err(Error::invalid("wavefront grid is not a complete rho x phi product"));
    }
    SampledGrid::new(rho, phi, waves)
}

/// Writes a map in the format [`load_wavefront`] reads.
pub fn save_wavefront(map: &WavefrontMap, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    match &map.representation {
        Representation::ZernikeSet(terms) => {
            w.write_record(["n", "m", "waves"]).map_err(csv_io)?;
            for t in terms {
                w.write_record([t.n.to_string(), t.m.to_string(), t.waves.to_string()])
                    .map_err(csv_io)?;
            }
        }
        Representation::SampledGrid(g) => {
            w.write_record(["rho", "phi_deg", "waves"]).map_err(csv_io)?;
            for (i, r) in g.rho.iter().enumerate() {
                for (j, p) in g.phi_deg.iter().enumerate() {
                    w.write_record([r.to_string(), p.to_string(), g.at(i, j).to_string()])
                        .map_err(csv_io)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
