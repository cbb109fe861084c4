//! Saturation model of the detected fluorescence, coupling-efficiency fits
//! and the detection-efficiency budget.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::constants::{
    mhz_to_angular, BRANCHING_D, BRANCHING_REPUMP, D_LIFETIME_S, GAMMA_MHZ, LAMBDA_DET_NM, LAMBDA_EXC_NM, PLANCK,
    SPEED_OF_LIGHT,
};
use crate::error::{Error, Result};
use crate::quadrature::minimize_bounded;

/// Default largest saturation parameter admitted into a fit.
pub const DEFAULT_S_MAX: f64 = 0.1;

/// Gate/refit rounds before the gated set must be stable.
const MAX_GATE_ITERATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionConstants {
    /// P1/2 linewidth, rad/s.
    pub linewidth: f64,
    /// Fraction of decays ending in D3/2, whose repump photons are detected.
    pub branching: f64,
    /// nm
    pub lambda_exc: f64,
    /// nm
    pub lambda_det: f64,
    pub repump_branching: f64,
    /// s
    pub d_lifetime: f64,
}

impl Default for TransitionConstants {
    fn default() -> Self {
        TransitionConstants {
            linewidth: mhz_to_angular(GAMMA_MHZ),
            branching: BRANCHING_D,
            lambda_exc: LAMBDA_EXC_NM,
            lambda_det: LAMBDA_DET_NM,
            repump_branching: BRANCHING_REPUMP,
            d_lifetime: D_LIFETIME_S,
        }
    }
}

impl TransitionConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.branching > 0.0 && self.branching < 1.0) {
            return Err(Error::invalid(format!("branching ratio must lie in (0, 1), got {}", self.branching)));
        }
        if !(self.linewidth > 0.0) || !(self.lambda_exc > 0.0) || !(self.lambda_det > 0.0) {
            return Err(Error::invalid("linewidth and wavelengths must be positive"));
        }
        Ok(())
    }

    /// Largest detectable rate per unit detection efficiency, `beta Gamma / 2`.
    pub fn max_emission_rate(&self) -> f64 {
        0.5 * self.branching * self.linewidth
    }
}

/// `P_sat = 3 (h c / lambda) (Gamma / 8) (1 + 4 (Delta / Gamma)^2)`, W.
/// `linewidth` and `detuning` in rad/s, `lambda_nm` in nm.
pub fn saturation_power(lambda_nm: f64, linewidth: f64, detuning: f64) -> f64 {
    let photon = PLANCK * SPEED_OF_LIGHT / (lambda_nm * 1e-9);
    3.0 * photon * linewidth / 8.0 * (1.0 + 4.0 * (detuning / linewidth).powi(2))
}

/// Saturation parameter reached with excitation power `p_exc`.
pub fn saturation_parameter(p_exc: f64, g: f64, p_sat: f64) -> f64 {
    g * p_exc / p_sat
}

/// Detected rate in counts per second,
/// `eta beta (Gamma / 2) S / (S + 1)` with `S = G P_exc / P_sat`.
pub fn detection_rate(p_exc: f64, g: f64, eta_det: f64, consts: &TransitionConstants, detuning: f64) -> f64 {
    let p_sat = saturation_power(consts.lambda_exc, consts.linewidth, detuning);
    rate_from_s(saturation_parameter(p_exc, g, p_sat), eta_det, consts)
}

fn rate_from_s(s: f64, eta_det: f64, consts: &TransitionConstants) -> f64 {
    eta_det * consts.max_emission_rate() * s / (s + 1.0)
}

/// Background-corrected rate reached at saturation parameter `s`; the
/// rate-domain form of the S gate, independent of G.
pub fn rate_at_saturation(s: f64, eta_det: f64, consts: &TransitionConstants) -> f64 {
    rate_from_s(s, eta_det, consts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationRecord {
    /// W
    pub p_exc: f64,
    pub counts: f64,
    /// s
    pub exposure: f64,
}

impl SaturationRecord {
    pub fn rate(&self) -> f64 {
        self.counts / self.exposure
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaturationDataset {
    pub records: Vec<SaturationRecord>,
    /// cps
    pub background_rate: f64,
}

impl SaturationDataset {
    pub fn new(records: Vec<SaturationRecord>, background_rate: f64) -> Result<Self> {
        let d = SaturationDataset {
            records,
            background_rate,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            if !(r.counts >= 0.0) || !r.counts.is_finite() {
                return Err(Error::invalid(format!("record {i}: counts must be >= 0")));
            }
            if !(r.exposure > 0.0) {
                return Err(Error::invalid(format!("record {i}: exposure must be > 0")));
            }
            if !(r.p_exc >= 0.0) || !r.p_exc.is_finite() {
                return Err(Error::invalid(format!("record {i}: excitation power must be >= 0")));
            }
        }
        if !(self.background_rate >= 0.0) {
            return Err(Error::invalid("background rate must be >= 0"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Background-corrected rate of each record.
    pub fn corrected_rates(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rate() - self.background_rate).collect()
    }
}

/// Keeps records whose model saturation parameter `G P / P_sat` is at most `s_max`.
pub fn s_gate(dataset: &SaturationDataset, g_prior: f64, p_sat: f64, s_max: f64) -> Result<SaturationDataset> {
    check_s_max(s_max)?;
    let records: Vec<_> = dataset
        .records
        .iter()
        .filter(|r| saturation_parameter(r.p_exc, g_prior, p_sat) <= s_max * (1.0 + 1e-12))
        .copied()
        .collect();
    finish_gate(dataset, records)
}

/// Keeps records whose corrected rate does not exceed the rate reached at `s_max`.
pub fn rate_gate(dataset: &SaturationDataset, eta_det: f64, consts: &TransitionConstants, s_max: f64) -> Result<SaturationDataset> {
    check_s_max(s_max)?;
    let limit = rate_at_saturation(s_max, eta_det, consts);
    let records: Vec<_> = dataset
        .records
        .iter()
        .filter(|r| r.rate() - dataset.background_rate <= limit * (1.0 + 1e-12))
        .copied()
        .collect();
    finish_gate(dataset, records)
}

fn check_s_max(s_max: f64) -> Result<()> {
    if !(s_max > 0.0 && s_max <= 1.0) {
        return Err(Error::invalid(format!("S_max must lie in (0, 1], got {s_max}")));
    }
    Ok(())
}

fn finish_gate(dataset: &SaturationDataset, records: Vec<SaturationRecord>) -> Result<SaturationDataset> {
    if records.is_empty() {
        return Err(Error::EmptyDataset("no record passes the saturation gate".into()));
    }
    Ok(SaturationDataset {
        records,
        background_rate: dataset.background_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub g: f64,
    pub std_error: f64,
    pub points_used: usize,
    pub s_max: f64,
    pub chi2: f64,
    pub gate_iterations: usize,
}

/// Settings shared by the fit and the generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitModel {
    pub consts: TransitionConstants,
    /// rad/s
    pub detuning: f64,
    pub eta_det: f64,
    pub s_max: f64,
}

impl FitModel {
    pub fn p_sat(&self) -> f64 {
        saturation_power(self.consts.lambda_exc, self.consts.linewidth, self.detuning)
    }

    pub fn rate(&self, p_exc: f64, g: f64) -> f64 {
        detection_rate(p_exc, g, self.eta_det, &self.consts, self.detuning)
    }

    /// `dR / dG`.
    fn rate_slope(&self, p_exc: f64, g: f64) -> f64 {
        let x = p_exc / self.p_sat();
        let s = g * x;
        self.eta_det * self.consts.max_emission_rate() * x / (1.0 + s).powi(2)
    }
}

/// Fits G to background-corrected rates by Poisson-weighted least squares.
///
/// The gate starts in the rate domain and is then re-applied with the
/// fitted G until the retained set no longer changes. Re-gating only ever
/// drops points, so a record sitting on the gate cannot toggle in and out.
pub fn fit_coupling(dataset: &SaturationDataset, model: &FitModel) -> Result<FitResult> {
    dataset.validate()?;
    model.consts.validate()?;
    if !(model.eta_det > 0.0 && model.eta_det <= 1.0) {
        return Err(Error::invalid(format!("detection efficiency must lie in (0, 1], got {}", model.eta_det)));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset("dataset has no records".into()));
    }
    if dataset.records.iter().all(|r| r.counts == 0.0) {
        return Err(Error::EmptyDataset("all counts are zero".into()));
    }
    let p_sat = model.p_sat();
    let mut gated = rate_gate(dataset, model.eta_det, &model.consts, model.s_max)?;
    let mut fit = fit_gated(&gated, model)?;
    for it in 1..=MAX_GATE_ITERATIONS {
        let next = s_gate(&gated, fit.g, p_sat, model.s_max)?;
        if next.records == gated.records {
            fit.gate_iterations = it;
            return Ok(fit);
        }
        gated = next;
        fit = fit_gated(&gated, model)?;
    }
    Err(Error::NoConvergence(format!(
        "saturation gate still changing after {MAX_GATE_ITERATIONS} refits"
    )))
}

fn fit_gated(data: &SaturationDataset, model: &FitModel) -> Result<FitResult> {
    if data.len() < 3 {
        return Err(Error::EmptyDataset(format!(
            "{} records pass the saturation gate, at least 3 are needed",
            data.len()
        )));
    }
    let pts: Vec<(f64, f64, f64)> = data
        .records
        .iter()
        .map(|r| {
            let rate = r.rate() - data.background_rate;
            // Poisson variance of a rate; a zero count still carries one count of uncertainty.
            let var = r.counts.max(1.0) / (r.exposure * r.exposure);
            (r.p_exc, rate, var)
        })
        .collect();
    let chi2 = |g: f64| -> f64 {
        pts.iter()
            .map(|&(p, r, v)| (r - model.rate(p, g)).powi(2) / v)
            .sum()
    };
    let best = minimize_bounded(chi2, 0.0, 1.0, 1e-12, 500)?;
    let info: f64 = pts
        .iter()
        .map(|&(p, _, v)| model.rate_slope(p, best.x).powi(2) / v)
        .sum();
    let std_error = if info > 0.0 { info.sqrt().recip() } else { f64::INFINITY };
    Ok(FitResult {
        g: best.x,
        std_error,
        points_used: data.len(),
        s_max: model.s_max,
        chi2: best.value,
        gate_iterations: 0,
    })
}

/// Poisson counts around the model plus background; deterministic per seed.
pub fn synthesize_dataset(
    g: f64,
    model: &FitModel,
    powers: &[f64],
    exposure: f64,
    background: f64,
    seed: u64,
) -> Result<SaturationDataset> {
    if !(exposure > 0.0) || !(background >= 0.0) || !(0.0..=1.0).contains(&g) {
        return Err(Error::invalid("synthetic data needs exposure > 0, background >= 0, G in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(powers.len());
    for &p in powers {
        let mean = (model.rate(p, g) + background) * exposure;
        let counts = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::invalid(format!("Poisson mean {mean}: {e}")))?
                .sample(&mut rng)
        } else {
            0.0
        };
        records.push(SaturationRecord {
            p_exc: p,
            counts,
            exposure,
        });
    }
    SaturationDataset::new(records, background)
}

/// Noise-free counts equal to the model expectation.
pub fn expected_dataset(g: f64, model: &FitModel, powers: &[f64], exposure: f64, background: f64) -> Result<SaturationDataset> {
    let records = powers
        .iter()
        .map(|&p| SaturationRecord {
            p_exc: p,
            counts: (model.rate(p, g) + background) * exposure,
            exposure,
        })
        .collect();
    SaturationDataset::new(records, background)
}

/// `n` powers whose model rates are evenly spaced up to `peak_rate`.
pub fn powers_for_rates(g: f64, model: &FitModel, peak_rate: f64, n: usize) -> Result<Vec<f64>> {
    let r_inf = model.eta_det * model.consts.max_emission_rate();
    if !(peak_rate > 0.0 && peak_rate < r_inf) || n == 0 || !(g > 0.0) {
        return Err(Error::invalid(format!(
            "peak rate must lie in (0, {r_inf}) cps with G > 0"
        )));
    }
    let p_sat = model.p_sat();
    Ok((1..=n)
        .map(|i| {
            let r = peak_rate * i as f64 / n as f64;
            let s = r / (r_inf - r);
            s * p_sat / g
        })
        .collect())
}

/// Reads `p_exc_watt,counts,exposure_s`.
pub fn load_dataset(path: &Path, background_rate: f64) -> Result<SaturationDataset> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| perr(0, e.to_string()))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| perr(1, e.to_string()))?
        .iter()
        .map(str::to_ascii_lowercase)
        .collect();
    if headers != ["p_exc_watt", "counts", "exposure_s"] {
        return Err(perr(1, format!("expected header `p_exc_watt,counts,exposure_s`, got `{}`", headers.join(","))));
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |i: usize, name: &str| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(line, format!("missing or malformed `{name}`")))
        };
        let r = SaturationRecord {
            p_exc: num(0, "p_exc_watt")?,
            counts: num(1, "counts")?,
            exposure: num(2, "exposure_s")?,
        };
        if r.counts < 0.0 || r.exposure <= 0.0 || r.p_exc < 0.0 {
            return Err(perr(line, "counts and power must be >= 0 and exposure > 0".into()));
        }
        records.push(r);
    }
    SaturationDataset::new(records, background_rate)
}

pub fn save_dataset(data: &SaturationDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(["p_exc_watt", "counts", "exposure_s"]).map_err(io)?;
    for r in &data.records {
        w.write_record([format!("{:e}", r.p_exc), r.counts.to_string(), r.exposure.to_string()])
            .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Named efficiencies of the detection path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionChain {
    pub stages: Vec<(String, f64)>,
}

impl Default for DetectionChain {
    fn default() -> Self {
        DetectionChain {
            stages: vec![
                ("mirror_reflectivity".into(), 0.67),
                ("pmt_quantum_efficiency".into(), 0.13),
                ("solid_angle".into(), 0.81),
                ("splitter_dichroic_filters".into(), 0.43),
            ],
        }
    }
}

impl DetectionChain {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in &self.stages {
            if !(*v >= 0.0 && *v <= 1.0) {
                return Err(Error::invalid(format!("stage `{name}` efficiency {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Upper bound on the detection efficiency: product of all stages.
pub fn detection_budget(chain: &DetectionChain) -> Result<f64> {
    chain.validate()?;
    Ok(chain.stages.iter().map(|(_, v)| v).product())
}

/// Detection efficiency from a pulsed sequence: background-corrected
/// counts per excitation pulse. `gate` is the total time over which
/// background accumulates, s.
pub fn pulsed_eta(detected: f64, pulses: u64, background_rate: f64, gate: f64) -> Result<f64> {
    if pulses == 0 {
        return Err(Error::invalid("pulsed estimate needs at least one pulse"));
    }
    if !(detected >= 0.0) || !(background_rate >= 0.0) || !(gate >= 0.0) {
        return Err(Error::invalid("counts, background and gate time must be >= 0"));
    }
    let corrected = detected - background_rate * gate;
    if corrected < 0.0 {
        return Err(Error::invalid(format!(
            "background-corrected counts are negative ({corrected})"
        )));
    }
    Ok(corrected / pulses as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(eta: f64) -> FitModel {
        FitModel {
            consts: TransitionConstants::default(),
            detuning: 0.0,
            eta_det: eta,
            s_max: DEFAULT_S_MAX,
        }
    }

    #[test]
    fn saturation_power_values() {
        let c = TransitionConstants::default();
        let p0 = saturation_power(c.lambda_exc, c.linewidth, 0.0);
        let oracle = 3.0 * 6.626_070_15e-34 * 299_792_458.0 / 369.5e-9 * (2.0 * std::f64::consts::PI * 19.6e6) / 8.0;
        assert!((p0 / oracle - 1.0).abs() < 1e-12);
        assert!((p0 - 2.48e-11).abs() < 0.01e-11);
        let pd = saturation_power(c.lambda_exc, c.linewidth, mhz_to_angular(14.2));
        assert!((pd / p0 - (1.0 + 4.0 * (14.2f64 / 19.6).powi(2))).abs() < 1e-12);
        assert!((pd - 7.7e-11).abs() < 0.05e-11);
    }

    #[test]
    fn rates_at_unit_saturation() {
        let c = TransitionConstants::default();
        let p_sat = saturation_power(c.lambda_exc, c.linewidth, 0.0);
        let r = detection_rate(p_sat, 1.0, 1.0, &c, 0.0);
        assert!((r / 154e3 - 1.0).abs() < 0.01, "r={r}");
        let r = detection_rate(p_sat / 0.2, 0.2, 0.014, &c, 0.0);
        assert!((r / 2160.0 - 1.0).abs() < 0.01, "r={r}");
        assert_eq!(detection_rate(0.0, 0.1, 0.014, &c, 0.0), 0.0);
    }

    #[test]
    fn gate_boundary() {
        let c = TransitionConstants::default();
        let limit = rate_at_saturation(0.1, 0.014, &c);
        assert!((limit - 392.0).abs() < 0.5, "{limit}");
        let rec = |rate: f64| SaturationRecord {
            p_exc: 1e-9,
            counts: rate,
            exposure: 1.0,
        };
        let d = SaturationDataset::new(vec![rec(100.0), rec(392.0), rec(500.0)], 0.0).unwrap();
        let g = rate_gate(&d, 0.0142, &c, 0.1).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(rate_gate(&d, 0.0142, &c, 1.0).unwrap().len(), 3);
        assert!(rate_gate(&d, 0.0142, &c, 0.0).is_err());
        let p_sat = 1.0;
        let d = SaturationDataset::new(
            vec![SaturationRecord { p_exc: 2.0, counts: 1.0, exposure: 1.0 }],
            0.0,
        )
        .unwrap();
        assert!(matches!(s_gate(&d, 0.1, p_sat, 0.1), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn noiseless_fit_is_exact() {
        let m = model(0.0142);
        let powers = powers_for_rates(0.137, &m, 392.0, 10).unwrap();
        let d = expected_dataset(0.137, &m, &powers, 1.0, 15.0).unwrap();
        let f = fit_coupling(&d, &m).unwrap();
        assert!((f.g - 0.137).abs() < 1e-6, "{f:?}");
        assert_eq!(f.points_used, 10);
        assert!(f.std_error > 0.0 && f.std_error < 0.02);
    }

    #[test]
    fn gate_drops_saturated_points() {
        let m = model(0.0142);
        let mut powers = powers_for_rates(0.09, &m, 380.0, 8).unwrap();
        let p_sat = m.p_sat();
        powers.extend([0.5, 1.0, 3.0].map(|s| s * p_sat / 0.09));
        let d = expected_dataset(0.09, &m, &powers, 2.0, 10.0).unwrap();
        let f = fit_coupling(&d, &m).unwrap();
        assert_eq!(f.points_used, 8);
        assert!((f.g - 0.09).abs() < 1e-6);
    }

    #[test]
    fn fit_failures() {
        let m = model(0.0142);
        let zero = SaturationDataset::new(
            (1..5).map(|i| SaturationRecord { p_exc: i as f64 * 1e-10, counts: 0.0, exposure: 1.0 }).collect(),
            0.0,
        )
        .unwrap();
        assert!(matches!(fit_coupling(&zero, &m), Err(Error::EmptyDataset(_))));
        let few = expected_dataset(0.1, &m, &powers_for_rates(0.1, &m, 300.0, 2).unwrap(), 1.0, 0.0).unwrap();
        assert!(fit_coupling(&few, &m).is_err());
    }

    #[test]
    fn fit_scales_with_power() {
        let m = model(0.0142);
        let powers = powers_for_rates(0.12, &m, 350.0, 10).unwrap();
        let d = synthesize_dataset(0.12, &m, &powers, 1.0, 12.0, 3).unwrap();
        let f1 = fit_coupling(&d, &m).unwrap();
        let c = 2.5;
        let mut d2 = d.clone();
        d2.records.iter_mut().for_each(|r| r.p_exc *= c);
        let f2 = fit_coupling(&d2, &m).unwrap();
        assert!((f2.g * c / f1.g - 1.0).abs() < 1e-6);
    }

    #[test]
    fn synthetic_data_is_seeded_and_unbiased() {
        let m = model(0.0142);
        let powers = powers_for_rates(0.1, &m, 300.0, 4).unwrap();
        let a = synthesize_dataset(0.1, &m, &powers, 1.0, 15.0, 11).unwrap();
        let b = synthesize_dataset(0.1, &m, &powers, 1.0, 15.0, 11).unwrap();
        assert_eq!(a, b);
        let z = synthesize_dataset(0.0, &m, &powers, 1.0, 0.0, 1).unwrap();
        assert!(z.records.iter().all(|r| r.counts == 0.0));
        let repeats = 10_000;
        let mut sums = vec![0.0; powers.len()];
        for seed in 0..repeats {
            let d = synthesize_dataset(0.1, &m, &powers, 1.0, 15.0, seed).unwrap();
            for (s, r) in sums.iter_mut().zip(d.corrected_rates()) {
                *s += r;
            }
        }
        for (s, p) in sums.iter().zip(&powers) {
            let mean = s / repeats as f64;
            let truth = m.rate(*p, 0.1);
            assert!((mean / truth - 1.0).abs() < 0.01, "{mean} vs {truth}");
        }
    }

    #[test]
    fn dataset_csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let m = model(0.0142);
        let powers = powers_for_rates(0.1, &m, 300.0, 5).unwrap();
        let d = synthesize_dataset(0.1, &m, &powers, 1.0, 15.0, 5).unwrap();
        save_dataset(&d, &path).unwrap();
        assert_eq!(load_dataset(&path, 15.0).unwrap(), d);
        std::fs::write(&path, "p_exc_watt,counts,exposure_s\n1e-10,5,1\n2e-10,abc,1\n").unwrap();
        match load_dataset(&path, 0.0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        std::fs::write(&path, "power,counts\n1,2\n").unwrap();
        assert!(load_dataset(&path, 0.0).is_err());
    }

    #[test]
    fn budget_and_pulsed_estimate() {
        let b = detection_budget(&DetectionChain::default()).unwrap();
        assert!((b - 0.67 * 0.13 * 0.81 * 0.43).abs() < 1e-15);
        assert!((b - 0.030).abs() < 5e-4, "b={b}");
        let unity = DetectionChain {
            stages: vec![("a".into(), 1.0), ("b".into(), 1.0)],
        };
        assert_eq!(detection_budget(&unity).unwrap(), 1.0);
        let dead = DetectionChain {
            stages: vec![("a".into(), 0.5), ("b".into(), 0.0)],
        };
        assert_eq!(detection_budget(&dead).unwrap(), 0.0);
        assert_eq!(pulsed_eta(142.0, 10_000, 0.0, 1.0).unwrap(), 0.0142);
        assert_eq!(pulsed_eta(0.0, 10, 0.0, 1.0).unwrap(), 0.0);
        assert_eq!(pulsed_eta(10.0, 10, 0.0, 1.0).unwrap(), 1.0);
        assert!(pulsed_eta(5.0, 10, 20.0, 1.0).is_err());
        assert!(pulsed_eta(5.0, 0, 0.0, 1.0).is_err());
    }

    #[test]
    fn pulsed_round_trip() {
        let eta = 0.0142;
        let pulses = 1_000_000u64;
        let (bg, gate) = (15.0, 100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mean = eta * pulses as f64 + bg * gate;
        let detected = Poisson::new(mean).unwrap().sample(&mut rng);
        let est = pulsed_eta(detected, pulses, bg, gate).unwrap();
        let sigma = mean.sqrt() / pulses as f64;
        assert!((est - eta).abs() < 4.0 * sigma);
    }

    proptest! {
        #[test]
        fn rate_monotone_concave(x in 1e-3f64..10.0, dx in 1e-4f64..1e-3) {
            let c = TransitionConstants::default();
            let p_sat = saturation_power(c.lambda_exc, c.linewidth, 0.0);
            let r = |s: f64| detection_rate(s * p_sat, 1.0, 0.02, &c, 0.0);
            prop_assert!(r(x + dx) > r(x));
            prop_assume!(x > dx);
            prop_assert!(r(x + dx) - r(x) <= r(x) - r(x - dx) + 1e-12);
        }

        #[test]
        fn near_linear_below_gate(s in 1e-4f64..0.1) {
            let c = TransitionConstants::default();
            let r = rate_from_s(s, 0.014, &c);
            let lin = 0.014 * c.max_emission_rate() * s;
            // Deviation relative to the linear term is exactly S / (1 + S).
            prop_assert!((lin - r).abs() / lin <= s / (1.0 + s) + 1e-12);
            prop_assert!(s / (1.0 + s) <= 0.0910);
        }
    }

    #[test]
    fn asymptote() {
        let c = TransitionConstants::default();
        let g = 0.1;
        let p_sat = saturation_power(c.lambda_exc, c.linewidth, 0.0);
        let r = detection_rate(1e6 * p_sat / g, g, 0.02, &c, 0.0);
        assert!((r / (0.02 * c.max_emission_rate()) - 1.0).abs() < 1e-3);
    }
}
