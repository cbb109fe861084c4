#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pmfocus::beams::DonutBeam;
use pmfocus::config::{RunConfig, OUTPUT_DIR_ENV};
use pmfocus::focal::{plane_points, Axis, ScanProfile};
use pmfocus::geometry::{angular_domain, omega_curve, FocusingSystem};
use pmfocus::psf::{predict_coupling, reference_setup, ReferenceFocus};
use pmfocus::report::{
    analyze_case, coord, num, psf_table_rows, render_table, write_field_grid, write_key_values, write_scan, write_table,
    Aperture, CaseResult, ScanSettings, PSF_TABLE_HEADER,
};
use pmfocus::saturation::{
    detection_budget, fit_coupling, load_dataset, powers_for_rates, pulsed_eta, save_dataset, synthesize_dataset,
};
use pmfocus::thermal::ThermalState;
use pmfocus::{Error, Execution, Result};

#[derive(Parser, Debug)]
#[command(name = "pmfocus", version, about = "Parabolic-mirror focusing onto a trapped ion")]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// TOML configuration file; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the environment and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Stop the aperture down to twice the focal length.
    #[arg(long, global = true)]
    half_solid_angle: bool,
    /// Measured wavefront map (CSV).
    #[arg(long, global = true)]
    wavefront: Option<PathBuf>,
    /// Skip the plane grids in `psf`.
    #[arg(long, global = true)]
    no_planes: bool,
    /// Run on one thread.
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Focal-field line scans, plane grids and the FWHM table.
    Psf,
    /// Weighted solid angle of lens, 4pi microscope and mirror.
    Omega,
    /// Predicted coupling efficiency per case.
    Coupling,
    /// Fit G to a saturation dataset.
    Fit {
        /// CSV with `p_exc_watt,counts,exposure_s`; falls back to `fit.dataset`.
        dataset: Option<PathBuf>,
    },
    /// Doppler-limited thermal state of the ion.
    Ion,
    /// Detection-efficiency budget.
    Detection,
    /// Write a seeded synthetic saturation dataset.
    Synth,
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    exec: Execution,
    apertures: Vec<Aperture>,
    planes: bool,
}

impl Context {
    fn build(opts: &GlobalOpts) -> Result<Self> {
        let mut cfg = match &opts.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(w) = &opts.wavefront {
            cfg.wavefront.path = Some(w.clone());
        }
        if let Some(s) = opts.seed {
            cfg.seed = s;
        }
        if opts.half_solid_angle {
            cfg.geometry.half_solid_angle = true;
        }
        if opts.no_planes {
            cfg.scan.planes = false;
        }
        if let Some(o) = &opts.out {
            cfg.output_dir = o.clone();
        } else if let Some(o) = std::env::var_os(OUTPUT_DIR_ENV).filter(|o| !o.is_empty()) {
            cfg.output_dir = PathBuf::from(o);
        }
        cfg.validate()?;
        std::fs::create_dir_all(&cfg.output_dir)
            .map_err(|e| Error::Config(format!("cannot create {}: {e}", cfg.output_dir.display())))?;
        let apertures = if cfg.geometry.half_solid_angle {
            vec![Aperture::HalfSolidAngle]
        } else {
            vec![Aperture::HalfSolidAngle, Aperture::Full]
        };
        Ok(Context {
            out: cfg.output_dir.clone(),
            planes: cfg.scan.planes,
            exec: if opts.sequential { Execution::Sequential } else { Execution::default() },
            apertures,
            cfg,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn scan_settings(&self) -> ScanSettings {
        ScanSettings {
            lateral_half_range: self.cfg.scan.lateral_half_range_nm,
            axial_half_range: self.cfg.scan.axial_half_range_nm,
            step: self.cfg.scan.internal_step_nm,
        }
    }

    fn cases(&self, beam: &DonutBeam) -> Result<Vec<CaseResult>> {
        let mirror = self.cfg.mirror()?;
        let state = ThermalState::doppler(&self.cfg.trap_config(), &self.cfg.cooling_config())?;
        let quad = self.cfg.quadrature;
        let scan = self.scan_settings();
        let mut maps = vec![("ideal", pmfocus::aberrations::WavefrontMap::zero())];
        if let Some(m) = self.cfg.aberrated_map()? {
            maps.push(("aberrated", m));
        }
        let mut out = Vec::new();
        for (label, map) in &maps {
            for &ap in &self.apertures {
                out.push(analyze_case(label, &mirror, ap, beam, map, &quad, &scan, &state, self.exec)?);
            }
        }
        Ok(out)
    }

    /// Writes the key-value summary and the text table, and echoes the table.
    fn finish(&self, cmd: &str, summary: &[(String, String)], table: &str) -> Result<()> {
        write_key_values(&self.path(&format!("{cmd}_summary.csv")), summary)?;
        std::fs::write(self.path(&format!("{cmd}_table.txt")), table)?;
        print!("{table}");
        Ok(())
    }
}

fn kv(k: impl Into<String>, v: impl ToString) -> (String, String) {
    (k.into(), v.to_string())
}

fn cmd_psf(ctx: &Context) -> Result<()> {
    let beam = ctx.cfg.beam()?;
    let cases = ctx.cases(&beam)?;
    let out_step = ctx.cfg.scan.output_step_nm;
    let mut summary = vec![kv("waist_mm", num(beam.waist))];
    for c in &cases {
        let name = c.name();
        for (ion, scans) in [("point", &c.scans), ("thermal", &c.effective.scans)] {
            for axis in Axis::ALL {
                let p: ScanProfile = scans.axis(axis).resampled(out_step)?;
                write_scan(&ctx.path(&format!("psf_{name}_{ion}_{}.csv", axis.label())), &p)?;
            }
            let (lat, ax) = c.widths(ion == "thermal");
            summary.push(kv(format!("{name}_{ion}_lateral_fwhm_nm"), lat));
            summary.push(kv(format!("{name}_{ion}_axial_fwhm_nm"), ax));
        }
        summary.push(kv(format!("{name}_peak_z_nm"), coord(c.scans.peak.position[2])));
        if ctx.planes {
            let s = &ctx.cfg.scan;
            let centre = c.scans.peak.position;
            let (lat, ax, step) = (s.plane_lateral_half_range_nm, s.plane_axial_half_range_nm, s.plane_step_nm);
            for (tag, a, ha, b, hb) in [
                ("xy", Axis::X, lat, Axis::Y, lat),
                ("zy", Axis::Z, ax, Axis::Y, lat),
                ("xz", Axis::X, lat, Axis::Z, ax),
            ] {
                let pts = plane_points(centre, a, ha, b, hb, step)?;
                let grid = c.setup.field_grid(&pts, ctx.exec)?;
                write_field_grid(&ctx.path(&format!("psf_{name}_point_{tag}.csv")), &grid, c.scans.peak.intensity)?;
            }
        }
    }
    let table = render_table(&PSF_TABLE_HEADER, &psf_table_rows(&cases));
    ctx.finish("psf", &summary, &table)
}

fn cmd_omega(ctx: &Context) -> Result<()> {
    let quad = ctx.cfg.quadrature;
    let n = ctx.cfg.omega.samples;
    let na = ctx.cfg.omega.lens_na_max;
    let mirror = ctx.cfg.mirror()?;
    let systems = [
        FocusingSystem::SingleLens(na),
        FocusingSystem::FourPiMicroscope(na),
        FocusingSystem::ParabolicMirror(mirror.clone()),
    ];
    let curves = systems
        .iter()
        .map(|s| omega_curve(s, n, &quad))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let mut r = vec![format!("{:.4}", curves[0][i].na)];
            r.extend(curves.iter().map(|c| num(c[i].omega)));
            r
        })
        .collect();
    let header = ["na", systems[0].label(), systems[1].label(), systems[2].label()];
    write_table(&ctx.path("omega.csv"), &header, &rows)?;
    let domain = angular_domain(&mirror)?;
    let fraction = domain.solid_angle_fraction_with(&quad);
    let lens_max = curves[0][n - 1].omega;
    let four_pi_max = curves[1][n - 1].omega;
    let mirror_omega = curves[2][0].omega;
    let summary = vec![
        kv("mirror_solid_angle_fraction", num(fraction)),
        kv("mirror_omega", num(mirror_omega)),
        kv("single_lens_omega_at_na_max", num(lens_max)),
        kv("four_pi_omega_at_na_max", num(four_pi_max)),
        kv("na_max", num(na)),
    ];
    let table = render_table(
        &["system", "omega"],
        &[
            vec![format!("single lens (NA {na})"), format!("{lens_max:.4}")],
            vec![format!("4pi microscope (NA {na})"), format!("{four_pi_max:.4}")],
            vec!["parabolic mirror".into(), format!("{mirror_omega:.4}")],
            vec!["mirror solid-angle fraction".into(), format!("{fraction:.4}")],
        ],
    );
    ctx.finish("omega", &summary, &table)
}

fn cmd_coupling(ctx: &Context) -> Result<()> {
    let beam = ctx.cfg.beam()?;
    let cases = ctx.cases(&beam)?;
    let mut rows = Vec::new();
    for c in &cases {
        for (ion, p) in [("point", &c.point), ("thermal", &c.thermal)] {
            rows.push(vec![
                c.name(),
                ion.to_string(),
                num(p.intensity_ratio),
                num(p.axis_factors[0]),
                num(p.axis_factors[1]),
                num(p.axis_factors[2]),
                num(p.g),
            ]);
        }
    }
    // The reference wave against itself.
    let quad = ctx.cfg.quadrature;
    let scan = ctx.scan_settings();
    let power = beam.power;
    let setup = reference_setup(power, beam.wavelength, &quad)?;
    let scans = setup.scan_axes(scan.lateral_half_range, scan.axial_half_range, scan.step, ctx.exec)?;
    let reference = ReferenceFocus::dipole_numeric(power, beam.wavelength, &quad)?;
    let own = predict_coupling(&scans, &ThermalState::point(), power, beam.wavelength, &reference)?;
    rows.push(vec![
        "reference".into(),
        "point".into(),
        num(own.intensity_ratio),
        num(own.axis_factors[0]),
        num(own.axis_factors[1]),
        num(own.axis_factors[2]),
        num(own.g),
    ]);
    let header = ["case", "ion", "intensity_ratio", "factor_x", "factor_y", "factor_z", "G"];
    write_table(&ctx.path("coupling.csv"), &header, &rows)?;
    let summary: Vec<(String, String)> = std::iter::once(kv("waist_mm", num(beam.waist)))
        .chain(rows.iter().map(|r| kv(format!("{}_{}_G", r[0], r[1]), &r[6])))
        .collect();
    let pretty: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r[0].clone(), r[1].clone()];
            v.extend(r[2..].iter().map(|x| format!("{:.4}", x.parse::<f64>().unwrap_or(f64::NAN))));
            v
        })
        .collect();
    ctx.finish("coupling", &summary, &render_table(&header, &pretty))
}

fn cmd_fit(ctx: &Context, dataset: Option<&Path>) -> Result<()> {
    let path = dataset
        .map(Path::to_path_buf)
        .or_else(|| ctx.cfg.fit.dataset.clone())
        .ok_or_else(|| Error::Config("no dataset given (argument or fit.dataset)".into()))?;
    if !path.is_file() {
        return Err(Error::Config(format!("dataset file {} does not exist", path.display())));
    }
    let data = load_dataset(&path, ctx.cfg.fit.background_cps)?;
    let model = ctx.cfg.fit_model();
    let fit = fit_coupling(&data, &model)?;
    let summary = vec![
        kv("g", num(fit.g)),
        kv("std_error", num(fit.std_error)),
        kv("points_used", fit.points_used),
        kv("points_total", data.len()),
        kv("s_max", num(fit.s_max)),
        kv("chi2", num(fit.chi2)),
        kv("gate_iterations", fit.gate_iterations),
        kv("p_sat_watt", num(model.p_sat())),
        kv("eta_det", num(model.eta_det)),
    ];
    let table = render_table(
        &["quantity", "value"],
        &[
            vec!["G".into(), format!("{:.4} +/- {:.4}", fit.g, fit.std_error)],
            vec!["points used".into(), format!("{} of {}", fit.points_used, data.len())],
            vec!["S gate".into(), format!("{}", fit.s_max)],
            vec!["chi2".into(), format!("{:.3}", fit.chi2)],
        ],
    );
    ctx.finish("fit", &summary, &table)
}

fn cmd_ion(ctx: &Context) -> Result<()> {
    let trap = ctx.cfg.trap_config();
    let state = ThermalState::doppler(&trap, &ctx.cfg.cooling_config())?;
    let extent = state.extent_fwhm();
    let freqs = [ctx.cfg.trap.freq_x_khz, ctx.cfg.trap.freq_y_khz, ctx.cfg.trap.freq_z_khz];
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for axis in Axis::ALL {
        let i = axis.index();
        let a = axis.label();
        rows.push(vec![
            a.to_string(),
            num(freqs[i]),
            num(state.n_mean[i]),
            num(state.sigma0[i]),
            num(state.sigma[i]),
            num(extent[i]),
        ]);
        summary.push(kv(format!("n_mean_{a}"), num(state.n_mean[i])));
        summary.push(kv(format!("sigma_{a}_nm"), num(state.sigma[i])));
        summary.push(kv(format!("extent_fwhm_{a}_nm"), num(extent[i])));
    }
    let header = ["axis", "freq_khz", "n_mean", "sigma0_nm", "sigma_nm", "fwhm_nm"];
    write_table(&ctx.path("ion.csv"), &header, &rows)?;
    let pretty: Vec<Vec<String>> = Axis::ALL
        .iter()
        .map(|axis| {
            let i = axis.index();
            vec![
                axis.label().to_string(),
                format!("{:.1}", freqs[i]),
                format!("{:.2}", state.n_mean[i]),
                format!("{:.2}", state.sigma0[i]),
                format!("{:.2}", state.sigma[i]),
                format!("{:.1}", extent[i]),
            ]
        })
        .collect();
    ctx.finish("ion", &summary, &render_table(&header, &pretty))
}

fn cmd_detection(ctx: &Context) -> Result<()> {
    let chain = ctx.cfg.detection_chain();
    let product = detection_budget(&chain)?;
    let d = &ctx.cfg.detection;
    let pulsed = pulsed_eta(d.pulsed_detected_counts, d.pulsed_pulses, d.pulsed_background_cps, d.pulsed_gate_s)?;
    let mut rows: Vec<Vec<String>> = chain.stages.iter().map(|(n, e)| vec![n.clone(), num(*e)]).collect();
    rows.push(vec!["product".into(), num(product)]);
    write_table(&ctx.path("detection.csv"), &["stage", "efficiency"], &rows)?;
    let summary = vec![kv("chain_product", num(product)), kv("pulsed_eta", num(pulsed))];
    let mut pretty: Vec<Vec<String>> = chain
        .stages
        .iter()
        .map(|(n, e)| vec![n.clone(), format!("{e:.3}")])
        .collect();
    pretty.push(vec!["chain product".into(), format!("{:.4}", product)]);
    pretty.push(vec![
        format!("pulsed ({} / {})", d.pulsed_detected_counts, d.pulsed_pulses),
        format!("{:.4}", pulsed),
    ]);
    ctx.finish("detection", &summary, &render_table(&["stage", "efficiency"], &pretty))
}

fn cmd_synth(ctx: &Context) -> Result<()> {
    let s = &ctx.cfg.synth;
    let model = ctx.cfg.fit_model();
    let powers = powers_for_rates(s.g, &model, s.peak_rate_cps, s.points)?;
    let data = synthesize_dataset(s.g, &model, &powers, s.exposure_s, s.background_cps, ctx.cfg.seed)?;
    let path = ctx.path("synthetic_dataset.csv");
    save_dataset(&data, &path)?;
    let summary = vec![
        kv("g", num(s.g)),
        kv("points", s.points),
        kv("seed", ctx.cfg.seed),
        kv("peak_rate_cps", num(s.peak_rate_cps)),
        kv("background_cps", num(s.background_cps)),
        kv("dataset", "synthetic_dataset.csv"),
    ];
    let pretty: Vec<Vec<String>> = data
        .records
        .iter()
        .map(|r| vec![format!("{:.4e}", r.p_exc), format!("{}", r.counts), format!("{}", r.exposure)])
        .collect();
    ctx.finish("synth", &summary, &render_table(&["p_exc_watt", "counts", "exposure_s"], &pretty))
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Context::build(&cli.opts)?;
    match &cli.cmd {
        Command::Psf => cmd_psf(&ctx),
        Command::Omega => cmd_omega(&ctx),
        Command::Coupling => cmd_coupling(&ctx),
        Command::Fit { dataset } => cmd_fit(&ctx, dataset.as_deref()),
        Command::Ion => cmd_ion(&ctx),
        Command::Detection => cmd_detection(&ctx),
        Command::Synth => cmd_synth(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
