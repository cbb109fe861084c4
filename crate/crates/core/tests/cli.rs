use std::path::Path;
use std::process::{Command, Output};

fn pmfocus(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmfocus"))
        .args(args)
        .env("PMFOCUS_OUTPUT_DIR", out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "[beam]\nwaist_mm = 4.7584\n\
[quadrature]\nnodes_theta = 256\nnodes_phi = 128\n\
[scan]\nlateral_half_range_nm = 300.0\naxial_half_range_nm = 600.0\noutput_step_nm = 20.0\nplanes = false\n\
[wavefront]\nsynthetic = \"none\"\n";

#[test]
fn zero_size_grid_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[scan]\nlateral_half_range_nm = 0.0\n");
    let o = pmfocus(&["psf", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lateral_half_range_nm"));
}

#[test]
fn unknown_key_and_missing_file_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[geometry]\nfocal_length = 2.1\n");
    assert_eq!(pmfocus(&["ion", "--config", &cfg], tmp.path()).status.code(), Some(2));
    let o = pmfocus(&["ion", "--config", "/nonexistent/run.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = pmfocus(&["psf", "--wavefront", "/nonexistent/map.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn heating_regime_is_a_numerical_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[cooling]\ndetuning_mhz = 14.2\n");
    let o = pmfocus(&["ion", "--config", &cfg], tmp.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("heating regime"));
}

#[test]
fn malformed_dataset_row_is_reported_with_its_line() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d.csv");
    std::fs::write(&data, "p_exc_watt,counts,exposure_s\n1e-12,40,1\n2e-12,abc,1\n").unwrap();
    let o = pmfocus(&["fit", data.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":3:"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn fit_without_dataset_fails() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(pmfocus(&["fit"], tmp.path()).status.code(), Some(2));
}

#[test]
fn synth_then_fit_recovers_g() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(pmfocus(&["synth", "--seed", "3"], tmp.path()).status.success());
    let data = tmp.path().join("synthetic_dataset.csv");
    assert!(pmfocus(&["fit", data.to_str().unwrap()], tmp.path()).status.success());
    let summary = std::fs::read_to_string(tmp.path().join("fit_summary.csv")).unwrap();
    let g: f64 = summary
        .lines()
        .find_map(|l| l.strip_prefix("g,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!((g / 0.086 - 1.0).abs() < 0.05, "g = {g}");
}

#[test]
fn omega_curves() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(pmfocus(&["omega"], tmp.path()).status.success());
    let text = std::fs::read_to_string(tmp.path().join("omega.csv")).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let last = rows.last().unwrap();
    assert_eq!(last[0], 1.0);
    assert!((last[1] - 0.5).abs() < 1e-9);
    for col in 1..4 {
        assert!(rows.windows(2).all(|w| w[1][col] >= w[0][col]));
    }
    assert!(rows.iter().all(|r| (r[3] - 0.94).abs() <= 0.01));
}

#[test]
fn detection_and_ion_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let o = pmfocus(&["detection"], tmp.path());
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("0.0142"));
    let cfg = write_config(
        tmp.path(),
        "[[detection.stages]]\nname = \"unity\"\nefficiency = 1.0\n",
    );
    assert!(pmfocus(&["detection", "--config", &cfg], tmp.path()).status.success());
    let s = std::fs::read_to_string(tmp.path().join("detection_summary.csv")).unwrap();
    assert!(s.contains("chain_product,1.000000000e0"));
    assert!(pmfocus(&["ion"], tmp.path()).status.success());
    let s = std::fs::read_to_string(tmp.path().join("ion.csv")).unwrap();
    assert!(s.starts_with("axis,freq_khz,n_mean,sigma0_nm,sigma_nm,fwhm_nm\n"));
    assert_eq!(s.lines().count(), 4);
}

#[test]
fn half_solid_angle_flag_restricts_the_aperture() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("o");
    let o = Command::new(env!("CARGO_BIN_EXE_pmfocus"))
        .args(["psf", "--half-solid-angle", "--config", &cfg, "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("psf_ideal_hsa_point_x.csv").is_file());
    assert!(out.join("psf_ideal_hsa_thermal_z.csv").is_file());
    assert!(!out.join("psf_ideal_fsa_point_x.csv").exists());
    let table = std::fs::read_to_string(out.join("psf_table.txt")).unwrap();
    assert!(table.contains("ideal mirror with ion extent"));
    let scan = std::fs::read_to_string(out.join("psf_ideal_hsa_point_z.csv")).unwrap();
    assert!(scan.starts_with("pos_nm,intensity\n"));
    assert_eq!(scan.lines().count(), 1 + 61);
}

#[test]
fn coupling_reports_reference_against_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let o = pmfocus(&["coupling", "--half-solid-angle", "--config", &cfg], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = std::fs::read_to_string(tmp.path().join("coupling_summary.csv")).unwrap();
    let g = |key: &str| -> f64 {
        s.lines()
            .find_map(|l| l.strip_prefix(&format!("{key},")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((g("reference_point_G") - 1.0).abs() < 1e-3);
    assert!((g("ideal_hsa_point_G") - 0.48).abs() < 0.02);
    assert!(g("ideal_hsa_thermal_G") < g("ideal_hsa_point_G"));
}
