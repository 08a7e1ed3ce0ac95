use std::process::{Command, Output};

fn tospdc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tospdc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Data rows of the first dataset: skips the `# name` marker and header.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn phasematch_from_preset_finds_known_radius() {
    let o = tospdc(&["phasematch"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: f64 = rows(&stdout(&o))[0][1].parse().unwrap();
    assert!((r - 0.3951848).abs() < 1e-6, "r = {r}");
}

#[test]
fn phasematch_with_explicit_wavelength() {
    let o = tospdc(&["phasematch", "--lambda-um", "1.596", "--bracket-um", "0.3", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: f64 = rows(&stdout(&o))[0][1].parse().unwrap();
    assert!((r - 0.395).abs() < 1e-3);
}

#[test]
fn unknown_preset_is_bad_input() {
    let o = tospdc(&["--preset", "nope", "report"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error"));
}

#[test]
fn malformed_arguments_are_bad_input() {
    let o = tospdc(&["flux", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn closed_form_refuses_degenerate_design() {
    let o = tospdc(&["flux", "analytic"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("hint"));
}

#[test]
fn truncated_window_is_a_numerical_failure() {
    let o = tospdc(&["jsa", "marginals", "--points", "9", "--extent-thz", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("--allow-truncation"));
    let o = tospdc(&[
        "--allow-truncation",
        "jsa",
        "marginals",
        "--points",
        "9",
        "--extent-thz",
        "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn output_is_deterministic() {
    let args = ["maps", "deg-curve", "--points", "4"];
    let a = tospdc(&args);
    let b = tospdc(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn degenerate_curve_spans_expected_wavelengths() {
    let o = tospdc(&["maps", "deg-curve", "--points", "2"]);
    let r = rows(&stdout(&o));
    let lo: f64 = r[0][1].parse().unwrap();
    let hi: f64 = r[1][1].parse().unwrap();
    assert!((lo - 1.24).abs() < 0.02, "{lo}");
    assert!((hi - 1.93).abs() < 0.02, "{hi}");
}

#[test]
fn gamma_map_marks_invalid_cells() {
    let o = tospdc(&["maps", "gamma-map", "--points", "5", "--delta-max-thz", "1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let map: String = text.split("# gamma_map_contour.csv").next().unwrap().into();
    let cells = rows(&map);
    assert_eq!(cells.len(), 25);
    assert!(cells.iter().any(|c| c[2] == "NA"));
    assert!(cells.iter().any(|c| c[2] != "NA"));
}

#[test]
fn out_directory_receives_one_file_per_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let o = tospdc(&["--out", d, "jsa", "slices", "--points", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["slice_nu_plus_m15.0.csv", "slice_nu_plus_p0.0.csv", "slice_nu_plus_p15.0.csv"]
    );
}

#[test]
fn design_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.toml");
    std::fs::write(
        &path,
        "fiber_length_cm = 1\n[fiber]\nradius_um = 0.3951848\n[pump]\nlambda_um = 0.532\nsigma_GHz = 23.5\navg_power_mW = 200\n",
    )
    .unwrap();
    let o = tospdc(&["--design", path.to_str().unwrap(), "flux", "cw"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let n: f64 = rows(&stdout(&o))[0][1].parse().unwrap();
    assert!(n > 0.0);
}

#[test]
fn report_lists_design_quantities() {
    let o = tospdc(&["--preset", "nondegenerate", "report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for key in ["gamma", "A_eff", "tau_r,s,i", "L0", "Phi", "N analytic"] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn power_sweep_is_linear_in_cw() {
    let o = tospdc(&["flux", "cw", "--sweep", "power", "--from", "50", "--to", "100", "--points", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = rows(&stdout(&o));
    let a: f64 = r[0][1].parse().unwrap();
    let b: f64 = r[1][1].parse().unwrap();
    assert!((b / a - 2.0).abs() < 1e-9);
}
