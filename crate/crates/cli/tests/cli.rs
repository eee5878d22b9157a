use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn device_config() -> PathBuf {
    repo().join("configs/device.toml")
}

fn patdet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patdet")).args(args).output().unwrap()
}

fn run_in(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    patdet(&args)
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Data rows of a table: non-comment lines split on tabs.
fn rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split('\t').map(|x| x.parse().unwrap()).collect())
        .collect()
}

const LINE: &str = r#"
[line]
length = "180um"
width = "720nm"
sheet_inductance = "620pH/sq"
capacitance_per_length = "41.7pF/m"
junction_capacitance = "2.6fF"
load_resistance = "50Ohm"
"#;

/// Junction on a coarse tabulation grid, so system-level commands stay quick.
const SYSTEM: &str = r#"
[junction]
gap = "203ueV"
dynes = "0.01ueV"
r_tunnel = "1.75MOhm"
temperature = "20mK"
fine_step = "2uV"
fine_max = "2mV"
coarse_step = "50uV"
coarse_max = "10mV"

[mode]
frequency = "5.525GHz"
coupling = 0.79
kappa_c = "75MHz"
kappa_i = "9.5MHz"
"#;

fn scenario(text: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, text).unwrap();
    (dir, path)
}

#[test]
fn device_mode_table() {
    let out = TempDir::new().unwrap();
    ok(&run_in("modes", &device_config(), out.path(), &[]));
    let table = rows(&out.path().join("modes.tsv"));
    assert_eq!(table.len(), 7);
    assert!((table[0][1] - 5.52).abs() < 0.05, "{}", table[0][1]);
    assert!((table[1][1] - 17.77).abs() < 0.36, "{}", table[1][1]);
}

#[test]
fn single_mode() {
    let (dir, cfg) = scenario(&LINE.replace("load_resistance = \"50Ohm\"", "load_resistance = \"50Ohm\"\nn_modes = 1"));
    ok(&run_in("modes", &cfg, dir.path(), &[]));
    assert_eq!(rows(&dir.path().join("modes.tsv")).len(), 1);
}

#[test]
fn capacitance_refit() {
    let text = format!("{LINE}refit_targets = [\"5.52GHz\", \"17.77GHz\"]\n");
    let (dir, cfg) = scenario(&text);
    ok(&run_in("modes", &cfg, dir.path(), &[]));
    let table = std::fs::read_to_string(dir.path().join("modes.tsv")).unwrap();
    let line = table.lines().find(|l| l.starts_with("# junction_capacitance_F")).unwrap();
    let c: f64 = line.split('\t').nth(1).unwrap().parse().unwrap();
    assert!(line.ends_with("refitted"));
    assert!((c - 2.6e-15).abs() < 0.2e-15, "C_j = {c:e}");
}

#[test]
fn unitless_quantity_is_a_config_error() {
    let (dir, cfg) = scenario(&LINE.replace("\"720nm\"", "720e-9"));
    let o = run_in("modes", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("width") && err.contains("unitless"), "{err}");
}

#[test]
fn wrong_unit_is_a_config_error() {
    let (dir, cfg) = scenario(&LINE.replace("\"620pH/sq\"", "\"620pF/m\""));
    let o = run_in("modes", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sheet inductance"), "{}", stderr(&o));
}

#[test]
fn missing_section_is_a_config_error() {
    let (dir, cfg) = scenario(SYSTEM);
    let o = run_in("modes", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("[line]"));
}

#[test]
fn physically_invalid_value_is_a_config_error() {
    let (dir, cfg) = scenario(&LINE.replace("\"180um\"", "\"-180um\""));
    let o = run_in("modes", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("length"));
}

#[test]
fn truncation_overflow_is_a_numerical_error() {
    let text = format!("{SYSTEM}truncation_ceiling = 10\n\n[steady]\nstep = 1\ninput_power = \"-105dBm\"\n");
    let (dir, cfg) = scenario(&text);
    let o = run_in("steady", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("truncation"), "{}", stderr(&o));
}

fn steady_point(power_dbm: f64) -> (f64, f64) {
    let text = format!("{SYSTEM}\n[steady]\nstep = 1\ninput_power = \"{power_dbm}dBm\"\n");
    let (dir, cfg) = scenario(&text);
    ok(&run_in("steady", &cfg, dir.path(), &[]));
    let body = std::fs::read_to_string(dir.path().join("steady.tsv")).unwrap();
    let get = |key: &str| -> f64 {
        let l = body.lines().find(|l| l.starts_with(&format!("{key}\t"))).unwrap();
        l.split('\t').nth(1).unwrap().parse().unwrap()
    };
    (get("photon_flux_per_s"), get("n_ph"))
}

#[test]
fn steady_low_power_matches_linear_response() {
    // subgap emission leaves a residual population with the drive off
    let (_, residual) = steady_point(-250.0);
    assert!(residual > 0.0);
    let (flux, n) = steady_point(-150.0);
    let tau = 2.0 * std::f64::consts::PI;
    // n = 4 φ κ_c / (κ_c + κ_i + κ_j)² with κ_j/2π ≈ 63 MHz
    let expected = 4.0 * flux * tau * 75e6 / (tau * (75e6 + 9.5e6 + 63.0e6)).powi(2);
    assert!(((n - residual) / expected - 1.0).abs() < 0.05, "{n:e} - {residual:e} vs {expected:e}");
}

#[test]
fn empty_power_grid_gives_empty_tables() {
    let text = format!(
        "{SYSTEM}\n[sweep]\nattenuation = \"107dB\"\npower_from = \"-20dBm\"\npower_to = \"-30dBm\"\npower_step = \"1dB\"\n"
    );
    let (dir, cfg) = scenario(&text);
    ok(&run_in("sweep", &cfg, dir.path(), &[]));
    assert!(rows(&dir.path().join("sweep.tsv")).is_empty());
    let data = std::fs::read_to_string(dir.path().join("sweep_data.tsv")).unwrap();
    assert!(data.lines().all(|l| l.starts_with('#')));
}

fn noisy_sweep_scenario() -> (TempDir, PathBuf) {
    scenario(&format!(
        "seed = 5\n{SYSTEM}\n[sweep]\nattenuation = \"107dB\"\nsteps = [1, 2]\npower_from = \"-24dBm\"\npower_to = \"-20dBm\"\npower_step = \"2dB\"\nnoise_relative = 0.01\nnoise_floor = \"50fA\"\n"
    ))
}

#[test]
fn reruns_are_byte_identical() {
    let (dir, cfg) = noisy_sweep_scenario();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&run_in("sweep", &cfg, &a, &[]));
    ok(&run_in("sweep", &cfg, &b, &["--threads", "2"]));
    for name in ["sweep.tsv", "sweep_data.tsv", "resolved_config.toml"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
}

fn hash_line(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .find(|l| l.starts_with("# config_sha256 "))
        .unwrap()
        .to_string()
}

#[test]
fn seed_flag_changes_noise_and_hash() {
    let (dir, cfg) = noisy_sweep_scenario();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&run_in("sweep", &cfg, &a, &[]));
    ok(&run_in("sweep", &cfg, &b, &["--seed", "6"]));
    assert_ne!(hash_line(&a.join("sweep.tsv")), hash_line(&b.join("sweep.tsv")));
    // the noiseless table differs only in its header
    let body = |p: PathBuf| rows(&p);
    assert_eq!(body(a.join("sweep.tsv")), body(b.join("sweep.tsv")));
    assert_ne!(
        std::fs::read_to_string(a.join("sweep_data.tsv")).unwrap().lines().last(),
        std::fs::read_to_string(b.join("sweep_data.tsv")).unwrap().lines().last()
    );
}

#[test]
fn every_file_carries_the_config_hash() {
    let out = TempDir::new().unwrap();
    ok(&run_in("thermal", &device_config(), out.path(), &[]));
    ok(&run_in("modes", &device_config(), out.path(), &[]));
    let h = hash_line(&out.path().join("thermal.tsv"));
    assert_eq!(h, hash_line(&out.path().join("modes.tsv")));
    assert_eq!(h.len(), "# config_sha256 ".len() + 64);
}

#[test]
fn spectroscopy_dip_below_the_steps() {
    let text = format!(
        "{SYSTEM}\n[spectroscopy]\nbias_from = \"340uV\"\nbias_to = \"340uV\"\nbias_step = \"1uV\"\nspan = \"100MHz\"\nfrequency_step = \"1MHz\"\n"
    );
    let (dir, cfg) = scenario(&text);
    ok(&run_in("spectroscopy", &cfg, dir.path(), &[]));
    let table = rows(&dir.path().join("spectroscopy.tsv"));
    assert_eq!(table.len(), 201);
    let dip = table.iter().map(|r| r[4]).fold(f64::INFINITY, f64::min);
    assert!((dip + 2.0).abs() < 0.5, "dip {dip} dB");
    assert!(table.iter().all(|r| r[2] < 1.0), "kappa_j should vanish at 340 uV");
}

#[test]
fn thermal_curve_saturates_at_the_dark_current() {
    let out = TempDir::new().unwrap();
    ok(&run_in("thermal", &device_config(), out.path(), &[]));
    let table = rows(&out.path().join("thermal.tsv"));
    assert!(table.windows(2).all(|w| w[1][2] >= w[0][2]));
    let cold = table.iter().find(|r| r[0] < 0.0125).unwrap();
    assert!((cold[2] / 55e-15 - 1.0).abs() < 1e-3);
    assert!(table.last().unwrap()[2] > 10.0 * 55e-15);
}

#[test]
fn iv_table_shape() {
    let text = format!("{SYSTEM}\n[iv]\nfrom = \"0V\"\nto = \"800uV\"\nstep = \"100uV\"\n");
    let (dir, cfg) = scenario(&text);
    ok(&run_in("iv", &cfg, dir.path(), &[]));
    let table = rows(&dir.path().join("iv.tsv"));
    assert_eq!(table.len(), 9);
    assert!(table[2][1].abs() < 1e-13, "subgap {:e}", table[2][1]);
    let ohmic = table[8][0] / 1.75e6;
    assert!(table[8][1] > 0.9 * ohmic && table[8][1] < 1.3 * ohmic);
}

#[test]
fn bundled_dataset_regenerates_exactly() {
    let out = TempDir::new().unwrap();
    ok(&run_in("sweep", &device_config(), out.path(), &[]));
    let fresh = std::fs::read(out.path().join("sweep_data.tsv")).unwrap();
    let bundled = std::fs::read(repo().join("data/synthetic_sweeps.tsv")).unwrap();
    assert!(fresh == bundled, "data/synthetic_sweeps.tsv is out of date");
    let comp = rows(&out.path().join("compression.tsv"));
    assert!((comp[0][1] + 119.0).abs() < 1.0, "1 dB point {}", comp[0][1]);
}

#[test]
fn calibrate_bundled_dataset() {
    let out = TempDir::new().unwrap();
    ok(&run_in("calibrate", &device_config(), out.path(), &[]));
    let text = std::fs::read_to_string(out.path().join("calibration.tsv")).unwrap();
    let a: f64 = text
        .lines()
        .find(|l| l.starts_with("attenuation_dB\t"))
        .unwrap()
        .split('\t')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((a - 107.0).abs() < 0.3, "A = {a}");
}

#[test]
fn missing_data_file_is_an_input_error() {
    let text = format!("{SYSTEM}\n[calibrate]\ndata = \"nowhere.tsv\"\n");
    let (dir, cfg) = scenario(&text);
    let o = run_in("calibrate", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.tsv"));
}

#[test]
fn unknown_flag_is_rejected() {
    assert_eq!(patdet(&["modes", "--bogus"]).status.code(), Some(2));
}
