//! End-to-end tests of the `nlw` binary: command plumbing, artifact layout,
//! exit codes, and determinism of reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nlw() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlw"))
}

fn run(args: &[&str]) -> Output {
    nlw().args(args).output().expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json_of(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

struct TempDir(PathBuf);

impl TempDir {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("nlw-cli-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        TempDir(dir)
    }

    fn path(&self) -> &Path {
        &self.0
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.0);
    }
}

#[test]
fn exponents_prints_table() {
    let out = run(&["exponents", "--p", "3"]);
    assert_ok(&out);
    let v = json_of(&out);
    assert_eq!(v["alpha"].as_f64().unwrap(), 1.0);
    assert_eq!(v["beta"].as_f64().unwrap(), 3.0);
    assert!((v["c"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(v["resonant"].as_bool().unwrap(), true);
}

#[test]
fn invalid_p_is_config_error() {
    let out = run(&["exponents", "--p", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ode_round_trip_and_determinism() {
    let tmp = TempDir::new("ode");
    let traj = tmp.path().join("traj.csv");
    let traj_s = traj.to_str().unwrap();
    assert_ok(&run(&["ode-run", "--p", "3", "--psi", "0.1", "--out", traj_s]));
    let out = run(&["ode-extract", "--in", traj_s]);
    assert_ok(&out);
    let v = json_of(&out);
    let psi = v["psi"].as_f64().unwrap();
    assert!((psi - 0.1).abs() < 1e-6, "psi {psi}");
    assert!(v["t0"].as_f64().unwrap().abs() < 1e-8);
    assert!(v["spread"].as_f64().unwrap() < 1e-7);

    // identical invocation reproduces the file byte for byte
    let first = fs::read(&traj).unwrap();
    assert_ok(&run(&["ode-run", "--p", "3", "--psi", "0.1", "--out", traj_s]));
    assert_eq!(first, fs::read(&traj).unwrap());
}

#[test]
fn ode_extract_bad_window_is_numerical_error() {
    let tmp = TempDir::new("odewin");
    let traj = tmp.path().join("traj.csv");
    let traj_s = traj.to_str().unwrap();
    assert_ok(&run(&["ode-run", "--p", "3", "--psi", "0.1", "--out", traj_s]));
    // window far below the sampled range: too few gauge-law samples
    let out = run(&["ode-extract", "--in", traj_s, "--tau-lo", "1e-9", "--tau-hi", "1e-8"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn ansatz_build_reports_residual_slope() {
    let tmp = TempDir::new("ansatz");
    let series = tmp.path().join("series.json");
    let out = run(&[
        "ansatz-build",
        "--p",
        "4",
        "--f-spec",
        "0.05*sin",
        "--psi-spec",
        "0.1*cos",
        "--order",
        "6",
        "--n",
        "64",
        // measure the decay close to the surface, where the leading residual
        // power dominates the higher corrections
        "--slope-lo",
        "1e-5",
        "--slope-hi",
        "1e-4",
        "--out",
        series.to_str().unwrap(),
    ]);
    assert_ok(&out);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&series).unwrap()).unwrap();
    let slope = v["residual_slope"].as_f64().unwrap();
    assert!((slope - (6.0 - 2.5)).abs() < 0.2, "slope {slope}");
}

#[test]
fn scattering_pipeline_round_trip() {
    let tmp = TempDir::new("scat");
    let cfg_path = tmp.path().join("run.toml");
    fs::write(
        &cfg_path,
        r#"
mode = "scattering"
p = 4.0
n = 64
chart = "tilted"
f = "0.05*sin"
psi = "0.1*cos"
dt_frac = 1e-3
back_slices = 60
refine_iterations = 4
"#,
    )
    .unwrap();
    let run_dir = tmp.path().join("run");
    let run_s = run_dir.to_str().unwrap();
    assert_ok(&run(&["pde-evolve", "--config", cfg_path.to_str().unwrap(), "--out", run_s]));
    assert_ok(&run(&["extract-surface", "--run", run_s]));
    assert_ok(&run(&["extract-scattering", "--run", run_s]));

    let sc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("scattering.json")).unwrap())
            .unwrap();
    assert!(sc["f_sup_error"].as_f64().unwrap() < 1e-4);
    assert!(sc["psi_rel_error"].as_f64().unwrap() < 0.02);

    // energy diagnostics on the same (tilted) run
    let out = run(&["energy-report", "--run", run_s, "--mode", "backward"]);
    assert_ok(&out);
    let eb: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("energy_backward.json")).unwrap())
            .unwrap();
    assert!(eb["coercivity_lo"].as_f64().unwrap() >= 0.25);
    assert!(eb["coercivity_hi"].as_f64().unwrap() <= 4.0);

    let out = run(&["plots", "--run", run_s]);
    assert_ok(&out);
    assert!(run_dir.join("plots/profiles.tsv").exists());
    assert!(run_dir.join("plots/surface.tsv").exists());
    assert!(run_dir.join("plots/energy_backward.tsv").exists());

    // the manifest embeds the config; rerunning it reproduces the slices
    let run2 = tmp.path().join("run2");
    assert_ok(&run(&[
        "pde-evolve",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        run2.to_str().unwrap(),
    ]));
    let a = fs::read(run_dir.join("slice_00000.csv")).unwrap();
    let b = fs::read(run2.join("slice_00000.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn stability_sweep_linearity() {
    let tmp = TempDir::new("sweep");
    let cfg_path = tmp.path().join("stab.toml");
    fs::write(
        &cfg_path,
        r#"
mode = "stability"
p = 3.0
n = 64
eps = 1e-2
g0 = "cos"
g1 = "0"
dt_frac = 1e-2
fit_window = [0.05, 0.2]
refine_iterations = 4
"#,
    )
    .unwrap();
    let out_dir = tmp.path().join("sweep");
    assert_ok(&run(&[
        "stability-sweep",
        "--config",
        cfg_path.to_str().unwrap(),
        "--eps-list",
        "0.005,0.01",
        "--out",
        out_dir.to_str().unwrap(),
    ]));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("sweep.json")).unwrap()).unwrap();
    let runs = v["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    let r0 = runs[0]["f_ratio"].as_f64().unwrap();
    let r1 = runs[1]["f_ratio"].as_f64().unwrap();
    assert!((r0 / r1 - 1.0).abs() < 0.2, "f ratios {r0} vs {r1}");
    let p0 = runs[0]["psi_ratio"].as_f64().unwrap();
    let p1 = runs[1]["psi_ratio"].as_f64().unwrap();
    assert!((p0 / p1 - 1.0).abs() < 0.2, "psi ratios {p0} vs {p1}");
    assert!(v["differences"][0]["ratio"].as_f64().unwrap().is_finite());

    // the sweep output feeds the log-log ε plot
    assert_ok(&run(&["plots", "--run", out_dir.to_str().unwrap()]));
    assert!(out_dir.join("plots/stability_sweep.tsv").exists());
}

#[test]
fn forward_energy_on_stability_run() {
    let tmp = TempDir::new("fwd");
    let cfg_path = tmp.path().join("stab.toml");
    fs::write(
        &cfg_path,
        r#"
mode = "stability"
p = 3.0
n = 32
eps = 5e-3
g0 = "cos"
g1 = "0"
dt_frac = 2e-2
"#,
    )
    .unwrap();
    let run_dir = tmp.path().join("run");
    let run_s = run_dir.to_str().unwrap();
    assert_ok(&run(&["pde-evolve", "--config", cfg_path.to_str().unwrap(), "--out", run_s]));
    let out = run(&["energy-report", "--run", run_s, "--mode", "forward"]);
    assert_ok(&out);
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("energy_forward.json")).unwrap())
            .unwrap();
    assert!(v["relative_residual"].as_f64().unwrap() < 0.05);
}

#[test]
fn bad_config_is_config_error() {
    let tmp = TempDir::new("badcfg");
    let cfg_path = tmp.path().join("bad.toml");
    fs::write(&cfg_path, "mode = \"scattering\"\np = 4.0\n# missing f and psi\n").unwrap();
    let run_dir = tmp.path().join("run");
    let out = run(&[
        "pde-evolve",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(&cfg_path, "this is not toml [\n").unwrap();
    let out = run(&[
        "pde-evolve",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plots_on_empty_dir_is_config_error() {
    let tmp = TempDir::new("noplots");
    let out = run(&["plots", "--run", tmp.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
