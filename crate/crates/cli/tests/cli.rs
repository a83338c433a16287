use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use hbnwave::gridio::{read_grid, GridData};
use hbnwave_cli::manifest::sha256_hex;
use hbnwave_cli::{validate, CliError, Manifest, Status};
use serde_json::{json, Value};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn species() -> PathBuf {
    repo().join("data/hbn_species.json").canonicalize().unwrap()
}

/// Small enough to run in seconds.
fn quick_config() -> Value {
    json!({
        "species_file": species(),
        "hole": "6A",
        "grid": { "extent": 15.9, "n_points": 32 },
        "propagation": { "velocity": 20.0, "z_quantum": 0.1, "snapshot_every": 100 },
        "farfield": { "n_points": 32, "extent": 0.04 },
        "sweep": { "holes": ["6A"], "velocities": [10.0, 20.0] },
        "slice": { "z": 2.0 }
    })
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn hbnwave(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hbnwave"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn run_mode(mode: &str, config: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    let mut args = vec!["--mode", mode, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    hbnwave(&args)
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn assert_checksums(dir: &Path, m: &Manifest) {
    for e in &m.outputs {
        let data = fs::read(dir.join(&e.path)).unwrap();
        assert_eq!(sha256_hex(&data), e.sha256, "{}", e.path);
        assert_eq!(data.len() as u64, e.bytes);
    }
}

#[test]
fn shipped_example_config_is_valid() {
    let d = validate(&repo().join("configs/example.json"), &[]);
    assert!(d.is_empty(), "{d:?}");
}

#[test]
fn non_positive_dt_is_one_diagnostic() {
    let d = validate(&repo().join("configs/example.json"), &["propagation.dt=0".into()]);
    assert_eq!(d.len(), 1, "{d:?}");
    assert_eq!(d[0].path, "propagation.dt");
}

#[test]
fn unknown_hole_lists_available_holes() {
    let d = validate(&repo().join("configs/example.json"), &["hole=pentagon".into()]);
    assert_eq!(d.len(), 1);
    for name in ["6A", "10A", "snowflake"] {
        assert!(d[0].message.contains(name), "{}", d[0]);
    }
}

#[test]
fn all_problems_are_reported_together() {
    let d = validate(
        &repo().join("configs/example.json"),
        &["grid.n_points=100".into(), "propagation.velocity=-1".into(), "slice.bogus=1".into(), "farfield.distance=0".into()],
    );
    assert_eq!(d.len(), 4, "{d:?}");
}

#[test]
fn slice_dump_writes_one_grid_and_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &quick_config());
    let out = tmp.path().join("out");
    let o = run_mode("slice-dump", &cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(listing(&out), ["manifest.json", "potential.bin", "potential.json"]);
    let m = Manifest::read(&out).unwrap();
    assert_eq!(m.status, Status::Ok);
    assert_checksums(&out, &m);
    let (meta, data) = read_grid(&out.join("potential.bin")).unwrap();
    assert_eq!((meta.n_points, meta.z, meta.units.as_str()), (32, 2.0, "eV"));
    let GridData::Real(u) = data else { panic!("real grid expected") };
    assert!(u.iter().all(|&v| v <= 0.0));
}

#[test]
fn propagate_outputs_and_reruns_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &quick_config());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = run_mode("propagate", &cfg, &a, &["--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        listing(&a),
        [
            "farfield.bin",
            "farfield.json",
            "farfield.pgm",
            "farfield_radial.csv",
            "final_field.bin",
            "final_field.json",
            "manifest.json",
            "structure.xyz",
            "transmission.csv",
        ]
    );
    let m = Manifest::read(&a).unwrap();
    assert_checksums(&a, &m);
    let csv = fs::read_to_string(a.join("transmission.csv")).unwrap();
    assert!(csv.starts_with("z_angstrom,relative_transmission\n"));
    let t: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(t.windows(2).all(|w| w[1] <= w[0]));
    let xyz = fs::read_to_string(a.join("structure.xyz")).unwrap();
    assert_eq!(xyz.lines().next().unwrap(), "276");

    let o = run_mode("propagate", &cfg, &b, &["--threads", "3"]);
    assert!(o.status.success());
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());

    // resolved config round trip
    let c = tmp.path().join("c");
    let o = run_mode("propagate", &a.join("manifest.json"), &c, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mc = Manifest::read(&c).unwrap();
    assert_eq!(mc.outputs, m.outputs);
    assert_eq!(mc.config, m.config);

    // far field from the saved final field matches the in-run pattern
    let d = tmp.path().join("d");
    let input = a.join("final_field.bin");
    let o = run_mode("farfield", &cfg, &d, &["--set", &format!("farfield.input={}", input.display())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let md = Manifest::read(&d).unwrap();
    let pick = |m: &Manifest| m.outputs.iter().find(|e| e.path == "farfield.bin").unwrap().sha256.clone();
    assert_eq!(pick(&md), pick(&m));
}

#[test]
fn sweep_csv_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &quick_config());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_mode("sweep", &cfg, &a, &["--threads", "1"]).status.success());
    assert!(run_mode("sweep", &cfg, &b, &["--threads", "2"]).status.success());
    let csv = fs::read_to_string(a.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "velocity_km_s,hole_name,relative_transmission,wall_time_s,status");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("10,6A,") && lines[1].ends_with(",,ok"));
    assert_eq!(csv, fs::read_to_string(b.join("sweep.csv")).unwrap());
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
    assert!(a.join("transmission_vs_z.csv").exists());
}

#[test]
fn config_error_leaves_only_a_failed_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = quick_config();
    v["propagation"]["dt"] = json!(-1.0);
    let cfg = write_config(tmp.path(), &v);
    let out = tmp.path().join("out");
    let o = run_mode("propagate", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("propagation.dt"));
    assert_eq!(listing(&out), ["manifest.json"]);
    let m = Manifest::read(&out).unwrap();
    assert_eq!(m.status, Status::Failed);
    assert!(m.outputs.is_empty());
    assert_eq!(m.error.unwrap().kind, "config");
}

#[test]
fn failed_rerun_removes_earlier_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &quick_config());
    let out = tmp.path().join("out");
    assert!(run_mode("slice-dump", &cfg, &out, &[]).status.success());
    let o = run_mode("slice-dump", &cfg, &out, &["--set", "hole=nope"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(listing(&out), ["manifest.json"]);
}

#[test]
fn check_flag_and_missing_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &quick_config());
    let cfg = cfg.to_str().unwrap();
    assert!(hbnwave(&["--mode", "propagate", "--config", cfg, "--check"]).status.success());
    let o = hbnwave(&["--mode", "propagate", "--config", cfg, "--check", "--set", "slice.z=\"up\""]);
    assert_eq!(o.status.code(), Some(2));
    let missing = tmp.path().join("missing.json");
    let out = tmp.path().join("out");
    assert_eq!(run_mode("propagate", &missing, &out, &[]).status.code(), Some(2));
}

#[test]
fn data_directory_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    fs::copy(species(), data.join("custom.json")).unwrap();
    let mut v = quick_config();
    v["species_file"] = json!("custom.json");
    let cfg = write_config(tmp.path(), &v);
    let out = tmp.path().join("out");
    let run = |env: Option<&Path>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_hbnwave"));
        c.args(["--mode", "slice-dump", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        if let Some(d) = env {
            c.env("HBNWAVE_DATA_DIR", d);
        }
        c.output().unwrap()
    };
    assert_eq!(run(None).status.code(), Some(2));
    assert!(run(Some(&data)).status.success());
}

#[test]
fn numerical_failures_exit_with_three() {
    let e = CliError::from(hbnwave::Error::Numerical { step: 3, z: 0.1, max_potential: 1.0 });
    assert_eq!(e.exit_code(), 3);
    assert_eq!(CliError::Config(Vec::new()).exit_code(), 2);
}
