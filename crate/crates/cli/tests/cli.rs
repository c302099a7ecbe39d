use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qjc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qjc")).args(args).env_remove("QJC_THREADS").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    assert!(!text.contains('\r'));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    (header, rows)
}

#[test]
fn presets_prints_table() {
    let o = qjc(&["presets"]);
    assert!(o.status.success());
    let out = String::from_utf8(o.stdout).unwrap();
    for name in ["rydberg-1", "rydberg-2", "circuit-qed-1", "circuit-qed-2", "circuit-qed-3", "zero"] {
        assert!(out.contains(name), "{out}");
    }
    assert!(out.lines().any(|l| l.starts_with("circuit-qed-2") && l.contains("840") && l.contains("106") && l.contains("215")));
}

#[test]
fn presets_json() {
    let o = qjc(&["presets", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 6);
    assert_eq!(v[5]["g_over_kappa"], "inf");
}

#[test]
fn free_run_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let o = qjc(&[
        "free", "--preset", "circuit-qed-2", "--nbar", "3", "--ntraj", "64", "--seed", "42", "--tend", "1", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = csv(&out);
    assert_eq!(header, ["t_over_tR", "sz_mc", "sz_stderr", "p_plus_mc", "sz_analytic", "env_hi", "env_lo"]);
    assert_eq!(rows.len(), 101);
    assert_eq!(rows[0][1], 0.5);
    assert!((rows[100][0] - 1.0).abs() < 1e-12);
    for r in &rows {
        assert!((r[1] - (r[3] - 0.5)).abs() < 1e-15);
        assert!(r[6] <= r[4] + 1e-12 && r[4] <= r[5] + 1e-12);
    }

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 42);
    assert_eq!(meta["config"]["n_traj"], 64);
    assert_eq!(meta["config"]["sample_dt"], 0.01);
    assert!(meta["n_max"].as_u64().unwrap() > 3);
    assert!(meta["truncation_leakage"].as_f64().unwrap() < 1e-6);
    assert!(meta["code_version"].is_string());
    assert!((meta["absolute"]["t_rabi_s"].as_f64().unwrap() - 1e-8).abs() < 1e-20);
    let text = fs::read_to_string(dir.path().join("run.meta.json")).unwrap();
    assert!(!text.contains("thread"));
}

#[test]
fn sidecar_replays_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.csv");
    let o = qjc(&["compare", "--preset", "circuit-qed-1", "--nbar", "2", "--ntraj", "40", "--seed", "5", "--tend", "0.5", "--out", first.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, _) = csv(&first);
    assert_eq!(header.last().unwrap(), "z");
    assert!(header.contains(&"sz_me".to_string()));

    let second = dir.path().join("b.csv");
    let o = qjc(&["--config", dir.path().join("a.meta.json").to_str().unwrap(), "--threads", "2", "compare", "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"command": "echo", "preset": "circuit-qed-3", "nbar": 5, "n_traj": 16, "seed": 1, "t_end": 2.0, "t_pi": 1.0, "format": "json"}"#).unwrap();
    let out = dir.path().join("echo.json");
    let o = qjc(&["--config", cfg.to_str().unwrap(), "echo", "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["config"]["seed"], 9);
    assert_eq!(v["config"]["protocol"], "echo");
    assert_eq!(v["metrics"]["revival_time"], 2.0);
}

#[test]
fn contour_grid_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    let o = qjc(&[
        "contour", "--preset", "circuit-qed-3", "--protocol", "echo", "--nbar-min", "5", "--nbar-max", "8", "--tend", "2", "--sample-dt", "0.5",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = csv(&out);
    assert_eq!(header, ["nbar", "t_over_tR", "contrast"]);
    assert_eq!(rows.len(), 4 * 5);
    assert!(rows.iter().all(|r| r[2] > 0.0 && r[2] <= 1.0));
    assert!(rows.iter().filter(|r| r[1] == 0.0).all(|r| r[2] == 1.0));
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("grid.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["contour_loci"]["revival_locus"][0], 2.0 * 5f64.sqrt());
}

#[test]
fn config_errors_exit_2_and_name_the_field() {
    let o = qjc(&["free", "--preset", "circuit-qed-9", "--nbar", "10", "--tend", "1"]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("`preset`") && e.contains("circuit-qed-2") && e.contains("rydberg-1"), "{e}");

    let o = qjc(&["echo", "--preset", "zero", "--nbar", "10", "--tend", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`t_pi`"));

    let o = qjc(&["free", "--preset", "zero", "--nbar", "10", "--tend", "4", "--tpi", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`t_pi`"));

    let o = qjc(&["contour", "--preset", "zero", "--nbar-min", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`nbar_min`"));

    let o = qjc(&["free", "--preset", "zero", "--nbar", "10", "--tend", "4", "--nmax", "8"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("`n_max`"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\n  \"command\": \"free\",\n  \"nbarr\": 3\n}\n").unwrap();
    let o = qjc(&["--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("nbarr") && e.contains("line 3"), "{e}");
}

#[test]
fn threads_env_fallback_is_accepted() {
    let o = Command::new(env!("CARGO_BIN_EXE_qjc")).args(["presets"]).env("QJC_THREADS", "2").output().unwrap();
    assert!(o.status.success());
    let o = Command::new(env!("CARGO_BIN_EXE_qjc")).args(["presets"]).env("QJC_THREADS", "two").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
