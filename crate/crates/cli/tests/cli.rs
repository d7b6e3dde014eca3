use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::Command;

struct Run {
    code: i32,
    out: PathBuf,
    stderr: String,
}

fn rdlab(sub: &str, config: Option<&str>, env: &[(&str, &str)], dir: &Path) -> Run {
    std::fs::create_dir_all(dir).unwrap();
    let out = dir.join(format!("out-{sub}"));
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rdlab"));
    cmd.arg(sub).arg("--out").arg(&out).env_remove("RDLAB_THREADS");
    if let Some(text) = config {
        let path = dir.join(format!("{sub}.json"));
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    let o = cmd.output().unwrap();
    Run {
        code: o.status.code().unwrap_or(-1),
        out,
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
    }
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: PathBuf) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|x| x.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn significant_digits(field: &str) -> usize {
    let mantissa = field.split(['e', 'E']).next().unwrap();
    mantissa.chars().filter(|c| c.is_ascii_digit()).count()
}

const REFERENCE_MODEL: &str = r#"{"model": {"preset": "paper"}}"#;
const MAY_LEONARD_FLOQUET: &str = r#"{
    "model": {"preset": "may-leonard"},
    "initial": {"point": [0.3, 0.4, 0.3]},
    "solver": {"max_time": 400},
    "floquet": {"length": 1, "k_max": 2, "scalar_d": 0.01}
}"#;

#[test]
fn equilibria_of_reference_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let r = rdlab("equilibria", Some(REFERENCE_MODEL), &[], tmp.path());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, rows) = csv_rows(r.out.join("equilibria.csv"));
    assert_eq!(header[0], "label");
    assert_eq!(rows.len(), 8);
    let p1 = rows.iter().find(|r| r[0] == "P_1").unwrap();
    assert_eq!(p1[1], "feasible");
    for f in &p1[2..5] {
        assert!(significant_digits(f) >= 12, "{f}");
    }
    let summary = json(r.out.join("equilibria.json"));
    assert_eq!(summary["condition_report"]["case"], "periodic-attractor-candidate");
}

#[test]
fn two_species_interior_point() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"inline": {"n": 2, "a": [[1, 0.5], [0.5, 1]], "d": [1, 1]}}}"#;
    let r = rdlab("equilibria", Some(cfg), &[], tmp.path());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (_, rows) = csv_rows(r.out.join("equilibria.csv"));
    let p1 = rows.iter().find(|r| r[0] == "P_1").unwrap();
    for f in &p1[2..4] {
        assert!((f.parse::<f64>().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }
    assert_eq!(json(r.out.join("equilibria.json"))["two_species_case"], "coexistence");
}

#[test]
fn singular_matrices_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let two = r#"{"model": {"inline": {"n": 2, "a": [[1, 1], [1, 1]], "d": [1, 1]}}}"#;
    assert_eq!(rdlab("equilibria", Some(two), &[], tmp.path()).code, 3);
    let three = r#"{"model": {"inline": {"n": 3, "a": [[1, 2, 3], [2, 4, 6], [1, 1, 1]], "d": [1, 1, 1]}}}"#;
    let r = rdlab("equilibria", Some(three), &[], tmp.path());
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert_eq!(json(r.out.join("manifest.json"))["status"], "failed");
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path();
    assert_eq!(
        rdlab("equilibria", Some(r#"{"modle": {"preset": "paper"}}"#), &[], p).code,
        2
    );
    assert_eq!(rdlab("equilibria", Some("{not json"), &[], p).code, 2);
    assert_eq!(rdlab("equilibria", None, &[], p).code, 2);
    assert_eq!(
        rdlab("equilibria", Some(r#"{"model": {"preset": "nope"}}"#), &[], p).code,
        2
    );
    assert_eq!(
        rdlab("timemap", Some(r#"{"timemap": {"d": 0.1, "mu_min": 0.0}}"#), &[], p).code,
        2
    );
    assert_eq!(
        rdlab("timemap", Some(r#"{"timemap": {"d": 0.1, "mu_max": 1.5}}"#), &[], p).code,
        2
    );
    assert_eq!(
        rdlab("chs", Some(REFERENCE_MODEL), &[("RDLAB_THREADS", "zero")], p).code,
        2
    );
    let bad_model = r#"{"model": {"inline": {"n": 2, "a": [[1, -1], [1, 1]], "d": [1, 1]}}}"#;
    assert_eq!(rdlab("equilibria", Some(bad_model), &[], p).code, 2);
}

#[test]
fn timemap_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let r = rdlab(
        "timemap",
        Some(r#"{"timemap": {"d": 1.0, "points": 20}}"#),
        &[],
        tmp.path(),
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let meta = json(r.out.join("timemap.json"));
    assert!((meta["kiss_size"].as_f64().unwrap() - std::f64::consts::PI).abs() < 1e-12);

    let r = rdlab(
        "timemap",
        Some(r#"{"timemap": {"d": 0.1, "length_target": 2.0}}"#),
        &[],
        tmp.path(),
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    let meta = json(r.out.join("timemap.json"));
    assert_eq!(meta["monotone"], true);
    let mu = meta["mu_star"].as_f64().unwrap();
    let peak = meta["profile_max"].as_f64().unwrap();
    assert!(mu > 0.0 && mu < 1.0);
    assert!((mu - peak).abs() < 1e-4, "{mu} vs {peak}");
    let (_, rows) = csv_rows(r.out.join("timemap.csv"));
    let ls: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(ls.windows(2).all(|w| w[1] > w[0]));
    assert!(r.out.join("timemap.svg").exists());
}

#[test]
fn shooting_outcomes() {
    let tmp = tempfile::tempdir().unwrap();
    let r = rdlab(
        "shoot",
        Some(r#"{"shoot": {"c": 1.5, "d": 0.1, "radius": 10}}"#),
        &[],
        tmp.path(),
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(json(r.out.join("shoot.json"))["outcome"], "blow-up");
    let r = rdlab(
        "shoot",
        Some(r#"{"shoot": {"c": 0.5, "d": 0.1, "radius": 10}}"#),
        &[],
        tmp.path(),
    );
    let meta = json(r.out.join("shoot.json"));
    assert_eq!(meta["outcome"], "hit-zero");
    assert!(meta["first_zero_r"].as_f64().unwrap() > meta["half_kiss_size"].as_f64().unwrap());
    let (header, _) = csv_rows(r.out.join("shoot.csv"));
    assert_eq!(header, ["r", "u", "uprime"]);
}

#[test]
fn floquet_with_modes_and_scalar_check() {
    let tmp = tempfile::tempdir().unwrap();
    let r = rdlab("floquet", Some(MAY_LEONARD_FLOQUET), &[], tmp.path());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let meta = json(r.out.join("floquet.json"));
    let base = meta["base_multipliers"].as_array().unwrap();
    let near_one = base
        .iter()
        .map(|z| ((z["re"].as_f64().unwrap() - 1.0).powi(2) + z["im"].as_f64().unwrap().powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min);
    assert!(near_one < 1e-3);
    assert_eq!(meta["modes"].as_array().unwrap().len(), 2);
    for m in meta["scalar_d_check"]["modes"].as_array().unwrap() {
        assert!(m["mismatch"].as_f64().unwrap() < 1e-6);
    }
    let (_, rows) = csv_rows(r.out.join("multipliers.csv"));
    assert_eq!(rows.len(), 3);
}

#[test]
fn floquet_without_modes_uses_base_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = MAY_LEONARD_FLOQUET.replace(
        r#""length": 1, "k_max": 2, "scalar_d": 0.01"#,
        r#""length": 1, "k_max": 0"#,
    );
    let r = rdlab("floquet", Some(&cfg), &[], tmp.path());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let meta = json(r.out.join("floquet.json"));
    assert!(meta["modes"].as_array().unwrap().is_empty());
    assert!(meta["verdict"].is_string());
}

#[test]
fn floquet_without_cycle_exits_5() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"inline": {"n": 2, "a": [[1, 0.5], [0.5, 1]], "d": [1, 1]}},
                  "initial": {"point": [0.2, 0.3]}, "solver": {"max_time": 200}}"#;
    let r = rdlab("floquet", Some(cfg), &[], tmp.path());
    assert_eq!(r.code, 5, "{}", r.stderr);
    let meta = json(r.out.join("floquet.json"));
    assert_eq!(meta["cycle"]["outcome"]["label"], "P_1");
}

#[test]
fn ode_output_is_deterministic_and_checksummed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"preset": "may-leonard"}, "initial": {"point": [0.3, 0.4, 0.3]},
                  "solver": {"t_end": 40, "max_time": 300}}"#;
    let a = rdlab("ode", Some(cfg), &[("RDLAB_THREADS", "1")], &tmp.path().join("a"));
    let b = rdlab("ode", Some(cfg), &[("RDLAB_THREADS", "3")], &tmp.path().join("b"));
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(b.code, 0, "{}", b.stderr);
    let manifest = json(a.out.join("manifest.json"));
    let files = manifest["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f["path"] == "trajectory.csv"));
    for f in files {
        let name = f["path"].as_str().unwrap();
        let bytes = std::fs::read(a.out.join(name)).unwrap();
        assert_eq!(f["sha256"], hex::encode(Sha256::digest(&bytes)), "{name}");
        assert_eq!(bytes, std::fs::read(b.out.join(name)).unwrap(), "{name}");
    }
    assert_eq!(json(a.out.join("ode.json"))["cycle"]["periodic"], true);
}

#[test]
fn pde_constant_equilibrium_stays_constant() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"preset": "paper"},
                  "domain": {"geometry": {"kind": "interval", "length": 1}, "nodes": 32},
                  "initial": {"equilibrium": "P_1"},
                  "solver": {"dt": 0.01, "t_end": 5}}"#;
    let r = rdlab("pde", Some(cfg), &[], tmp.path());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let (header, rows) = csv_rows(r.out.join("probes.csv"));
    assert_eq!(header.len(), 1 + 9);
    let first = &rows[0];
    for row in &rows {
        for (x, y) in row[1..].iter().zip(&first[1..]) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() < 1e-9);
        }
    }
    for name in [
        "averages.csv",
        "flatness.csv",
        "final_field.csv",
        "omega.json",
        "probes_u2.svg",
    ] {
        assert!(r.out.join(name).exists(), "{name}");
    }
}

#[test]
fn pde_large_diffusion_is_flat_periodic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"model": {"preset": "may-leonard"},
                  "domain": {"geometry": {"kind": "interval", "length": 1}, "nodes": 64},
                  "initial": {"polynomial": [[0.3, 0.05], [0.4, -0.05], [0.3]]},
                  "solver": {"dt": 0.01, "t_end": 200}}"#;
    let r = rdlab("pde", Some(cfg), &[], tmp.path());
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(json(r.out.join("omega.json"))["kind"]["kind"], "flat-periodic");
}

#[test]
fn chs_reports_origin_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let r = rdlab("chs", Some(REFERENCE_MODEL), &[], tmp.path());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let report = &json(r.out.join("chs.json"))["report"];
    let want = 3f64.sqrt() / std::f64::consts::PI.powi(2);
    assert!((report["origin_threshold_d"].as_f64().unwrap() - want).abs() < 1e-12);
    assert_eq!(report["flat_guarantee"], false);
}

#[test]
fn reproduce_paper_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let r = rdlab("reproduce-paper", None, &[], tmp.path());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let manifest = json(r.out.join("manifest.json"));
    let u0: Vec<f64> = serde_json::from_value(manifest["ode_initial_point"].clone()).unwrap();
    for (got, want) in u0.iter().zip([0.1, 0.0095238, 0.0333333]) {
        assert!((got - want).abs() < 1e-5);
    }
    let want = 3f64.sqrt() / std::f64::consts::PI.powi(2);
    assert!((manifest["threshold_d_closed_form"].as_f64().unwrap() - want).abs() < 1e-12);
    for sep in manifest["v_probe_separation"].as_array().unwrap() {
        assert!(sep["max_abs_difference"].as_f64().unwrap() > 1e-2);
    }
    let files: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    for name in [
        "condition.json",
        "chs.json",
        "ode_trajectory.csv",
        "probes.csv",
        "ode_vs_average.csv",
        "summary.json",
    ] {
        assert!(files.contains(&name), "{name}");
    }
    for f in manifest["files"].as_array().unwrap() {
        let bytes = std::fs::read(r.out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"], hex::encode(Sha256::digest(&bytes)));
    }
}
