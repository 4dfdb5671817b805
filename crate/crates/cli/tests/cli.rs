use std::path::Path;
use std::process::{Command, Output};

fn orbindex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orbindex")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn scenario_json_is_byte_identical_across_runs() {
    let a = orbindex(&["scenario", "paper-s2"]);
    let b = orbindex(&["scenario", "paper-s2"]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["n"], 512);
    assert_eq!(v["orbits"][0]["chi"], -1);
    assert_eq!(v["orbits"][1]["chi"], 1);
    assert_eq!(v["orbits"][0]["mu_cz"], "1/2");
    assert_eq!(v["orbits"][1]["mu_cz"], "7/2");
}

#[test]
fn indices_do_not_depend_on_discretization() {
    let dir = tempfile::tempdir().unwrap();
    let mut seen = Vec::new();
    for n in [256, 1024] {
        let cfg = write_config(dir.path(), &format!("n{n}.toml"), &format!("n = {n}\n"));
        let out = orbindex(&["scenario", "paper-s2", "-c", &cfg]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let v = json(&out);
        let ints: Vec<_> =
            v["orbits"].as_array().unwrap().iter().map(|o| (o["i_t"].clone(), o["i_free"].clone(), o["mu_rab"].clone())).collect();
        seen.push(ints);
    }
    assert_eq!(seen[0], seen[1]);
}

#[test]
fn corrupted_anchor_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.toml",
        "[fstar]\nsupport = [1.2, 2.9]\nanchors = [[2.0, 1.1, 0.25]]\nseed_radius = 2.0\nsup_bound_mode = \"strict_sup_f_lt1\"\n",
    );
    let out = orbindex(&["scenario", "paper-s2", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("validation"));
    let out = orbindex(&["profile", "validate", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in
        [("n.toml", "n = 100\n"), ("key.toml", "frobnicate = 1\n"), ("tol.toml", "hessian_tol = -1.0\n"), ("syntax.toml", "k = \n")]
    {
        let cfg = write_config(dir.path(), name, body);
        let out = orbindex(&["profile", "validate", "-c", &cfg]);
        assert_eq!(out.status.code(), Some(4), "{name}");
    }
    let out = orbindex(&["orbit", "find", "--profile", "g7"]);
    assert_eq!(out.status.code(), Some(4));
    let out = orbindex(&["orbit", "find", "-c", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn empty_scan_gives_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scan.toml", "[scan]\nsamples = 0\n");
    let out = orbindex(&["cylinder", "scan", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "k,rho,a,T,Tprime,chi\n");
}

#[test]
fn scan_sign_of_tprime_near_half() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "scan.toml", "[scan]\nk_min = 0.49\nk_max = 0.51\nsamples = 5\n");
    for (profile, sign) in [("fstar", 1.0), ("f2", -1.0)] {
        let out = orbindex(&["cylinder", "scan", "-c", &cfg, "--profile", profile]);
        let text = String::from_utf8_lossy(&out.stdout).into_owned();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(rows.len(), 5);
        for r in rows {
            let tprime: f64 = r.split(',').nth(4).unwrap().parse().unwrap();
            assert!(tprime * sign > 0.0, "{profile}: {r}");
        }
    }
}

#[test]
fn orbit_find_writes_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = orbindex(&["orbit", "find", "--profile", "f2", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["result"]["orbit"]["rho"].as_f64().unwrap() - 2.5).abs() < 1e-10);
    assert!(v["result"]["closing_error"].as_f64().unwrap() < 1e-8);
    let csv = std::fs::read_to_string(out_dir.join("trajectory_f2.csv")).unwrap();
    assert!(csv.starts_with("t,r,theta,rdot,thetadot,E,J\n"));
    assert_eq!(csv.lines().count(), 4096 + 2);
    assert!(out_dir.join("orbit_f2.json").exists());
}

#[test]
fn indices_run_reports_both_routes() {
    let out = orbindex(&["indices", "run", "--profile", "fstar"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["result"]["indices"]["record"]["mu_cz"], "1/2");
    assert_eq!(v["result"]["morse"]["i_t"], 0);
    assert_eq!(v["result"]["morse"]["i_free"], 1);
}

#[test]
fn selftest_passes_and_detects_flipped_sign() {
    let out = orbindex(&["selftest", "--trials", "40"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = orbindex(&["selftest", "--trials", "4", "--flip-sign"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("calibration"));
}

#[test]
fn shipped_config_matches_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
    let text = std::fs::read_to_string(path).unwrap();
    let mut cfg: orbindex::scenario::ScenarioConfig = toml::from_str(&text).unwrap();
    assert_eq!(cfg.output_dir.take().as_deref(), Some("out"));
    assert_eq!(cfg, orbindex::scenario::ScenarioConfig::default());
}
