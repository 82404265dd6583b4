use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use tempfile::TempDir;

use tanglekit::{io, rationalize_flux, LiftPoint, LiftedMap};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn tanglekit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tanglekit")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn twist() -> String {
    data("double_twist.json").display().to_string()
}

#[test]
fn flux_of_bundled_map_is_zero() {
    let tmp = TempDir::new().unwrap();
    let o = tanglekit(&["--map", &twist(), "flux"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!(v["phi_a"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(v["method_agreement"], Value::Bool(true));
}

#[test]
fn missing_map_file_exits_2_and_names_the_path() {
    let tmp = TempDir::new().unwrap();
    let o = tanglekit(&["--map", "no/such/map.json", "flux"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no/such/map.json"));
}

#[test]
fn missing_map_argument_exits_2() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(tanglekit(&["flux"], tmp.path()).status.code(), Some(2));
    assert_eq!(tanglekit(&["--map", &twist(), "bogus"], tmp.path()).status.code(), Some(2));
}

#[test]
fn malformed_map_exits_2() {
    let tmp = TempDir::new().unwrap();
    let p = tmp.path().join("bad.json");
    std::fs::write(&p, r#"{"family": "double_twist", "p": 3}"#).unwrap();
    let o = tanglekit(&["--map", p.to_str().unwrap(), "orbits"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_1() {
    let tmp = TempDir::new().unwrap();
    let o = tanglekit(&["--map", &twist(), "manifold", "--kind", "u", "--orbit-index", "99"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("out of range"));
}

#[test]
fn orbits_of_the_double_twist() {
    let tmp = TempDir::new().unwrap();
    let o = tanglekit(&["--map", &twist(), "orbits", "--grid", "8"], tmp.path());
    let v = stdout_json(&o);
    let orbits = v.as_array().unwrap();
    assert_eq!(orbits.len(), 4);
    assert!(orbits.iter().all(|o| o["residual"].as_f64().unwrap() < 1e-11));
}

#[test]
fn crossings_csv_is_sorted_by_unstable_arclength() {
    let tmp = TempDir::new().unwrap();
    let o = tanglekit(&["--map", &twist(), "--out", "run", "tangle", "--Lmax", "4"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(tmp.path().join("run/crossings.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# crossings"));
    assert!(lines.next().unwrap().starts_with("u_param,s_param,"));
    let u: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(!u.is_empty());
    assert!(u.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(stdout_json(&o)["crossings"].as_u64().unwrap() as usize, u.len());
}

#[test]
fn exported_map_round_trips() {
    let tmp = TempDir::new().unwrap();
    let drift = data("double_twist_drift.json").display().to_string();
    let o = tanglekit(&["--map", &drift, "perturb", "rationalize", "--denominator", "4"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let exported = io::load_map(&tmp.path().join("rationalized_map.json")).unwrap();
    let reference = rationalize_flux(&io::load_map(Path::new(&drift)).unwrap(), 4).unwrap().map;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let z = LiftPoint::new(rng.gen_range(-1.0..2.0), rng.gen_range(-1.0..2.0));
        assert_eq!(exported.evaluate_lift(&z).unwrap(), reference.evaluate_lift(&z).unwrap());
    }
    assert_eq!(stdout_json(&o)["target"], serde_json::json!([0.5, 0.25]));
}

#[test]
fn nudge_writes_a_map_hitting_the_target() {
    let tmp = TempDir::new().unwrap();
    let args = ["perturb", "nudge", "--center", "0.3,0.6", "--target", "0.31,0.61", "--radius", "0.1"];
    let o = tanglekit(&args, tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert!(v["target_error"].as_f64().unwrap() < 1e-10);
    assert!(v["max_det_error"].as_f64().unwrap() < 1e-8);
    let g: LiftedMap = io::load_map(&tmp.path().join("nudged_map.json")).unwrap();
    assert_eq!(g.evaluate_lift(&LiftPoint::new(0.8, 0.1)).unwrap(), LiftPoint::new(0.8, 0.1));
}

#[test]
fn empty_scenario_succeeds_with_no_stages() {
    let tmp = TempDir::new().unwrap();
    let cfg = format!(r#"{{"name": "empty", "map_file": "{}", "operations": []}}"#, twist());
    std::fs::write(tmp.path().join("empty.json"), cfg).unwrap();
    let o = tanglekit(&["--out", "out", "scenario", "empty.json"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["stages"], serde_json::json!([]));
    assert_eq!(summary["status"], "ok");
}

#[test]
fn invalid_scenarios_exit_2() {
    let tmp = TempDir::new().unwrap();
    let write = |name: &str, text: &str| std::fs::write(tmp.path().join(name), text).unwrap();
    write("unknown_op.json", r#"{"map_file": "m.json", "operations": [{"op": "explode"}]}"#);
    write("missing.json", r#"{"map_file": "nowhere.json", "operations": []}"#);
    write("order.json", &format!(r#"{{"map_file": "{}", "operations": [{{"op": "manifold"}}]}}"#, twist()));
    for name in ["unknown_op.json", "missing.json", "order.json", "absent.json"] {
        let o = tanglekit(&["scenario", name], tmp.path());
        assert_eq!(o.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = tanglekit(&["scenario", "missing.json"], tmp.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.json"));
}

#[test]
fn bundled_scenarios_are_listed() {
    let tmp = TempDir::new().unwrap();
    let o = tanglekit(&["scenario", "--list"], tmp.path());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "zero_flux_tangle");
}
