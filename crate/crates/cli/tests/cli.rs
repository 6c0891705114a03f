use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use synergy_cli::config::{parse, ScenarioConfig};
use synergy_cli::export::{read_csv, read_json_arc, ArcTable};
use synergy_cli::modes::{Artifact, Mode, ModeOutput, ModeRegistry, RunContext};
use synergy_cli::{execute, CliError, Invocation};
use tempfile::TempDir;

fn synergy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synergy")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_bit_equal(a: &ArcTable, b: &ArcTable) {
    assert_eq!(a.columns, b.columns);
    assert_eq!(a.rows.len(), b.rows.len());
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        assert_eq!(ra.t.to_bits(), rb.t.to_bits());
        assert_eq!(ra.j, rb.j);
        assert_eq!(ra.values.len(), rb.values.len());
        for (x, y) in ra.values.iter().zip(&rb.values) {
            assert_eq!(x.to_bits(), y.to_bits(), "{x} vs {y} at t = {}", ra.t);
        }
    }
}

const SMALL_SPHERE: &str = r#"{"solver": {"max_time": 5.0}, "seed": 11}"#;

#[test]
fn verify_fixture_exits_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "v.json",
        r#"{
            "mode": "verify",
            "potential": {"k": 1.0, "gamma": -0.5, "delta": 0.1},
            "solver": {"max_time": 10.0},
            "verify": {"samples": 2000, "closed_loop_runs": 3, "geodesic_runs": 2, "horizon": 40.0}
        }"#,
    );
    let out = dir.path().join("report.json");
    let o = synergy(&["verify", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let checks = doc["result"]["checks"].as_array().unwrap();
    assert!(checks.len() >= 15);
    assert!(checks.iter().all(|c| c["passed"] == Value::Bool(true)));
    assert!(checks.iter().any(|c| c["name"] == "tracking_final_error"));
}

#[test]
fn delta_above_bound_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "d.json", r#"{"potential": {"delta": 0.3}}"#);
    let o = synergy(&["verify", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("potential.delta"), "{err}");
    assert!(err.contains("0.2"), "{err}");
}

#[test]
fn field_path_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    for (text, path) in [
        (r#"{"quad": {"sat": {"bmax": 1.0}}}"#, "quad.sat"),
        (r#"{"solver": {"dt": "fast"}}"#, "solver.dt"),
        (r#"{"potential": {"r": [0.0, 0.0, 0.0]}}"#, "potential.r"),
        (r#"{"mode": "gains"}"#, "mode"),
    ] {
        let cfg = write(dir.path(), "bad.json", text);
        let o = synergy(&["verify", "--config", s(&cfg)]);
        assert_eq!(o.status.code(), Some(2), "{text}: {}", stderr(&o));
        assert!(stderr(&o).contains(path), "{text}: {}", stderr(&o));
    }
}

#[test]
fn failed_property_exits_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "g.json", r#"{"geodesic": {"starts": 3, "tolerance": 1e-300}}"#);
    let o = synergy(&["geodesic-check", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("[FAIL]"));
}

#[test]
fn io_errors_exit_one() {
    let o = synergy(&["verify", "--config", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/scenario.json"));
}

#[test]
fn quad_sim_jumps_at_time_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "q.json", r#"{"solver": {"max_time": 2.0}}"#);
    let out = dir.path().join("q.csv");
    let o = synergy(&["quad-sim", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = read_csv(fs::File::open(&out).unwrap()).unwrap();
    for c in ["V", "mu", "Kz_norm", "W1", "R33"] {
        assert!(table.column(c).is_some(), "missing column {c}");
    }
    let mu = table.column("mu").unwrap();
    let first_post = table.rows.iter().position(|r| r.j == 1).unwrap();
    assert_eq!(first_post, 1);
    assert_eq!(table.rows[0].t, 0.0);
    assert_eq!(table.rows[1].t, 0.0);
    assert!(table.rows[0].values[mu] >= 0.1);
    assert_eq!(table.rows[first_post].values[mu], 0.0);
    assert!(table.rows.iter().all(|r| r.j <= 1));
}

#[test]
fn csv_and_json_reimport_bit_exactly() {
    let dir = TempDir::new().unwrap();
    let cfg_path = write(dir.path(), "s.json", SMALL_SPHERE);
    let csv_out = dir.path().join("a.csv");
    let json_out = dir.path().join("a.json");
    assert_eq!(synergy(&["sphere-sim", "--config", s(&cfg_path), "--out", s(&csv_out)]).status.code(), Some(0));
    assert_eq!(synergy(&["sphere-sim", "--config", s(&cfg_path), "--out", s(&json_out)]).status.code(), Some(0));

    let config = parse(SMALL_SPHERE).unwrap();
    let direct = match ModeRegistry::builtin().get("sphere-sim").unwrap().run(&RunContext { config: &config, seed: config.seed }) {
        Ok(ModeOutput { artifact: Artifact::Arc(t), .. }) => t,
        _ => panic!("sphere-sim yields an arc"),
    };
    let from_csv = read_csv(fs::File::open(&csv_out).unwrap()).unwrap();
    let from_json = read_json_arc(fs::File::open(&json_out).unwrap()).unwrap().table().unwrap();
    assert_bit_equal(&direct, &from_csv);
    assert_bit_equal(&direct, &from_json);
}

#[test]
fn outputs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s.json", SMALL_SPHERE);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = synergy(&["sphere-sim", "--config", s(&cfg), "--out", s(&out), "--seed", seed]);
        assert_eq!(o.status.code(), Some(0));
        fs::read(out).unwrap()
    };
    assert_eq!(run("a.json", "5"), run("b.json", "5"));
    assert_ne!(run("c.json", "5"), run("d.json", "6"));
}

#[test]
fn meta_echo_reparses_to_equal_config() {
    let dir = TempDir::new().unwrap();
    let text = r#"{"potential": {"k": 2.0, "gamma": -0.25, "delta": 0.05}, "solver": {"max_time": 1.0},
                   "quad": {"reference": "hover", "initial": {"kind": "state", "p": [0.5, 0, 0], "v": [0, 0, 0],
                   "rot": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "y": [0, 0, -1]}}, "seed": 3}"#;
    let cfg = write(dir.path(), "m.json", text);
    let out = dir.path().join("m.json.out");
    let o = synergy(&["gains", "--config", s(&cfg), "--out", s(&out), "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["meta"]["seed"], 9);
    assert_eq!(doc["meta"]["mode"], "gains");
    let echoed: ScenarioConfig = serde_json::from_value(doc["meta"]["config"].clone()).unwrap();
    let mut expected = parse(text).unwrap();
    expected.seed = 9;
    assert_eq!(echoed, expected);
}

struct Echo;

impl Mode for Echo {
    fn name(&self) -> &'static str {
        "echo"
    }

    fn about(&self) -> &'static str {
        "writes the seed"
    }

    fn run(&self, ctx: &RunContext<'_>) -> Result<ModeOutput, CliError> {
        Ok(ModeOutput { artifact: Artifact::Json(ctx.seed.into()), summary: vec![], passed: ctx.seed != 13 })
    }
}

#[test]
fn registered_modes_run_through_execute() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "e.json", "{}");
    let mut registry = ModeRegistry::builtin();
    registry.register(Box::new(Echo)).unwrap();
    assert!(registry.register(Box::new(Echo)).is_err());

    let out = dir.path().join("e.out");
    let inv = |seed| Invocation { mode: "echo".into(), config: cfg.clone(), out: Some(out.clone()), seed: Some(seed) };
    assert!(execute(&registry, &inv(4)).unwrap().passed);
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["result"], 4);
    assert!(!execute(&registry, &inv(13)).unwrap().passed);

    let missing = Invocation { mode: "plot".into(), config: cfg.clone(), out: None, seed: None };
    let err = execute(&registry, &missing).err().unwrap();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("echo"));
}

#[test]
fn shipped_scenarios_parse_and_name_a_mode() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let registry = ModeRegistry::builtin();
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let config = parse(&fs::read_to_string(&path).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let mode = config.mode.as_deref().expect("scenario names its mode");
        assert!(registry.get(mode).is_some(), "{mode}");
        config.potential_config().unwrap();
        n += 1;
    }
    assert!(n >= 4);
}
