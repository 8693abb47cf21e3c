use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dsaawet::cli::{parse_scenario, Scenario};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dsaawet"))
}

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn dsaawet(args: &[&str], scenario: &Path, out: &Path) -> Output {
    bin().args(args).arg(scenario).arg("--out").arg(out).output().expect("spawn dsaawet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = r#"
name = "small"
agents = 6
dim = 3
horizon = 400
record_every = 20
checks = ["lemma42", "cessation", "lemma41"]
x_star = [0.5, 0.5, 0.5]
gamma = { a = 4.0 }
bounds = { kind = "geometric", m0 = 1.0, ratio = 2.0 }
problem = { kind = "pca_example1", heterogeneity = { kind = "heterogeneous", spread = 0.5 } }
topology = { kind = "static_metropolis" }
init = { kind = "uniform_box", low = [-0.3, -0.3, -0.3], high = [0.3, 0.3, 0.3] }
"#;

#[test]
fn presets_parse_and_build() {
    for name in ["example1.toml", "example2.toml"] {
        let s = parse_scenario(&preset(name)).unwrap();
        let b = s.build().unwrap();
        assert!(b.a4.passed(), "{name}");
    }
    let e1 = parse_scenario(&preset("example1.toml")).unwrap();
    assert_eq!((e1.agents, e1.dim), (1000, 9));
    let e2 = parse_scenario(&preset("example2.toml")).unwrap();
    assert_eq!((e2.agents, e2.dim), (3, 2));
    assert_eq!(e2.build().unwrap().config.x_star, vec![-1.0, 4.0]);
}

#[test]
fn validate_example1_succeeds() {
    let dir = TempDir::new().unwrap();
    let o = dsaawet(&["validate"], &preset("example1.toml"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("strongly connected:  true"));
}

#[test]
fn validate_rejects_identity_topology() {
    let dir = TempDir::new().unwrap();
    let text = SMALL.replace(
        r#"topology = { kind = "static_metropolis" }"#,
        r#"topology = { kind = "explicit", matrices = [[[1.0,0,0,0,0,0],[0,1.0,0,0,0,0],[0,0,1.0,0,0,0],[0,0,0,1.0,0,0],[0,0,0,0,1.0,0],[0,0,0,0,0,1.0]]] }"#,
    );
    let p = write(&dir, "identity.toml", &text);
    let o = dsaawet(&["validate"], &p, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("not strongly connected"), "{}", stdout(&o));
    let o = dsaawet(&["run"], &p, &dir.path().join("run"));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_scenario_exits_one() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "bad.toml", &format!("{SMALL}\nspeed = 3\n"));
    let o = dsaawet(&["run"], &p, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("speed"));
}

#[test]
fn run_writes_all_files_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "small.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = bin().args(["run", "--full-trace", "--seed", "7"]).arg(&p).arg("--out").arg(out).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }
    for f in ["metrics.csv", "events.jsonl", "violations.jsonl"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = std::fs::read_to_string(a.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("k,algo,disagreement"));
    assert_eq!(lines.len(), 1 + 21);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 7);
    assert_eq!(summary["checks"]["lemma41"]["status"], "pass");
    assert_eq!(summary["checks"]["lemma42"]["status"], "pass");

    let o = bin().args(["run", "--seed", "8"]).arg(&p).arg("--out").arg(dir.path().join("c")).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(std::fs::read(a.join("metrics.csv")).unwrap(), std::fs::read(dir.path().join("c/metrics.csv")).unwrap());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["checks"]["lemma41"]["status"], "skipped");
}

#[test]
fn sweep_output_does_not_depend_on_job_count() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "small.toml", SMALL);
    let mut outputs = Vec::new();
    for jobs in ["1", "4"] {
        let out = dir.path().join(format!("jobs{jobs}"));
        let o = bin().args(["sweep", "--seeds", "0..8", "--jobs", jobs]).arg(&p).arg("--out").arg(&out).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
        outputs.push((std::fs::read(out.join("sweep.csv")).unwrap(), std::fs::read(out.join("summaries.jsonl")).unwrap()));
    }
    assert_eq!(outputs[0].0, outputs[1].0);
    let csv = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert_eq!(csv.lines().count(), 9);
    let seeds: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(seeds, ["0", "1", "2", "3", "4", "5", "6", "7"]);
}

#[test]
fn compare_reports_baseline_overflow() {
    let dir = TempDir::new().unwrap();
    let text = r#"
name = "blow-up"
agents = 40
dim = 9
horizon = 12
x_star = "ones_over_sqrt_l"
gamma = { a = 1.0 }
bounds = { kind = "geometric", m0 = 1.0, ratio = 2.0 }
problem = { kind = "pca_example1" }
topology = { kind = "example1_blocks" }
init = { kind = "constant", value = "x_star" }
"#;
    let p = write(&dir, "blowup.toml", text);
    let o = dsaawet(&["compare"], &p, dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(csv.contains("# overflow algo=baseline"));
    assert!(csv.lines().any(|l| l.starts_with("12,dsaawet,")));
    let s: Scenario = parse_scenario(&p).unwrap();
    assert_eq!(s.horizon, 12);
}

#[test]
fn strict_checks_exit_three() {
    let dir = TempDir::new().unwrap();
    let text = r#"
name = "late"
agents = 4
dim = 3
horizon = 10
checks = ["cessation"]
x_star = "zero"
gamma = { a = 50.0, p = 0.0 }
bounds = { kind = "geometric", m0 = 1.0, ratio = 2.0 }
problem = { kind = "synthetic_linear" }
topology = { kind = "complete" }
init = { kind = "constant", value = "x_star" }
"#;
    let p = write(&dir, "late.toml", text);
    let o = dsaawet(&["run"], &p, dir.path());
    assert_eq!(o.status.code(), Some(0));
    let o = bin().args(["run", "--strict-checks"]).arg(&p).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    let violations = std::fs::read_to_string(dir.path().join("violations.jsonl")).unwrap();
    assert!(violations.contains("cessation"));
}

#[test]
fn output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "small.toml", SMALL);
    let out = dir.path().join("from-env");
    let o = bin().arg("run").arg(&p).env("DSAAWET_OUT", &out).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(out.join("metrics.csv").exists());
}
