use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
name = "tiny"
seed = 3
rounds = 6
policy = "bippo"
budget_fraction = 0.4
target_accuracy = 0.5

[data]
source = "synthetic"
classes = 3
dim = 2

[partition]
train_per_client = 20
test_per_client = 10
skew = { kind = "dirichlet", alpha = 0.5 }

[[tiers]]
name = "cheap"
count = 2
cpu_freq = 7e8

[[tiers]]
name = "expensive"
count = 2
cpu_freq = 1.5e9

[fl]
hidden = [8]
batch_size = 8

[ppo]
hidden = 8
"#;

fn fedsel(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_fedsel")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "fedsel {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn tiny_config(dir: &Path, policy: &str) -> PathBuf {
    let path = dir.join(format!("{policy}.toml"));
    let text = TINY
        .replace("policy = \"bippo\"", &format!("policy = \"{policy}\""))
        .replace("name = \"tiny\"", &format!("name = \"tiny-{policy}\""));
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "bippo");
    let out = dir.path().join("run");
    let printed = fedsel(&["run", "--config", s(&config), "--out", s(&out)]);
    for f in ["rounds.csv", "clients.csv", "trace.csv", "summary.csv", "summary.txt", "manifest.toml"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let rounds = std::fs::read_to_string(out.join("rounds.csv")).unwrap();
    let mut lines = rounds.lines();
    assert_eq!(
        lines.next().unwrap(),
        "round,n_active,chosen,n_chosen,budget_j,spent_j,cum_fl_j,global_acc,reward,epsilon,rl_macs,cum_rl_macs,updated"
    );
    assert_eq!(lines.count(), 7);
    let reported = fedsel(&["report", "--in", s(&out)]);
    assert_eq!(reported.stdout, printed.stdout);
    assert_eq!(String::from_utf8(reported.stdout).unwrap(), std::fs::read_to_string(out.join("summary.txt")).unwrap());
}

#[test]
fn run_is_byte_reproducible_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "ippo");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    fedsel(&["run", "--config", s(&config), "--out", s(&a)]);
    fedsel(&["run", "--config", s(&config), "--out", s(&b)]);
    fedsel(&["run", "--config", s(&config), "--seed", "4", "--out", s(&c)]);
    for f in ["rounds.csv", "clients.csv", "trace.csv", "summary.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let summary = std::fs::read_to_string(c.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().nth(1).unwrap().split(',').nth(2), Some("4"));
}

#[test]
fn compare_writes_table_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [tiny_config(dir.path(), "bippo"), tiny_config(dir.path(), "random")];
    let out = dir.path().join("cmp");
    fedsel(&["compare", "--configs", s(&configs[0]), s(&configs[1]), "--seeds", "2", "--out", s(&out)]);
    let table = std::fs::read_to_string(out.join("compare.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("tiny-bippo,bippo,2,"));
    assert!(rows[2].starts_with("tiny-random,random,2,"));
    assert!(out.join("runs/00-tiny-bippo/seed-3/rounds.csv").is_file());
    assert!(out.join("runs/01-tiny-random/seed-4/rounds.csv").is_file());
}

#[test]
fn sweep_labels_each_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path(), "poc");
    let printed = fedsel(&[
        "sweep",
        "--config",
        s(&config),
        "--param",
        "budget_fraction",
        "--values",
        "0.3,0.6",
        "--seeds",
        "1",
    ]);
    let text = String::from_utf8(printed.stdout).unwrap();
    assert!(text.contains("tiny-poc@budget_fraction=0.3"));
    assert!(text.contains("tiny-poc@budget_fraction=0.6"));
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, TINY.replace("budget_fraction = 0.4", "budget_fraction = 1.4")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fedsel"))
        .args(["run", "--config", s(&bad), "--out", s(&dir.path().join("x"))])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
    let out = Command::new(env!("CARGO_BIN_EXE_fedsel"))
        .args(["report", "--in", s(&dir.path().join("missing"))])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
