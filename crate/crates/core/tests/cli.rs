use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semiclassical"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("SEMICLASSICAL_THREADS")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn check_on_defaults_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["check"], &configs().join("defaults.toml"), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("check.csv")).unwrap();
    assert!(text.starts_with("property,value,tolerance,pass\n"));
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn pressure_tie_keeps_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["pressure"], &configs().join("pressure_tie.toml"), &out);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(out.join("pressure.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    let eligible: Vec<&str> = rows.iter().filter(|r| r[5] == "true").map(|r| r[0]).collect();
    let argmax: Vec<&str> = rows.iter().filter(|r| r[4] == "true").map(|r| r[0]).collect();
    assert_eq!(eligible, ["cycle"]);
    assert_eq!(argmax, ["point", "cycle"]);
}

#[test]
fn manifest_lists_every_output_with_its_hash() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run(&["profile"], &configs().join("pressure_tie.toml"), &out).status.code(), Some(0));
    let m = manifest(&out);
    assert_eq!(m["status"], "ok");
    let listed: Vec<String> = m["outputs"].as_array().unwrap().iter().map(|e| e["file"].as_str().unwrap().to_string()).collect();
    for entry in std::fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name != "manifest.json" {
            assert!(listed.contains(&name), "{name} missing from manifest");
        }
    }
    for e in m["outputs"].as_array().unwrap() {
        let bytes = std::fs::read(out.join(e["file"].as_str().unwrap())).unwrap();
        assert_eq!(e["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn monte_carlo_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "mc.toml",
        r#"
[field]
name = "circle_sink_source"
pi = 3.0
killing = { mean = 1.0, terms = [{ mode = [1, 0], cos = 0.5 }] }

[mc]
epsilon = 0.05
t = 0.5
points = [[0.1, 0.0], [0.6, 0.0]]
n_paths = 4000
n = 128
"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run(&["mc", "--seed", "5", "--threads", "1"], &cfg, &a).status.code(), Some(0));
    assert_eq!(run(&["mc", "--seed", "5", "--threads", "3"], &cfg, &b).status.code(), Some(0));
    assert_eq!(std::fs::read(a.join("mc.csv")).unwrap(), std::fs::read(b.join("mc.csv")).unwrap());
    let c = dir.path().join("c");
    assert_eq!(run(&["mc", "--seed", "6"], &cfg, &c).status.code(), Some(0));
    assert_ne!(std::fs::read(a.join("mc.csv")).unwrap(), std::fs::read(c.join("mc.csv")).unwrap());
    assert_eq!(manifest(&a)["seed"], 5);
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let typo = write(dir.path(), "typo.toml", "[eigen]\nepsillon = 0.1\n");
    let o = run(&["eigen"], &typo, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon"));

    let bad = write(dir.path(), "bad.toml", "[[components]]\nlabel = \"flat\"\nkind = \"point\"\nb = [[0.0]]\nc = 1.0\n");
    let o = run(&["pressure"], &bad, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("flat"));

    let o = run(&["pressure"], &dir.path().join("missing.toml"), &out);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_semiclassical"))
        .args(["check", "--config"])
        .arg(configs().join("defaults.toml"))
        .arg("--out")
        .arg(&out)
        .env("SEMICLASSICAL_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn task_failure_exits_one_with_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "rate.toml",
        r#"
[field]
name = "circle_sink_source"

[rate]
segments = 0
queries = [{ x = [0.25, 0.0], t = 0.2 }, { x = [0.25, 0.0], t = 2.0 }]
"#,
    );
    let o = run(&["rate"], &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    let text = std::fs::read_to_string(out.join("rate.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    let m = manifest(&out);
    assert_eq!(m["status"], "failed");
    assert_eq!(m["outputs"][0]["file"], "rate.csv");
}

#[test]
fn output_dir_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_config");
    let cfg = write(
        dir.path(),
        "p.toml",
        &format!(
            "[output]\ndir = {:?}\njson = false\n\n[[components]]\nlabel = \"p\"\nkind = \"point\"\nb = [[-1.0]]\nc = 0.0\n",
            target.display().to_string()
        ),
    );
    let o = Command::new(env!("CARGO_BIN_EXE_semiclassical")).args(["pressure", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("pressure.csv").exists());
    assert!(!target.join("pressure.json").exists());
}

#[test]
fn ou_command_passes_on_examples() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["ou"], &configs().join("ou_blocks.toml"), &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(out.join("semigroup.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",true")));
}
