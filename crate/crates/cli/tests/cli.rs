use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn g2n(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_g2n"))
        .args(args)
        .env("G2N_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("run.json");
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

const TOY: &str = r#"{"algorithm": "g2ppo", "env": "toy2d", "hidden_sizes": [8], "ga_phase_episodes": 4,
    "horizon": 4, "total_timesteps": 512}"#;

#[test]
fn train_then_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TOY);
    let out = dir.path().join("run");
    let o = g2n(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "config.json",
        "metrics.csv",
        "generations.jsonl",
        "trajectories.jsonl",
        "summary.json",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let saved = fs::read_to_string(out.join("config.json")).unwrap();
    assert!(saved.contains("\"seed\": 4"));

    let o = g2n(&["plotdata", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let curves = fs::read_to_string(out.join("plots/curves.csv")).unwrap();
    assert!(curves.starts_with("generation,timestep,population_mean,elite,top"));
    let traj: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("plots/trajectories.json")).unwrap()).unwrap();
    assert!(!traj.as_array().unwrap().is_empty());
}

#[test]
fn refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TOY.replace("512", "0"));
    let out = dir.path().join("run");
    fs::create_dir(&out).unwrap();
    fs::write(out.join("keep.txt"), "x").unwrap();
    let o = g2n(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    assert!(out.join("keep.txt").is_file());
    let o = g2n(&["train", "--config", &cfg, "--out", out.to_str().unwrap(), "--force"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("keep.txt").exists());
}

#[test]
fn invalid_config_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"algorithm": "g2ac", "env": "cartpole", "mutation_prob": 1.5}"#,
    );
    let out = dir.path().join("run");
    let o = g2n(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("mutation_prob") && err.contains("[0, 1]"), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "{\n  \"algorithm\": \"g2ac\",\n  \"env\": \"cartpole\",\n  \"mutaton\": 0.1\n}",
    );
    let o = g2n(&[
        "train",
        "--config",
        &cfg,
        "--out",
        dir.path().join("r").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("mutaton") && err.contains("line 4"), "{err}");
}

#[test]
fn gradcheck_exit_status() {
    let o = g2n(&["gradcheck", "--instances", "5"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("all gradients within"));
    let o = g2n(&["gradcheck", "--instances", "5", "--fault", "gate-sign-flip"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("gated layer"));
}

#[test]
fn plotdata_on_empty_dir_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = g2n(&["plotdata", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("generations.jsonl"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn ablate_with_shared_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TOY.replace("512", "128"));
    let out = dir.path().join("ablate");
    let o = g2n(&[
        "ablate",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "1,2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    for v in ["g2ppo", "random_gate", "separated", "baseline"] {
        assert!(out.join(v).join("seed-1").is_dir());
    }
}

#[test]
fn repeated_train_gives_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"algorithm": "g2ac", "env": "cartpole", "population_size": 4, "hidden_sizes": [16],
            "elite_phase_steps": 20, "ga_phase_episodes": 1, "total_timesteps": 3000}"#,
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, workers) in [(&a, "1"), (&b, "2")] {
        let o = g2n(&[
            "train",
            "--config",
            &cfg,
            "--out",
            out.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(
        fs::read(a.join("metrics.csv")).unwrap(),
        fs::read(b.join("metrics.csv")).unwrap()
    );
}
