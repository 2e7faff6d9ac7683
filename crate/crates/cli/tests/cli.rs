//! Command-line behavior: exit codes, flag and environment handling.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mulesim"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("mulesim-cli-{}-{}", tag, std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn validate_accepts_presets_and_rejects_bad_fields() {
    let ok = bin().args(["validate", "--preset", "medium"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("15 sensors, 7 uavs"));

    let config = temp_dir("validate").join("bad.toml");
    std::fs::create_dir_all(config.parent().unwrap()).unwrap();
    std::fs::write(&config, "[medium]\ndrop_probability = 1.5\n").unwrap();
    let bad = bin().args(["validate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(bad.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert!(stderr.contains("medium.drop_probability"), "stderr: {stderr}");
    assert!(stderr.contains("1.5"));
}

#[test]
fn unknown_config_file_key_exits_one() {
    let config = temp_dir("unknown-key").join("typo.toml");
    std::fs::create_dir_all(config.parent().unwrap()).unwrap();
    std::fs::write(&config, "sensor_cout = 5\n").unwrap();
    let out = bin().args(["validate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sensor_cout"));
}

#[test]
fn flags_override_config_file_which_overrides_preset() {
    let config = temp_dir("precedence").join("cfg.toml");
    std::fs::create_dir_all(config.parent().unwrap()).unwrap();
    std::fs::write(&config, "runs = 5\nseed = 100\n").unwrap();
    let out = bin()
        .args(["validate", "--preset", "small", "--config"])
        .arg(&config)
        .args(["--seed", "7"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    // runs from the file, seed from the flag, node counts from the preset
    assert!(stdout.contains("5 runs"), "stdout: {stdout}");
    assert!(stdout.contains("seed 7"), "stdout: {stdout}");
    assert!(stdout.contains("5 sensors, 2 uavs"), "stdout: {stdout}");
}

#[test]
fn out_directory_falls_back_to_environment() {
    let dir = temp_dir("env-out");
    let out = bin()
        .args(["run", "--preset", "small", "--duration", "30"])
        .env("MULESIM_OUT", &dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("run_0.csv").exists());
    assert!(dir.join("average.csv").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_config_file_exits_one() {
    let out = bin()
        .args(["run", "--config", "/definitely/not/here.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn replay_rejects_garbage_frames() {
    let path = temp_dir("replay").join("frames.jsonl");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    std::fs::write(&path, "{\"not\": \"a frame\"}\n").unwrap();
    let out = bin()
        .args(["replay"])
        .arg(&path)
        .args(["--telemetry-port", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not a telemetry frame"));
}

#[test]
fn replay_reemits_recorded_frames() {
    let dir = temp_dir("replay-ok");
    let run = bin()
        .args(["run", "--preset", "small", "--duration", "10", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
    let frames = dir.join("frames.jsonl");
    assert!(frames.exists());
    let out = bin()
        .args(["replay"])
        .arg(&frames)
        .args(["--telemetry-port", "0", "--fps", "1000"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("replayed 10 frames"));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn run_exit_code_two_when_port_is_taken() {
    // occupy a port, then ask the run to serve telemetry on it
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    let out = bin()
        .args(["run", "--preset", "small", "--duration", "5", "--telemetry-port"])
        .arg(port.to_string())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("in use"));
}
