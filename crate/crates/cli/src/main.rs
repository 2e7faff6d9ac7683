//! Experiment front door: `run`, `validate` and `replay` subcommands.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.
//! Diagnostics go to standard error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use mulesim::engine::ExecutionMode;
use mulesim::experiment::{run_experiment, write_outputs, ExperimentError, ExperimentOptions};
use mulesim::scenario::{Preset, ScenarioConfig, ScenarioOverrides};
use mulesim::telemetry::{TelemetryFrame, TelemetryServer};
use mulesim::zigzag::OffsetMode;

#[derive(Parser)]
#[command(
    name = "mulesim",
    version,
    about = "Discrete-event simulator for mobile communicating nodes, with a reference data-ferrying scenario"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment and optionally export CSV metrics.
    Run(RunArgs),
    /// Check a configuration without running anything.
    Validate(ConfigArgs),
    /// Re-emit recorded telemetry frames over a WebSocket.
    Replay(ReplayArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML scenario file; fields present override the preset.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Built-in scenario size: small, medium or large.
    #[arg(long)]
    preset: Option<Preset>,

    /// Independent runs to execute and average.
    #[arg(long)]
    runs: Option<u32>,

    /// Base RNG seed; run k uses seed + k.
    #[arg(long)]
    seed: Option<u64>,

    /// Simulated seconds per run.
    #[arg(long)]
    duration: Option<f64>,

    /// Collision-window interference model: on or off.
    #[arg(long, value_parser = parse_on_off)]
    collision: Option<bool>,

    /// Heartbeat phase: random or zero.
    #[arg(long, value_parser = parse_offset_mode)]
    offset_mode: Option<OffsetMode>,

    /// Seconds a node ignores peers after a completed exchange.
    #[arg(long)]
    interaction_timeout: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,

    /// Directory for run_{k}.csv, average.csv and frames.jsonl
    /// (falls back to MULESIM_OUT).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Stream live frames on ws://127.0.0.1:PORT
    /// (falls back to MULESIM_TELEMETRY_PORT).
    #[arg(long)]
    telemetry_port: Option<u16>,

    /// fast: run unregulated; real-time: pace the clock to wall time.
    #[arg(long, default_value = "fast", value_parser = parse_mode)]
    mode: ExecutionMode,
}

#[derive(Args)]
struct ReplayArgs {
    /// frames.jsonl recorded by a previous `run --out`.
    frames: PathBuf,

    /// Port to serve on (falls back to MULESIM_TELEMETRY_PORT, then 8765).
    #[arg(long)]
    telemetry_port: Option<u16>,

    /// Frames per second to emit.
    #[arg(long, default_value_t = 10.0)]
    fps: f64,
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected 'on' or 'off', got '{other}'")),
    }
}

fn parse_offset_mode(s: &str) -> Result<OffsetMode, String> {
    match s {
        "random" => Ok(OffsetMode::Random),
        "zero" => Ok(OffsetMode::Zero),
        other => Err(format!("expected 'random' or 'zero', got '{other}'")),
    }
}

fn parse_mode(s: &str) -> Result<ExecutionMode, String> {
    match s {
        "fast" => Ok(ExecutionMode::Fast),
        "real-time" => Ok(ExecutionMode::RealTime),
        other => Err(format!("expected 'fast' or 'real-time', got '{other}'")),
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate(args) => validate(args),
        Command::Replay(args) => replay(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}

/// Builds the effective configuration: preset (or defaults), then config
/// file, then command-line flags.
fn resolve_config(args: &ConfigArgs) -> Result<ScenarioConfig, u8> {
    let mut cfg = match args.preset {
        Some(preset) => preset.config(),
        None => ScenarioConfig::default(),
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| {
            eprintln!("cannot read {}: {e}", path.display());
            EXIT_CONFIG
        })?;
        let overrides = ScenarioOverrides::parse_toml(&text).map_err(|e| {
            eprintln!("{}: {e}", path.display());
            EXIT_CONFIG
        })?;
        overrides.apply(&mut cfg);
    }
    if let Some(v) = args.runs {
        cfg.runs = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.duration {
        cfg.duration = v;
    }
    if let Some(v) = args.collision {
        cfg.medium.collision_model = v;
    }
    if let Some(v) = args.offset_mode {
        cfg.zigzag.offset_mode = v;
    }
    if let Some(v) = args.interaction_timeout {
        cfg.zigzag.interaction_timeout = v;
    }
    if let Err(errors) = mulesim::scenario::validate(&cfg) {
        for error in errors {
            eprintln!("config error: {error}");
        }
        return Err(EXIT_CONFIG);
    }
    Ok(cfg)
}

fn env_out() -> Option<PathBuf> {
    std::env::var_os("MULESIM_OUT").map(PathBuf::from)
}

fn env_port() -> Option<u16> {
    std::env::var("MULESIM_TELEMETRY_PORT").ok().and_then(|s| s.parse().ok())
}

fn run(args: RunArgs) -> Result<(), u8> {
    let cfg = resolve_config(&args.config)?;
    let out = args.out.or_else(env_out);
    let port = args.telemetry_port.or_else(env_port);

    let server = match port {
        Some(port) => Some(TelemetryServer::start(port).map_err(|e| {
            eprintln!("{e}");
            EXIT_RUNTIME
        })?),
        None => None,
    };
    if let Some(server) = &server {
        eprintln!("telemetry: streaming frames on {}", server.url());
    }

    let options = ExperimentOptions {
        mode: args.mode,
        frame_sender: server.as_ref().map(|s| s.sender()),
        record_run0_frames: out.is_some(),
    };
    let result = run_experiment(&cfg, &options).map_err(|e| {
        report_experiment_error(e);
        EXIT_RUNTIME
    })?;

    for run in &result.runs {
        println!(
            "run {} (seed {}): collected {} in {} simulated seconds, {} events, {:.3} s wall",
            run.series.run_id,
            run.series.seed,
            run.final_collected,
            run.stats.final_time.to_decimal_secs(),
            run.stats.events_processed,
            run.stats.wall_elapsed.as_secs_f64(),
        );
    }
    let mean_final: f64 = result.average.last().map(|s| s.gs_collected).unwrap_or(0.0);
    println!(
        "{} runs averaged: final collected {:.2}; total wall-clock {:.3} s",
        result.runs.len(),
        mean_final,
        result.total_wall.as_secs_f64(),
    );

    if let Some(dir) = out {
        let written = write_outputs(&dir, &result).map_err(|e| {
            report_experiment_error(e);
            EXIT_RUNTIME
        })?;
        for path in written {
            println!("wrote {}", path.display());
        }
    }
    if let Some(server) = server {
        server.shutdown();
    }
    Ok(())
}

fn report_experiment_error(error: ExperimentError) {
    match error {
        ExperimentError::Config(errors) => {
            for e in errors {
                eprintln!("config error: {e}");
            }
        }
        other => eprintln!("{other}"),
    }
}

fn validate(args: ConfigArgs) -> Result<(), u8> {
    let cfg = resolve_config(&args)?;
    println!(
        "configuration valid: {} sensors, {} uavs, {} runs x {} s (seed {})",
        cfg.sensor_count, cfg.uav_count, cfg.runs, cfg.duration, cfg.seed
    );
    Ok(())
}

fn replay(args: ReplayArgs) -> Result<(), u8> {
    if !(args.fps.is_finite() && args.fps > 0.0) {
        eprintln!("config error: fps: must be positive (got {})", args.fps);
        return Err(EXIT_CONFIG);
    }
    let text = fs::read_to_string(&args.frames).map_err(|e| {
        eprintln!("cannot read {}: {e}", args.frames.display());
        EXIT_CONFIG
    })?;
    let mut frames = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let frame: TelemetryFrame = serde_json::from_str(line).map_err(|e| {
            eprintln!("{}:{}: not a telemetry frame: {e}", args.frames.display(), i + 1);
            EXIT_CONFIG
        })?;
        frames.push(frame);
    }

    let port = args.telemetry_port.or_else(env_port).unwrap_or(8765);
    let server = TelemetryServer::start(port).map_err(|e| {
        eprintln!("{e}");
        EXIT_RUNTIME
    })?;
    eprintln!(
        "replaying {} frames at {} fps on {}",
        frames.len(),
        args.fps,
        server.url()
    );
    let sender = server.sender();
    let pause = Duration::from_secs_f64(1.0 / args.fps);
    for frame in &frames {
        sender.send(frame);
        std::thread::sleep(pause);
    }
    println!("replayed {} frames", frames.len());
    server.shutdown();
    Ok(())
}
