//! Multi-run experiment execution.
//!
//! Runs `cfg.runs` independent simulations with seeds `seed, seed+1, ...`,
//! samples the ground-station total at every telemetry interval, and
//! averages the runs bin by bin. Runs execute in parallel (each owns its
//! engine and RNG) unless frames are being streamed, in which case they
//! go sequentially so the stream stays coherent.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{ExecutionMode, RunError, RunStats};
use crate::metrics::{average, write_average_csv, write_run_csv, AverageSample, MetricSample, MetricSeries};
use crate::protocol::NodeId;
use crate::scenario::{build_scenario, ConfigError, ScenarioConfig};
use crate::telemetry::FrameSender;
use crate::time::SimTime;
use crate::zigzag::tracked;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration")]
    Config(Vec<ConfigError>),
    #[error("run {run} failed: {source}")]
    Run { run: u32, source: RunError },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: MetricSeries,
    pub stats: RunStats,
    pub final_collected: u64,
    /// Serialized frames (JSON lines), kept only when recording was
    /// requested.
    pub frames: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub runs: Vec<RunOutput>,
    pub average: Vec<AverageSample>,
    /// Wall-clock time of the whole experiment.
    pub total_wall: Duration,
}

/// Execution options orthogonal to the scenario itself.
#[derive(Default)]
pub struct ExperimentOptions {
    pub mode: ExecutionMode,
    /// Stream frames of every run to a telemetry server.
    pub frame_sender: Option<FrameSender>,
    /// Keep run 0's frames for later replay.
    pub record_run0_frames: bool,
}

/// Runs one simulation and samples its metrics.
pub fn run_single(
    cfg: &ScenarioConfig,
    run_id: u32,
    seed: u64,
    mode: ExecutionMode,
    frame_sender: Option<FrameSender>,
    record_frames: bool,
) -> Result<RunOutput, ExperimentError> {
    let mut sim = build_scenario(cfg, seed, mode).map_err(ExperimentError::Config)?;

    let samples = std::sync::Arc::new(std::sync::Mutex::new(Vec::<MetricSample>::new()));
    let sample_sink = std::sync::Arc::clone(&samples);
    let telemetry_ns = SimTime::from_secs_f64(cfg.telemetry_interval).as_nanos();
    let started = Instant::now();
    sim.add_frame_handler(Box::new(move |frame| {
        // frames may run faster than the sampling cadence in real-time
        // mode; record only telemetry-aligned instants
        let t = SimTime::from_secs_f64(frame.simulation_time);
        if telemetry_ns == 0 || !t.as_nanos().is_multiple_of(telemetry_ns) {
            return;
        }
        let gs = frame
            .tracked_variables
            .get("0")
            .and_then(|vars| vars.get(tracked::COLLECTED))
            .and_then(|v| v.as_f64())
            .unwrap_or(0.0) as u64;
        sample_sink.lock().unwrap().push(MetricSample {
            sim_time: t,
            gs_collected: gs,
            wall_time: started.elapsed().as_secs_f64(),
        });
    }));

    if let Some(sender) = frame_sender {
        sim.add_frame_handler(Box::new(move |frame| sender.send(frame)));
    }

    let recorded = std::sync::Arc::new(std::sync::Mutex::new(Vec::<String>::new()));
    if record_frames {
        let sink = std::sync::Arc::clone(&recorded);
        sim.add_frame_handler(Box::new(move |frame| {
            if let Ok(line) = serde_json::to_string(frame) {
                sink.lock().unwrap().push(line);
            }
        }));
    }

    let stats = sim
        .run(SimTime::from_secs_f64(cfg.duration))
        .map_err(|source| ExperimentError::Run { run: run_id, source })?;

    let final_collected = sim
        .tracked_value(NodeId(0), tracked::COLLECTED)
        .and_then(|v| v.as_f64())
        .unwrap_or(0.0) as u64;

    let samples = std::mem::take(&mut *samples.lock().unwrap());
    let frames = if record_frames {
        Some(std::mem::take(&mut *recorded.lock().unwrap()))
    } else {
        None
    };
    Ok(RunOutput {
        series: MetricSeries { run_id, seed, samples },
        stats,
        final_collected,
        frames,
    })
}

/// Runs the whole experiment: `cfg.runs` simulations plus the average.
pub fn run_experiment(
    cfg: &ScenarioConfig,
    options: &ExperimentOptions,
) -> Result<ExperimentResult, ExperimentError> {
    crate::scenario::validate(cfg).map_err(ExperimentError::Config)?;
    let started = Instant::now();
    let run_ids: Vec<u32> = (0..cfg.runs).collect();

    let run_one = |run_id: &u32| {
        run_single(
            cfg,
            *run_id,
            cfg.seed + u64::from(*run_id),
            options.mode,
            options.frame_sender.clone(),
            options.record_run0_frames && *run_id == 0,
        )
    };

    let outputs: Vec<Result<RunOutput, ExperimentError>> =
        if options.frame_sender.is_some() || options.mode == ExecutionMode::RealTime {
            run_ids.iter().map(run_one).collect()
        } else {
            run_ids.par_iter().map(run_one).collect()
        };

    let mut runs = Vec::with_capacity(outputs.len());
    for output in outputs {
        runs.push(output?);
    }
    let series: Vec<MetricSeries> = runs.iter().map(|r| r.series.clone()).collect();
    Ok(ExperimentResult {
        average: average(&series),
        runs,
        total_wall: started.elapsed(),
    })
}

/// Writes `run_{k}.csv`, `average.csv` and (when recorded)
/// `frames.jsonl` into `dir`. Returns the written paths.
pub fn write_outputs(dir: &Path, result: &ExperimentResult) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for run in &result.runs {
        let path = dir.join(format!("run_{}.csv", run.series.run_id));
        write_run_csv(fs::File::create(&path)?, &run.series)?;
        written.push(path);
    }
    let path = dir.join("average.csv");
    write_average_csv(fs::File::create(&path)?, &result.average)?;
    written.push(path);
    if let Some(frames) = result.runs.first().and_then(|r| r.frames.as_ref()) {
        let path = dir.join("frames.jsonl");
        fs::write(&path, frames.join("\n") + "\n")?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Preset;

    fn quick_cfg() -> ScenarioConfig {
        ScenarioConfig { duration: 300.0, runs: 2, ..Preset::Small.config() }
    }

    #[test]
    fn experiment_runs_are_deterministic_per_seed() {
        let cfg = quick_cfg();
        let a = run_experiment(&cfg, &ExperimentOptions::default()).unwrap();
        let b = run_experiment(&cfg, &ExperimentOptions::default()).unwrap();
        for (ra, rb) in a.runs.iter().zip(&b.runs) {
            assert_eq!(ra.series.seed, rb.series.seed);
            let strip = |s: &MetricSeries| {
                s.samples.iter().map(|x| (x.sim_time, x.gs_collected)).collect::<Vec<_>>()
            };
            assert_eq!(strip(&ra.series), strip(&rb.series));
        }
    }

    #[test]
    fn series_satisfy_invariants_and_sample_every_interval() {
        let cfg = ScenarioConfig { duration: 120.0, runs: 1, ..Preset::Small.config() };
        let result = run_experiment(&cfg, &ExperimentOptions::default()).unwrap();
        let series = &result.runs[0].series;
        series.check_invariants().unwrap();
        assert_eq!(series.samples.len(), 120);
        assert_eq!(series.samples[0].sim_time, SimTime::from_secs(1));
        assert_eq!(series.samples.last().unwrap().sim_time, SimTime::from_secs(120));
    }

    #[test]
    fn single_run_average_equals_the_run() {
        let cfg = ScenarioConfig { runs: 1, duration: 60.0, ..Preset::Small.config() };
        let result = run_experiment(&cfg, &ExperimentOptions::default()).unwrap();
        for (avg, sample) in result.average.iter().zip(&result.runs[0].series.samples) {
            assert_eq!(avg.gs_collected, sample.gs_collected as f64);
        }
    }

    #[test]
    fn outputs_land_on_disk() {
        let dir = std::env::temp_dir().join(format!("mulesim-test-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let cfg = ScenarioConfig { duration: 30.0, runs: 2, ..Preset::Small.config() };
        let options = ExperimentOptions { record_run0_frames: true, ..Default::default() };
        let result = run_experiment(&cfg, &options).unwrap();
        let written = write_outputs(&dir, &result).unwrap();
        assert!(dir.join("run_0.csv").exists());
        assert!(dir.join("run_1.csv").exists());
        assert!(dir.join("average.csv").exists());
        assert!(dir.join("frames.jsonl").exists());
        assert_eq!(written.len(), 4);
        let text = fs::read_to_string(dir.join("run_0.csv")).unwrap();
        assert!(text.starts_with("run,seed,sim_time,gs_collected,wall_time\n"));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn invalid_config_is_rejected_with_field_errors() {
        let mut cfg = quick_cfg();
        cfg.medium.drop_probability = 1.5;
        match run_experiment(&cfg, &ExperimentOptions::default()) {
            Err(ExperimentError::Config(errors)) => {
                assert!(errors.iter().any(|e| e.field == "medium.drop_probability"));
            }
            other => panic!("expected config error, got {:?}", other.map(|_| ())),
        }
    }
}
