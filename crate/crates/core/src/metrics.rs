//! Collected time series and CSV export.
//!
//! Each run samples `(sim_time, gs_collected, wall_time)` at every
//! telemetry interval. Runs of one experiment share identical sample
//! times, so the cross-run average is a per-bin mean with no
//! interpolation. CSV numbers are formatted from integers (or with a
//! fixed precision), making per-run files byte-identical across machines
//! for the same config and seed — except the wall_time column, which is
//! real measured time.

use std::io::Write;

use crate::time::SimTime;

/// One sampled point of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub sim_time: SimTime,
    /// Ground-station total at this instant.
    pub gs_collected: u64,
    /// Wall-clock seconds elapsed since the run started.
    pub wall_time: f64,
}

/// The full series of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub run_id: u32,
    pub seed: u64,
    pub samples: Vec<MetricSample>,
}

impl MetricSeries {
    /// Checks the series invariants: strictly increasing sim_time,
    /// nondecreasing gs_collected and wall_time.
    pub fn check_invariants(&self) -> Result<(), String> {
        for pair in self.samples.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.sim_time <= a.sim_time {
                return Err(format!(
                    "sim_time not strictly increasing at {} -> {}",
                    a.sim_time, b.sim_time
                ));
            }
            if b.gs_collected < a.gs_collected {
                return Err(format!(
                    "gs_collected decreased at {}: {} -> {}",
                    b.sim_time, a.gs_collected, b.gs_collected
                ));
            }
            if b.wall_time < a.wall_time {
                return Err(format!(
                    "wall_time decreased at {}: {} -> {}",
                    b.sim_time, a.wall_time, b.wall_time
                ));
            }
        }
        Ok(())
    }
}

/// Per-time-bin mean across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageSample {
    pub sim_time: SimTime,
    pub gs_collected: f64,
    pub wall_time: f64,
}

/// Averages runs bin by bin. All series must share identical sample
/// times, which holds by construction for runs of one experiment.
pub fn average(series: &[MetricSeries]) -> Vec<AverageSample> {
    let first = match series.first() {
        Some(first) => first,
        None => return Vec::new(),
    };
    let n = series.len() as f64;
    first
        .samples
        .iter()
        .enumerate()
        .map(|(i, bin)| {
            let mut gs = 0.0;
            let mut wall = 0.0;
            for s in series {
                assert_eq!(
                    s.samples[i].sim_time, bin.sim_time,
                    "runs sampled at different times cannot be averaged"
                );
                gs += s.samples[i].gs_collected as f64;
                wall += s.samples[i].wall_time;
            }
            AverageSample { sim_time: bin.sim_time, gs_collected: gs / n, wall_time: wall / n }
        })
        .collect()
}

pub const RUN_CSV_HEADER: [&str; 5] = ["run", "seed", "sim_time", "gs_collected", "wall_time"];
pub const AVERAGE_CSV_HEADER: [&str; 3] = ["sim_time", "gs_collected", "wall_time"];

/// Writes one run as CSV with columns `run,seed,sim_time,gs_collected,wall_time`.
pub fn write_run_csv<W: Write>(writer: W, series: &MetricSeries) -> csv::Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(RUN_CSV_HEADER)?;
    for s in &series.samples {
        csv.write_record([
            series.run_id.to_string(),
            series.seed.to_string(),
            s.sim_time.to_decimal_secs(),
            s.gs_collected.to_string(),
            format!("{:.6}", s.wall_time),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

/// Writes the cross-run average as CSV with columns `sim_time,gs_collected,wall_time`.
pub fn write_average_csv<W: Write>(writer: W, samples: &[AverageSample]) -> csv::Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record(AVERAGE_CSV_HEADER)?;
    for s in samples {
        csv.write_record([
            s.sim_time.to_decimal_secs(),
            format!("{:.6}", s.gs_collected),
            format!("{:.6}", s.wall_time),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
