//! Declarative experiment description and scenario construction.
//!
//! A [`ScenarioConfig`] describes the data-collection scenario: a ground
//! station at the origin, sensors in a line at fixed spacing, UAVs
//! launched one by one from the origin onto a shared patrol mission over
//! the sensors. Three named presets scale the node counts; every knob is
//! exposed in a TOML config file and can be partially overridden.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::engine::ExecutionMode;
use crate::medium::MediumConfig;
use crate::protocol::{GeoPosition, Position};
use crate::runtime::{Simulation, SimulationConfig};
use crate::time::SimTime;
use crate::zigzag::{GroundStationProtocol, SensorProtocol, UavProtocol, ZigZagParams};

pub const GROUND_STATION_COLOR: &str = "#d62728";
pub const SENSOR_COLOR: &str = "#2ca02c";
pub const UAV_COLOR: &str = "#1f77b4";

pub const ROLE_GROUND_STATION: &str = "ground_station";
pub const ROLE_SENSOR: &str = "sensor";
pub const ROLE_UAV: &str = "uav";

/// Complete description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub sensor_count: u32,
    pub uav_count: u32,
    /// Meters between consecutive sensors along the x axis.
    pub sensor_spacing: f64,
    /// Cruise speed applied by each UAV at launch, m/s.
    pub uav_speed: f64,
    /// Seconds between consecutive UAV launches.
    pub stagger_interval: f64,
    /// Simulated seconds per run.
    pub duration: f64,
    /// Base RNG seed; run k uses `seed + k`.
    pub seed: u64,
    /// Independent runs to execute and average.
    pub runs: u32,
    /// Seconds between telemetry updates (and fast-mode frames).
    pub telemetry_interval: f64,
    pub medium: MediumConfig,
    pub zigzag: ZigZagParams,
    /// Origin for geographic GOTO commands, if any protocol uses them.
    pub geo_reference: Option<GeoPosition>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            sensor_count: 5,
            uav_count: 2,
            sensor_spacing: 300.0,
            uav_speed: 10.0,
            stagger_interval: 20.0,
            duration: 3600.0,
            seed: 42,
            runs: 1,
            telemetry_interval: 1.0,
            medium: MediumConfig::default(),
            zigzag: ZigZagParams::default(),
            geo_reference: None,
        }
    }
}

/// The three scenario sizes used throughout the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 5 sensors, 2 UAVs.
    Small,
    /// 15 sensors, 7 UAVs.
    Medium,
    /// 25 sensors, 12 UAVs.
    Large,
}

impl Preset {
    pub fn config(self) -> ScenarioConfig {
        let (sensor_count, uav_count) = match self {
            Preset::Small => (5, 2),
            Preset::Medium => (15, 7),
            Preset::Large => (25, 12),
        };
        ScenarioConfig { sensor_count, uav_count, ..ScenarioConfig::default() }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Small => "small",
            Preset::Medium => "medium",
            Preset::Large => "large",
        }
    }

    pub const ALL: [Preset; 3] = [Preset::Small, Preset::Medium, Preset::Large];
}

impl std::str::FromStr for Preset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(Preset::Small),
            "medium" => Ok(Preset::Medium),
            "large" => Ok(Preset::Large),
            other => Err(format!("unknown preset '{other}' (expected small, medium or large)")),
        }
    }
}

/// A single field-level configuration problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

/// Checks every invariant and reports all violations, not just the first.
pub fn validate(cfg: &ScenarioConfig) -> Result<(), Vec<ConfigError>> {
    let mut errors = Vec::new();
    let mut check = |ok: bool, field: &str, message: String| {
        if !ok {
            errors.push(ConfigError { field: field.to_string(), message });
        }
    };

    let positive = |v: f64| v.is_finite() && v > 0.0;
    let non_negative = |v: f64| v.is_finite() && v >= 0.0;

    check(positive(cfg.sensor_spacing), "sensor_spacing", format!("must be positive (got {})", cfg.sensor_spacing));
    check(positive(cfg.uav_speed), "uav_speed", format!("must be positive (got {})", cfg.uav_speed));
    check(non_negative(cfg.stagger_interval), "stagger_interval", format!("must be non-negative (got {})", cfg.stagger_interval));
    check(positive(cfg.duration), "duration", format!("must be positive (got {})", cfg.duration));
    check(cfg.runs >= 1, "runs", format!("must be at least 1 (got {})", cfg.runs));
    check(positive(cfg.telemetry_interval), "telemetry_interval", format!("must be positive (got {})", cfg.telemetry_interval));

    check(non_negative(cfg.medium.range), "medium.range", format!("must be non-negative (got {})", cfg.medium.range));
    check(non_negative(cfg.medium.delay), "medium.delay", format!("must be non-negative (got {})", cfg.medium.delay));
    check(
        cfg.medium.drop_probability.is_finite()
            && (0.0..=1.0).contains(&cfg.medium.drop_probability),
        "medium.drop_probability",
        format!("must be within [0, 1] (got {})", cfg.medium.drop_probability),
    );
    check(
        positive(cfg.medium.transmission_duration),
        "medium.transmission_duration",
        format!("must be positive (got {})", cfg.medium.transmission_duration),
    );

    check(
        positive(cfg.zigzag.heartbeat_interval),
        "zigzag.heartbeat_interval",
        format!("must be positive (got {})", cfg.zigzag.heartbeat_interval),
    );
    // zero is allowed: it disables the gate, which the interaction-loop
    // demonstration relies on
    check(
        non_negative(cfg.zigzag.interaction_timeout),
        "zigzag.interaction_timeout",
        format!("must be non-negative (got {})", cfg.zigzag.interaction_timeout),
    );
    check(
        positive(cfg.zigzag.pair_confirm_deadline),
        "zigzag.pair_confirm_deadline",
        format!("must be positive (got {})", cfg.zigzag.pair_confirm_deadline),
    );

    if let Some(geo) = &cfg.geo_reference {
        check(
            geo.latitude.is_finite() && (-90.0..=90.0).contains(&geo.latitude),
            "geo_reference.latitude",
            format!("must be within [-90, 90] (got {})", geo.latitude),
        );
        check(
            geo.longitude.is_finite() && (-180.0..=180.0).contains(&geo.longitude),
            "geo_reference.longitude",
            format!("must be within [-180, 180] (got {})", geo.longitude),
        );
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// Sensor k (1-based) sits at `x = spacing * k` on the ground plane.
pub fn sensor_position(cfg: &ScenarioConfig, k: u32) -> Position {
    Position::new(cfg.sensor_spacing * k as f64, 0.0, 0.0)
}

/// The shared UAV patrol route: the ground station's position followed by
/// every sensor in order, so a reversing UAV comes all the way back into
/// ground-station range.
pub fn mission_waypoints(cfg: &ScenarioConfig) -> Vec<Position> {
    let mut waypoints = Vec::with_capacity(cfg.sensor_count as usize + 1);
    waypoints.push(Position::ORIGIN);
    for k in 1..=cfg.sensor_count {
        waypoints.push(sensor_position(cfg, k));
    }
    waypoints
}

/// Builds a ready-to-run simulation: ground station (node 0) at the
/// origin, sensors at 1..=N, UAVs after them, launched one by one at
/// `stagger_interval` spacing.
pub fn build_scenario(cfg: &ScenarioConfig, seed: u64, mode: ExecutionMode) -> Result<Simulation, Vec<ConfigError>> {
    validate(cfg)?;
    let mut sim = Simulation::new(SimulationConfig {
        seed,
        medium: cfg.medium.clone(),
        telemetry_interval: SimTime::from_secs_f64(cfg.telemetry_interval),
        mode,
        geo_reference: cfg.geo_reference,
    });

    sim.add_node(
        ROLE_GROUND_STATION,
        GROUND_STATION_COLOR,
        Position::ORIGIN,
        Box::new(GroundStationProtocol::new(cfg.zigzag.clone())),
    );
    for k in 1..=cfg.sensor_count {
        sim.add_node(
            ROLE_SENSOR,
            SENSOR_COLOR,
            sensor_position(cfg, k),
            Box::new(SensorProtocol::new()),
        );
    }
    let waypoints = mission_waypoints(cfg);
    for k in 1..=cfg.uav_count {
        let launch_at = SimTime::from_secs_f64(cfg.stagger_interval * k as f64);
        sim.add_node(
            ROLE_UAV,
            UAV_COLOR,
            Position::ORIGIN,
            Box::new(UavProtocol::new(cfg.zigzag.clone(), waypoints.clone(), launch_at, cfg.uav_speed)),
        );
    }
    Ok(sim)
}

// ---------------------------------------------------------------------------
// Partial overrides (config file and CLI flags)
// ---------------------------------------------------------------------------

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumOverrides {
    pub range: Option<f64>,
    pub delay: Option<f64>,
    pub drop_probability: Option<f64>,
    pub collision_model: Option<bool>,
    pub transmission_duration: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZigZagOverrides {
    pub heartbeat_interval: Option<f64>,
    pub interaction_timeout: Option<f64>,
    pub offset_mode: Option<crate::zigzag::OffsetMode>,
    pub pair_confirm_deadline: Option<f64>,
}

/// Sparse configuration: only the fields present override the base. Both
/// the TOML config file and the CLI flags deserialize into this.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOverrides {
    pub sensor_count: Option<u32>,
    pub uav_count: Option<u32>,
    pub sensor_spacing: Option<f64>,
    pub uav_speed: Option<f64>,
    pub stagger_interval: Option<f64>,
    pub duration: Option<f64>,
    pub seed: Option<u64>,
    pub runs: Option<u32>,
    pub telemetry_interval: Option<f64>,
    pub medium: MediumOverrides,
    pub zigzag: ZigZagOverrides,
    pub geo_reference: Option<GeoPosition>,
}

impl ScenarioOverrides {
    pub fn parse_toml(text: &str) -> Result<ScenarioOverrides, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError {
            field: "config".to_string(),
            message: e.to_string(),
        })
    }

    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { cfg.$field = v; })*
            };
        }
        set!(sensor_count, uav_count, sensor_spacing, uav_speed, stagger_interval,
             duration, seed, runs, telemetry_interval);
        if let Some(v) = self.medium.range {
            cfg.medium.range = v;
        }
        if let Some(v) = self.medium.delay {
            cfg.medium.delay = v;
        }
        if let Some(v) = self.medium.drop_probability {
            cfg.medium.drop_probability = v;
        }
        if let Some(v) = self.medium.collision_model {
            cfg.medium.collision_model = v;
        }
        if let Some(v) = self.medium.transmission_duration {
            cfg.medium.transmission_duration = v;
        }
        if let Some(v) = self.zigzag.heartbeat_interval {
            cfg.zigzag.heartbeat_interval = v;
        }
        if let Some(v) = self.zigzag.interaction_timeout {
            cfg.zigzag.interaction_timeout = v;
        }
        if let Some(v) = self.zigzag.offset_mode {
            cfg.zigzag.offset_mode = v;
        }
        if let Some(v) = self.zigzag.pair_confirm_deadline {
            cfg.zigzag.pair_confirm_deadline = v;
        }
        if let Some(v) = self.geo_reference {
            cfg.geo_reference = Some(v);
        }
    }
}
