//! mulesim: a discrete-event simulation framework for distributed
//! algorithms running on mobile, communicating nodes.
//!
//! Algorithms are written once as [`protocol::Protocol`] implementations
//! against the environment-agnostic [`protocol::Provider`] capability
//! surface, then run unchanged under the full simulator
//! ([`runtime::Simulation`]) or a scripted test harness
//! ([`mock::MockEnvironment`]).
//!
//! The crate ships a reference data-ferrying algorithm ([`zigzag`]):
//! UAVs patrol a line of sensors, collect readings via heartbeats, and
//! relay them to a ground station through pairwise exchange handshakes.
//! The [`scenario`] and [`experiment`] modules reproduce the associated
//! multi-run data-collection experiments, with CSV metrics and live
//! WebSocket telemetry ([`telemetry`]).
//!
//! ```
//! use mulesim::engine::ExecutionMode;
//! use mulesim::scenario::{build_scenario, Preset, ScenarioConfig};
//! use mulesim::time::SimTime;
//!
//! let cfg = ScenarioConfig { duration: 120.0, ..Preset::Small.config() };
//! let mut sim = build_scenario(&cfg, cfg.seed, ExecutionMode::Fast).unwrap();
//! let stats = sim.run(SimTime::from_secs_f64(cfg.duration)).unwrap();
//! assert_eq!(stats.final_time, SimTime::from_secs(120));
//! ```

pub mod engine;
pub mod experiment;
pub mod medium;
pub mod metrics;
pub mod mobility;
pub mod mock;
pub mod plugins;
pub mod protocol;
pub mod runtime;
pub mod scenario;
pub mod telemetry;
pub mod time;
pub mod zigzag;

pub use engine::{EventEngine, EventHandle, ExecutionMode, RunStats};
pub use medium::MediumConfig;
pub use protocol::{
    Command, CommandError, CommunicationCommand, GeoPosition, MobilityCommand, NodeId, Position,
    Protocol, Provider, ProviderExt, Telemetry, TimerTag, TrackedValue,
};
pub use runtime::{Simulation, SimulationConfig};
pub use scenario::{Preset, ScenarioConfig};
pub use telemetry::TelemetryFrame;
pub use time::SimTime;
