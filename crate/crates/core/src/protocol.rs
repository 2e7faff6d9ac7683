//! The environment-agnostic protocol contract.
//!
//! A distributed algorithm is written once against two small interfaces
//! and runs unchanged in any environment that can host them:
//!
//! * [`Protocol`] — the events a node reacts to (messages, timers,
//!   telemetry, lifecycle).
//! * [`Provider`] — the actions a node may take (move, communicate,
//!   schedule timers, record variables).
//!
//! The provider is handed into every callback as an argument, never
//! stored, so a protocol cannot act outside a callback — the borrow
//! checker enforces what other implementations police at run time. The
//! glue that routes a concrete environment's events into these callbacks
//! lives elsewhere: [`crate::runtime`] binds protocols to the full
//! simulator, [`crate::mock`] to a scripted test environment.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EventHandle;
use crate::time::SimTime;

/// Identity of a node, unique within one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Euclidean position in meters, right-handed, ground plane at z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const ORIGIN: Position = Position { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn add(&self, other: &Position) -> Position {
        Position::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }
}

/// Geographic coordinate, converted to local Euclidean space at command
/// time (see [`geo_to_local`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    /// Degrees in [-90, 90].
    pub latitude: f64,
    /// Degrees in [-180, 180].
    pub longitude: f64,
    /// Meters.
    pub altitude: f64,
}

/// Meters per degree of latitude in the equirectangular approximation.
const METERS_PER_DEGREE: f64 = 111_320.0;

/// Equirectangular local-tangent-plane conversion around `reference`:
/// `x = Δlon · cos(lat₀) · 111320`, `y = Δlat · 111320`, `z = altitude`.
pub fn geo_to_local(geo: &GeoPosition, reference: &GeoPosition) -> Position {
    let x = (geo.longitude - reference.longitude)
        * reference.latitude.to_radians().cos()
        * METERS_PER_DEGREE;
    let y = (geo.latitude - reference.latitude) * METERS_PER_DEGREE;
    Position::new(x, y, geo.altitude)
}

/// Mobility status pushed to a protocol at every telemetry tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Telemetry {
    pub current_position: Position,
    pub timestamp: SimTime,
}

/// Movement primitives a protocol may issue.
#[derive(Debug, Clone, PartialEq)]
pub enum MobilityCommand {
    GotoCoords(Position),
    GotoGeoCoords(GeoPosition),
    /// Meters per second, strictly positive.
    SetSpeed(f64),
}

/// Communication primitives a protocol may issue. Payloads are opaque to
/// the environment; protocols that need a sender identity embed it in the
/// payload.
#[derive(Debug, Clone, PartialEq)]
pub enum CommunicationCommand {
    Send { target: NodeId, payload: Vec<u8> },
    Broadcast { payload: Vec<u8> },
}

/// Either kind of command, as accepted by [`Provider::send_command`].
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Mobility(MobilityCommand),
    Communication(CommunicationCommand),
}

impl From<MobilityCommand> for Command {
    fn from(cmd: MobilityCommand) -> Self {
        Command::Mobility(cmd)
    }
}

impl From<CommunicationCommand> for Command {
    fn from(cmd: CommunicationCommand) -> Self {
        Command::Communication(cmd)
    }
}

/// Opaque timer label chosen by the protocol. A protocol may hold many
/// pending timers with equal or distinct tags.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TimerTag(Vec<u8>);

impl TimerTag {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        TimerTag(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl From<&str> for TimerTag {
    fn from(s: &str) -> Self {
        TimerTag(s.as_bytes().to_vec())
    }
}

/// Value of a variable marked for tracking; exported in telemetry frames
/// and the final report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TrackedValue {
    Number(f64),
    Text(String),
}

impl From<f64> for TrackedValue {
    fn from(v: f64) -> Self {
        TrackedValue::Number(v)
    }
}

impl From<u64> for TrackedValue {
    fn from(v: u64) -> Self {
        TrackedValue::Number(v as f64)
    }
}

impl From<&str> for TrackedValue {
    fn from(v: &str) -> Self {
        TrackedValue::Text(v.to_string())
    }
}

impl TrackedValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            TrackedValue::Number(n) => Some(*n),
            TrackedValue::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum CommandError {
    #[error("message payload must be non-empty")]
    EmptyPayload,
    #[error("speed must be strictly positive, got {0}")]
    InvalidSpeed(f64),
    #[error("goto target must be finite")]
    NonFiniteTarget,
    #[error("no geographic reference origin configured for this scenario")]
    MissingReference,
    #[error("unknown target node {0}")]
    UnknownTarget(NodeId),
    #[error("timer scheduled at {at} in the past of {now}")]
    TimerInPast { at: SimTime, now: SimTime },
}

/// Capabilities injected into a protocol, valid only for the duration of
/// the callback that received them.
pub trait Provider {
    /// Issues a mobility or communication command to the environment.
    fn send_command(&mut self, command: Command) -> Result<(), CommandError>;

    /// Schedules `on_timer_fired(tag)` at `fire_at` (which may equal the
    /// current time). Returns a handle usable with [`cancel_timer`].
    ///
    /// [`cancel_timer`]: Provider::cancel_timer
    fn schedule_timer(&mut self, tag: TimerTag, fire_at: SimTime) -> Result<EventHandle, CommandError>;

    /// True iff the timer was pending and will now never fire.
    fn cancel_timer(&mut self, handle: EventHandle) -> bool;

    fn current_time(&self) -> SimTime;

    fn own_id(&self) -> NodeId;

    /// Latest value per name is retained per node and exported in
    /// telemetry frames and the final report.
    fn record_tracked_variable(&mut self, name: &str, value: TrackedValue);

    /// The environment's deterministic randomness source.
    fn rng(&mut self) -> &mut dyn RngCore;
}

/// Convenience wrappers over [`Provider::send_command`].
pub trait ProviderExt: Provider {
    fn goto(&mut self, target: Position) -> Result<(), CommandError> {
        self.send_command(MobilityCommand::GotoCoords(target).into())
    }

    fn set_speed(&mut self, speed: f64) -> Result<(), CommandError> {
        self.send_command(MobilityCommand::SetSpeed(speed).into())
    }

    fn broadcast(&mut self, payload: Vec<u8>) -> Result<(), CommandError> {
        self.send_command(CommunicationCommand::Broadcast { payload }.into())
    }

    fn send_to(&mut self, target: NodeId, payload: Vec<u8>) -> Result<(), CommandError> {
        self.send_command(CommunicationCommand::Send { target, payload }.into())
    }
}

impl<P: Provider + ?Sized> ProviderExt for P {}

/// The callbacks a protocol implements. All have empty defaults so a
/// protocol only spells out what it reacts to.
///
/// Ordering contract per node: `on_initialize` is strictly first,
/// `on_finish` strictly last, nothing after `on_finish`.
#[allow(unused_variables)]
pub trait Protocol {
    fn on_initialize(&mut self, provider: &mut dyn Provider) {}

    /// A message arrived. `payload` is exactly the bytes some node sent;
    /// the environment does not reveal the sender.
    fn on_message_received(&mut self, provider: &mut dyn Provider, payload: &[u8]) {}

    fn on_timer_fired(&mut self, provider: &mut dyn Provider, tag: &TimerTag) {}

    fn on_telemetry(&mut self, provider: &mut dyn Provider, telemetry: &Telemetry) {}

    fn on_finish(&mut self, provider: &mut dyn Provider) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geo_identity_maps_to_origin() {
        let r = GeoPosition { latitude: 10.0, longitude: 20.0, altitude: 0.0 };
        let p = geo_to_local(&r, &r);
        assert_eq!(p, Position::ORIGIN);
    }

    #[test]
    fn geo_latitude_degree_fraction() {
        // 0.001 deg of latitude at the equator: 0.001 * 111320 = 111.32 m.
        let r = GeoPosition { latitude: 0.0, longitude: 0.0, altitude: 0.0 };
        let g = GeoPosition { latitude: 0.001, longitude: 0.0, altitude: 0.0 };
        let p = geo_to_local(&g, &r);
        assert!((p.x).abs() < 1e-9);
        assert!((p.y - 111.32).abs() < 0.01, "y = {}", p.y);
        assert_eq!(p.z, 0.0);
    }

    #[test]
    fn geo_longitude_shrinks_with_latitude() {
        // 0.002 deg of longitude at 60N: 0.002 * cos(60deg) * 111320 = 111.32 m.
        let r = GeoPosition { latitude: 60.0, longitude: 0.0, altitude: 0.0 };
        let g = GeoPosition { latitude: 60.0, longitude: 0.002, altitude: 0.0 };
        let p = geo_to_local(&g, &r);
        assert!((p.x - 111.32).abs() < 0.01, "x = {}", p.x);
        assert!(p.y.abs() < 1e-9);
    }

    #[test]
    fn distance_is_euclidean() {
        let a = Position::new(0.0, 0.0, 0.0);
        let b = Position::new(30.0, 40.0, 0.0);
        assert_eq!(a.distance(&b), 50.0);
    }

    #[test]
    fn timer_tags_compare_by_content() {
        assert_eq!(TimerTag::from("heartbeat"), TimerTag::new(b"heartbeat".to_vec()));
        assert_ne!(TimerTag::from("a"), TimerTag::from("b"));
    }
}
