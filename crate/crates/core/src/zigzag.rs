//! The ZigZag data-ferrying protocol.
//!
//! UAVs patrol a shared waypoint mission over a field of sensors,
//! advertising themselves with periodic heartbeat broadcasts. Sensors
//! answer a UAV heartbeat with one unit of data. When two UAVs (or a UAV
//! and the ground station) hear each other, a three-step exchange runs:
//! heartbeat, pair request, pair confirmation. On completion the party
//! nearer the ground station along the mission takes all the data and
//! heads back (reverse); the other is zeroed and heads out (forward).
//! The ground station is a stationary party that always wins the
//! exchange, so data drains toward it.
//!
//! Two empirically motivated guards are built in: after finishing an
//! exchange a node ignores UAV/GS traffic for `interaction_timeout`
//! seconds (otherwise co-located nodes re-pair every heartbeat and never
//! separate), and each node offsets its heartbeat phase by a random
//! fraction of the interval (synchronized heartbeats interfere fatally
//! once the medium models collisions). Both are configurable, mainly so
//! the failure modes they fix can be demonstrated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EventHandle;
use crate::plugins::{LoopPolicy, Mission, MissionDirection};
use crate::protocol::{
    NodeId, Position, Protocol, Provider, ProviderExt, Telemetry, TimerTag, TrackedValue,
};
use crate::time::SimTime;

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageKind {
    Heartbeat = 1,
    SensorData = 2,
    PairRequest = 3,
    PairConfirm = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Uav = 1,
    Sensor = 2,
    GroundStation = 3,
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("message is {0} bytes, expected {WIRE_SIZE}")]
    Length(usize),
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("unknown sender role {0}")]
    UnknownRole(u8),
}

/// Fixed-field little-endian encoding: kind (1), sender (4), role (1),
/// data_count (8), mission_progress (8).
pub const WIRE_SIZE: usize = 22;

/// Every ZigZag exchange is one of these. The sender identity rides in
/// the payload because the environment does not reveal it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZigZagMessage {
    pub kind: MessageKind,
    pub sender: NodeId,
    pub sender_role: Role,
    pub data_count: u64,
    /// Signed progress along the mission: waypoint index plus fractional
    /// leg completion, negated while traveling in reverse. The ground
    /// station sends negative infinity so it always wins an exchange.
    pub mission_progress: f64,
}

impl ZigZagMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(WIRE_SIZE);
        buf.push(self.kind as u8);
        buf.extend_from_slice(&self.sender.0.to_le_bytes());
        buf.push(self.sender_role as u8);
        buf.extend_from_slice(&self.data_count.to_le_bytes());
        buf.extend_from_slice(&self.mission_progress.to_le_bytes());
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<ZigZagMessage, DecodeError> {
        if bytes.len() != WIRE_SIZE {
            return Err(DecodeError::Length(bytes.len()));
        }
        let kind = match bytes[0] {
            1 => MessageKind::Heartbeat,
            2 => MessageKind::SensorData,
            3 => MessageKind::PairRequest,
            4 => MessageKind::PairConfirm,
            other => return Err(DecodeError::UnknownKind(other)),
        };
        let sender = NodeId(u32::from_le_bytes(bytes[1..5].try_into().unwrap()));
        let sender_role = match bytes[5] {
            1 => Role::Uav,
            2 => Role::Sensor,
            3 => Role::GroundStation,
            other => return Err(DecodeError::UnknownRole(other)),
        };
        let data_count = u64::from_le_bytes(bytes[6..14].try_into().unwrap());
        let mission_progress = f64::from_le_bytes(bytes[14..22].try_into().unwrap());
        Ok(ZigZagMessage { kind, sender, sender_role, data_count, mission_progress })
    }
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Phase of the first heartbeat relative to launch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OffsetMode {
    /// Uniform in `[0, heartbeat_interval)`, drawn from the engine RNG.
    #[default]
    Random,
    /// No offset; every node beats on the same phase.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZigZagParams {
    /// Seconds between heartbeat broadcasts.
    pub heartbeat_interval: f64,
    /// Seconds a node stays deaf to UAV/GS traffic after an exchange.
    pub interaction_timeout: f64,
    pub offset_mode: OffsetMode,
    /// Seconds a pair requester waits for the confirmation before giving
    /// up with no state change.
    pub pair_confirm_deadline: f64,
}

impl Default for ZigZagParams {
    fn default() -> Self {
        ZigZagParams {
            heartbeat_interval: 1.0,
            interaction_timeout: 5.0,
            offset_mode: OffsetMode::Random,
            pair_confirm_deadline: 1.0,
        }
    }
}

impl ZigZagParams {
    fn heartbeat_interval_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.heartbeat_interval)
    }

    fn interaction_timeout_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.interaction_timeout)
    }

    fn pair_confirm_deadline_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.pair_confirm_deadline)
    }

    fn draw_offset(&self, rng: &mut dyn rand::RngCore) -> SimTime {
        match self.offset_mode {
            OffsetMode::Zero => SimTime::ZERO,
            OffsetMode::Random => {
                use rand::Rng;
                let interval = self.heartbeat_interval_time().as_nanos();
                if interval == 0 {
                    return SimTime::ZERO;
                }
                SimTime::from_nanos(rng.random_range(0..interval))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pair outcome
// ---------------------------------------------------------------------------

/// One side of a completed exchange as seen on the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairParty {
    pub id: NodeId,
    pub data_count: u64,
    pub progress: f64,
}

/// What a party applies to itself when its exchange commits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairOutcome {
    /// True for the member with smaller signed progress (ties broken by
    /// smaller id): it turns around toward the ground station carrying
    /// everything. The other member continues outward with nothing.
    pub gs_bound: bool,
    pub data_count: u64,
    pub ignore_until: SimTime,
}

/// `reported` is the count this party told the peer in its own request
/// or confirmation: the loser subtracts exactly that amount, so data
/// arriving mid-handshake is neither lost nor duplicated.
pub fn resolve_pair_outcome(
    own: PairParty,
    reported: u64,
    peer: PairParty,
    now: SimTime,
    interaction_timeout: SimTime,
) -> PairOutcome {
    let gs_bound = (own.progress, own.id) < (peer.progress, peer.id);
    let data_count = if gs_bound {
        own.data_count + peer.data_count
    } else {
        own.data_count.saturating_sub(reported)
    };
    PairOutcome { gs_bound, data_count, ignore_until: now + interaction_timeout }
}

// ---------------------------------------------------------------------------
// Shared handshake machinery
// ---------------------------------------------------------------------------

const TIMER_LAUNCH: &[u8] = b"launch";
const TIMER_HEARTBEAT: &[u8] = b"heartbeat";
const TIMER_PAIR_DEADLINE: &[u8] = b"pair-deadline";

#[derive(Debug, Clone, Copy, PartialEq)]
enum Handshake {
    Idle,
    AwaitingConfirm {
        peer: NodeId,
        /// Count sent in our pair request; subtracted if we lose.
        reported: u64,
        deadline: EventHandle,
    },
}

/// Names of the tracked variables the protocols export.
pub mod tracked {
    /// Data units currently held by a UAV.
    pub const DATA_COUNT: &str = "data_count";
    /// Total data units accumulated at the ground station.
    pub const COLLECTED: &str = "collected";
    /// Peer id of the most recently completed exchange.
    pub const PAIRED_WITH: &str = "paired_with";
}

// ---------------------------------------------------------------------------
// UAV
// ---------------------------------------------------------------------------

/// Mobile collector. Inert until its launch timer fires, then patrols the
/// mission, gathers sensor data and trades it through pair exchanges.
pub struct UavProtocol {
    params: ZigZagParams,
    waypoints: Vec<Position>,
    launch_at: SimTime,
    speed: f64,
    launched: bool,
    mission: Option<Mission>,
    data_count: u64,
    handshake: Handshake,
    ignore_until: SimTime,
    last_position: Position,
}

impl UavProtocol {
    pub fn new(
        params: ZigZagParams,
        waypoints: Vec<Position>,
        launch_at: SimTime,
        speed: f64,
    ) -> Self {
        assert!(!waypoints.is_empty(), "UAV mission needs at least one waypoint");
        assert!(speed > 0.0, "UAV speed must be positive");
        UavProtocol {
            params,
            waypoints,
            launch_at,
            speed,
            launched: false,
            mission: None,
            data_count: 0,
            handshake: Handshake::Idle,
            ignore_until: SimTime::ZERO,
            last_position: Position::ORIGIN,
        }
    }

    pub fn data_count(&self) -> u64 {
        self.data_count
    }

    pub fn is_launched(&self) -> bool {
        self.launched
    }

    pub fn ignore_until(&self) -> SimTime {
        self.ignore_until
    }

    pub fn is_awaiting_confirm(&self) -> bool {
        matches!(self.handshake, Handshake::AwaitingConfirm { .. })
    }

    pub fn mission(&self) -> Option<&Mission> {
        self.mission.as_ref()
    }

    /// Signed progress as transmitted: negative while in reverse.
    fn wire_progress(&self) -> f64 {
        match &self.mission {
            None => 0.0,
            Some(m) => {
                let p = m.progress(&self.last_position);
                match m.direction() {
                    MissionDirection::Forward => p,
                    MissionDirection::Reverse => -p,
                }
            }
        }
    }

    fn message(&self, kind: MessageKind, provider: &dyn Provider) -> ZigZagMessage {
        ZigZagMessage {
            kind,
            sender: provider.own_id(),
            sender_role: Role::Uav,
            data_count: self.data_count,
            mission_progress: self.wire_progress(),
        }
    }

    fn send_heartbeat(&mut self, provider: &mut dyn Provider) {
        let hb = self.message(MessageKind::Heartbeat, provider);
        let _ = provider.broadcast(hb.encode());
        let next = provider.current_time() + self.params.heartbeat_interval_time();
        let _ = provider.schedule_timer(TimerTag::new(TIMER_HEARTBEAT), next);
    }

    fn begin_pairing(&mut self, peer: NodeId, provider: &mut dyn Provider) {
        let request = self.message(MessageKind::PairRequest, provider);
        if provider.send_to(peer, request.encode()).is_err() {
            return;
        }
        let deadline_at = provider.current_time() + self.params.pair_confirm_deadline_time();
        if let Ok(deadline) = provider.schedule_timer(TimerTag::new(TIMER_PAIR_DEADLINE), deadline_at) {
            self.handshake = Handshake::AwaitingConfirm {
                peer,
                reported: self.data_count,
                deadline,
            };
        }
    }

    /// Commits the exchange on this side and reorients the mission.
    fn apply_outcome(&mut self, peer: NodeId, outcome: PairOutcome, provider: &mut dyn Provider) {
        self.data_count = outcome.data_count;
        self.ignore_until = outcome.ignore_until;
        self.handshake = Handshake::Idle;
        provider.record_tracked_variable(tracked::DATA_COUNT, self.data_count.into());
        provider.record_tracked_variable(tracked::PAIRED_WITH, TrackedValue::Number(peer.0 as f64));
        let direction = if outcome.gs_bound {
            MissionDirection::Reverse
        } else {
            MissionDirection::Forward
        };
        if let Some(mission) = &mut self.mission {
            mission.set_direction(direction, provider);
        }
    }

}

impl Protocol for UavProtocol {
    fn on_initialize(&mut self, provider: &mut dyn Provider) {
        provider.record_tracked_variable(tracked::DATA_COUNT, 0u64.into());
        let _ = provider.schedule_timer(TimerTag::new(TIMER_LAUNCH), self.launch_at);
    }

    fn on_timer_fired(&mut self, provider: &mut dyn Provider, tag: &TimerTag) {
        match tag.as_bytes() {
            TIMER_LAUNCH => {
                self.launched = true;
                let _ = provider.set_speed(self.speed);
                self.mission = Mission::start(
                    self.waypoints.clone(),
                    LoopPolicy::ReverseAtEnds,
                    provider,
                )
                .ok();
                let offset = self.params.draw_offset(provider.rng());
                let first = provider.current_time() + offset;
                let _ = provider.schedule_timer(TimerTag::new(TIMER_HEARTBEAT), first);
            }
            TIMER_HEARTBEAT => self.send_heartbeat(provider),
            TIMER_PAIR_DEADLINE => {
                // confirmation never came: abort with no state change
                if matches!(self.handshake, Handshake::AwaitingConfirm { .. }) {
                    self.handshake = Handshake::Idle;
                }
            }
            _ => {}
        }
    }

    fn on_telemetry(&mut self, provider: &mut dyn Provider, telemetry: &Telemetry) {
        self.last_position = telemetry.current_position;
        if let Some(mission) = &mut self.mission {
            mission.on_telemetry(telemetry, provider);
        }
    }

    fn on_message_received(&mut self, provider: &mut dyn Provider, payload: &[u8]) {
        let msg = match ZigZagMessage::decode(payload) {
            Ok(msg) => msg,
            Err(_) => return,
        };
        if !self.launched {
            return;
        }
        let now = provider.current_time();

        if msg.kind == MessageKind::SensorData {
            // sensor collection is not a pairing; the ignore gate does not
            // apply to it
            self.data_count += 1;
            provider.record_tracked_variable(tracked::DATA_COUNT, self.data_count.into());
            return;
        }
        if msg.sender_role == Role::Sensor {
            return;
        }
        if now < self.ignore_until {
            return;
        }

        match msg.kind {
            MessageKind::Heartbeat => {
                if self.handshake == Handshake::Idle {
                    self.begin_pairing(msg.sender, provider);
                }
            }
            MessageKind::PairRequest => {
                match self.handshake {
                    Handshake::Idle => {}
                    Handshake::AwaitingConfirm { peer, deadline, .. } if peer == msg.sender => {
                        // both sides heard each other's heartbeat and sent
                        // requests; treat the peer's request as completing
                        // the exchange
                        provider.cancel_timer(deadline);
                    }
                    Handshake::AwaitingConfirm { .. } => return,
                }
                let confirm = self.message(MessageKind::PairConfirm, provider);
                if provider.send_to(msg.sender, confirm.encode()).is_err() {
                    return;
                }
                // commit on confirm send: the count just sent is the amount
                // handed off if we lose
                let own = PairParty {
                    id: provider.own_id(),
                    data_count: self.data_count,
                    progress: self.wire_progress(),
                };
                let peer = PairParty {
                    id: msg.sender,
                    data_count: msg.data_count,
                    progress: msg.mission_progress,
                };
                let outcome = resolve_pair_outcome(
                    own,
                    self.data_count,
                    peer,
                    now,
                    self.params.interaction_timeout_time(),
                );
                self.apply_outcome(msg.sender, outcome, provider);
            }
            MessageKind::PairConfirm => {
                let (peer_id, reported, deadline) = match self.handshake {
                    Handshake::AwaitingConfirm { peer, reported, deadline } if peer == msg.sender => {
                        (peer, reported, deadline)
                    }
                    _ => return, // stale or duplicate confirmation
                };
                provider.cancel_timer(deadline);
                let own = PairParty {
                    id: provider.own_id(),
                    data_count: self.data_count,
                    progress: self.wire_progress(),
                };
                let peer = PairParty {
                    id: peer_id,
                    data_count: msg.data_count,
                    progress: msg.mission_progress,
                };
                let outcome = resolve_pair_outcome(
                    own,
                    reported,
                    peer,
                    now,
                    self.params.interaction_timeout_time(),
                );
                self.apply_outcome(peer_id, outcome, provider);
            }
            MessageKind::SensorData => unreachable!("handled above"),
        }
    }
}

// ---------------------------------------------------------------------------
// Sensor
// ---------------------------------------------------------------------------

/// Stationary sensor: answers every UAV heartbeat with one unit of data.
#[derive(Debug, Default)]
pub struct SensorProtocol {
    responses_sent: u64,
}

impl SensorProtocol {
    pub fn new() -> Self {
        SensorProtocol::default()
    }

    pub fn responses_sent(&self) -> u64 {
        self.responses_sent
    }
}

impl Protocol for SensorProtocol {
    fn on_message_received(&mut self, provider: &mut dyn Provider, payload: &[u8]) {
        let msg = match ZigZagMessage::decode(payload) {
            Ok(msg) => msg,
            Err(_) => return,
        };
        if msg.kind != MessageKind::Heartbeat || msg.sender_role != Role::Uav {
            return;
        }
        let response = ZigZagMessage {
            kind: MessageKind::SensorData,
            sender: provider.own_id(),
            sender_role: Role::Sensor,
            data_count: 1,
            mission_progress: 0.0,
        };
        if provider.send_to(msg.sender, response.encode()).is_ok() {
            self.responses_sent += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Ground station
// ---------------------------------------------------------------------------

/// The stationary sink. Runs the same exchange as a UAV but reports
/// negative-infinite progress, so it always ends up with the data.
pub struct GroundStationProtocol {
    params: ZigZagParams,
    collected: u64,
    handshake: Handshake,
    ignore_until: SimTime,
}

impl GroundStationProtocol {
    pub fn new(params: ZigZagParams) -> Self {
        GroundStationProtocol {
            params,
            collected: 0,
            handshake: Handshake::Idle,
            ignore_until: SimTime::ZERO,
        }
    }

    pub fn collected(&self) -> u64 {
        self.collected
    }

    fn message(&self, kind: MessageKind, provider: &dyn Provider) -> ZigZagMessage {
        ZigZagMessage {
            kind,
            sender: provider.own_id(),
            sender_role: Role::GroundStation,
            data_count: self.collected,
            mission_progress: f64::NEG_INFINITY,
        }
    }

    fn absorb(&mut self, peer: NodeId, peer_count: u64, now: SimTime, provider: &mut dyn Provider) {
        self.collected += peer_count;
        self.ignore_until = now + self.params.interaction_timeout_time();
        self.handshake = Handshake::Idle;
        provider.record_tracked_variable(tracked::COLLECTED, self.collected.into());
        provider.record_tracked_variable(tracked::PAIRED_WITH, TrackedValue::Number(peer.0 as f64));
    }
}

impl Protocol for GroundStationProtocol {
    fn on_initialize(&mut self, provider: &mut dyn Provider) {
        provider.record_tracked_variable(tracked::COLLECTED, 0u64.into());
        let offset = self.params.draw_offset(provider.rng());
        let first = provider.current_time() + offset;
        let _ = provider.schedule_timer(TimerTag::new(TIMER_HEARTBEAT), first);
    }

    fn on_timer_fired(&mut self, provider: &mut dyn Provider, tag: &TimerTag) {
        match tag.as_bytes() {
            TIMER_HEARTBEAT => {
                let hb = self.message(MessageKind::Heartbeat, provider);
                let _ = provider.broadcast(hb.encode());
                let next = provider.current_time() + self.params.heartbeat_interval_time();
                let _ = provider.schedule_timer(TimerTag::new(TIMER_HEARTBEAT), next);
            }
            TIMER_PAIR_DEADLINE => {
                if matches!(self.handshake, Handshake::AwaitingConfirm { .. }) {
                    self.handshake = Handshake::Idle;
                }
            }
            _ => {}
        }
    }

    fn on_message_received(&mut self, provider: &mut dyn Provider, payload: &[u8]) {
        let msg = match ZigZagMessage::decode(payload) {
            Ok(msg) => msg,
            Err(_) => return,
        };
        if msg.sender_role != Role::Uav || msg.kind == MessageKind::SensorData {
            return;
        }
        let now = provider.current_time();
        if now < self.ignore_until {
            return;
        }
        match msg.kind {
            MessageKind::Heartbeat => {
                if self.handshake == Handshake::Idle {
                    let request = self.message(MessageKind::PairRequest, provider);
                    if provider.send_to(msg.sender, request.encode()).is_err() {
                        return;
                    }
                    let deadline_at = now + self.params.pair_confirm_deadline_time();
                    if let Ok(deadline) =
                        provider.schedule_timer(TimerTag::new(TIMER_PAIR_DEADLINE), deadline_at)
                    {
                        self.handshake = Handshake::AwaitingConfirm {
                            peer: msg.sender,
                            reported: self.collected,
                            deadline,
                        };
                    }
                }
            }
            MessageKind::PairRequest => {
                match self.handshake {
                    Handshake::Idle => {}
                    Handshake::AwaitingConfirm { peer, deadline, .. } if peer == msg.sender => {
                        provider.cancel_timer(deadline);
                    }
                    Handshake::AwaitingConfirm { .. } => return,
                }
                let confirm = self.message(MessageKind::PairConfirm, provider);
                if provider.send_to(msg.sender, confirm.encode()).is_err() {
                    return;
                }
                self.absorb(msg.sender, msg.data_count, now, provider);
            }
            MessageKind::PairConfirm => {
                match self.handshake {
                    Handshake::AwaitingConfirm { peer, deadline, .. } if peer == msg.sender => {
                        provider.cancel_timer(deadline);
                        self.absorb(msg.sender, msg.data_count, now, provider);
                    }
                    _ => {}
                }
            }
            MessageKind::SensorData => unreachable!("filtered above"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::{IssuedCommand, MockEnvironment};
    use crate::protocol::{Command, CommunicationCommand, MobilityCommand};
    use proptest::prelude::*;

    fn sent_messages(commands: &[IssuedCommand]) -> Vec<(Option<NodeId>, ZigZagMessage)> {
        commands
            .iter()
            .filter_map(|c| match &c.command {
                Command::Communication(CommunicationCommand::Send { target, payload }) => {
                    Some((Some(*target), ZigZagMessage::decode(payload).unwrap()))
                }
                Command::Communication(CommunicationCommand::Broadcast { payload }) => {
                    Some((None, ZigZagMessage::decode(payload).unwrap()))
                }
                _ => None,
            })
            .collect()
    }

    fn heartbeat_from(sender: u32, role: Role, progress: f64) -> Vec<u8> {
        ZigZagMessage {
            kind: MessageKind::Heartbeat,
            sender: NodeId(sender),
            sender_role: role,
            data_count: 0,
            mission_progress: progress,
        }
        .encode()
    }

    fn sensor_data_from(sender: u32) -> Vec<u8> {
        ZigZagMessage {
            kind: MessageKind::SensorData,
            sender: NodeId(sender),
            sender_role: Role::Sensor,
            data_count: 1,
            mission_progress: 0.0,
        }
        .encode()
    }

    fn zero_offset_params() -> ZigZagParams {
        ZigZagParams { offset_mode: OffsetMode::Zero, ..ZigZagParams::default() }
    }

    fn test_waypoints() -> Vec<Position> {
        vec![Position::ORIGIN, Position::new(300.0, 0.0, 0.0)]
    }

    /// UAV scripted to be launched, mid-leg at x=150 (progress 0.5).
    fn launched_uav(id: u32) -> MockEnvironment<UavProtocol> {
        let uav = UavProtocol::new(zero_offset_params(), test_waypoints(), SimTime::ZERO, 10.0);
        let mut env = MockEnvironment::new(NodeId(id), 1, uav);
        env.initialize();
        env.advance_to(SimTime::ZERO);
        env.deliver_telemetry(Position::ORIGIN);
        env.deliver_telemetry(Position::new(150.0, 0.0, 0.0));
        env.drain_commands();
        env
    }

    #[test]
    fn wire_roundtrip_including_negative_infinity() {
        let msg = ZigZagMessage {
            kind: MessageKind::PairConfirm,
            sender: NodeId(7),
            sender_role: Role::GroundStation,
            data_count: 123_456,
            mission_progress: f64::NEG_INFINITY,
        };
        let bytes = msg.encode();
        assert_eq!(bytes.len(), WIRE_SIZE);
        assert_eq!(ZigZagMessage::decode(&bytes).unwrap(), msg);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert_eq!(ZigZagMessage::decode(&[1, 2, 3]), Err(DecodeError::Length(3)));
        let mut bytes = heartbeat_from(0, Role::Uav, 0.0);
        bytes[0] = 99;
        assert_eq!(ZigZagMessage::decode(&bytes), Err(DecodeError::UnknownKind(99)));
        let mut bytes = heartbeat_from(0, Role::Uav, 0.0);
        bytes[5] = 0;
        assert_eq!(ZigZagMessage::decode(&bytes), Err(DecodeError::UnknownRole(0)));
    }

    proptest! {
        #[test]
        fn wire_roundtrip_is_identity(
            kind in 1u8..=4,
            sender in 0u32..1000,
            role in 1u8..=3,
            count in 0u64..u64::MAX,
            progress in prop::num::f64::NORMAL | prop::num::f64::ZERO,
        ) {
            let mut bytes = vec![kind];
            bytes.extend_from_slice(&sender.to_le_bytes());
            bytes.push(role);
            bytes.extend_from_slice(&count.to_le_bytes());
            bytes.extend_from_slice(&progress.to_le_bytes());
            let msg = ZigZagMessage::decode(&bytes).unwrap();
            prop_assert_eq!(msg.encode(), bytes);
        }
    }

    #[test]
    fn smaller_progress_becomes_gs_bound_with_all_data() {
        let a = PairParty { id: NodeId(1), data_count: 3, progress: 2.4 };
        let b = PairParty { id: NodeId(2), data_count: 5, progress: 2.6 };
        let now = SimTime::from_secs(100);
        let timeout = SimTime::from_secs(5);
        let oa = resolve_pair_outcome(a, 3, b, now, timeout);
        let ob = resolve_pair_outcome(b, 5, a, now, timeout);
        assert!(oa.gs_bound);
        assert_eq!(oa.data_count, 8);
        assert!(!ob.gs_bound);
        assert_eq!(ob.data_count, 0);
        assert_eq!(oa.ignore_until, SimTime::from_secs(105));
        assert_eq!(ob.ignore_until, SimTime::from_secs(105));
    }

    #[test]
    fn equal_progress_tie_breaks_by_smaller_id() {
        let a = PairParty { id: NodeId(1), data_count: 0, progress: 2.5 };
        let b = PairParty { id: NodeId(2), data_count: 0, progress: 2.5 };
        let oa = resolve_pair_outcome(a, 0, b, SimTime::ZERO, SimTime::ZERO);
        let ob = resolve_pair_outcome(b, 0, a, SimTime::ZERO, SimTime::ZERO);
        assert!(oa.gs_bound);
        assert!(!ob.gs_bound);
        // zero counts: directions still decided, counts stay zero
        assert_eq!(oa.data_count, 0);
        assert_eq!(ob.data_count, 0);
    }

    #[test]
    fn sensor_answers_uav_heartbeats_only() {
        let mut env = MockEnvironment::new(NodeId(2), 1, SensorProtocol::new());
        env.initialize();
        env.deliver_message(&heartbeat_from(4, Role::Uav, 1.0));
        env.deliver_message(&heartbeat_from(0, Role::GroundStation, f64::NEG_INFINITY));
        env.deliver_message(&heartbeat_from(5, Role::Uav, 2.0));
        let sent = sent_messages(env.commands());
        assert_eq!(sent.len(), 2);
        assert_eq!(sent[0].0, Some(NodeId(4)));
        assert_eq!(sent[0].1.kind, MessageKind::SensorData);
        assert_eq!(sent[0].1.data_count, 1);
        assert_eq!(sent[1].0, Some(NodeId(5)));
        assert_eq!(env.protocol().responses_sent(), 2);
    }

    #[test]
    fn uav_counts_each_sensor_delivery() {
        let mut env = launched_uav(10);
        for _ in 0..5 {
            env.deliver_message(&sensor_data_from(2));
        }
        assert_eq!(env.protocol().data_count(), 5);
        assert_eq!(env.tracked(tracked::DATA_COUNT).unwrap().as_f64(), Some(5.0));
    }

    #[test]
    fn uav_heartbeats_follow_launch_and_interval() {
        let uav = UavProtocol::new(zero_offset_params(), test_waypoints(), SimTime::from_secs(20), 10.0);
        let mut env = MockEnvironment::new(NodeId(1), 1, uav);
        env.initialize();
        env.advance_to(SimTime::from_secs(22));
        let beats: Vec<SimTime> = env
            .commands()
            .iter()
            .filter(|c| {
                matches!(&c.command,
                    Command::Communication(CommunicationCommand::Broadcast { payload })
                        if ZigZagMessage::decode(payload).unwrap().kind == MessageKind::Heartbeat)
            })
            .map(|c| c.at)
            .collect();
        assert_eq!(
            beats,
            vec![SimTime::from_secs(20), SimTime::from_secs(21), SimTime::from_secs(22)]
        );
    }

    #[test]
    fn random_offsets_are_seed_reproducible() {
        let first_beat = |seed: u64| {
            let uav = UavProtocol::new(
                ZigZagParams::default(),
                test_waypoints(),
                SimTime::ZERO,
                10.0,
            );
            let mut env = MockEnvironment::new(NodeId(1), seed, uav);
            env.initialize();
            env.advance_to(SimTime::from_secs(1));
            sent_messages(env.commands())
                .iter()
                .find(|(_, m)| m.kind == MessageKind::Heartbeat)
                .map(|_| {
                    env.commands()
                        .iter()
                        .find(|c| matches!(&c.command,
                            Command::Communication(CommunicationCommand::Broadcast { .. })))
                        .unwrap()
                        .at
                })
                .unwrap()
        };
        assert_eq!(first_beat(3), first_beat(3));
        assert_ne!(first_beat(3), first_beat(4));
    }

    #[test]
    fn requester_commits_on_confirm() {
        let mut env = launched_uav(10);
        for _ in 0..3 {
            env.deliver_message(&sensor_data_from(2));
        }
        env.advance_to(SimTime::from_secs(30));
        env.deliver_message(&heartbeat_from(11, Role::Uav, 1.4));
        let sent = sent_messages(env.commands());
        let request = sent.iter().find(|(_, m)| m.kind == MessageKind::PairRequest).unwrap();
        assert_eq!(request.0, Some(NodeId(11)));
        assert_eq!(request.1.data_count, 3);
        assert!((request.1.mission_progress - 0.5).abs() < 1e-9);
        assert!(env.protocol().is_awaiting_confirm());

        // peer confirms with its own load; our progress 0.5 < 1.4 so we
        // turn around carrying everything
        let confirm = ZigZagMessage {
            kind: MessageKind::PairConfirm,
            sender: NodeId(11),
            sender_role: Role::Uav,
            data_count: 5,
            mission_progress: 1.4,
        };
        env.drain_commands();
        env.deliver_message(&confirm.encode());
        assert_eq!(env.protocol().data_count(), 8);
        assert!(!env.protocol().is_awaiting_confirm());
        assert_eq!(env.protocol().ignore_until(), SimTime::from_secs(35));
        assert_eq!(
            env.protocol().mission().unwrap().direction(),
            MissionDirection::Reverse
        );
        assert_eq!(env.tracked(tracked::PAIRED_WITH).unwrap().as_f64(), Some(11.0));
        // reversing reissued a GOTO toward the previous waypoint
        let gotos: Vec<Position> = env
            .commands()
            .iter()
            .filter_map(|c| match &c.command {
                Command::Mobility(MobilityCommand::GotoCoords(p)) => Some(*p),
                _ => None,
            })
            .collect();
        assert_eq!(gotos, vec![Position::ORIGIN]);
    }

    #[test]
    fn responder_commits_on_confirm_send_and_loses_to_smaller_progress() {
        let mut env = launched_uav(10);
        for _ in 0..3 {
            env.deliver_message(&sensor_data_from(2));
        }
        env.advance_to(SimTime::from_secs(30));
        // peer is nearer the ground station (progress 0.1 < 0.5)
        let request = ZigZagMessage {
            kind: MessageKind::PairRequest,
            sender: NodeId(11),
            sender_role: Role::Uav,
            data_count: 7,
            mission_progress: 0.1,
        };
        env.deliver_message(&request.encode());
        let sent = sent_messages(env.commands());
        let confirm = sent.iter().find(|(_, m)| m.kind == MessageKind::PairConfirm).unwrap();
        assert_eq!(confirm.0, Some(NodeId(11)));
        assert_eq!(confirm.1.data_count, 3);
        // we lost: zeroed and heading outward
        assert_eq!(env.protocol().data_count(), 0);
        assert_eq!(
            env.protocol().mission().unwrap().direction(),
            MissionDirection::Forward
        );
        assert_eq!(env.protocol().ignore_until(), SimTime::from_secs(35));
    }

    #[test]
    fn request_from_other_peer_while_awaiting_is_dropped() {
        let mut env = launched_uav(10);
        env.deliver_message(&heartbeat_from(11, Role::Uav, 1.4));
        assert!(env.protocol().is_awaiting_confirm());
        env.drain_commands();
        let request = ZigZagMessage {
            kind: MessageKind::PairRequest,
            sender: NodeId(12),
            sender_role: Role::Uav,
            data_count: 7,
            mission_progress: 0.1,
        };
        env.deliver_message(&request.encode());
        assert!(sent_messages(env.commands()).is_empty());
        assert!(env.protocol().is_awaiting_confirm());
    }

    #[test]
    fn mutual_requests_complete_the_exchange_once() {
        let mut env = launched_uav(10);
        env.deliver_message(&sensor_data_from(2));
        env.deliver_message(&heartbeat_from(11, Role::Uav, 1.4));
        assert!(env.protocol().is_awaiting_confirm());
        // the same peer requested us in parallel: completes the exchange
        let request = ZigZagMessage {
            kind: MessageKind::PairRequest,
            sender: NodeId(11),
            sender_role: Role::Uav,
            data_count: 4,
            mission_progress: 1.4,
        };
        env.deliver_message(&request.encode());
        assert!(!env.protocol().is_awaiting_confirm());
        assert_eq!(env.protocol().data_count(), 5);
        // the peer's confirmation straggling in later changes nothing
        let late_confirm = ZigZagMessage {
            kind: MessageKind::PairConfirm,
            sender: NodeId(11),
            sender_role: Role::Uav,
            data_count: 4,
            mission_progress: 1.4,
        };
        env.deliver_message(&late_confirm.encode());
        assert_eq!(env.protocol().data_count(), 5);
    }

    #[test]
    fn lost_confirmation_times_out_with_no_state_change() {
        let mut env = launched_uav(10);
        for _ in 0..3 {
            env.deliver_message(&sensor_data_from(2));
        }
        env.advance_to(SimTime::from_secs(30));
        env.deliver_message(&heartbeat_from(11, Role::Uav, 1.4));
        assert!(env.protocol().is_awaiting_confirm());
        let direction_before = env.protocol().mission().unwrap().direction();
        // the confirmation never arrives
        env.advance_to(SimTime::from_secs(32));
        assert!(!env.protocol().is_awaiting_confirm());
        assert_eq!(env.protocol().data_count(), 3);
        assert_eq!(env.protocol().mission().unwrap().direction(), direction_before);
        assert_eq!(env.protocol().ignore_until(), SimTime::ZERO);
        // a confirm arriving after the deadline is stale
        let confirm = ZigZagMessage {
            kind: MessageKind::PairConfirm,
            sender: NodeId(11),
            sender_role: Role::Uav,
            data_count: 5,
            mission_progress: 1.4,
        };
        env.deliver_message(&confirm.encode());
        assert_eq!(env.protocol().data_count(), 3);
    }

    #[test]
    fn ignore_gate_blocks_pairing_but_not_sensor_data() {
        let mut env = launched_uav(10);
        env.advance_to(SimTime::from_secs(30));
        // complete an exchange to arm the gate (ignore until t=35)
        let request = ZigZagMessage {
            kind: MessageKind::PairRequest,
            sender: NodeId(11),
            sender_role: Role::Uav,
            data_count: 0,
            mission_progress: 0.1,
        };
        env.deliver_message(&request.encode());
        assert_eq!(env.protocol().ignore_until(), SimTime::from_secs(35));
        env.drain_commands();

        // just inside the gate: ignored
        env.advance_to(SimTime::from_secs_f64(34.9));
        env.deliver_message(&request.encode());
        assert!(sent_messages(env.commands()).iter().all(|(_, m)| m.kind == MessageKind::Heartbeat));
        // sensor data is exempt
        env.deliver_message(&sensor_data_from(2));
        assert_eq!(env.protocol().data_count(), 1);

        // just past the gate: handled again
        env.advance_to(SimTime::from_secs_f64(35.1));
        env.deliver_message(&request.encode());
        assert!(sent_messages(env.commands())
            .iter()
            .any(|(_, m)| m.kind == MessageKind::PairConfirm));
    }

    #[test]
    fn heartbeats_continue_while_gated() {
        let mut env = launched_uav(10);
        env.advance_to(SimTime::from_secs(30));
        let request = ZigZagMessage {
            kind: MessageKind::PairRequest,
            sender: NodeId(11),
            sender_role: Role::Uav,
            data_count: 0,
            mission_progress: 0.1,
        };
        env.deliver_message(&request.encode());
        env.drain_commands();
        env.advance_to(SimTime::from_secs(33));
        let beats = sent_messages(env.commands())
            .iter()
            .filter(|(_, m)| m.kind == MessageKind::Heartbeat)
            .count();
        assert_eq!(beats, 3, "outbound heartbeats are not suppressed by the gate");
    }

    #[test]
    fn ground_station_always_absorbs() {
        let mut env = MockEnvironment::new(NodeId(0), 1, GroundStationProtocol::new(zero_offset_params()));
        env.initialize();
        env.advance_to(SimTime::from_secs(10));
        // first hand-off: 10 units
        let request = ZigZagMessage {
            kind: MessageKind::PairRequest,
            sender: NodeId(5),
            sender_role: Role::Uav,
            data_count: 10,
            mission_progress: 0.2,
        };
        env.deliver_message(&request.encode());
        assert_eq!(env.protocol().collected(), 10);
        let sent = sent_messages(env.commands());
        let confirm = sent.iter().find(|(_, m)| m.kind == MessageKind::PairConfirm).unwrap();
        assert_eq!(confirm.1.mission_progress, f64::NEG_INFINITY);

        // second hand-off after the gate lifts: accumulates
        env.advance_to(SimTime::from_secs(20));
        let request = ZigZagMessage {
            kind: MessageKind::PairRequest,
            sender: NodeId(6),
            sender_role: Role::Uav,
            data_count: 8,
            mission_progress: 0.2,
        };
        env.deliver_message(&request.encode());
        assert_eq!(env.protocol().collected(), 18);
        assert_eq!(env.tracked(tracked::COLLECTED).unwrap().as_f64(), Some(18.0));

        // zero-count hand-off leaves the total unchanged
        env.advance_to(SimTime::from_secs(30));
        let request = ZigZagMessage {
            kind: MessageKind::PairRequest,
            sender: NodeId(7),
            sender_role: Role::Uav,
            data_count: 0,
            mission_progress: 0.2,
        };
        env.deliver_message(&request.encode());
        assert_eq!(env.protocol().collected(), 18);
    }

    #[test]
    fn ground_station_responds_to_uav_heartbeat_with_request() {
        let mut env = MockEnvironment::new(NodeId(0), 1, GroundStationProtocol::new(zero_offset_params()));
        env.initialize();
        env.advance_to(SimTime::from_secs(3));
        env.deliver_message(&heartbeat_from(5, Role::Uav, 0.3));
        let sent = sent_messages(env.commands());
        let request = sent.iter().find(|(_, m)| m.kind == MessageKind::PairRequest).unwrap();
        assert_eq!(request.0, Some(NodeId(5)));
        assert_eq!(request.1.mission_progress, f64::NEG_INFINITY);
    }

    #[test]
    fn unlaunched_uav_ignores_everything() {
        let uav = UavProtocol::new(zero_offset_params(), test_waypoints(), SimTime::from_secs(100), 10.0);
        let mut env = MockEnvironment::new(NodeId(1), 1, uav);
        env.initialize();
        env.advance_to(SimTime::from_secs(5));
        env.deliver_message(&heartbeat_from(0, Role::GroundStation, f64::NEG_INFINITY));
        env.deliver_message(&sensor_data_from(2));
        assert_eq!(env.protocol().data_count(), 0);
        assert!(sent_messages(env.commands()).is_empty());
    }
}
