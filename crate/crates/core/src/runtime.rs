//! The full simulation environment.
//!
//! [`Simulation`] is the encapsulator for the discrete-event engine: it
//! routes engine events into protocol callbacks and translates provider
//! calls back into engine, medium and mobility actions. Protocols see
//! only [`Protocol`] and [`Provider`]; everything here is swappable for
//! the mock environment without touching protocol code.
//!
//! Single-threaded by contract: every callback runs on the engine's one
//! logical execution context. Parallelism lives one level up, across
//! independent simulations.

use std::collections::BTreeMap;

use rand::RngCore;

use crate::engine::{EventEngine, ExecutionMode, FiredEvent, RunError, RunStats};
use crate::medium::{Medium, MediumConfig, Transmission, TransmissionKind, TransmitError};
use crate::mobility::{MobilityError, MotionState};
use crate::protocol::{
    geo_to_local, Command, CommandError, CommunicationCommand, GeoPosition, MobilityCommand,
    NodeId, Position, Protocol, Provider, Telemetry, TimerTag, TrackedValue,
};
use crate::telemetry::{FrameNode, TelemetryFrame};
use crate::time::SimTime;

/// Default period of `on_telemetry` callbacks and fast-mode frames.
pub const DEFAULT_TELEMETRY_INTERVAL: SimTime = SimTime::from_millis(1000);

/// Frame cadence in real-time mode: 10 frames per second.
pub const REALTIME_FRAME_INTERVAL: SimTime = SimTime::from_millis(100);

/// Engine-level configuration of one simulation instance.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub seed: u64,
    pub medium: MediumConfig,
    /// Period of `on_telemetry` callbacks.
    pub telemetry_interval: SimTime,
    pub mode: ExecutionMode,
    /// Origin for geographic GOTO commands; absent means geo commands
    /// are rejected.
    pub geo_reference: Option<GeoPosition>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            seed: 0,
            medium: MediumConfig::default(),
            telemetry_interval: DEFAULT_TELEMETRY_INTERVAL,
            mode: ExecutionMode::Fast,
            geo_reference: None,
        }
    }
}

/// Identity, role label and display color of a node.
#[derive(Debug, Clone)]
pub struct NodeRecord {
    pub id: NodeId,
    pub role: String,
    pub color: String,
}

/// One recorded tracked-variable write, in event order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedRecord {
    pub at: SimTime,
    pub node: NodeId,
    pub name: String,
    pub value: TrackedValue,
}

/// Inline hook invoked on every frame emission.
pub type FrameHandler = Box<dyn FnMut(&TelemetryFrame)>;

/// Inline hook invoked on every message delivery, before the protocol
/// callback. Arguments: time, receiver, payload.
pub type DeliveryObserver = Box<dyn FnMut(SimTime, NodeId, &[u8])>;

enum SimEvent {
    Timer { node: usize, tag: TimerTag },
    Deliver { node: usize, payload: Vec<u8> },
    /// Collision-model reception finishing its occupancy window.
    ReceiveComplete { node: usize, payload: Vec<u8>, arrival: SimTime, serial: u64 },
    TelemetryTick { node: usize },
    Frame,
}

pub struct Simulation {
    engine: EventEngine<SimEvent>,
    medium: Medium,
    protocols: Vec<Box<dyn Protocol>>,
    motion: Vec<MotionState>,
    records: Vec<NodeRecord>,
    tracked: Vec<BTreeMap<String, TrackedValue>>,
    history: Vec<TrackedRecord>,
    telemetry_interval: SimTime,
    frame_interval: SimTime,
    geo_reference: Option<GeoPosition>,
    frame_handlers: Vec<FrameHandler>,
    delivery_observer: Option<DeliveryObserver>,
    initialized: bool,
    finished: bool,
}

impl Simulation {
    pub fn new(config: SimulationConfig) -> Self {
        let frame_interval = match config.mode {
            ExecutionMode::Fast => config.telemetry_interval,
            ExecutionMode::RealTime => REALTIME_FRAME_INTERVAL,
        };
        let mut engine = EventEngine::new(config.seed);
        engine.set_mode(config.mode);
        Simulation {
            engine,
            medium: Medium::new(config.medium),
            protocols: Vec::new(),
            motion: Vec::new(),
            records: Vec::new(),
            tracked: Vec::new(),
            history: Vec::new(),
            telemetry_interval: config.telemetry_interval,
            frame_interval,
            geo_reference: config.geo_reference,
            frame_handlers: Vec::new(),
            delivery_observer: None,
            initialized: false,
            finished: false,
        }
    }

    /// Registers a node and binds `protocol` to it. Taking the protocol
    /// by value is the binding: a bound instance cannot be bound twice.
    pub fn add_node(
        &mut self,
        role: &str,
        color: &str,
        position: Position,
        protocol: Box<dyn Protocol>,
    ) -> NodeId {
        assert!(!self.initialized, "nodes must be added before the first run");
        let id = self.medium.register_node();
        self.protocols.push(protocol);
        self.motion.push(MotionState::new(position));
        self.records.push(NodeRecord {
            id,
            role: role.to_string(),
            color: color.to_string(),
        });
        self.tracked.push(BTreeMap::new());
        id
    }

    pub fn add_frame_handler(&mut self, handler: FrameHandler) {
        self.frame_handlers.push(handler);
    }

    pub fn set_delivery_observer(&mut self, observer: DeliveryObserver) {
        self.delivery_observer = Some(observer);
    }

    pub fn node_count(&self) -> usize {
        self.protocols.len()
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub fn node_position(&self, id: NodeId) -> Position {
        self.motion[id.index()].position_at(self.engine.now())
    }

    pub fn records(&self) -> &[NodeRecord] {
        &self.records
    }

    pub fn tracked_value(&self, id: NodeId, name: &str) -> Option<&TrackedValue> {
        self.tracked[id.index()].get(name)
    }

    /// Every tracked-variable write of the run, in event order.
    pub fn tracked_history(&self) -> &[TrackedRecord] {
        &self.history
    }

    pub fn protocol(&self, id: NodeId) -> &dyn Protocol {
        self.protocols[id.index()].as_ref()
    }

    fn ensure_initialized(&mut self) {
        if self.initialized {
            return;
        }
        self.initialized = true;
        let Simulation {
            engine,
            medium,
            protocols,
            motion,
            tracked,
            history,
            geo_reference,
            ..
        } = self;
        for (node, protocol) in protocols.iter_mut().enumerate() {
            let mut provider = SimProvider {
                node,
                engine,
                medium,
                motion,
                tracked,
                history,
                geo_reference,
            };
            protocol.on_initialize(&mut provider);
        }
        for node in 0..self.protocols.len() {
            self.engine
                .schedule(self.telemetry_interval, SimEvent::TelemetryTick { node })
                .expect("initial tick schedule");
        }
        self.engine
            .schedule(self.frame_interval, SimEvent::Frame)
            .expect("initial frame schedule");
    }

    /// Runs the event loop up to `limit` without finalizing, so the run
    /// can be resumed.
    pub fn run_until(&mut self, limit: SimTime) -> Result<RunStats, RunError> {
        assert!(!self.finished, "simulation already finished");
        self.ensure_initialized();
        let Simulation {
            engine,
            medium,
            protocols,
            motion,
            records,
            tracked,
            history,
            telemetry_interval,
            frame_interval,
            geo_reference,
            frame_handlers,
            delivery_observer,
            ..
        } = self;
        engine.run_until(limit, |engine, event| {
            dispatch(
                engine,
                medium,
                protocols,
                motion,
                records,
                tracked,
                history,
                *telemetry_interval,
                *frame_interval,
                geo_reference,
                frame_handlers,
                delivery_observer,
                event,
            )
        })
    }

    /// Delivers `on_finish` to every node, in id order. No callbacks run
    /// after this.
    pub fn finish(&mut self) {
        assert!(self.initialized, "cannot finish before running");
        if self.finished {
            return;
        }
        self.finished = true;
        let Simulation {
            engine,
            medium,
            protocols,
            motion,
            tracked,
            history,
            geo_reference,
            ..
        } = self;
        for (node, protocol) in protocols.iter_mut().enumerate() {
            let mut provider = SimProvider {
                node,
                engine,
                medium,
                motion,
                tracked,
                history,
                geo_reference,
            };
            protocol.on_finish(&mut provider);
        }
    }

    /// Runs the whole lifecycle: events up to `duration`, then `on_finish`.
    pub fn run(&mut self, duration: SimTime) -> Result<RunStats, RunError> {
        let stats = self.run_until(duration)?;
        self.finish();
        Ok(stats)
    }
}

fn build_frame(
    now: SimTime,
    motion: &[MotionState],
    records: &[NodeRecord],
    tracked: &[BTreeMap<String, TrackedValue>],
) -> TelemetryFrame {
    let nodes = records
        .iter()
        .enumerate()
        .map(|(i, record)| {
            let p = motion[i].position_at(now);
            FrameNode {
                id: record.id.0,
                role: record.role.clone(),
                position: [p.x, p.y, p.z],
                color: record.color.clone(),
            }
        })
        .collect();
    let tracked_variables = tracked
        .iter()
        .enumerate()
        .map(|(i, vars)| (i.to_string(), vars.clone()))
        .collect();
    TelemetryFrame {
        kind: TelemetryFrame::KIND.to_string(),
        simulation_time: now.as_secs_f64(),
        nodes,
        tracked_variables,
    }
}

#[allow(clippy::too_many_arguments)]
fn dispatch(
    engine: &mut EventEngine<SimEvent>,
    medium: &mut Medium,
    protocols: &mut [Box<dyn Protocol>],
    motion: &mut [MotionState],
    records: &[NodeRecord],
    tracked: &mut [BTreeMap<String, TrackedValue>],
    history: &mut Vec<TrackedRecord>,
    telemetry_interval: SimTime,
    frame_interval: SimTime,
    geo_reference: &Option<GeoPosition>,
    frame_handlers: &mut [FrameHandler],
    delivery_observer: &mut Option<DeliveryObserver>,
    event: FiredEvent<SimEvent>,
) {
    let now = engine.now();
    match event.payload {
        SimEvent::Timer { node, tag } => {
            let mut provider =
                SimProvider { node, engine, medium, motion, tracked, history, geo_reference };
            protocols[node].on_timer_fired(&mut provider, &tag);
        }
        SimEvent::Deliver { node, payload } => {
            if let Some(observer) = delivery_observer {
                observer(now, NodeId(node as u32), &payload);
            }
            let mut provider =
                SimProvider { node, engine, medium, motion, tracked, history, geo_reference };
            protocols[node].on_message_received(&mut provider, &payload);
        }
        SimEvent::ReceiveComplete { node, payload, arrival, serial } => {
            if medium.commit_reception(NodeId(node as u32), arrival, serial) {
                if let Some(observer) = delivery_observer {
                    observer(now, NodeId(node as u32), &payload);
                }
                let mut provider =
                    SimProvider { node, engine, medium, motion, tracked, history, geo_reference };
                protocols[node].on_message_received(&mut provider, &payload);
            }
        }
        SimEvent::TelemetryTick { node } => {
            let telemetry = Telemetry {
                current_position: motion[node].position_at(now),
                timestamp: now,
            };
            let mut provider =
                SimProvider { node, engine, medium, motion, tracked, history, geo_reference };
            protocols[node].on_telemetry(&mut provider, &telemetry);
            engine
                .schedule(now + telemetry_interval, SimEvent::TelemetryTick { node })
                .expect("tick reschedule");
        }
        SimEvent::Frame => {
            let frame = build_frame(now, motion, records, tracked);
            for handler in frame_handlers.iter_mut() {
                handler(&frame);
            }
            engine
                .schedule(now + frame_interval, SimEvent::Frame)
                .expect("frame reschedule");
        }
    }
}

/// Provider implementation backed by the live engine. Exists only for
/// the duration of one callback.
struct SimProvider<'a> {
    node: usize,
    engine: &'a mut EventEngine<SimEvent>,
    medium: &'a mut Medium,
    motion: &'a mut [MotionState],
    tracked: &'a mut [BTreeMap<String, TrackedValue>],
    history: &'a mut Vec<TrackedRecord>,
    geo_reference: &'a Option<GeoPosition>,
}

impl Provider for SimProvider<'_> {
    fn send_command(&mut self, command: Command) -> Result<(), CommandError> {
        match command {
            Command::Mobility(cmd) => {
                let cmd = match cmd {
                    MobilityCommand::GotoGeoCoords(geo) => {
                        let reference =
                            self.geo_reference.as_ref().ok_or(CommandError::MissingReference)?;
                        MobilityCommand::GotoCoords(geo_to_local(&geo, reference))
                    }
                    other => other,
                };
                self.motion[self.node]
                    .apply_command(&cmd, self.engine.now())
                    .map_err(|e| match e {
                        MobilityError::InvalidSpeed(s) => CommandError::InvalidSpeed(s),
                        MobilityError::NonFiniteTarget => CommandError::NonFiniteTarget,
                    })
            }
            Command::Communication(cmd) => {
                let (kind, payload) = match cmd {
                    CommunicationCommand::Send { target, payload } => {
                        (TransmissionKind::Targeted(target), payload)
                    }
                    CommunicationCommand::Broadcast { payload } => {
                        (TransmissionKind::Broadcast, payload)
                    }
                };
                if payload.is_empty() {
                    return Err(CommandError::EmptyPayload);
                }
                let now = self.engine.now();
                let positions: Vec<Position> =
                    self.motion.iter().map(|m| m.position_at(now)).collect();
                let transmission = Transmission {
                    sender: NodeId(self.node as u32),
                    payload,
                    kind,
                    sent_at: now,
                };
                let deliveries = self
                    .medium
                    .transmit(&transmission, &positions, self.engine.rng())
                    .map_err(|TransmitError::UnknownTarget(t)| CommandError::UnknownTarget(t))?;
                let collision = self.medium.config().collision_model;
                let occupancy =
                    SimTime::from_secs_f64(self.medium.config().transmission_duration);
                for delivery in deliveries {
                    let node = delivery.receiver.index();
                    let payload = transmission.payload.clone();
                    let event = if collision {
                        // reception commits once the occupancy window has
                        // passed without interference
                        self.engine.schedule(
                            delivery.arrival + occupancy,
                            SimEvent::ReceiveComplete {
                                node,
                                payload,
                                arrival: delivery.arrival,
                                serial: delivery.serial,
                            },
                        )
                    } else {
                        self.engine
                            .schedule(delivery.arrival, SimEvent::Deliver { node, payload })
                    };
                    event.expect("delivery schedule");
                }
                Ok(())
            }
        }
    }

    fn schedule_timer(
        &mut self,
        tag: TimerTag,
        fire_at: SimTime,
    ) -> Result<crate::engine::EventHandle, CommandError> {
        self.engine
            .schedule(fire_at, SimEvent::Timer { node: self.node, tag })
            .map_err(|crate::engine::ScheduleError::SchedulingInPast { at, now }| {
                CommandError::TimerInPast { at, now }
            })
    }

    fn cancel_timer(&mut self, handle: crate::engine::EventHandle) -> bool {
        self.engine.cancel(handle)
    }

    fn current_time(&self) -> SimTime {
        self.engine.now()
    }

    fn own_id(&self) -> NodeId {
        NodeId(self.node as u32)
    }

    fn record_tracked_variable(&mut self, name: &str, value: TrackedValue) {
        self.tracked[self.node].insert(name.to_string(), value.clone());
        self.history.push(TrackedRecord {
            at: self.engine.now(),
            node: NodeId(self.node as u32),
            name: name.to_string(),
            value,
        });
    }

    fn rng(&mut self) -> &mut dyn RngCore {
        self.engine.rng()
    }
}
