//! The communication environment.
//!
//! Decides which transmissions are delivered, when, and whether they are
//! dropped. The base model is purely geometric: a message reaches every
//! recipient within `range` meters of the sender at send time, after a
//! fixed `delay`, unless an independent Bernoulli draw drops it.
//!
//! The optional collision model adds interference at desk scale: each
//! message occupies its receiver for `transmission_duration` seconds from
//! arrival, any two occupancy windows that overlap kill both messages,
//! and a node busy transmitting cannot receive (half-duplex). It is an
//! interval-overlap approximation, not a radio model — enough to surface
//! the synchronized-heartbeat failure mode that range-only delivery
//! hides.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{NodeId, Position};
use crate::time::SimTime;

/// Communication environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediumConfig {
    /// Communication range in meters (boundary inclusive).
    pub range: f64,
    /// Fixed propagation delay in seconds.
    pub delay: f64,
    /// Probability in [0, 1] that an in-range message is dropped.
    pub drop_probability: f64,
    /// Enables the collision-window model.
    pub collision_model: bool,
    /// Receiver occupancy per message in seconds; used only when
    /// `collision_model` is on.
    pub transmission_duration: f64,
}

impl Default for MediumConfig {
    fn default() -> Self {
        MediumConfig {
            range: 50.0,
            delay: 0.0,
            drop_probability: 0.0,
            collision_model: false,
            transmission_duration: 0.010,
        }
    }
}

/// Whom a transmission is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransmissionKind {
    Targeted(NodeId),
    Broadcast,
}

/// A message handed to the medium at send time.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub sender: NodeId,
    pub payload: Vec<u8>,
    pub kind: TransmissionKind,
    pub sent_at: SimTime,
}

/// One surviving recipient of a transmission. `arrival` is always
/// `sent_at + delay`; with the collision model on the delivery is only
/// committed once the occupancy window has passed without interference.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub receiver: NodeId,
    pub arrival: SimTime,
    pub serial: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum TransmitError {
    #[error("unknown target node {0}")]
    UnknownTarget(NodeId),
}

/// True iff the Euclidean distance between `a` and `b` is at most
/// `range`. The boundary counts as in range.
pub fn in_range(a: &Position, b: &Position, range: f64) -> bool {
    a.distance(b) <= range
}

#[derive(Debug, Default)]
struct ReceiverLog {
    /// Arrival times of messages addressed to this node (collision model).
    arrivals: VecDeque<(SimTime, u64)>,
    /// Send instants of this node's own transmissions (half-duplex).
    transmissions: VecDeque<SimTime>,
}

/// The shared wireless medium. One instance per simulation, registered
/// with every node; draws drop decisions from the engine RNG in event
/// order so runs stay reproducible.
#[derive(Debug)]
pub struct Medium {
    config: MediumConfig,
    logs: Vec<ReceiverLog>,
    next_serial: u64,
}

impl Medium {
    pub fn new(config: MediumConfig) -> Self {
        Medium {
            config,
            logs: Vec::new(),
            next_serial: 0,
        }
    }

    pub fn config(&self) -> &MediumConfig {
        &self.config
    }

    pub fn register_node(&mut self) -> NodeId {
        self.logs.push(ReceiverLog::default());
        NodeId(self.logs.len() as u32 - 1)
    }

    pub fn node_count(&self) -> usize {
        self.logs.len()
    }

    fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.config.transmission_duration)
    }

    /// Evaluates a transmission against the position snapshot taken at
    /// send time and returns the deliveries that survive range and drop
    /// checks. Out-of-range recipients receive nothing, silently; a node
    /// never receives its own broadcast.
    pub fn transmit(
        &mut self,
        transmission: &Transmission,
        positions: &[Position],
        rng: &mut impl Rng,
    ) -> Result<Vec<Delivery>, TransmitError> {
        assert_eq!(positions.len(), self.logs.len(), "position snapshot size mismatch");
        let sender = transmission.sender.index();
        assert!(sender < self.logs.len(), "unregistered sender");

        let recipients: Vec<usize> = match transmission.kind {
            TransmissionKind::Targeted(target) => {
                if target.index() >= self.logs.len() {
                    return Err(TransmitError::UnknownTarget(target));
                }
                vec![target.index()]
            }
            TransmissionKind::Broadcast => {
                (0..self.logs.len()).filter(|i| *i != sender).collect()
            }
        };

        if self.config.collision_model {
            let sent = transmission.sent_at;
            let horizon = sent.saturating_sub(self.duration());
            let log = &mut self.logs[sender];
            while log.transmissions.front().is_some_and(|s| *s < horizon) {
                log.transmissions.pop_front();
            }
            log.transmissions.push_back(sent);
        }

        let arrival = transmission.sent_at + SimTime::from_secs_f64(self.config.delay);
        let mut deliveries = Vec::new();
        for receiver in recipients {
            if receiver == sender {
                continue;
            }
            if !in_range(&positions[sender], &positions[receiver], self.config.range) {
                continue;
            }
            // one independent draw per in-range recipient, even at p = 0
            let dropped = rng.random::<f64>() < self.config.drop_probability;
            if dropped {
                continue;
            }
            let serial = self.next_serial;
            self.next_serial += 1;
            if self.config.collision_model {
                self.logs[receiver].arrivals.push_back((arrival, serial));
            }
            deliveries.push(Delivery {
                receiver: NodeId(receiver as u32),
                arrival,
                serial,
            });
        }
        Ok(deliveries)
    }

    /// Collision-model reception commit, called when a delivery's
    /// occupancy window `[arrival, arrival + transmission_duration)` has
    /// elapsed. Returns `true` iff the message survived: no other
    /// delivery's window overlapped it and the receiver was not itself
    /// transmitting during it.
    pub fn commit_reception(&mut self, receiver: NodeId, arrival: SimTime, serial: u64) -> bool {
        let duration = self.duration();
        let horizon = arrival.saturating_sub(duration);
        let log = &mut self.logs[receiver.index()];

        // commits happen in nondecreasing arrival order; anything that can
        // no longer overlap is dropped from the log
        while log.arrivals.front().is_some_and(|(a, _)| *a <= horizon) {
            log.arrivals.pop_front();
        }
        while log.transmissions.front().is_some_and(|s| *s <= horizon) {
            log.transmissions.pop_front();
        }

        let overlaps = |other: SimTime| -> bool {
            // windows [a, a+d) and [b, b+d) overlap iff |a - b| < d
            let gap = if other > arrival { other - arrival } else { arrival - other };
            gap < duration
        };

        let interfered = log
            .arrivals
            .iter()
            .any(|(a, s)| *s != serial && overlaps(*a))
            || log.transmissions.iter().any(|s| overlaps(*s));
        !interfered
    }
}
