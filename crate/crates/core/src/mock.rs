//! A scripted, single-node environment for exercising protocols.
//!
//! This is the second encapsulator: the same [`Protocol`] implementation
//! that runs under the full simulator runs here, driven step by step from
//! test code. The script injects messages and telemetry, advances the
//! clock (firing due timers in order), and inspects the commands the
//! protocol issued. No medium, no mobility — what the protocol asks for
//! is recorded, not executed.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::engine::EventHandle;
use crate::protocol::{
    Command, CommandError, NodeId, Position, Protocol, Provider, Telemetry, TimerTag, TrackedValue,
};
use crate::time::SimTime;

struct TimerEntry {
    fire_at: SimTime,
    sequence: u64,
    tag: TimerTag,
}

impl Ord for TimerEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.sequence).cmp(&(self.fire_at, self.sequence))
    }
}

impl PartialOrd for TimerEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for TimerEntry {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.sequence == other.sequence
    }
}

impl Eq for TimerEntry {}

/// A command the protocol issued, stamped with the time it was issued at.
#[derive(Debug, Clone, PartialEq)]
pub struct IssuedCommand {
    pub at: SimTime,
    pub command: Command,
}

struct MockProvider {
    now: SimTime,
    node_id: NodeId,
    rng: ChaCha8Rng,
    timers: BinaryHeap<TimerEntry>,
    pending: HashSet<u64>,
    next_sequence: u64,
    commands: Vec<IssuedCommand>,
    tracked: BTreeMap<String, TrackedValue>,
}

impl Provider for MockProvider {
    fn send_command(&mut self, command: Command) -> Result<(), CommandError> {
        if let Command::Communication(c) = &command {
            let payload = match c {
                crate::protocol::CommunicationCommand::Send { payload, .. } => payload,
                crate::protocol::CommunicationCommand::Broadcast { payload } => payload,
            };
            if payload.is_empty() {
                return Err(CommandError::EmptyPayload);
            }
        }
        if let Command::Mobility(crate::protocol::MobilityCommand::SetSpeed(s)) = &command {
            if !(s.is_finite() && *s > 0.0) {
                return Err(CommandError::InvalidSpeed(*s));
            }
        }
        self.commands.push(IssuedCommand { at: self.now, command });
        Ok(())
    }

    fn schedule_timer(&mut self, tag: TimerTag, fire_at: SimTime) -> Result<EventHandle, CommandError> {
        if fire_at < self.now {
            return Err(CommandError::TimerInPast { at: fire_at, now: self.now });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.timers.push(TimerEntry { fire_at, sequence, tag });
        self.pending.insert(sequence);
        Ok(EventHandle::from_raw(sequence))
    }

    fn cancel_timer(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.as_raw())
    }

    fn current_time(&self) -> SimTime {
        self.now
    }

    fn own_id(&self) -> NodeId {
        self.node_id
    }

    fn record_tracked_variable(&mut self, name: &str, value: TrackedValue) {
        self.tracked.insert(name.to_string(), value);
    }

    fn rng(&mut self) -> &mut dyn RngCore {
        &mut self.rng
    }
}

/// Scripted harness around one protocol instance.
pub struct MockEnvironment<P: Protocol> {
    protocol: P,
    provider: MockProvider,
    initialized: bool,
    finished: bool,
}

impl<P: Protocol> MockEnvironment<P> {
    pub fn new(node_id: NodeId, seed: u64, protocol: P) -> Self {
        MockEnvironment {
            protocol,
            provider: MockProvider {
                now: SimTime::ZERO,
                node_id,
                rng: ChaCha8Rng::seed_from_u64(seed),
                timers: BinaryHeap::new(),
                pending: HashSet::new(),
                next_sequence: 0,
                commands: Vec::new(),
                tracked: BTreeMap::new(),
            },
            initialized: false,
            finished: false,
        }
    }

    pub fn now(&self) -> SimTime {
        self.provider.now
    }

    pub fn protocol(&self) -> &P {
        &self.protocol
    }

    pub fn protocol_mut(&mut self) -> &mut P {
        &mut self.protocol
    }

    fn assert_live(&self) {
        assert!(self.initialized, "script must call initialize() first");
        assert!(!self.finished, "no callbacks after finish()");
    }

    pub fn initialize(&mut self) {
        assert!(!self.initialized, "initialize() called twice");
        self.initialized = true;
        self.protocol.on_initialize(&mut self.provider);
    }

    /// Advances the clock to `t`, firing every due timer in
    /// `(fire_time, sequence)` order along the way.
    pub fn advance_to(&mut self, t: SimTime) {
        self.assert_live();
        assert!(t >= self.provider.now, "clock cannot move backwards");
        loop {
            let due = matches!(self.provider.timers.peek(), Some(entry) if entry.fire_at <= t);
            if !due {
                break;
            }
            let entry = self.provider.timers.pop().expect("peeked timer");
            if !self.provider.pending.remove(&entry.sequence) {
                continue; // cancelled
            }
            self.provider.now = entry.fire_at;
            self.protocol.on_timer_fired(&mut self.provider, &entry.tag);
        }
        self.provider.now = t;
    }

    pub fn advance_by(&mut self, d: SimTime) {
        self.advance_to(self.provider.now + d);
    }

    /// Injects a message delivery at the current time.
    pub fn deliver_message(&mut self, payload: &[u8]) {
        self.assert_live();
        self.protocol.on_message_received(&mut self.provider, payload);
    }

    /// Injects a telemetry update placing the node at `position` now.
    pub fn deliver_telemetry(&mut self, position: Position) {
        self.assert_live();
        let telemetry = Telemetry { current_position: position, timestamp: self.provider.now };
        self.protocol.on_telemetry(&mut self.provider, &telemetry);
    }

    pub fn finish(&mut self) {
        self.assert_live();
        self.finished = true;
        self.protocol.on_finish(&mut self.provider);
    }

    /// Commands issued so far, oldest first.
    pub fn commands(&self) -> &[IssuedCommand] {
        &self.provider.commands
    }

    /// Removes and returns all captured commands.
    pub fn drain_commands(&mut self) -> Vec<IssuedCommand> {
        std::mem::take(&mut self.provider.commands)
    }

    pub fn tracked(&self, name: &str) -> Option<&TrackedValue> {
        self.provider.tracked.get(name)
    }

    pub fn tracked_variables(&self) -> &BTreeMap<String, TrackedValue> {
        &self.provider.tracked
    }

    pub fn pending_timers(&self) -> usize {
        self.provider.pending.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::ProviderExt;

    /// Records the order of every callback it sees.
    #[derive(Default)]
    struct ProbeProtocol {
        log: Vec<String>,
    }

    impl Protocol for ProbeProtocol {
        fn on_initialize(&mut self, provider: &mut dyn Provider) {
            self.log.push("initialize".into());
            provider
                .schedule_timer(TimerTag::from("a"), SimTime::from_secs(1))
                .unwrap();
            provider
                .schedule_timer(TimerTag::from("b"), SimTime::from_secs(1))
                .unwrap();
        }
        fn on_message_received(&mut self, _: &mut dyn Provider, payload: &[u8]) {
            self.log.push(format!("message:{}", String::from_utf8_lossy(payload)));
        }
        fn on_timer_fired(&mut self, _: &mut dyn Provider, tag: &TimerTag) {
            self.log.push(format!("timer:{}", String::from_utf8_lossy(tag.as_bytes())));
        }
        fn on_telemetry(&mut self, _: &mut dyn Provider, t: &Telemetry) {
            self.log.push(format!("telemetry:{}", t.timestamp));
        }
        fn on_finish(&mut self, _: &mut dyn Provider) {
            self.log.push("finish".into());
        }
    }

    #[test]
    fn callback_ordering_contract() {
        let mut env = MockEnvironment::new(NodeId(0), 1, ProbeProtocol::default());
        env.initialize();
        env.deliver_message(b"x");
        env.advance_to(SimTime::from_secs(2));
        env.deliver_telemetry(Position::ORIGIN);
        env.finish();
        let log = &env.protocol().log;
        assert_eq!(log.first().map(String::as_str), Some("initialize"));
        assert_eq!(log.last().map(String::as_str), Some("finish"));
        // same-time timers fire in insertion order
        assert_eq!(log[2], "timer:a");
        assert_eq!(log[3], "timer:b");
    }

    struct EchoProtocol;

    impl Protocol for EchoProtocol {
        fn on_message_received(&mut self, provider: &mut dyn Provider, payload: &[u8]) {
            provider.broadcast(payload.to_vec()).unwrap();
        }
    }

    #[test]
    fn issued_commands_are_captured_with_time() {
        let mut env = MockEnvironment::new(NodeId(3), 1, EchoProtocol);
        env.initialize();
        env.advance_to(SimTime::from_secs(5));
        env.deliver_message(b"ping");
        let commands = env.drain_commands();
        assert_eq!(commands.len(), 1);
        assert_eq!(commands[0].at, SimTime::from_secs(5));
        match &commands[0].command {
            Command::Communication(crate::protocol::CommunicationCommand::Broadcast { payload }) => {
                assert_eq!(payload, b"ping");
            }
            other => panic!("unexpected command {other:?}"),
        }
    }

    struct CancellingProtocol {
        fired: usize,
    }

    impl Protocol for CancellingProtocol {
        fn on_initialize(&mut self, provider: &mut dyn Provider) {
            let handle = provider
                .schedule_timer(TimerTag::from("doomed"), SimTime::from_secs(1))
                .unwrap();
            assert!(provider.cancel_timer(handle));
            assert!(!provider.cancel_timer(handle));
        }
        fn on_timer_fired(&mut self, _: &mut dyn Provider, _: &TimerTag) {
            self.fired += 1;
        }
    }

    #[test]
    fn cancelled_timers_never_fire() {
        let mut env = MockEnvironment::new(NodeId(0), 1, CancellingProtocol { fired: 0 });
        env.initialize();
        env.advance_to(SimTime::from_secs(10));
        assert_eq!(env.protocol().fired, 0);
    }

    #[test]
    fn last_write_wins_for_tracked_variables() {
        struct Recorder;
        impl Protocol for Recorder {
            fn on_message_received(&mut self, provider: &mut dyn Provider, payload: &[u8]) {
                provider.record_tracked_variable("data", TrackedValue::Number(payload[0] as f64));
            }
        }
        let mut env = MockEnvironment::new(NodeId(0), 1, Recorder);
        env.initialize();
        env.deliver_message(&[5]);
        env.deliver_message(&[8]);
        assert_eq!(env.tracked("data"), Some(&TrackedValue::Number(8.0)));
    }
}
