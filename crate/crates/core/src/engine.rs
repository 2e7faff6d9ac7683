//! Deterministic discrete-event scheduler.
//!
//! The engine owns the simulation clock, the event queue and the single
//! RNG every other component draws from. Events are processed in strict
//! `(fire_time, sequence)` order: ties on the clock resolve FIFO by
//! insertion, so a run is a pure function of its inputs and seed.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::time::{Duration, Instant};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::time::SimTime;

/// Token referencing a scheduled, not-yet-fired event.
///
/// Handles are never reused. Cancelling a dead handle (already fired or
/// already cancelled) is a no-op that returns `false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn from_raw(raw: u64) -> Self {
        EventHandle(raw)
    }

    pub fn as_raw(self) -> u64 {
        self.0
    }
}

/// An event pulled off the queue, handed to the run loop's handler.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiredEvent<P> {
    pub fire_time: SimTime,
    pub sequence: u64,
    pub handle: EventHandle,
    pub payload: P,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("cannot schedule event at {at} in the past of {now}")]
    SchedulingInPast { at: SimTime, now: SimTime },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RunError {
    #[error("run_until called re-entrantly from within an event callback")]
    ReentrantRun,
}

/// How the run loop paces itself against the wall clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecutionMode {
    /// Process events as fast as possible (the default).
    #[default]
    Fast,
    /// Sleep between events so simulation time tracks wall-clock time.
    RealTime,
}

/// Counters reported by [`EventEngine::run_until`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunStats {
    pub events_processed: u64,
    pub final_time: SimTime,
    pub wall_elapsed: Duration,
}

struct Entry<P> {
    fire_time: SimTime,
    sequence: u64,
    payload: P,
}

// BinaryHeap is a max-heap; reverse the key so the earliest
// (fire_time, sequence) pops first.
impl<P> Ord for Entry<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_time, other.sequence).cmp(&(self.fire_time, self.sequence))
    }
}

impl<P> PartialOrd for Entry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> PartialEq for Entry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_time == other.fire_time && self.sequence == other.sequence
    }
}

impl<P> Eq for Entry<P> {}

/// The discrete-event scheduler, generic over the event payload.
pub struct EventEngine<P> {
    queue: BinaryHeap<Entry<P>>,
    pending: HashSet<u64>,
    now: SimTime,
    next_sequence: u64,
    rng: ChaCha8Rng,
    mode: ExecutionMode,
    running: bool,
    events_processed: u64,
}

impl<P> EventEngine<P> {
    pub fn new(seed: u64) -> Self {
        EventEngine {
            queue: BinaryHeap::new(),
            pending: HashSet::new(),
            now: SimTime::ZERO,
            next_sequence: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            mode: ExecutionMode::Fast,
            running: false,
            events_processed: 0,
        }
    }

    pub fn set_mode(&mut self, mode: ExecutionMode) {
        self.mode = mode;
    }

    pub fn mode(&self) -> ExecutionMode {
        self.mode
    }

    /// Time of the event currently being processed, or of the last one
    /// processed. Never decreases.
    pub fn now(&self) -> SimTime {
        self.now
    }

    /// The single randomness source of a simulation. Draws happen in event
    /// order, which is what makes runs reproducible under a fixed seed.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn pending_events(&self) -> usize {
        self.pending.len()
    }

    pub fn events_processed(&self) -> u64 {
        self.events_processed
    }

    /// Enqueues `payload` to fire at `at`. Scheduling at the current time
    /// is allowed; the event fires after everything already queued for
    /// that instant.
    pub fn schedule(&mut self, at: SimTime, payload: P) -> Result<EventHandle, ScheduleError> {
        if at < self.now {
            return Err(ScheduleError::SchedulingInPast { at, now: self.now });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Entry {
            fire_time: at,
            sequence,
            payload,
        });
        self.pending.insert(sequence);
        Ok(EventHandle(sequence))
    }

    /// Returns `true` iff the event was pending and is now guaranteed not
    /// to fire. Idempotent: a second cancel of the same handle is `false`.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        self.pending.remove(&handle.as_raw())
    }

    fn pop_due(&mut self, limit: SimTime) -> Option<FiredEvent<P>> {
        while let Some(head) = self.queue.peek() {
            if head.fire_time > limit {
                return None;
            }
            let entry = self.queue.pop().expect("peeked entry");
            if self.pending.remove(&entry.sequence) {
                return Some(FiredEvent {
                    fire_time: entry.fire_time,
                    sequence: entry.sequence,
                    handle: EventHandle(entry.sequence),
                    payload: entry.payload,
                });
            }
            // cancelled: tombstone, drop and keep going
        }
        None
    }

    /// Runs every event with `fire_time <= limit`, in `(fire_time,
    /// sequence)` order, feeding each to `handler`. The handler gets the
    /// engine back so it can schedule, cancel and draw randomness.
    ///
    /// On return the clock sits at `limit`. Calling again with a larger
    /// limit resumes the run.
    pub fn run_until<F>(&mut self, limit: SimTime, mut handler: F) -> Result<RunStats, RunError>
    where
        F: FnMut(&mut Self, FiredEvent<P>),
    {
        if self.running {
            return Err(RunError::ReentrantRun);
        }
        self.running = true;
        let started = Instant::now();
        let wall_origin = self.now;
        let mut processed = 0u64;

        while let Some(event) = self.pop_due(limit) {
            if self.mode == ExecutionMode::RealTime {
                let target = Duration::from_nanos(
                    event.fire_time.saturating_sub(wall_origin).as_nanos(),
                );
                let elapsed = started.elapsed();
                if target > elapsed {
                    std::thread::sleep(target - elapsed);
                }
            }
            self.now = event.fire_time;
            handler(self, event);
            processed += 1;
        }

        if self.mode == ExecutionMode::RealTime {
            let target = Duration::from_nanos(limit.saturating_sub(wall_origin).as_nanos());
            let elapsed = started.elapsed();
            if target > elapsed {
                std::thread::sleep(target - elapsed);
            }
        }
        self.now = limit;
        self.running = false;
        self.events_processed += processed;
        Ok(RunStats {
            events_processed: processed,
            final_time: self.now,
            wall_elapsed: started.elapsed(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn drain(engine: &mut EventEngine<u32>, limit: SimTime) -> Vec<(SimTime, u32)> {
        let mut order = Vec::new();
        engine
            .run_until(limit, |_, ev| order.push((ev.fire_time, ev.payload)))
            .unwrap();
        order
    }

    #[test]
    fn pops_in_time_order() {
        let mut engine = EventEngine::new(0);
        engine.schedule(SimTime::from_secs(5), 5).unwrap();
        engine.schedule(SimTime::from_secs(3), 3).unwrap();
        let order = drain(&mut engine, SimTime::from_secs(100));
        assert_eq!(order, vec![(SimTime::from_secs(3), 3), (SimTime::from_secs(5), 5)]);
    }

    #[test]
    fn equal_times_pop_fifo() {
        let mut engine = EventEngine::new(0);
        let t = SimTime::from_secs(7);
        engine.schedule(t, 1).unwrap();
        engine.schedule(t, 2).unwrap();
        let order = drain(&mut engine, SimTime::from_secs(100));
        assert_eq!(order, vec![(t, 1), (t, 2)]);
    }

    #[test]
    fn scheduling_in_past_rejected() {
        let mut engine = EventEngine::new(0);
        engine.schedule(SimTime::from_secs(4), 0).unwrap();
        engine
            .run_until(SimTime::from_secs(4), |_, _| {})
            .unwrap();
        let err = engine.schedule(SimTime::from_secs(2), 0).unwrap_err();
        assert_eq!(
            err,
            ScheduleError::SchedulingInPast {
                at: SimTime::from_secs(2),
                now: SimTime::from_secs(4),
            }
        );
    }

    #[test]
    fn cancel_pending_prevents_firing_and_is_idempotent() {
        let mut engine = EventEngine::new(0);
        let keep = engine.schedule(SimTime::from_secs(1), 1).unwrap();
        let drop = engine.schedule(SimTime::from_secs(2), 2).unwrap();
        assert!(engine.cancel(drop));
        assert!(!engine.cancel(drop));
        let order = drain(&mut engine, SimTime::from_secs(10));
        assert_eq!(order, vec![(SimTime::from_secs(1), 1)]);
        // fired handle is dead
        assert!(!engine.cancel(keep));
    }

    #[test]
    fn empty_queue_advances_clock_to_limit() {
        let mut engine: EventEngine<u32> = EventEngine::new(0);
        let stats = engine.run_until(SimTime::from_secs(100), |_, _| {}).unwrap();
        assert_eq!(stats.events_processed, 0);
        assert_eq!(engine.now(), SimTime::from_secs(100));
    }

    #[test]
    fn now_is_zero_before_run_and_tracks_event_times() {
        let mut engine = EventEngine::new(0);
        assert_eq!(engine.now(), SimTime::ZERO);
        engine.schedule(SimTime::from_secs_f64(12.5), 0).unwrap();
        let mut seen = None;
        engine
            .run_until(SimTime::from_secs(20), |eng, _| seen = Some(eng.now()))
            .unwrap();
        assert_eq!(seen, Some(SimTime::from_secs_f64(12.5)));
    }

    #[test]
    fn events_scheduled_from_callbacks_run_transitively() {
        let mut engine = EventEngine::new(0);
        engine.schedule(SimTime::from_secs(1), 3).unwrap();
        let mut fired = Vec::new();
        engine
            .run_until(SimTime::from_secs(10), |eng, ev| {
                fired.push(ev.payload);
                if ev.payload > 0 {
                    let next = eng.now() + SimTime::from_secs(1);
                    eng.schedule(next, ev.payload - 1).unwrap();
                }
            })
            .unwrap();
        assert_eq!(fired, vec![3, 2, 1, 0]);
    }

    #[test]
    fn same_seed_same_trace() {
        use rand::Rng;
        let run = |seed: u64| {
            let mut engine = EventEngine::new(seed);
            for i in 0..100u32 {
                let at = SimTime::from_millis(u64::from(i % 17) * 100);
                engine.schedule(at, i).unwrap();
            }
            let mut trace = Vec::new();
            engine
                .run_until(SimTime::from_secs(10), |eng, ev| {
                    trace.push((ev.fire_time, ev.sequence, ev.payload, eng.rng().random::<u64>()))
                })
                .unwrap();
            trace
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn reentrant_run_is_rejected() {
        let mut engine = EventEngine::new(0);
        engine.schedule(SimTime::from_secs(1), ()).unwrap();
        let mut inner = None;
        engine
            .run_until(SimTime::from_secs(2), |eng, _| {
                inner = Some(eng.run_until(SimTime::from_secs(2), |_, _| {}));
            })
            .unwrap();
        assert_eq!(inner, Some(Err(RunError::ReentrantRun)));
    }

    #[test]
    fn real_time_mode_paces_the_clock() {
        let mut engine = EventEngine::new(0);
        engine.set_mode(ExecutionMode::RealTime);
        engine.schedule(SimTime::from_millis(120), ()).unwrap();
        let stats = engine.run_until(SimTime::from_millis(250), |_, _| {}).unwrap();
        // sim time tracks wall time, so the run takes about as long as
        // the simulated span
        assert!(stats.wall_elapsed >= Duration::from_millis(240), "{:?}", stats.wall_elapsed);
        assert_eq!(stats.events_processed, 1);
    }

    proptest! {
        // Processing order must equal a naive full sort of (fire_time, sequence).
        #[test]
        fn order_matches_sorted_oracle(times in prop::collection::vec(0u64..50, 1..200)) {
            let mut engine = EventEngine::new(0);
            let mut expected: Vec<(SimTime, u64)> = Vec::new();
            for (i, t) in times.iter().enumerate() {
                let at = SimTime::from_millis(*t);
                let handle = engine.schedule(at, i).unwrap();
                expected.push((at, handle.as_raw()));
            }
            expected.sort();
            let mut actual = Vec::new();
            engine.run_until(SimTime::from_secs(1), |_, ev| {
                actual.push((ev.fire_time, ev.sequence));
            }).unwrap();
            prop_assert_eq!(actual, expected);
        }

        #[test]
        fn clock_never_decreases(times in prop::collection::vec(0u64..1000, 1..100)) {
            let mut engine = EventEngine::new(0);
            for t in &times {
                engine.schedule(SimTime::from_millis(*t), ()).unwrap();
            }
            let mut observed = Vec::new();
            engine.run_until(SimTime::from_secs(2), |eng, _| observed.push(eng.now())).unwrap();
            prop_assert!(observed.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
