//! Node movement kinematics.
//!
//! Motion is instantaneous-turn, constant-speed, straight-line: a node
//! either sits still or flies directly at its target and stops there.
//! Positions are closed-form in time — no per-step integration — so a
//! position query is exact and free at any instant.

use thiserror::Error;

use crate::protocol::{MobilityCommand, Position};
use crate::time::SimTime;

/// Default speed when no `SET_SPEED` has been issued, in m/s.
pub const DEFAULT_SPEED: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("speed must be strictly positive, got {0}")]
    InvalidSpeed(f64),
    #[error("goto target must be finite")]
    NonFiniteTarget,
}

/// Piecewise-linear motion state: an anchor (position, time), an optional
/// target and a speed. Every command re-anchors at the commanded instant,
/// so the trajectory is continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionState {
    anchor_position: Position,
    anchor_time: SimTime,
    target: Option<Position>,
    speed: f64,
}

impl MotionState {
    pub fn new(position: Position) -> Self {
        MotionState {
            anchor_position: position,
            anchor_time: SimTime::ZERO,
            target: None,
            speed: DEFAULT_SPEED,
        }
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn target(&self) -> Option<Position> {
        self.target
    }

    /// Time needed from the anchor to reach the target at current speed.
    fn travel_secs(&self) -> f64 {
        match &self.target {
            Some(t) => self.anchor_position.distance(t) / self.speed,
            None => 0.0,
        }
    }

    /// When the current target is (or was) reached; `None` while idle.
    pub fn arrival_time(&self) -> Option<SimTime> {
        self.target
            .map(|_| self.anchor_time + SimTime::from_secs_f64(self.travel_secs()))
    }

    /// Exact position at `t >= anchor_time`: linear interpolation toward
    /// the target, clamped there on arrival.
    pub fn position_at(&self, t: SimTime) -> Position {
        let target = match &self.target {
            None => return self.anchor_position,
            Some(target) => target,
        };
        let total = self.travel_secs();
        let elapsed = t
            .checked_sub(self.anchor_time)
            .expect("position query before anchor time")
            .as_secs_f64();
        if elapsed >= total || total == 0.0 {
            return *target;
        }
        let frac = elapsed / total;
        Position::new(
            self.anchor_position.x + (target.x - self.anchor_position.x) * frac,
            self.anchor_position.y + (target.y - self.anchor_position.y) * frac,
            self.anchor_position.z + (target.z - self.anchor_position.z) * frac,
        )
    }

    /// Applies a GOTO or SET_SPEED at time `at`, re-anchoring the state at
    /// the position held then. GOTO replaces the target; SET_SPEED keeps
    /// it, covering the remaining distance at the new speed.
    pub fn apply_command(&mut self, cmd: &MobilityCommand, at: SimTime) -> Result<(), MobilityError> {
        match cmd {
            MobilityCommand::GotoCoords(target) => {
                if !target.is_finite() {
                    return Err(MobilityError::NonFiniteTarget);
                }
                self.anchor_position = self.position_at(at);
                self.anchor_time = at;
                self.target = Some(*target);
            }
            MobilityCommand::SetSpeed(speed) => {
                if !(speed.is_finite() && *speed > 0.0) {
                    return Err(MobilityError::InvalidSpeed(*speed));
                }
                self.anchor_position = self.position_at(at);
                self.anchor_time = at;
                self.speed = *speed;
            }
            MobilityCommand::GotoGeoCoords(_) => {
                // converted to local coordinates before reaching mobility
                unreachable!("geo commands are resolved by the provider")
            }
        }
        Ok(())
    }
}
