//! Reusable protocol-side tools.
//!
//! Everything here acts purely through the [`Provider`] interface, the
//! same surface protocols themselves use — so a plugin works identically
//! under the full simulator, the mock environment, or any future host.
//! Plugin state lives inside the owning protocol; arrival detection is
//! telemetry proximity, not a privileged engine signal.

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::protocol::{CommandError, Position, Provider, ProviderExt, Telemetry};

/// A waypoint counts as reached within this distance, in meters.
pub const DEFAULT_ARRIVAL_TOLERANCE: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MissionError {
    #[error("mission requires at least one waypoint")]
    EmptyMission,
}

/// What a mission does after reaching its last waypoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopPolicy {
    /// Stop moving; the mission is complete.
    Stop,
    /// Turn around and traverse the waypoints in reverse, indefinitely.
    ReverseAtEnds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissionDirection {
    Forward,
    Reverse,
}

impl MissionDirection {
    fn flipped(self) -> Self {
        match self {
            MissionDirection::Forward => MissionDirection::Reverse,
            MissionDirection::Reverse => MissionDirection::Forward,
        }
    }
}

/// Follows an ordered list of waypoints, advancing one index per arrival.
///
/// Feed it every telemetry update; it issues the GOTO commands. Progress
/// along the mission is exposed as a scalar (waypoint index plus
/// fractional leg completion) for protocols that need to compare
/// positions along a shared route.
#[derive(Debug, Clone)]
pub struct Mission {
    waypoints: Vec<Position>,
    index: usize,
    direction: MissionDirection,
    policy: LoopPolicy,
    tolerance: f64,
    complete: bool,
}

impl Mission {
    /// Starts the mission: issues a GOTO toward the first waypoint.
    pub fn start(
        waypoints: Vec<Position>,
        policy: LoopPolicy,
        provider: &mut dyn Provider,
    ) -> Result<Mission, MissionError> {
        Self::start_with_tolerance(waypoints, policy, DEFAULT_ARRIVAL_TOLERANCE, provider)
    }

    pub fn start_with_tolerance(
        waypoints: Vec<Position>,
        policy: LoopPolicy,
        tolerance: f64,
        provider: &mut dyn Provider,
    ) -> Result<Mission, MissionError> {
        if waypoints.is_empty() {
            return Err(MissionError::EmptyMission);
        }
        let mission = Mission {
            waypoints,
            index: 0,
            direction: MissionDirection::Forward,
            policy,
            tolerance,
            complete: false,
        };
        let _ = provider.goto(mission.waypoints[0]);
        Ok(mission)
    }

    pub fn direction(&self) -> MissionDirection {
        self.direction
    }

    pub fn current_index(&self) -> usize {
        self.index
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn waypoints(&self) -> &[Position] {
        &self.waypoints
    }

    /// Call on every telemetry update. Detects arrival at the current
    /// waypoint and advances per direction and loop policy. Returns
    /// `true` when the waypoint index changed.
    pub fn on_telemetry(&mut self, telemetry: &Telemetry, provider: &mut dyn Provider) -> bool {
        if self.complete {
            return false;
        }
        let pos = telemetry.current_position;
        if pos.distance(&self.waypoints[self.index]) > self.tolerance {
            return false;
        }
        let last = self.waypoints.len() - 1;
        if last == 0 {
            // single-waypoint mission: arriving completes it
            self.complete = true;
            return false;
        }
        match self.direction {
            MissionDirection::Forward if self.index < last => self.index += 1,
            MissionDirection::Forward => match self.policy {
                LoopPolicy::Stop => {
                    self.complete = true;
                    return false;
                }
                LoopPolicy::ReverseAtEnds => {
                    self.direction = MissionDirection::Reverse;
                    self.index = last - 1;
                }
            },
            MissionDirection::Reverse if self.index > 0 => self.index -= 1,
            MissionDirection::Reverse => match self.policy {
                LoopPolicy::Stop => {
                    self.complete = true;
                    return false;
                }
                LoopPolicy::ReverseAtEnds => {
                    self.direction = MissionDirection::Forward;
                    self.index = 1;
                }
            },
        }
        let _ = provider.goto(self.waypoints[self.index]);
        true
    }

    /// Flips direction mid-leg and reissues the GOTO toward the new next
    /// waypoint from wherever the node currently is.
    pub fn reverse(&mut self, provider: &mut dyn Provider) {
        let last = self.waypoints.len() - 1;
        self.direction = self.direction.flipped();
        self.index = match self.direction {
            // was heading up toward index; the waypoint behind is index-1
            MissionDirection::Reverse => self.index.saturating_sub(1),
            MissionDirection::Forward => (self.index + 1).min(last),
        };
        self.complete = false;
        let _ = provider.goto(self.waypoints[self.index]);
    }

    /// Ensures the mission runs in `direction`, reversing if needed.
    pub fn set_direction(&mut self, direction: MissionDirection, provider: &mut dyn Provider) {
        if self.direction != direction {
            self.reverse(provider);
        }
    }

    /// Scalar position along the mission: waypoint index plus fractional
    /// completion of the current leg, in [0, waypoints-1].
    pub fn progress(&self, position: &Position) -> f64 {
        let last = self.waypoints.len() - 1;
        if last == 0 {
            return 0.0;
        }
        let i = self.index;
        let (from, to, base) = match self.direction {
            MissionDirection::Forward => {
                if i == 0 {
                    return 0.0;
                }
                (self.waypoints[i - 1], self.waypoints[i], (i - 1) as f64)
            }
            MissionDirection::Reverse => {
                if i == last {
                    return last as f64;
                }
                (self.waypoints[i + 1], self.waypoints[i], i as f64)
            }
        };
        let leg = from.distance(&to);
        if leg <= f64::EPSILON {
            return base;
        }
        let remaining = (position.distance(&to) / leg).clamp(0.0, 1.0);
        match self.direction {
            MissionDirection::Forward => base + (1.0 - remaining),
            MissionDirection::Reverse => base + remaining,
        }
    }
}

/// Axis-aligned sampling box for [`RandomMobility`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min: Position,
    pub max: Position,
}

impl BoundingBox {
    pub fn new(min: Position, max: Position) -> Self {
        assert!(
            min.x <= max.x && min.y <= max.y && min.z <= max.z,
            "degenerate bounding box"
        );
        BoundingBox { min, max }
    }

    pub fn contains(&self, p: &Position) -> bool {
        (self.min.x..=self.max.x).contains(&p.x)
            && (self.min.y..=self.max.y).contains(&p.y)
            && (self.min.z..=self.max.z).contains(&p.z)
    }

    pub fn center(&self) -> Position {
        Position::new(
            (self.min.x + self.max.x) / 2.0,
            (self.min.y + self.max.y) / 2.0,
            (self.min.z + self.max.z) / 2.0,
        )
    }
}

/// Draws a target uniformly from `bounds` using the environment RNG.
pub fn uniform_point(bounds: &BoundingBox, rng: &mut dyn RngCore) -> Position {
    fn axis(rng: &mut dyn RngCore, lo: f64, hi: f64) -> f64 {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    }
    let x = axis(&mut *rng, bounds.min.x, bounds.max.x);
    let y = axis(&mut *rng, bounds.min.y, bounds.max.y);
    let z = axis(&mut *rng, bounds.min.z, bounds.max.z);
    Position::new(x, y, z)
}

/// Wanders between uniformly drawn targets inside a box.
#[derive(Debug, Clone)]
pub struct RandomMobility {
    bounds: BoundingBox,
    tolerance: f64,
    target: Option<Position>,
}

impl RandomMobility {
    pub fn new(bounds: BoundingBox) -> Self {
        RandomMobility {
            bounds,
            tolerance: DEFAULT_ARRIVAL_TOLERANCE,
            target: None,
        }
    }

    pub fn target(&self) -> Option<Position> {
        self.target
    }

    /// Draws the next target and issues the GOTO.
    pub fn step(&mut self, provider: &mut dyn Provider) -> Result<Position, CommandError> {
        let target = uniform_point(&self.bounds, provider.rng());
        provider.goto(target)?;
        self.target = Some(target);
        Ok(target)
    }

    /// Call on every telemetry update; on arrival, wanders onward.
    pub fn on_telemetry(&mut self, telemetry: &Telemetry, provider: &mut dyn Provider) {
        let due = match self.target {
            None => true,
            Some(t) => telemetry.current_position.distance(&t) <= self.tolerance,
        };
        if due {
            let _ = self.step(provider);
        }
    }
}

/// Fixed-offset leader following.
///
/// Acquiring the leader's position is the caller's job (typically borne
/// in application payloads); this helper only converts each observation
/// into a GOTO.
#[derive(Debug, Clone, Copy)]
pub struct FollowOffset {
    pub offset: Position,
}

impl FollowOffset {
    pub fn new(offset: Position) -> Self {
        FollowOffset { offset }
    }

    /// Heads toward `leader_position + offset`.
    pub fn update(
        &self,
        leader_position: Position,
        provider: &mut dyn Provider,
    ) -> Result<(), CommandError> {
        provider.goto(leader_position.add(&self.offset))
    }
}
