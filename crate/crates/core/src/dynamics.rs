//! Beam-direction trajectories.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::array::SpatialFrequency;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryModel {
    /// Fixed spatial frequency.
    Static { x: f64 },
    /// `θ_n = amplitude·sin(2πn/period) + jitter_std·ϑ_n`, `ϑ_n ~ N(0, 1)`.
    SinusoidJitter {
        amplitude: f64,
        period: f64,
        jitter_std: f64,
    },
    /// `θ_n = θ_{n-1} + δ_{n-1}·omega`, with the direction `δ` reversed
    /// whenever the next step would leave `[-bound, bound]`.
    FixedVelocity { omega: f64, bound: f64, theta0: f64 },
}

impl TrajectoryModel {
    /// Sinusoidal sweep between ±60° with a 1000-slot period and 0.005 rad jitter.
    pub fn reference_sinusoid() -> Self {
        TrajectoryModel::SinusoidJitter {
            amplitude: PI / 3.0,
            period: 1000.0,
            jitter_std: 0.005,
        }
    }

    /// Constant angular speed bouncing between ±60°, starting at broadside.
    pub fn reference_velocity(omega: f64) -> Self {
        TrajectoryModel::FixedVelocity {
            omega,
            bound: PI / 3.0,
            theta0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TrajectoryModel::Static { x } => {
                SpatialFrequency::new(x)?;
            }
            TrajectoryModel::SinusoidJitter {
                amplitude,
                period,
                jitter_std,
            } => {
                if !(amplitude.is_finite() && amplitude.abs() <= PI / 2.0) {
                    return Err(Error::invalid("amplitude", "must lie in [-π/2, π/2]"));
                }
                if !(period.is_finite() && period > 0.0) {
                    return Err(Error::invalid("period", "must be positive"));
                }
                if !(jitter_std.is_finite() && jitter_std >= 0.0) {
                    return Err(Error::invalid("jitter_std", "must be non-negative"));
                }
            }
            TrajectoryModel::FixedVelocity { omega, bound, theta0 } => {
                if !(omega.is_finite() && omega >= 0.0) {
                    return Err(Error::invalid("omega", "must be non-negative"));
                }
                if !(bound.is_finite() && bound > 0.0 && bound <= PI / 2.0) {
                    return Err(Error::invalid("bound", "must lie in (0, π/2]"));
                }
                if !(theta0.abs() <= bound) {
                    return Err(Error::invalid("theta0", "must lie within ±bound"));
                }
                if omega > 2.0 * bound {
                    return Err(Error::invalid("omega", "a single step may not cross the whole range"));
                }
            }
        }
        Ok(())
    }
}

/// A trajectory being played out slot by slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    model: TrajectoryModel,
    theta: f64,
    direction: f64,
}

impl Trajectory {
    pub fn new(model: TrajectoryModel) -> Self {
        let theta = match model {
            TrajectoryModel::Static { x } => SpatialFrequency::clamped(x).angle(),
            TrajectoryModel::SinusoidJitter { .. } => 0.0,
            TrajectoryModel::FixedVelocity { theta0, .. } => theta0,
        };
        Self {
            model,
            theta,
            direction: 1.0,
        }
    }

    pub fn model(&self) -> &TrajectoryModel {
        &self.model
    }

    /// Spatial frequency at the most recent slot (slot 0 before any advance).
    pub fn current(&self) -> SpatialFrequency {
        match self.model {
            TrajectoryModel::Static { x } => SpatialFrequency::clamped(x),
            _ => SpatialFrequency::from_angle(self.theta),
        }
    }

    pub fn current_theta(&self) -> f64 {
        self.theta
    }

    /// Moves to slot `n >= 1` and returns `(θ_n, x_n)`.
    pub fn advance<R: Rng + ?Sized>(&mut self, n: u64, rng: &mut R) -> (f64, SpatialFrequency) {
        match self.model {
            TrajectoryModel::Static { .. } => {}
            TrajectoryModel::SinusoidJitter {
                amplitude,
                period,
                jitter_std,
            } => {
                let jitter = if jitter_std > 0.0 {
                    jitter_std * rng.sample::<f64, _>(StandardNormal)
                } else {
                    0.0
                };
                self.theta = amplitude * (2.0 * PI * n as f64 / period).sin() + jitter;
            }
            TrajectoryModel::FixedVelocity { omega, bound, .. } => {
                if (self.theta + self.direction * omega).abs() > bound {
                    self.direction = -self.direction;
                }
                self.theta += self.direction * omega;
            }
        }
        (self.theta, self.current())
    }
}

/// Angular speed in rad/slot for a speed in degrees per second when
/// `pilots_per_sec` pilots (slots) are spent on the beam each second.
pub fn deg_per_sec_to_rad_per_slot(deg_per_sec: f64, pilots_per_sec: f64) -> f64 {
    deg_per_sec / pilots_per_sec * PI / 180.0
}

pub fn rad_per_slot_to_deg_per_sec(rad_per_slot: f64, pilots_per_sec: f64) -> f64 {
    rad_per_slot * pilots_per_sec * 180.0 / PI
}
