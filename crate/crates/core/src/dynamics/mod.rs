//! Simplified floating-base quadruped dynamics.
//!
//! A rigid trunk carries four 3-joint legs (hip roll, thigh pitch, calf pitch).
//! Legs have no link mass; each joint has a fixed reflected inertia. Legs and
//! trunk interact only through point-foot penalty contacts mapped by the
//! floating-base contact Jacobian, so the trunk is driven by ground reaction
//! forces and gravity while joints feel `Jᵀ F`.
//!
//! Integration is semi-implicit Euler with contact damping treated implicitly
//! in the generalized velocity, which keeps the light legs stable at 200 Hz.

mod contact;
mod kinematics;
mod model;
mod state;
mod step;

pub use contact::{contact_force, ContactParams};
pub use kinematics::{leg_forward_kinematics, leg_jacobian};
pub use model::{Interval, PdGains, RobotModel, JOINT_NAMES, LEG_NAMES, NUM_JOINTS, NUM_LEGS};
pub use state::RobotState;
pub use step::{pd_torque, step, StepContext};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("simulation diverged in env {env_id}: non-finite state")]
    Diverged { env_id: usize },
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
}

/// Anything that can report terrain height at a world `(x, y)`.
pub trait HeightField {
    fn height_at(&self, x: f64, y: f64) -> f64;
}

/// Flat ground at z = 0.
#[derive(Clone, Copy, Debug, Default)]
pub struct FlatGround;

impl HeightField for FlatGround {
    fn height_at(&self, _x: f64, _y: f64) -> f64 {
        0.0
    }
}
