use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{RobotModel, NUM_JOINTS, NUM_LEGS};

/// Full simulated physical state. Linear and angular base velocities are
/// expressed in the world frame; the quaternion is `(w, x, y, z)` and maps
/// body to world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub base_pos: [f64; 3],
    pub base_quat: [f64; 4],
    pub base_lin_vel: [f64; 3],
    pub base_ang_vel: [f64; 3],
    pub q: [f64; NUM_JOINTS],
    pub dq: [f64; NUM_JOINTS],
    pub foot_contact: [bool; NUM_LEGS],
}

impl RobotState {
    /// Default standing pose at rest with the trunk at `height`.
    pub fn standing(model: &RobotModel, x: f64, y: f64, height: f64) -> Self {
        Self {
            base_pos: [x, y, height],
            base_quat: [1.0, 0.0, 0.0, 0.0],
            base_lin_vel: [0.0; 3],
            base_ang_vel: [0.0; 3],
            q: model.q_default(),
            dq: [0.0; NUM_JOINTS],
            foot_contact: [false; NUM_LEGS],
        }
    }

    pub fn orientation(&self) -> UnitQuaternion<f64> {
        let [w, x, y, z] = self.base_quat;
        UnitQuaternion::new_normalize(nalgebra::Quaternion::new(w, x, y, z))
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.orientation().to_rotation_matrix().into_inner()
    }

    /// `(roll, pitch, yaw)`, ZYX convention.
    pub fn roll_pitch_yaw(&self) -> (f64, f64, f64) {
        self.orientation().euler_angles()
    }

    pub fn body_lin_vel(&self) -> [f64; 3] {
        let v = self.rotation().transpose() * Vector3::from(self.base_lin_vel);
        [v.x, v.y, v.z]
    }

    pub fn body_ang_vel(&self) -> [f64; 3] {
        let w = self.rotation().transpose() * Vector3::from(self.base_ang_vel);
        [w.x, w.y, w.z]
    }

    pub fn quat_norm(&self) -> f64 {
        self.base_quat.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.base_pos
            .iter()
            .chain(&self.base_quat)
            .chain(&self.base_lin_vel)
            .chain(&self.base_ang_vel)
            .chain(&self.q)
            .chain(&self.dq)
            .all(|v| v.is_finite())
    }

    /// Translational plus rotational kinetic energy and gravitational
    /// potential energy of the trunk.
    pub fn trunk_energy(&self, model: &RobotModel, mass: f64) -> f64 {
        let v = Vector3::from(self.base_lin_vel);
        let r = self.rotation();
        let i_world = r * Matrix3::from_diagonal(&Vector3::from(model.trunk_inertia)) * r.transpose();
        let w = Vector3::from(self.base_ang_vel);
        0.5 * mass * v.norm_squared() + 0.5 * w.dot(&(i_world * w)) + mass * model.gravity * self.base_pos[2]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaw_rotation_maps_body_velocity() {
        let mut s = RobotState::standing(&RobotModel::default(), 0.0, 0.0, 0.3);
        let q = UnitQuaternion::from_euler_angles(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        s.base_quat = [q.w, q.i, q.j, q.k];
        s.base_lin_vel = [0.0, 1.0, 0.0];
        let b = s.body_lin_vel();
        assert!((b[0] - 1.0).abs() < 1e-12 && b[1].abs() < 1e-12);
        let (r, p, y) = s.roll_pitch_yaw();
        assert!(r.abs() < 1e-12 && p.abs() < 1e-12 && (y - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }
}
