use nalgebra::{Matrix3, Vector3};

use super::RobotModel;

/// Foot position in the trunk frame for one leg.
///
/// Chain: hip offset, roll about x, thigh pitch about y, link of
/// `thigh_length` along −z, calf pitch about y, link of `calf_length` along −z.
pub fn leg_forward_kinematics(model: &RobotModel, leg: usize, q_leg: [f64; 3]) -> Vector3<f64> {
    assert!(leg < 4, "leg index {leg} out of range");
    let [q0, q1, q2] = q_leg;
    let (lt, lc) = (model.thigh_length, model.calf_length);
    let (s1, c1) = q1.sin_cos();
    let (s12, c12) = (q1 + q2).sin_cos();
    let x = -lt * s1 - lc * s12;
    let z = -lt * c1 - lc * c12;
    let (s0, c0) = q0.sin_cos();
    let h = model.hip_offset(leg);
    Vector3::new(h[0] + x, h[1] - s0 * z, h[2] + c0 * z)
}

/// `∂ foot / ∂ q_leg` in the trunk frame; column `k` is joint `k` of the leg.
pub fn leg_jacobian(model: &RobotModel, leg: usize, q_leg: [f64; 3]) -> Matrix3<f64> {
    assert!(leg < 4, "leg index {leg} out of range");
    let [q0, q1, q2] = q_leg;
    let (lt, lc) = (model.thigh_length, model.calf_length);
    let (s1, c1) = q1.sin_cos();
    let (s12, c12) = (q1 + q2).sin_cos();
    let z = -lt * c1 - lc * c12;
    let dx1 = -lt * c1 - lc * c12;
    let dx2 = -lc * c12;
    let dz1 = lt * s1 + lc * s12;
    let dz2 = lc * s12;
    let (s0, c0) = q0.sin_cos();
    Matrix3::new(
        0.0, dx1, dx2, //
        -c0 * z, -s0 * dz1, -s0 * dz2, //
        -s0 * z, c0 * dz1, c0 * dz2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};

    fn model() -> RobotModel {
        RobotModel::default()
    }

    #[test]
    fn zero_pose_is_straight_down() {
        let m = model();
        for leg in 0..4 {
            let p = leg_forward_kinematics(&m, leg, [0.0; 3]);
            let h = m.hip_offset(leg);
            assert!((p.x - h[0]).abs() < 1e-15 && (p.y - h[1]).abs() < 1e-15);
            assert!((p.z + 0.4).abs() < 1e-15);
        }
    }

    #[test]
    fn right_angle_knee() {
        let m = model();
        let p = leg_forward_kinematics(&m, 0, [0.0, 0.0, -std::f64::consts::FRAC_PI_2]);
        let h = m.hip_offset(0);
        assert!((p.x - h[0] - 0.2).abs() < 1e-12);
        assert!((p.z + 0.2).abs() < 1e-12);
    }

    // Independent homogeneous-transform chain.
    fn rot_x(a: f64) -> Matrix4<f64> {
        let (s, c) = a.sin_cos();
        Matrix4::new(1., 0., 0., 0., 0., c, -s, 0., 0., s, c, 0., 0., 0., 0., 1.)
    }
    fn rot_y(a: f64) -> Matrix4<f64> {
        let (s, c) = a.sin_cos();
        Matrix4::new(c, 0., s, 0., 0., 1., 0., 0., -s, 0., c, 0., 0., 0., 0., 1.)
    }
    fn trans(x: f64, y: f64, z: f64) -> Matrix4<f64> {
        Matrix4::new_translation(&Vector3::new(x, y, z))
    }
    pub(crate) fn fk_oracle(m: &RobotModel, leg: usize, q: [f64; 3]) -> Vector3<f64> {
        let h = m.hip_offset(leg);
        let t = trans(h[0], h[1], h[2])
            * rot_x(q[0])
            * rot_y(q[1])
            * trans(0.0, 0.0, -m.thigh_length)
            * rot_y(q[2])
            * trans(0.0, 0.0, -m.calf_length);
        Vector3::new(t[(0, 3)], t[(1, 3)], t[(2, 3)])
    }

    #[test]
    fn matches_transform_chain() {
        let m = model();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let leg = rng.random_range(0..4);
            let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let d = leg_forward_kinematics(&m, leg, q) - fk_oracle(&m, leg, q);
            assert!(d.norm() < 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let m = model();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let eps = 1e-6;
        for _ in 0..1000 {
            let leg = rng.random_range(0..4);
            let q = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let j = leg_jacobian(&m, leg, q);
            for k in 0..3 {
                let (mut qp, mut qm) = (q, q);
                qp[k] += eps;
                qm[k] -= eps;
                let fd = (leg_forward_kinematics(&m, leg, qp) - leg_forward_kinematics(&m, leg, qm)) / (2.0 * eps);
                assert!((j.column(k) - fd).abs().max() < 1e-5);
            }
        }
    }

    #[test]
    fn stretched_leg_is_singular() {
        let m = model();
        for q1 in [-0.7, 0.0, 0.4] {
            let j = leg_jacobian(&m, 1, [0.3, q1, 0.0]);
            assert!(j.determinant().abs() < 1e-9);
        }
    }

    #[test]
    fn zero_pose_jacobian_closed_form() {
        // At q = 0: z = −(lt + lc); ∂/∂q0 = (0, lt + lc, 0);
        // ∂/∂q1 = (−(lt + lc), 0, 0); ∂/∂q2 = (−lc, 0, 0).
        let m = model();
        let j = leg_jacobian(&m, 2, [0.0; 3]);
        let expected = Matrix3::new(0.0, -0.4, -0.2, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!((j - expected).abs().max() < 1e-15);
    }
}
