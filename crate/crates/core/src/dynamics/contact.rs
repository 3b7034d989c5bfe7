use serde::{Deserialize, Serialize};

/// Penalty ground-contact parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactParams {
    /// Normal stiffness (N/m).
    pub k_n: f64,
    /// Normal damping (N·s/m).
    pub c_n: f64,
    /// Viscous tangential coefficient (N·s/m).
    pub k_t: f64,
    /// Coulomb friction coefficient.
    pub mu: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            k_n: 4000.0,
            c_n: 100.0,
            k_t: 300.0,
            mu: 1.0,
        }
    }
}

impl ContactParams {
    pub fn with_friction(self, mu: f64) -> Self {
        Self { mu, ..self }
    }
}

/// World-frame force on a point foot from flat-normal penalty contact.
///
/// The ground normal is taken as world +z at every terrain point.
pub fn contact_force(foot_pos: [f64; 3], foot_vel: [f64; 3], terrain_height: f64, p: &ContactParams) -> [f64; 3] {
    let depth = terrain_height - foot_pos[2];
    if !(depth > 0.0) {
        return [0.0; 3];
    }
    let normal = (p.k_n * depth - p.c_n * foot_vel[2]).max(0.0);
    let mut fx = -p.k_t * foot_vel[0];
    let mut fy = -p.k_t * foot_vel[1];
    let ft = fx.hypot(fy);
    let cap = p.mu * normal;
    if ft > cap {
        let s = if ft > 0.0 { cap / ft } else { 0.0 };
        fx *= s;
        fy *= s;
    }
    [fx, fy, normal]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_foot_feels_nothing() {
        let f = contact_force([0.0, 0.0, 0.01], [1.0, 1.0, -1.0], 0.0, &ContactParams::default());
        assert_eq!(f, [0.0; 3]);
    }

    #[test]
    fn static_penetration() {
        let f = contact_force([0.0, 0.0, -0.005], [0.0; 3], 0.0, &ContactParams::default());
        assert!((f[2] - 20.0).abs() < 1e-12);
        assert_eq!((f[0], f[1]), (0.0, 0.0));
    }

    #[test]
    fn separating_velocity_floors_normal_at_zero() {
        let f = contact_force([0.0, 0.0, -0.001], [0.3, 0.0, 2.0], 0.0, &ContactParams::default());
        assert_eq!(f, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn slip_saturates_on_cone() {
        let p = ContactParams::default().with_friction(0.6);
        let v = [3.0, -4.0, 0.0];
        let f = contact_force([0.0, 0.0, -0.004], v, 0.0, &p);
        let viscous = p.k_t * 5.0;
        let normal = 16.0;
        assert!(viscous > p.mu * normal);
        let ft = f[0].hypot(f[1]);
        assert!((ft - p.mu * normal).abs() < 1e-12);
        // opposes the slip direction
        assert!((f[0] / ft + 0.6).abs() < 1e-12 && (f[1] / ft - 0.8).abs() < 1e-12);
    }

    #[test]
    fn slow_slip_is_viscous() {
        let p = ContactParams::default();
        let f = contact_force([0.0, 0.0, -0.01], [0.01, 0.0, 0.0], 0.0, &p);
        assert!((f[0] + 3.0).abs() < 1e-12);
    }
}
