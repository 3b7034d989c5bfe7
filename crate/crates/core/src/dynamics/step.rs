use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};

use super::{
    leg_forward_kinematics, leg_jacobian, ContactParams, HeightField, Interval, PdGains, RobotModel, RobotState,
    SimError, NUM_JOINTS, NUM_LEGS,
};

const NDOF: usize = 6 + NUM_JOINTS;
const MAX_ACTIVE_SET_PASSES: usize = 6;
const LIMIT_EPS: f64 = 1e-9;

type Mat = SMatrix<f64, NDOF, NDOF>;
type Vec18 = SVector<f64, NDOF>;
type Jac = SMatrix<f64, 3, NDOF>;

/// Per-step inputs that vary between environments.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    pub dt: f64,
    pub contact: ContactParams,
    /// Active per-joint limits (hardware limits narrowed by any fault).
    pub limits: &'a [Interval; NUM_JOINTS],
    /// Extra mass rigidly attached at the trunk center.
    pub payload: f64,
    pub env_id: usize,
}

/// Joint torque from the PD law toward `q_target` with zero target velocity.
pub fn pd_torque(
    q_target: &[f64; NUM_JOINTS],
    state: &RobotState,
    gains: &PdGains,
    motor_strength: &[f64; NUM_JOINTS],
    torque_limit: f64,
) -> [f64; NUM_JOINTS] {
    std::array::from_fn(|i| {
        let raw = motor_strength[i] * (gains.kp[i] * (q_target[i] - state.q[i]) - gains.kd[i] * state.dq[i]);
        raw.clamp(-torque_limit, torque_limit)
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum ContactMode {
    Off,
    Stick,
    /// Tangential force fixed to the given world-frame vector.
    Slide([f64; 2]),
}

struct FootContact {
    depth: f64,
    jac: Jac,
    mode: ContactMode,
}

fn skew(r: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -r.z, r.y, r.z, 0.0, -r.x, -r.y, r.x, 0.0)
}

fn leg_q(q: &[f64; NUM_JOINTS], leg: usize) -> [f64; 3] {
    [q[3 * leg], q[3 * leg + 1], q[3 * leg + 2]]
}

/// Foot position in the world frame.
pub(crate) fn foot_world(model: &RobotModel, state: &RobotState, rot: &Matrix3<f64>, leg: usize) -> Vector3<f64> {
    Vector3::from(state.base_pos) + rot * leg_forward_kinematics(model, leg, leg_q(&state.q, leg))
}

/// Velocity Jacobian of a foot w.r.t. `[v, ω, dq]` in the world frame.
fn foot_jacobian(model: &RobotModel, state: &RobotState, rot: &Matrix3<f64>, leg: usize) -> Jac {
    let r = rot * leg_forward_kinematics(model, leg, leg_q(&state.q, leg));
    let jl = rot * leg_jacobian(model, leg, leg_q(&state.q, leg));
    let mut g = Jac::zeros();
    g.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    g.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&r)));
    g.fixed_view_mut::<3, 3>(0, 6 + 3 * leg).copy_from(&jl);
    g
}

fn solve(a: Mat, b: &Vec18) -> Option<Vec18> {
    match a.cholesky() {
        Some(c) => Some(c.solve(b)),
        None => a.lu().solve(b),
    }
}

/// Advances one physics step.
///
/// Velocities are updated first with contact damping and viscous friction
/// taken at the new velocity (a linear solve over trunk and joint DoFs), then
/// positions are advanced with the new velocities. Contact mode (off, stick,
/// slide) and joint-limit activity are resolved by a few active-set passes.
pub fn step(
    state: &RobotState,
    model: &RobotModel,
    tau: &[f64; NUM_JOINTS],
    terrain: &dyn HeightField,
    ctx: &StepContext<'_>,
) -> Result<RobotState, SimError> {
    let dt = ctx.dt;
    let mass = model.trunk_mass + ctx.payload;
    let rot = state.rotation();
    let inertia_body = Matrix3::from_diagonal(&Vector3::from(model.trunk_inertia));
    let inertia_world = rot * inertia_body * rot.transpose();

    let mut mm = Mat::zeros();
    for k in 0..3 {
        mm[(k, k)] = mass;
    }
    mm.fixed_view_mut::<3, 3>(3, 3).copy_from(&inertia_world);
    for j in 0..NUM_JOINTS {
        mm[(6 + j, 6 + j)] = model.reflected_inertia;
    }

    // free velocity: gravity on the trunk and motor torque on the joints
    let mut u0 = Vec18::zeros();
    u0.fixed_rows_mut::<3>(0).copy_from(&Vector3::from(state.base_lin_vel));
    u0.fixed_rows_mut::<3>(3).copy_from(&Vector3::from(state.base_ang_vel));
    u0[2] -= model.gravity * dt;
    for j in 0..NUM_JOINTS {
        u0[6 + j] = state.dq[j] + dt * tau[j] / model.reflected_inertia;
    }

    let mut contacts: Vec<FootContact> = (0..NUM_LEGS)
        .filter_map(|leg| {
            let p = foot_world(model, state, &rot, leg);
            let depth = terrain.height_at(p.x, p.y) - p.z;
            (depth > 0.0).then(|| FootContact {
                depth,
                jac: foot_jacobian(model, state, &rot, leg),
                mode: ContactMode::Stick,
            })
        })
        .collect();

    let mut locked = [false; NUM_JOINTS];
    let any_locked = joints_pushing_out(state, &u0, ctx.limits, &mut locked);
    let mut u = u0;
    let cp = &ctx.contact;
    let base_rhs = mm * u0;
    if !contacts.is_empty() || any_locked {
        for _ in 0..MAX_ACTIVE_SET_PASSES {
            let mut a = mm;
            let mut b = base_rhs;
            for c in &contacts {
                let (damp, f0) = match c.mode {
                    ContactMode::Off => continue,
                    ContactMode::Stick => (Vector3::new(cp.k_t, cp.k_t, cp.c_n), Vector3::new(0.0, 0.0, cp.k_n * c.depth)),
                    ContactMode::Slide(ft) => (Vector3::new(0.0, 0.0, cp.c_n), Vector3::new(ft[0], ft[1], cp.k_n * c.depth)),
                };
                let dg = Matrix3::from_diagonal(&damp) * c.jac;
                a += dt * c.jac.transpose() * dg;
                b += dt * c.jac.transpose() * f0;
            }
            for j in 0..NUM_JOINTS {
                if locked[j] {
                    let k = 6 + j;
                    a.row_mut(k).fill(0.0);
                    a.column_mut(k).fill(0.0);
                    a[(k, k)] = 1.0;
                    b[k] = 0.0;
                }
            }
            u = solve(a, &b).ok_or(SimError::Diverged { env_id: ctx.env_id })?;

            let mut changed = false;
            for c in contacts.iter_mut() {
                let vf = c.jac * u;
                let normal = cp.k_n * c.depth - cp.c_n * vf.z;
                let trial = [-cp.k_t * vf.x, -cp.k_t * vf.y];
                let cap = cp.mu * normal;
                let next = match c.mode {
                    _ if normal <= 0.0 => ContactMode::Off,
                    ContactMode::Off => ContactMode::Off,
                    ContactMode::Stick => match scale(trial, cap) {
                        Some(f) if trial[0].hypot(trial[1]) > cap => ContactMode::Slide(f),
                        _ => ContactMode::Stick,
                    },
                    ContactMode::Slide(prev) => {
                        // friction that reversed the slip means the foot actually sticks
                        if prev[0] * vf.x + prev[1] * vf.y >= 0.0 {
                            ContactMode::Stick
                        } else {
                            scale(trial, cap).map_or(ContactMode::Stick, ContactMode::Slide)
                        }
                    }
                };
                if next != c.mode {
                    changed = true;
                    c.mode = next;
                }
            }
            let before = locked;
            joints_pushing_out(state, &u, ctx.limits, &mut locked);
            if !changed && before == locked {
                break;
            }
        }
    }

    let v = Vector3::new(u[0], u[1], u[2]);
    let w = Vector3::new(u[3], u[4], u[5]);
    let ang_mom = inertia_world * w;

    let mut next = state.clone();
    next.base_lin_vel = [v.x, v.y, v.z];
    for k in 0..3 {
        next.base_pos[k] += dt * v[k];
    }
    let (orient, w_new) = free_rotation(state.orientation(), rot.transpose() * ang_mom, &model.trunk_inertia, dt);
    let qn = orient.into_inner().normalize();
    next.base_quat = [qn.w, qn.i, qn.j, qn.k];
    next.base_ang_vel = [w_new.x, w_new.y, w_new.z];

    for j in 0..NUM_JOINTS {
        let dq = if locked[j] { 0.0 } else { u[6 + j] };
        let q = state.q[j] + dt * dq;
        let lim = ctx.limits[j];
        if q < lim.lo || q > lim.hi {
            next.q[j] = lim.clamp(q);
            next.dq[j] = 0.0;
        } else {
            next.q[j] = q;
            next.dq[j] = dq;
        }
    }

    if !next.is_finite() {
        return Err(SimError::Diverged { env_id: ctx.env_id });
    }
    let rot_next = next.rotation();
    for leg in 0..NUM_LEGS {
        let p = foot_world(model, &next, &rot_next, leg);
        next.foot_contact[leg] = terrain.height_at(p.x, p.y) - p.z > 0.0;
    }
    Ok(next)
}

/// Torque-free rotation over `dt` by symmetric splitting into exact rotations
/// about the principal axes. `l_body` is the body-frame angular momentum.
/// Returns the new orientation and world angular velocity.
fn free_rotation(
    orient: UnitQuaternion<f64>,
    mut l_body: Vector3<f64>,
    inertia: &[f64; 3],
    dt: f64,
) -> (UnitQuaternion<f64>, Vector3<f64>) {
    let mut q = orient;
    for (axis, frac) in [(0, 0.5), (1, 0.5), (2, 1.0), (1, 0.5), (0, 0.5)] {
        let angle = frac * dt * l_body[axis] / inertia[axis];
        let mut e = Vector3::zeros();
        e[axis] = 1.0;
        let r = UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_unchecked(e), angle);
        q *= r;
        l_body = r.inverse() * l_body;
    }
    let w_body = Vector3::new(l_body.x / inertia[0], l_body.y / inertia[1], l_body.z / inertia[2]);
    (q, q * w_body)
}

fn scale(v: [f64; 2], mag: f64) -> Option<[f64; 2]> {
    let n = v[0].hypot(v[1]);
    (n > 0.0).then(|| [v[0] * mag / n, v[1] * mag / n])
}

/// Marks joints sitting on a limit whose velocity points outward. Returns
/// whether any joint is marked.
fn joints_pushing_out(state: &RobotState, u: &Vec18, limits: &[Interval; NUM_JOINTS], locked: &mut [bool; NUM_JOINTS]) -> bool {
    for j in 0..NUM_JOINTS {
        let (q, dq, lim) = (state.q[j], u[6 + j], limits[j]);
        let at_lo = q <= lim.lo + LIMIT_EPS && dq < 0.0;
        let at_hi = q >= lim.hi - LIMIT_EPS && dq > 0.0;
        if at_lo || at_hi {
            locked[j] = true;
        }
    }
    locked.iter().any(|&l| l)
}
