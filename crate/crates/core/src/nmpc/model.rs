//! Reduced prediction model on flat vectors `x = [p, v, q] ∈ R¹⁰`,
//! `u = [f_c, ω] ∈ R⁴`, with analytic Jacobians of the RK4 shooting map.

use nalgebra::{Matrix3x4, SMatrix, SVector, Vector3, Vector4};

use crate::quad::{BodyRateCmd, QuadParams, Quat, ReducedState};

pub const NX: usize = 10;
pub const NU: usize = 4;

pub type StateVec = SVector<f64, NX>;
pub type InputVec = SVector<f64, NU>;
pub type JacX = SMatrix<f64, NX, NX>;
pub type JacU = SMatrix<f64, NX, NU>;

pub fn state_to_vec(s: &ReducedState) -> StateVec {
    let mut x = StateVec::zeros();
    x.fixed_rows_mut::<3>(0).copy_from(&s.p);
    x.fixed_rows_mut::<3>(3).copy_from(&s.v);
    x.fixed_rows_mut::<4>(6).copy_from(&s.q.as_vector());
    x
}

pub fn vec_to_state(x: &StateVec) -> ReducedState {
    ReducedState {
        p: x.fixed_rows::<3>(0).into_owned(),
        v: x.fixed_rows::<3>(3).into_owned(),
        q: Quat::from_vector(&x.fixed_rows::<4>(6).into_owned()),
    }
}

pub fn input_to_vec(u: &BodyRateCmd) -> InputVec {
    InputVec::new(u.fc, u.rates.x, u.rates.y, u.rates.z)
}

pub fn vec_to_input(u: &InputVec) -> BodyRateCmd {
    BodyRateCmd { fc: u[0], rates: Vector3::new(u[1], u[2], u[3]) }
}

pub(crate) fn quat_of(x: &StateVec) -> Quat {
    Quat::new(x[6], x[7], x[8], x[9])
}

/// Continuous-time reduced dynamics.
pub fn flow(x: &StateVec, u: &InputVec, f_dist: &Vector3<f64>, params: &QuadParams) -> StateVec {
    let q = quat_of(x);
    let w = Vector3::new(u[1], u[2], u[3]);
    let acc = (q.body_z() * u[0] + f_dist) / params.mass + params.gravity_vector();
    let q_dot = (q * Quat::pure(&w)).scale(0.5);
    let mut d = StateVec::zeros();
    d.fixed_rows_mut::<3>(0).copy_from(&x.fixed_rows::<3>(3));
    d.fixed_rows_mut::<3>(3).copy_from(&acc);
    d.fixed_rows_mut::<4>(6).copy_from(&q_dot.as_vector());
    d
}

/// `∂flow/∂x` and `∂flow/∂u`; the disturbance enters additively.
pub fn flow_jacobians(x: &StateVec, u: &InputVec, params: &QuadParams) -> (JacX, JacU) {
    let (qw, qx, qy, qz) = (x[6], x[7], x[8], x[9]);
    let (fc, wx, wy, wz) = (u[0], u[1], u[2], u[3]);
    let s = fc / params.mass;
    let mut a = JacX::zeros();
    let mut b = JacU::zeros();
    for i in 0..3 {
        a[(i, 3 + i)] = 1.0;
    }
    // d(R e_z)/dq, rows x, y, z; columns (qw, qx, qy, qz).
    let dz = Matrix3x4::new(
        2.0 * qy, 2.0 * qz, 2.0 * qw, 2.0 * qx, //
        -2.0 * qx, -2.0 * qw, 2.0 * qz, 2.0 * qy, //
        0.0, -4.0 * qx, -4.0 * qy, 0.0,
    );
    a.fixed_view_mut::<3, 4>(3, 6).copy_from(&(dz * s));
    let body_z = quat_of(x).body_z();
    b.fixed_view_mut::<3, 1>(3, 0).copy_from(&(body_z / params.mass));
    // q̇ = ½ q ∘ (0, ω) = ½ M((0, ω)) q
    let omega = Quat::new(0.0, wx, wy, wz);
    a.fixed_view_mut::<4, 4>(6, 6).copy_from(&(omega.right_matrix() * 0.5));
    let l = quat_of(x).left_matrix();
    b.fixed_view_mut::<4, 3>(6, 1).copy_from(&(l.fixed_view::<4, 3>(0, 1) * 0.5));
    (a, b)
}

fn normalize_quat(x: &StateVec) -> StateVec {
    let mut out = *x;
    let q = x.fixed_rows::<4>(6);
    let n = q.norm();
    out.fixed_rows_mut::<4>(6).copy_from(&(q / n));
    out
}

/// One RK4 step of the reduced model followed by quaternion renormalization.
pub fn shoot(x: &StateVec, u: &InputVec, f_dist: &Vector3<f64>, dt: f64, params: &QuadParams) -> StateVec {
    let k1 = flow(x, u, f_dist, params);
    let k2 = flow(&(x + k1 * (0.5 * dt)), u, f_dist, params);
    let k3 = flow(&(x + k2 * (0.5 * dt)), u, f_dist, params);
    let k4 = flow(&(x + k3 * dt), u, f_dist, params);
    normalize_quat(&(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)))
}

/// [`shoot`] together with its Jacobians with respect to `x` and `u`.
pub fn shoot_with_jacobians(
    x: &StateVec,
    u: &InputVec,
    f_dist: &Vector3<f64>,
    dt: f64,
    params: &QuadParams,
) -> (StateVec, JacX, JacU) {
    let h = dt;
    let eye = JacX::identity();

    let k1 = flow(x, u, f_dist, params);
    let (a1, b1) = flow_jacobians(x, u, params);

    let x2 = x + k1 * (0.5 * h);
    let k2 = flow(&x2, u, f_dist, params);
    let (fx2, fu2) = flow_jacobians(&x2, u, params);
    let a2 = fx2 * (eye + a1 * (0.5 * h));
    let b2 = fx2 * (b1 * (0.5 * h)) + fu2;

    let x3 = x + k2 * (0.5 * h);
    let k3 = flow(&x3, u, f_dist, params);
    let (fx3, fu3) = flow_jacobians(&x3, u, params);
    let a3 = fx3 * (eye + a2 * (0.5 * h));
    let b3 = fx3 * (b2 * (0.5 * h)) + fu3;

    let x4 = x + k3 * h;
    let k4 = flow(&x4, u, f_dist, params);
    let (fx4, fu4) = flow_jacobians(&x4, u, params);
    let a4 = fx4 * (eye + a3 * h);
    let b4 = fx4 * (b3 * h) + fu4;

    let y = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    let mut a = eye + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
    let mut b = (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0);

    // Chain through q ↦ q / ‖q‖.
    let q: Vector4<f64> = y.fixed_rows::<4>(6).into_owned();
    let n = q.norm();
    let unit = q / n;
    let dn = (nalgebra::Matrix4::identity() - unit * unit.transpose()) / n;
    let aq = dn * a.fixed_rows::<4>(6);
    a.fixed_rows_mut::<4>(6).copy_from(&aq);
    let bq = dn * b.fixed_rows::<4>(6);
    b.fixed_rows_mut::<4>(6).copy_from(&bq);

    let mut out = y;
    out.fixed_rows_mut::<4>(6).copy_from(&unit);
    (out, a, b)
}
