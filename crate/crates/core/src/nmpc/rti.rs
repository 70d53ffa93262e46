//! Multiple-shooting transcription and the Gauss-Newton real-time iteration.

use nalgebra::{DMatrix, DVector, SMatrix, Vector3};

use super::model::{
    input_to_vec, quat_of, shoot, shoot_with_jacobians, state_to_vec, vec_to_input, vec_to_state, InputVec,
    JacU, JacX, StateVec, NU, NX,
};
use super::qp::{box_kkt_residual, default_max_iterations, qp_solve_box_warm, Bound, QpStatus};
use super::{InputReference, NmpcError, OcpConfig};
use crate::quad::{error_sign, quat_error_vec, BodyRateCmd, QuadParams, ReducedState};
use crate::trajectory::FullStateRef;

/// Tracked state residual rows per node: position, velocity, attitude.
pub const STATE_RES: usize = 9;
pub const STAGE_RES: usize = STATE_RES + NU;

/// Predicted inertial disturbance force at each of the `N + 1` nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct DisturbanceSchedule {
    pub forces: Vec<Vector3<f64>>,
}

impl DisturbanceSchedule {
    pub fn zeros(nodes: usize) -> Self {
        Self { forces: vec![Vector3::zeros(); nodes] }
    }

    pub fn constant(nodes: usize, f: Vector3<f64>) -> Self {
        Self { forces: vec![f; nodes] }
    }

    pub fn len(&self) -> usize {
        self.forces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forces.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.forces.iter().all(|f| f.iter().all(|x| x.is_finite()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveInfo {
    pub qp_status: QpStatus,
    pub qp_iterations: usize,
    /// Optimality of the incoming guess: the larger of the projected
    /// condensed gradient, the largest defect and the initial-state gap.
    pub kkt_residual: f64,
    pub qp_kkt_residual: f64,
    /// `½‖residuals‖²` of the incoming guess.
    pub cost: f64,
    /// Largest absolute defect of the incoming guess.
    pub max_defect: f64,
}

/// Warm-started shooting trajectories of one vehicle.
#[derive(Clone, Debug, Default)]
pub struct RtiWorkspace {
    states: Vec<StateVec>,
    inputs: Vec<InputVec>,
    active: Vec<Bound>,
    last: Option<SolveInfo>,
}

impl RtiWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_initialized(&self) -> bool {
        !self.states.is_empty()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn states(&self) -> Vec<ReducedState> {
        self.states.iter().map(vec_to_state).collect()
    }

    pub fn inputs(&self) -> Vec<BodyRateCmd> {
        self.inputs.iter().map(vec_to_input).collect()
    }

    pub fn last_info(&self) -> Option<SolveInfo> {
        self.last
    }

    /// Replace the guess; quaternions are normalized.
    pub fn set_guess(&mut self, states: &[ReducedState], inputs: &[BodyRateCmd]) {
        self.states = states
            .iter()
            .map(|s| state_to_vec(&ReducedState { q: s.q.normalized(), ..*s }))
            .collect();
        self.inputs = inputs.iter().map(input_to_vec).collect();
        self.active.clear();
    }
}

#[derive(Clone, Debug)]
pub struct RtiOutput {
    pub command: BodyRateCmd,
    pub predicted: Vec<ReducedState>,
    pub info: SolveInfo,
}

fn stage_weights(cfg: &OcpConfig) -> [f64; STATE_RES] {
    let (pxy, pz, v, q) = (cfg.q_pos_xy.sqrt(), cfg.q_pos_z.sqrt(), cfg.q_vel.sqrt(), cfg.q_att.sqrt());
    [pxy, pxy, pz, v, v, v, q, q, q]
}

fn input_weights(cfg: &OcpConfig) -> [f64; NU] {
    let (f, w) = (cfg.r_thrust.sqrt(), cfg.r_rate.sqrt());
    [f, w, w, w]
}

/// Input reference at each of the `N` stages.
pub fn input_references(refs: &[FullStateRef], schedule: &DisturbanceSchedule, cfg: &OcpConfig, params: &QuadParams) -> Vec<InputVec> {
    (0..cfg.horizon)
        .map(|k| match cfg.input_reference {
            InputReference::Hover => InputVec::new(params.weight(), 0.0, 0.0, 0.0),
            InputReference::Feedforward => {
                let f = refs[k].q.body_z() * refs[k].fc_ff - schedule.forces[k];
                InputVec::new(f.norm(), 0.0, 0.0, 0.0)
            }
        })
        .collect()
}

fn state_residual(x: &StateVec, r: &FullStateRef, w: &[f64; STATE_RES], scale: f64) -> SMatrix<f64, STATE_RES, 1> {
    let e = quat_error_vec(&quat_of(x), &r.q);
    let raw = [
        x[0] - r.p.x,
        x[1] - r.p.y,
        x[2] - r.p.z,
        x[3] - r.v.x,
        x[4] - r.v.y,
        x[5] - r.v.z,
        e.x,
        e.y,
        e.z,
    ];
    SMatrix::<f64, STATE_RES, 1>::from_fn(|i, _| scale * w[i] * raw[i])
}

fn state_residual_jacobian(x: &StateVec, r: &FullStateRef, w: &[f64; STATE_RES], scale: f64) -> SMatrix<f64, STATE_RES, NX> {
    let mut j = SMatrix::<f64, STATE_RES, NX>::zeros();
    for i in 0..6 {
        j[(i, i)] = scale * w[i];
    }
    let q = quat_of(x);
    let rc = r.q.conj();
    let s = error_sign((q * rc).w);
    let m = rc.right_matrix();
    for a in 0..3 {
        for b in 0..4 {
            j[(6 + a, 6 + b)] = scale * w[6 + a] * s * m[(1 + a, b)];
        }
    }
    j
}

fn check_shapes(
    states: usize,
    inputs: usize,
    refs: usize,
    cfg: &OcpConfig,
) -> Result<(), NmpcError> {
    let n = cfg.horizon;
    if states != n + 1 || inputs != n || refs != n + 1 {
        return Err(NmpcError::Dimension(format!(
            "expected {} states, {n} inputs, {} references; got {states}, {inputs}, {refs}",
            n + 1,
            n + 1
        )));
    }
    Ok(())
}

/// Stacked weighted residuals: `N` stages of 13 rows then 9 terminal rows.
/// The tracking cost is half the squared norm.
pub fn build_residuals(
    states: &[ReducedState],
    inputs: &[BodyRateCmd],
    refs: &[FullStateRef],
    schedule: &DisturbanceSchedule,
    cfg: &OcpConfig,
    params: &QuadParams,
) -> Result<DVector<f64>, NmpcError> {
    check_shapes(states.len(), inputs.len(), refs.len(), cfg)?;
    check_schedule(schedule, cfg)?;
    let xs: Vec<StateVec> = states.iter().map(state_to_vec).collect();
    let us: Vec<InputVec> = inputs.iter().map(input_to_vec).collect();
    Ok(residuals(&xs, &us, refs, &input_references(refs, schedule, cfg, params), cfg))
}

fn residuals(xs: &[StateVec], us: &[InputVec], refs: &[FullStateRef], u_ref: &[InputVec], cfg: &OcpConfig) -> DVector<f64> {
    let n = cfg.horizon;
    let w = stage_weights(cfg);
    let wu = input_weights(cfg);
    let mut out = DVector::zeros(n * STAGE_RES + STATE_RES);
    for k in 0..=n {
        let scale = if k == n { cfg.terminal_scale.sqrt() } else { 1.0 };
        let r = state_residual(&xs[k], &refs[k], &w, scale);
        out.rows_mut(k * STAGE_RES, STATE_RES).copy_from(&r);
        if k < n {
            for i in 0..NU {
                out[k * STAGE_RES + STATE_RES + i] = wu[i] * (us[k][i] - u_ref[k][i]);
            }
        }
    }
    out
}

/// Analytic Jacobian of [`build_residuals`] with respect to the stacked
/// decision vector `[x_0, u_0, x_1, u_1, …, x_N]`.
pub fn residual_jacobian(
    states: &[ReducedState],
    refs: &[FullStateRef],
    cfg: &OcpConfig,
) -> Result<DMatrix<f64>, NmpcError> {
    check_shapes(states.len(), cfg.horizon, refs.len(), cfg)?;
    let n = cfg.horizon;
    let w = stage_weights(cfg);
    let wu = input_weights(cfg);
    let mut j = DMatrix::zeros(n * STAGE_RES + STATE_RES, n * (NX + NU) + NX);
    for k in 0..=n {
        let scale = if k == n { cfg.terminal_scale.sqrt() } else { 1.0 };
        let jx = state_residual_jacobian(&state_to_vec(&states[k]), &refs[k], &w, scale);
        j.view_mut((k * STAGE_RES, k * (NX + NU)), (STATE_RES, NX)).copy_from(&jx);
        if k < n {
            for i in 0..NU {
                j[(k * STAGE_RES + STATE_RES + i, k * (NX + NU) + NX + i)] = wu[i];
            }
        }
    }
    Ok(j)
}

fn check_schedule(schedule: &DisturbanceSchedule, cfg: &OcpConfig) -> Result<(), NmpcError> {
    if schedule.len() != cfg.horizon + 1 {
        return Err(NmpcError::Dimension(format!(
            "schedule has {} nodes, horizon needs {}",
            schedule.len(),
            cfg.horizon + 1
        )));
    }
    if !schedule.is_finite() {
        return Err(NmpcError::NonFinite("disturbance schedule"));
    }
    Ok(())
}

/// `d_k = F(x_k, u_k, f_d,k) − x_{k+1}` for `k < N`.
pub fn shooting_defects(
    states: &[ReducedState],
    inputs: &[BodyRateCmd],
    schedule: &DisturbanceSchedule,
    cfg: &OcpConfig,
    params: &QuadParams,
) -> Result<Vec<StateVec>, NmpcError> {
    check_shapes(states.len(), inputs.len(), cfg.horizon + 1, cfg)?;
    check_schedule(schedule, cfg)?;
    Ok((0..cfg.horizon)
        .map(|k| {
            shoot(&state_to_vec(&states[k]), &input_to_vec(&inputs[k]), &schedule.forces[k], cfg.dt_shoot, params)
                - state_to_vec(&states[k + 1])
        })
        .collect())
}

/// Jacobians `(A_k, B_k)` of the shooting map at each stage.
pub fn defect_jacobians(
    states: &[ReducedState],
    inputs: &[BodyRateCmd],
    schedule: &DisturbanceSchedule,
    cfg: &OcpConfig,
    params: &QuadParams,
) -> Result<Vec<(JacX, JacU)>, NmpcError> {
    check_shapes(states.len(), inputs.len(), cfg.horizon + 1, cfg)?;
    check_schedule(schedule, cfg)?;
    Ok((0..cfg.horizon)
        .map(|k| {
            let (_, a, b) = shoot_with_jacobians(
                &state_to_vec(&states[k]),
                &input_to_vec(&inputs[k]),
                &schedule.forces[k],
                cfg.dt_shoot,
                params,
            );
            (a, b)
        })
        .collect())
}

fn align_quat(x: &mut StateVec, reference: &StateVec) {
    let dot: f64 = (0..4).map(|i| x[6 + i] * reference[6 + i]).sum();
    if dot < 0.0 {
        for i in 6..10 {
            x[i] = -x[i];
        }
    }
}

fn renormalize(x: &mut StateVec) {
    let n = x.fixed_rows::<4>(6).norm();
    for i in 6..10 {
        x[i] /= n;
    }
}

/// One Gauss-Newton SQP iteration on the shooting problem, then a warm-start
/// shift by `cfg.warm_shift` nodes.
pub fn rti_step(
    x_now: &ReducedState,
    refs: &[FullStateRef],
    schedule: &DisturbanceSchedule,
    ws: &mut RtiWorkspace,
    cfg: &OcpConfig,
    params: &QuadParams,
) -> Result<RtiOutput, NmpcError> {
    let n = cfg.horizon;
    if refs.len() != n + 1 {
        return Err(NmpcError::Dimension(format!("{} references for horizon {n}", refs.len())));
    }
    check_schedule(schedule, cfg)?;
    let mut x0 = state_to_vec(x_now);
    if !x0.iter().all(|v| v.is_finite()) {
        return Err(NmpcError::NonFinite("current state"));
    }
    let u_ref = input_references(refs, schedule, cfg, params);

    if ws.states.len() != n + 1 || ws.inputs.len() != n {
        let mut states: Vec<StateVec> = refs.iter().map(|r| state_to_vec(&r.state())).collect();
        for k in 1..=n {
            let prev = states[k - 1];
            align_quat(&mut states[k], &prev);
        }
        ws.states = states;
        ws.inputs = u_ref.clone();
        ws.active.clear();
    }
    align_quat(&mut x0, &ws.states[0]);

    let lo = cfg.input_lower();
    let hi = cfg.input_upper();
    let w = stage_weights(cfg);
    let wu = input_weights(cfg);
    let nv = NU * n;

    // Linearize the shooting constraints and the residuals at the guess.
    let mut jac_a = Vec::with_capacity(n);
    let mut jac_b = Vec::with_capacity(n);
    let mut defects = Vec::with_capacity(n);
    for k in 0..n {
        let (next, a, b) = shoot_with_jacobians(&ws.states[k], &ws.inputs[k], &schedule.forces[k], cfg.dt_shoot, params);
        jac_a.push(a);
        jac_b.push(b);
        defects.push(next - ws.states[k + 1]);
    }

    // Condense: Δx_k = c_k + S_k ΔU.
    let mut h = DMatrix::<f64>::zeros(nv, nv);
    let mut g = DVector::<f64>::zeros(nv);
    let mut sens = DMatrix::<f64>::zeros(NX, nv);
    let mut offset = x0 - ws.states[0];
    let mut cost = 0.0;
    for k in 0..=n {
        let scale = if k == n { cfg.terminal_scale.sqrt() } else { 1.0 };
        let r = state_residual(&ws.states[k], &refs[k], &w, scale);
        cost += 0.5 * r.norm_squared();
        let cols = NU * k;
        if cols > 0 {
            let jx = state_residual_jacobian(&ws.states[k], &refs[k], &w, scale);
            let e = jx * sens.columns(0, cols);
            let rhs = r + jx * offset;
            h.view_mut((0, 0), (cols, cols)).gemm_tr(1.0, &e, &e, 1.0);
            g.rows_mut(0, cols).gemm_tr(1.0, &e, &rhs, 1.0);
        }
        if k < n {
            for i in 0..NU {
                let ru = wu[i] * (ws.inputs[k][i] - u_ref[k][i]);
                cost += 0.5 * ru * ru;
                h[(NU * k + i, NU * k + i)] += wu[i] * wu[i];
                g[NU * k + i] += wu[i] * ru;
            }
            let next_cols = NU * (k + 1);
            let propagated = jac_a[k] * sens.columns(0, cols);
            sens.columns_mut(0, cols).copy_from(&propagated);
            sens.columns_mut(cols, NU).copy_from(&jac_b[k]);
            debug_assert_eq!(next_cols, cols + NU);
            offset = jac_a[k] * offset + defects[k];
        }
    }
    for i in 0..nv {
        h[(i, i)] += cfg.damping;
    }

    let lb = DVector::from_fn(nv, |i, _| lo[i % NU] - ws.inputs[i / NU][i % NU]);
    let ub = DVector::from_fn(nv, |i, _| hi[i % NU] - ws.inputs[i / NU][i % NU]);
    let zero = DVector::zeros(nv);
    let max_defect = defects.iter().map(|d| d.amax()).fold(0.0, f64::max);
    let kkt_residual = box_kkt_residual(&h, &g, &lb, &ub, &zero)
        .max(max_defect)
        .max((x0 - ws.states[0]).amax());

    let warm = (ws.active.len() == nv).then_some(ws.active.as_slice());
    let sol = qp_solve_box_warm(&h, &g, &lb, &ub, warm, default_max_iterations(nv))?;
    if !sol.u.iter().all(|v| v.is_finite()) {
        return Err(NmpcError::NonFinite("QP solution"));
    }

    // Recover ΔX through the linearized dynamics and apply the full step.
    let mut dx = x0 - ws.states[0];
    for k in 0..=n {
        let mut xk = ws.states[k] + dx;
        renormalize(&mut xk);
        if k < n {
            let du = InputVec::from_fn(|i, _| sol.u[NU * k + i]);
            dx = jac_a[k] * dx + jac_b[k] * du + defects[k];
            let mut uk = ws.inputs[k] + du;
            for i in 0..NU {
                uk[i] = match sol.active[NU * k + i] {
                    Bound::Lower => lo[i],
                    Bound::Upper => hi[i],
                    Bound::Free => uk[i].clamp(lo[i], hi[i]),
                };
            }
            ws.inputs[k] = uk;
        }
        ws.states[k] = xk;
    }
    if !ws.states.iter().all(|x| x.iter().all(|v| v.is_finite())) {
        return Err(NmpcError::NonFinite("predicted trajectory"));
    }

    let info = SolveInfo {
        qp_status: sol.status,
        qp_iterations: sol.iterations,
        kkt_residual,
        qp_kkt_residual: sol.kkt_residual,
        cost,
        max_defect,
    };
    ws.last = Some(info);
    ws.active = sol.active;
    let mut command = vec_to_input(&ws.inputs[0]);
    command.fc = command.fc.clamp(lo[0], hi[0]);
    command.rates = command.rates.map(|r| r.clamp(-cfg.rate_limit, cfg.rate_limit));
    let predicted = ws.states.iter().map(vec_to_state).collect();

    shift_guess(ws, cfg.warm_shift);
    Ok(RtiOutput { command, predicted, info })
}

/// Advance the guess by a fraction of a node, holding the last node.
fn shift_guess(ws: &mut RtiWorkspace, frac: f64) {
    if frac <= 0.0 {
        return;
    }
    let n = ws.inputs.len();
    for k in 0..n {
        let mut next = ws.states[k + 1];
        align_quat(&mut next, &ws.states[k]);
        let mut x = ws.states[k] + (next - ws.states[k]) * frac;
        renormalize(&mut x);
        ws.states[k] = x;
        if k + 1 < n {
            ws.inputs[k] = ws.inputs[k] + (ws.inputs[k + 1] - ws.inputs[k]) * frac;
        }
    }
    if frac >= 0.5 && ws.active.len() == NU * n {
        ws.active.drain(0..NU);
        let tail: Vec<Bound> = ws.active[ws.active.len() - NU..].to_vec();
        ws.active.extend(tail);
    }
}
