use nalgebra::{DMatrix, DVector, Vector3};
use ndp_core::nmpc::model::{input_to_vec, shoot, state_to_vec, vec_to_state};
use ndp_core::nmpc::qp::box_kkt_residual;
use ndp_core::nmpc::{
    build_residuals, qp_solve_box, rti_step, shooting_defects, DisturbanceSchedule, OcpConfig, QpStatus, RtiWorkspace,
};
use ndp_core::quad::{BodyRateCmd, QuadParams, ReducedState};
use ndp_core::trajectory::FullStateRef;
use proptest::prelude::*;

fn setup() -> (QuadParams, OcpConfig, Vec<FullStateRef>) {
    let params = QuadParams::identified();
    let cfg = OcpConfig::for_params(&params);
    let refs = vec![FullStateRef::hover(Vector3::new(0.0, 0.0, 1.0), &params); cfg.horizon + 1];
    (params, cfg, refs)
}

#[test]
fn one_centimetre_altitude_error_costs_point_zero_two() {
    let (params, cfg, refs) = setup();
    let mut states: Vec<ReducedState> = refs.iter().map(|r| r.state()).collect();
    let inputs = vec![BodyRateCmd::hover(&params); cfg.horizon];
    let zero = DisturbanceSchedule::zeros(cfg.horizon + 1);
    let r0 = build_residuals(&states, &inputs, &refs, &zero, &cfg, &params).unwrap();
    assert!(r0.norm() < 1e-12);
    states[7].p.z += 0.01;
    let r = build_residuals(&states, &inputs, &refs, &zero, &cfg, &params).unwrap();
    assert!((0.5 * r.norm_squared() - 0.02).abs() < 1e-12);
}

#[test]
fn constant_downward_force_only_moves_translational_defects() {
    let (params, cfg, refs) = setup();
    let states: Vec<ReducedState> = refs.iter().map(|r| r.state()).collect();
    let inputs = vec![BodyRateCmd::hover(&params); cfg.horizon];
    let base = shooting_defects(&states, &inputs, &DisturbanceSchedule::zeros(cfg.horizon + 1), &cfg, &params).unwrap();
    let push = DisturbanceSchedule::constant(cfg.horizon + 1, Vector3::new(0.0, 0.0, -4.0));
    let pushed = shooting_defects(&states, &inputs, &push, &cfg, &params).unwrap();
    let dt = cfg.dt_shoot;
    let a = 4.0 / params.mass;
    for (b, p) in base.iter().zip(&pushed) {
        let d = p - b;
        assert!((d[5] + dt * a).abs() < 1e-12, "v_z change {}", d[5]);
        assert!((d[2] + 0.5 * dt * dt * a).abs() < 1e-12, "p_z change {}", d[2]);
        for i in [0, 1, 3, 4, 6, 7, 8, 9] {
            assert!(d[i].abs() < 1e-12, "row {i} moved by {}", d[i]);
        }
    }
}

#[test]
fn thrust_saturates_at_the_motor_limit() {
    let (params, cfg, refs) = setup();
    assert!((params.max_thrust() - 64.876).abs() < 1e-3);
    let schedule = DisturbanceSchedule::constant(cfg.horizon + 1, Vector3::new(0.0, 0.0, -80.0));
    let mut ws = RtiWorkspace::new();
    let x = refs[0].state();
    let mut last = None;
    for _ in 0..5 {
        last = Some(rti_step(&x, &refs, &schedule, &mut ws, &cfg, &params).unwrap());
    }
    let out = last.unwrap();
    assert_eq!(out.command.fc, params.max_thrust());
    assert!(out.command.rates.norm() < 1e-6);
}

#[test]
fn closed_loop_recovers_from_altitude_offset() {
    let (params, cfg, refs) = setup();
    let zero = DisturbanceSchedule::zeros(cfg.horizon + 1);
    let mut ws = RtiWorkspace::new();
    let mut x = ReducedState::hover_at(Vector3::new(0.1, -0.1, 0.7));
    let dt = 1.0 / OcpConfig::DEFAULT_CONTROL_RATE_HZ;
    for _ in 0..300 {
        let out = rti_step(&x, &refs, &zero, &mut ws, &cfg, &params).unwrap();
        x = vec_to_state(&shoot(&state_to_vec(&x), &input_to_vec(&out.command), &Vector3::zeros(), dt, &params));
    }
    assert!((x.p - refs[0].p).norm() < 0.01, "final position {}", x.p);
    assert!(x.v.norm() < 0.02);
}

fn spd(n: usize, entries: &[f64], shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| entries[(i * n + j) % entries.len()]);
    &a * a.transpose() + DMatrix::identity(n, n) * shift
}

fn quadratic(h: &DMatrix<f64>, g: &DVector<f64>, u: &DVector<f64>) -> f64 {
    0.5 * u.dot(&(h * u)) + g.dot(u)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn box_qp_solution_is_feasible_and_optimal(
        n in 1usize..16,
        entries in prop::collection::vec(-2.0f64..2.0, 16..64),
        shift in 1e-3f64..1.0,
        g_raw in prop::collection::vec(-20.0f64..20.0, 16),
        lo in prop::collection::vec(-3.0f64..0.5, 16),
        width in prop::collection::vec(0.0f64..4.0, 16),
        probe in prop::collection::vec(0.0f64..1.0, 16),
    ) {
        let h = spd(n, &entries, shift);
        let g = DVector::from_fn(n, |i, _| g_raw[i]);
        let lb = DVector::from_fn(n, |i, _| lo[i]);
        let ub = DVector::from_fn(n, |i, _| lo[i] + width[i]);
        let sol = qp_solve_box(&h, &g, &lb, &ub).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        for i in 0..n {
            prop_assert!(sol.u[i] >= lb[i] && sol.u[i] <= ub[i]);
        }
        prop_assert!(box_kkt_residual(&h, &g, &lb, &ub, &sol.u) <= 1e-8 * (1.0 + g.amax()));
        let other = DVector::from_fn(n, |i, _| lb[i] + probe[i] * (ub[i] - lb[i]));
        prop_assert!(quadratic(&h, &g, &sol.u) <= quadratic(&h, &g, &other) + 1e-9);
    }
}
