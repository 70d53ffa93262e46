use nalgebra::{Matrix3, Vector3};

use super::{PiecewiseTrajectory, TrajError};
use crate::quad::{QuadParams, Quat, ReducedState};

/// Flat outputs and the derivatives the full-state map needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatOutput {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub a: Vector3<f64>,
    pub psi: f64,
}

impl FlatOutput {
    pub fn sample(traj: &PiecewiseTrajectory, t: f64) -> Self {
        let p = traj.eval(t, 0);
        let v = traj.eval(t, 1);
        let a = traj.eval(t, 2);
        Self { p: p.xyz(), v: v.xyz(), a: a.xyz(), psi: p[3] }
    }
}

/// One reference node for the controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FullStateRef {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quat,
    /// Feedforward collective thrust, N.
    pub fc_ff: f64,
}

impl FullStateRef {
    pub fn hover(p: Vector3<f64>, params: &QuadParams) -> Self {
        Self { p, v: Vector3::zeros(), q: Quat::IDENTITY, fc_ff: params.weight() }
    }

    pub fn state(&self) -> ReducedState {
        ReducedState { p: self.p, v: self.v, q: self.q }
    }
}

/// Attitude and thrust from acceleration and yaw: the body z axis is aligned
/// with `a + g·e_z`, the body x axis is as close to the heading as possible.
pub fn flat_to_state(flat: &FlatOutput, params: &QuadParams) -> Result<FullStateRef, TrajError> {
    let thrust_acc = flat.a - params.gravity_vector();
    let norm = thrust_acc.norm();
    if !(norm > 0.1 * params.gravity) {
        return Err(TrajError::FreeFall(norm));
    }
    let z_b = thrust_acc / norm;
    let heading = Vector3::new(flat.psi.cos(), flat.psi.sin(), 0.0);
    let y_raw = z_b.cross(&heading);
    let y_b = if y_raw.norm() > 1e-9 {
        y_raw.normalize()
    } else {
        // Body z along the heading; fall back to the lateral direction.
        Vector3::new(-flat.psi.sin(), flat.psi.cos(), 0.0)
    };
    let x_b = y_b.cross(&z_b);
    let r = Matrix3::from_columns(&[x_b, y_b, z_b]);
    Ok(FullStateRef {
        p: flat.p,
        v: flat.v,
        q: Quat::from_rotation(&r),
        fc_ff: params.mass * norm,
    })
}

/// `n + 1` references at `t_now + k·dt`, holding the terminal state past
/// the end of the trajectory.
pub fn serve_reference(
    traj: &PiecewiseTrajectory,
    t_now: f64,
    n: usize,
    dt: f64,
    params: &QuadParams,
) -> Result<Vec<FullStateRef>, TrajError> {
    if n == 0 {
        return Err(TrajError::EmptyHorizon);
    }
    (0..=n)
        .map(|k| flat_to_state(&FlatOutput::sample(traj, t_now + k as f64 * dt), params))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::quat_error_vec;
    use crate::trajectory::{allocate_times, min_snap, Waypoint};
    use proptest::prelude::*;

    fn params() -> QuadParams {
        QuadParams::identified()
    }

    #[test]
    fn hover_reference() {
        let f = FlatOutput { p: Vector3::zeros(), v: Vector3::zeros(), a: Vector3::zeros(), psi: 0.0 };
        let r = flat_to_state(&f, &params()).unwrap();
        assert!(quat_error_vec(&r.q, &Quat::IDENTITY).norm() < 1e-15);
        assert!((r.fc_ff - 15.052464).abs() < 1e-9);
    }

    #[test]
    fn forward_acceleration_pitches_45_degrees() {
        let g = 9.81;
        let f = FlatOutput { p: Vector3::zeros(), v: Vector3::zeros(), a: Vector3::new(g, 0.0, 0.0), psi: 0.0 };
        let r = flat_to_state(&f, &params()).unwrap();
        let expected = Quat::from_axis_angle(&Vector3::y(), std::f64::consts::FRAC_PI_4);
        assert!(quat_error_vec(&r.q, &expected).norm() < 1e-12);
        assert!((r.fc_ff - 2f64.sqrt() * 1.5344 * g).abs() < 1e-9);
        assert!((r.fc_ff - 21.29).abs() < 0.01);
    }

    #[test]
    fn yaw_only_is_pure_z_rotation() {
        let f = FlatOutput { p: Vector3::zeros(), v: Vector3::zeros(), a: Vector3::zeros(), psi: 0.8 };
        let r = flat_to_state(&f, &params()).unwrap();
        assert!(r.q.x.abs() < 1e-15 && r.q.y.abs() < 1e-15);
        assert!(quat_error_vec(&r.q, &Quat::from_yaw(0.8)).norm() < 1e-12);
    }

    #[test]
    fn free_fall_is_singular() {
        let f = FlatOutput { p: Vector3::zeros(), v: Vector3::zeros(), a: Vector3::new(0.0, 0.0, -9.81), psi: 0.0 };
        assert!(matches!(flat_to_state(&f, &params()), Err(TrajError::FreeFall(_))));
    }

    proptest! {
        #[test]
        fn thrust_axis_is_parallel_to_acceleration(
            ax in -8.0..8.0f64, ay in -8.0..8.0f64, az in -7.0..8.0f64, psi in -3.0..3.0f64,
        ) {
            let f = FlatOutput { p: Vector3::zeros(), v: Vector3::zeros(), a: Vector3::new(ax, ay, az), psi };
            let r = flat_to_state(&f, &params()).unwrap();
            let want = (f.a - params().gravity_vector()).normalize();
            prop_assert!((r.q.body_z() - want).norm() < 1e-9);
            prop_assert!((r.q.norm() - 1.0).abs() < 1e-12);
            prop_assert!(r.fc_ff >= 0.0);
        }
    }

    #[test]
    fn stationary_and_tail_hold() {
        let w = Waypoint::new(1.0, 2.0, 1.5, 0.0);
        let traj = PiecewiseTrajectory::stationary(&w, 3.0);
        let refs = serve_reference(&traj, 0.0, 20, 0.1, &params()).unwrap();
        assert_eq!(refs.len(), 21);
        assert!(refs.iter().all(|r| *r == refs[0]));
        assert_eq!(refs[0].p, w.p);

        let wps = [Waypoint::new(0.0, 0.0, 1.0, 0.0), Waypoint::new(1.0, 0.0, 1.0, 0.0)];
        let traj = min_snap(&wps, &allocate_times(&wps, 1.0).unwrap()).unwrap();
        let refs = serve_reference(&traj, 0.5, 20, 0.1, &params()).unwrap();
        let tail = refs.last().unwrap();
        assert!((tail.p - wps[1].p).norm() < 1e-9);
        assert_eq!(tail.v, Vector3::zeros());
    }

    #[test]
    fn references_are_time_consistent() {
        let wps = [
            Waypoint::new(0.0, 0.0, 1.0, 0.0),
            Waypoint::new(1.0, 1.0, 1.3, 0.5),
            Waypoint::new(2.0, 0.0, 1.0, 0.0),
        ];
        let traj = min_snap(&wps, &allocate_times(&wps, 0.8).unwrap()).unwrap();
        let dt = 0.1;
        let a = serve_reference(&traj, 0.7, 20, dt, &params()).unwrap();
        let b = serve_reference(&traj, 0.7 + dt, 20, dt, &params()).unwrap();
        for k in 0..20 {
            assert!((a[k + 1].p - b[k].p).norm() < 1e-9);
            assert!((a[k + 1].v - b[k].v).norm() < 1e-9);
            assert!(quat_error_vec(&a[k + 1].q, &b[k].q).norm() < 1e-9);
        }
        assert!(matches!(serve_reference(&traj, 0.0, 0, dt, &params()), Err(TrajError::EmptyHorizon)));
    }
}
