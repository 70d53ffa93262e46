use nalgebra::{DMatrix, DVector, Vector4};

use super::{TrajError, Waypoint};

/// Coefficients per position polynomial (degree 7).
pub const POS_COEFFS: usize = 8;
/// Coefficients per yaw polynomial (degree 3).
pub const YAW_COEFFS: usize = 4;
/// Highest position derivative constrained continuous at interior knots.
pub const POS_CONTINUITY: usize = 4;
/// Highest yaw derivative constrained continuous at interior knots.
pub const YAW_CONTINUITY: usize = 2;
/// Position derivatives pinned to zero at both ends (velocity..jerk).
const POS_BOUNDARY: usize = 3;
/// Yaw derivatives pinned to zero at both ends (rate).
const YAW_BOUNDARY: usize = 1;

/// Segment durations `‖p_{i+1} − p_i‖ / v_avg`, accumulated from zero.
pub fn allocate_times(waypoints: &[Waypoint], v_avg: f64) -> Result<Vec<f64>, TrajError> {
    if waypoints.len() < 2 {
        return Err(TrajError::TooFewWaypoints(waypoints.len()));
    }
    if !(v_avg > 0.0 && v_avg.is_finite()) {
        return Err(TrajError::NonPositiveSpeed(v_avg));
    }
    let mut knots = Vec::with_capacity(waypoints.len());
    knots.push(0.0);
    for (i, pair) in waypoints.windows(2).enumerate() {
        let d = (pair[1].p - pair[0].p).norm();
        if !d.is_finite() {
            return Err(TrajError::NonFiniteWaypoint(i + 1));
        }
        if d == 0.0 {
            return Err(TrajError::CoincidentWaypoints(i, i + 1));
        }
        knots.push(knots[i] + d / v_avg);
    }
    Ok(knots)
}

/// Minimum-snap position (degree 7) and minimum-acceleration yaw (degree 3)
/// through the waypoints at the given knot times, rest-to-rest.
///
/// Each segment is parameterized on `s = (t − t_k) / T_k ∈ [0, 1]`.
pub fn min_snap(waypoints: &[Waypoint], knots: &[f64]) -> Result<PiecewiseTrajectory, TrajError> {
    if waypoints.len() < 2 {
        return Err(TrajError::TooFewWaypoints(waypoints.len()));
    }
    if knots.len() != waypoints.len()
        || knots[0] != 0.0
        || knots.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite())
    {
        return Err(TrajError::BadKnots);
    }
    for (i, w) in waypoints.iter().enumerate() {
        if !(w.p.iter().all(|x| x.is_finite()) && w.psi.is_finite()) {
            return Err(TrajError::NonFiniteWaypoint(i));
        }
    }
    let durations: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();

    let mut pos = [Vec::new(), Vec::new(), Vec::new()];
    for (axis, out) in pos.iter_mut().enumerate() {
        let values: Vec<f64> = waypoints.iter().map(|w| w.p[axis]).collect();
        *out = solve_axis(&values, &durations, POS_COEFFS, 4, POS_BOUNDARY, POS_CONTINUITY)?;
    }
    let yaw_values: Vec<f64> = waypoints.iter().map(|w| w.psi).collect();
    let yaw = solve_axis(&yaw_values, &durations, YAW_COEFFS, 2, YAW_BOUNDARY, YAW_CONTINUITY)?;

    let n = durations.len();
    let mut pos_coeffs = Vec::with_capacity(n);
    let mut yaw_coeffs = Vec::with_capacity(n);
    for k in 0..n {
        let mut seg = [[0.0; POS_COEFFS]; 3];
        for axis in 0..3 {
            seg[axis].copy_from_slice(&pos[axis][k * POS_COEFFS..(k + 1) * POS_COEFFS]);
        }
        pos_coeffs.push(seg);
        let mut y = [0.0; YAW_COEFFS];
        y.copy_from_slice(&yaw[k * YAW_COEFFS..(k + 1) * YAW_COEFFS]);
        yaw_coeffs.push(y);
    }
    Ok(PiecewiseTrajectory { knots: knots.to_vec(), pos_coeffs, yaw_coeffs })
}

/// `i! / (i − r)!`, zero when `r > i`.
fn falling(i: usize, r: usize) -> f64 {
    if r > i {
        return 0.0;
    }
    ((i - r + 1)..=i).map(|k| k as f64).product()
}

/// Row of `d^r/ds^r` of the monomial basis at `s`.
fn basis_row(n_coeffs: usize, r: usize, s: f64) -> Vec<f64> {
    (0..n_coeffs)
        .map(|i| if i < r { 0.0 } else { falling(i, r) * s.powi((i - r) as i32) })
        .collect()
}

/// Cost Hessian of `∫_0^T (d^r p/dt^r)² dt` in normalized-time coefficients.
fn segment_hessian(n_coeffs: usize, r: usize, duration: f64) -> DMatrix<f64> {
    let scale = duration.powi(1 - 2 * r as i32);
    DMatrix::from_fn(n_coeffs, n_coeffs, |i, j| {
        if i < r || j < r {
            0.0
        } else {
            scale * falling(i, r) * falling(j, r) / (i + j + 1 - 2 * r) as f64
        }
    })
}

fn solve_axis(
    values: &[f64],
    durations: &[f64],
    n_coeffs: usize,
    cost_order: usize,
    boundary: usize,
    continuity: usize,
) -> Result<Vec<f64>, TrajError> {
    let n_seg = durations.len();
    let n_var = n_seg * n_coeffs;
    let n_con = 2 * n_seg + 2 * boundary + continuity * (n_seg - 1);
    let dim = n_var + n_con;

    // Normalizing the cost leaves the minimizer unchanged and keeps the
    // Hessian block comparable in size to the constraint rows.
    let blocks: Vec<DMatrix<f64>> =
        durations.iter().map(|&t| segment_hessian(n_coeffs, cost_order, t)).collect();
    let q_scale = blocks.iter().map(|b| b.amax()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    for (k, block) in blocks.iter().enumerate() {
        let o = k * n_coeffs;
        kkt.view_mut((o, o), (n_coeffs, n_coeffs)).copy_from(&(block / q_scale));
    }

    let mut row = n_var;
    let put = |kkt: &mut DMatrix<f64>, row: usize, col: usize, coeffs: &[f64], scale: f64| {
        for (i, c) in coeffs.iter().enumerate() {
            kkt[(row, col + i)] += scale * c;
            kkt[(col + i, row)] += scale * c;
        }
    };
    for k in 0..n_seg {
        let o = k * n_coeffs;
        put(&mut kkt, row, o, &basis_row(n_coeffs, 0, 0.0), 1.0);
        rhs[row] = values[k];
        row += 1;
        put(&mut kkt, row, o, &basis_row(n_coeffs, 0, 1.0), 1.0);
        rhs[row] = values[k + 1];
        row += 1;
    }
    for r in 1..=boundary {
        put(&mut kkt, row, 0, &basis_row(n_coeffs, r, 0.0), 1.0);
        row += 1;
        put(&mut kkt, row, (n_seg - 1) * n_coeffs, &basis_row(n_coeffs, r, 1.0), 1.0);
        row += 1;
    }
    for k in 0..n_seg.saturating_sub(1) {
        let ratio = durations[k] / durations[k + 1];
        for r in 1..=continuity {
            put(&mut kkt, row, k * n_coeffs, &basis_row(n_coeffs, r, 1.0), 1.0);
            put(
                &mut kkt,
                row,
                (k + 1) * n_coeffs,
                &basis_row(n_coeffs, r, 0.0),
                -ratio.powi(r as i32),
            );
            row += 1;
        }
    }
    debug_assert_eq!(row, dim);

    let sol = kkt.full_piv_lu().solve(&rhs).ok_or(TrajError::SingularKkt)?;
    if !sol.iter().all(|x| x.is_finite()) {
        return Err(TrajError::SingularKkt);
    }
    Ok(sol.rows(0, n_var).iter().copied().collect())
}

/// Per-axis polynomial segments over knot times `0 = t_0 < … < t_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseTrajectory {
    knots: Vec<f64>,
    /// Per segment, per axis (x, y, z): coefficients in `s ∈ [0, 1]`, ascending powers.
    pos_coeffs: Vec<[[f64; POS_COEFFS]; 3]>,
    yaw_coeffs: Vec<[f64; YAW_COEFFS]>,
}

impl PiecewiseTrajectory {
    pub fn from_coefficients(
        knots: Vec<f64>,
        pos_coeffs: Vec<[[f64; POS_COEFFS]; 3]>,
        yaw_coeffs: Vec<[f64; YAW_COEFFS]>,
    ) -> Result<Self, TrajError> {
        let n = pos_coeffs.len();
        if n == 0
            || yaw_coeffs.len() != n
            || knots.len() != n + 1
            || knots.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(TrajError::BadKnots);
        }
        Ok(Self { knots, pos_coeffs, yaw_coeffs })
    }

    /// A trajectory that sits at `w` for `duration` seconds.
    pub fn stationary(w: &Waypoint, duration: f64) -> Self {
        let mut seg = [[0.0; POS_COEFFS]; 3];
        for axis in 0..3 {
            seg[axis][0] = w.p[axis];
        }
        let mut yaw = [0.0; YAW_COEFFS];
        yaw[0] = w.psi;
        Self { knots: vec![0.0, duration.max(f64::MIN_POSITIVE)], pos_coeffs: vec![seg], yaw_coeffs: vec![yaw] }
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn segments(&self) -> usize {
        self.pos_coeffs.len()
    }

    pub fn duration(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn position_coefficients(&self) -> &[[[f64; POS_COEFFS]; 3]] {
        &self.pos_coeffs
    }

    pub fn yaw_coefficients(&self) -> &[[f64; YAW_COEFFS]] {
        &self.yaw_coeffs
    }

    /// `(x, y, z, ψ)` derivative of `order` inside segment `k` at local
    /// parameter `s ∈ [0, 1]`.
    pub fn eval_in_segment(&self, k: usize, s: f64, order: usize) -> Vector4<f64> {
        let dt = self.knots[k + 1] - self.knots[k];
        let time_scale = dt.powi(-(order as i32));
        let seg = &self.pos_coeffs[k];
        Vector4::new(
            horner_derivative(&seg[0], s, order) * time_scale,
            horner_derivative(&seg[1], s, order) * time_scale,
            horner_derivative(&seg[2], s, order) * time_scale,
            horner_derivative(&self.yaw_coeffs[k], s, order) * time_scale,
        )
    }

    /// Closed-form `∫ (d⁴x_axis/dt⁴)² dt` over the whole trajectory.
    pub fn snap_integral(&self, axis: usize) -> f64 {
        self.pos_coeffs
            .iter()
            .zip(self.knots.windows(2))
            .map(|(seg, w)| {
                let h = segment_hessian(POS_COEFFS, 4, w[1] - w[0]);
                let c = DVector::from_column_slice(&seg[axis]);
                (c.transpose() * h * &c)[0]
            })
            .sum()
    }

    /// Derivative of `order` at time `t`; before 0 and after the final knot
    /// the trajectory holds its end state (zero derivatives).
    pub fn eval(&self, t: f64, order: usize) -> Vector4<f64> {
        let end = self.duration();
        if t >= end || t < 0.0 || t.is_nan() {
            if order > 0 {
                return Vector4::zeros();
            }
            return if t < 0.0 {
                self.eval_in_segment(0, 0.0, 0)
            } else {
                self.eval_in_segment(self.segments() - 1, 1.0, 0)
            };
        }
        let k = self.knots.partition_point(|&kt| kt <= t).saturating_sub(1).min(self.segments() - 1);
        let s = (t - self.knots[k]) / (self.knots[k + 1] - self.knots[k]);
        self.eval_in_segment(k, s, order)
    }
}

/// `(x, y, z, ψ)` derivative of `order` at `t`.
pub fn eval(traj: &PiecewiseTrajectory, t: f64, order: usize) -> Vector4<f64> {
    traj.eval(t, order)
}

fn horner_derivative(coeffs: &[f64], s: f64, order: usize) -> f64 {
    if order >= coeffs.len() {
        return 0.0;
    }
    coeffs
        .iter()
        .enumerate()
        .skip(order)
        .rev()
        .fold(0.0, |acc, (i, &c)| acc * s + c * falling(i, order))
}
