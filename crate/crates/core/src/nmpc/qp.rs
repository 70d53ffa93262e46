//! Dense primal active-set solver for `min ½uᵀHu + gᵀu  s.t.  lb ≤ u ≤ ub`.

use nalgebra::{DMatrix, DVector};

use super::NmpcError;

/// Working-set membership of one variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Bound {
    #[default]
    Free,
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    MaxIterations,
}

impl QpStatus {
    pub fn code(self) -> u8 {
        match self {
            QpStatus::Optimal => 0,
            QpStatus::MaxIterations => 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BoxQpSolution {
    pub u: DVector<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// `‖u − clamp(u − (Hu + g), lb, ub)‖∞`
    pub kkt_residual: f64,
    pub active: Vec<Bound>,
}

/// Natural-map optimality residual of a box QP at `u`.
pub fn box_kkt_residual(h: &DMatrix<f64>, g: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let grad = h * u + g;
    (0..u.len())
        .map(|i| (u[i] - (u[i] - grad[i]).clamp(lb[i], ub[i])).abs())
        .fold(0.0, f64::max)
}

pub fn qp_solve_box(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
) -> Result<BoxQpSolution, NmpcError> {
    qp_solve_box_warm(h, g, lb, ub, None, default_max_iterations(g.len()))
}

pub fn default_max_iterations(n: usize) -> usize {
    10 * n + 50
}

/// Active-set solve started from a guessed working set.
///
/// Variables fixed in `warm` start at their bound; free ones start at the
/// projection of zero onto the box.
pub fn qp_solve_box_warm(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    warm: Option<&[Bound]>,
    max_iterations: usize,
) -> Result<BoxQpSolution, NmpcError> {
    let n = g.len();
    if h.nrows() != n || h.ncols() != n || lb.len() != n || ub.len() != n {
        return Err(NmpcError::Dimension(format!(
            "H {}x{}, g {}, lb {}, ub {}",
            h.nrows(),
            h.ncols(),
            n,
            lb.len(),
            ub.len()
        )));
    }
    if let Some(i) = (0..n).find(|&i| !(lb[i] <= ub[i])) {
        return Err(NmpcError::InvertedBounds(i));
    }

    let mut set: Vec<Bound> = match warm {
        Some(w) if w.len() == n => w.to_vec(),
        _ => vec![Bound::Free; n],
    };
    for i in 0..n {
        if set[i] == Bound::Lower && !lb[i].is_finite() || set[i] == Bound::Upper && !ub[i].is_finite() {
            set[i] = Bound::Free;
        }
    }
    let mut u = DVector::from_fn(n, |i, _| match set[i] {
        Bound::Lower => lb[i],
        Bound::Upper => ub[i],
        Bound::Free => 0.0f64.clamp(lb[i], ub[i]),
    });

    let scale = 1.0 + g.amax() + h.amax();
    let dual_tol = 1e-13 * scale;
    let mut status = QpStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < max_iterations {
        iterations += 1;
        let free: Vec<usize> = (0..n).filter(|&i| set[i] == Bound::Free).collect();

        let mut took_full_step = true;
        if !free.is_empty() {
            let nf = free.len();
            let hff = DMatrix::from_fn(nf, nf, |a, b| h[(free[a], free[b])]);
            // Right-hand side −(g_F + H_FB u_B).
            let rhs = DVector::from_fn(nf, |a, _| {
                let i = free[a];
                let mut s = g[i];
                for j in 0..n {
                    if set[j] != Bound::Free {
                        s += h[(i, j)] * u[j];
                    }
                }
                -s
            });
            let chol = hff.cholesky().ok_or(NmpcError::NotPositiveDefinite)?;
            let target = chol.solve(&rhs);

            // Ratio test toward the subspace minimizer.
            let mut alpha = 1.0;
            let mut blocking: Option<(usize, Bound)> = None;
            for (a, &i) in free.iter().enumerate() {
                let p = target[a] - u[i];
                if p < 0.0 && lb[i].is_finite() {
                    let step = (lb[i] - u[i]) / p;
                    if step < alpha {
                        alpha = step.max(0.0);
                        blocking = Some((i, Bound::Lower));
                    }
                } else if p > 0.0 && ub[i].is_finite() {
                    let step = (ub[i] - u[i]) / p;
                    if step < alpha {
                        alpha = step.max(0.0);
                        blocking = Some((i, Bound::Upper));
                    }
                }
            }
            match blocking {
                None => {
                    for (a, &i) in free.iter().enumerate() {
                        u[i] = target[a];
                    }
                }
                Some((j, side)) => {
                    took_full_step = false;
                    for (a, &i) in free.iter().enumerate() {
                        u[i] += alpha * (target[a] - u[i]);
                        u[i] = u[i].clamp(lb[i], ub[i]);
                    }
                    set[j] = side;
                    u[j] = if side == Bound::Lower { lb[j] } else { ub[j] };
                }
            }
        }
        if !took_full_step {
            continue;
        }

        // Subspace optimum reached: release the bound with the worst multiplier.
        let grad = h * &u + g;
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let violation = match set[i] {
                Bound::Lower => -grad[i],
                Bound::Upper => grad[i],
                Bound::Free => continue,
            };
            if violation > dual_tol && worst.is_none_or(|(_, v)| violation > v) {
                worst = Some((i, violation));
            }
        }
        match worst {
            Some((i, _)) => set[i] = Bound::Free,
            None => {
                status = QpStatus::Optimal;
                break;
            }
        }
    }

    let kkt_residual = box_kkt_residual(h, g, lb, ub, &u);
    Ok(BoxQpSolution { u, status, iterations, kkt_residual, active: set })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamped_scalar() {
        // (u − 3)² ∝ ½·2u² − 6u
        let h = DMatrix::from_element(1, 1, 2.0);
        let g = DVector::from_element(1, -6.0);
        let s = qp_solve_box(&h, &g, &DVector::from_element(1, 0.0), &DVector::from_element(1, 2.0)).unwrap();
        assert_eq!(s.u[0], 2.0);
        assert_eq!(s.active, vec![Bound::Upper]);
        assert_eq!(s.status, QpStatus::Optimal);
    }

    #[test]
    fn interior_optimum_is_newton_step() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let g = DVector::from_vec(vec![1.0, 2.0]);
        let lb = DVector::from_element(2, -10.0);
        let ub = DVector::from_element(2, 10.0);
        let s = qp_solve_box(&h, &g, &lb, &ub).unwrap();
        let exact = -h.clone().lu().solve(&g).unwrap();
        assert!((s.u - exact).amax() < 1e-14);
        assert!(s.kkt_residual < 1e-12);
    }

    #[test]
    fn warm_start_from_wrong_set_recovers() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = DVector::from_vec(vec![-1.0, 0.3]);
        let lb = DVector::from_element(2, -1.0);
        let ub = DVector::from_element(2, 1.0);
        let cold = qp_solve_box(&h, &g, &lb, &ub).unwrap();
        let warm = qp_solve_box_warm(&h, &g, &lb, &ub, Some(&[Bound::Lower, Bound::Upper]), 50).unwrap();
        assert!((cold.u - warm.u).amax() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        let h = DMatrix::from_element(1, 1, 1.0);
        let g = DVector::from_element(1, 0.0);
        assert!(matches!(
            qp_solve_box(&h, &g, &DVector::from_element(1, 1.0), &DVector::from_element(1, 0.0)),
            Err(NmpcError::InvertedBounds(0))
        ));
        let neg = DMatrix::from_element(1, 1, -1.0);
        let wide = DVector::from_element(1, 5.0);
        assert!(matches!(qp_solve_box(&neg, &g, &-wide.clone(), &wide), Err(NmpcError::NotPositiveDefinite)));
    }
}
