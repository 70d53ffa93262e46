//! Disturbance-aware NMPC: RK4 multiple shooting of the reduced model,
//! one Gauss-Newton SQP iteration per control period on the condensed
//! input QP, and thrust normalization for the autopilot.

mod config;
pub mod model;
pub mod qp;
mod rti;
mod schedule;
mod throttle;

use thiserror::Error;

pub use config::{InputReference, OcpConfig};
pub use qp::{qp_solve_box, qp_solve_box_warm, BoxQpSolution, Bound, QpStatus};
pub use rti::{
    build_residuals, defect_jacobians, input_references, residual_jacobian, rti_step, shooting_defects,
    DisturbanceSchedule, RtiOutput, RtiWorkspace, SolveInfo, STAGE_RES, STATE_RES,
};
pub use schedule::{build_schedule, resample_zoh, NeighborMode};
pub use throttle::{throttle_to_thrust, thrust_to_throttle, HoverThrottleState};

#[derive(Debug, Error)]
pub enum NmpcError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("lower bound exceeds upper bound at variable {0}")]
    InvertedBounds(usize),
    #[error("QP Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid controller setting {name} = {value}")]
    InvalidConfig { name: &'static str, value: f64 },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("disturbance prediction failed: {0}")]
    Predictor(#[from] crate::predictor::PredictorError),
}
