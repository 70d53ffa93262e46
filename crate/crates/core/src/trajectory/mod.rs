//! Reference generation: waypoint time allocation, minimum-snap piecewise
//! polynomials, differential-flatness full-state references and a
//! horizon-aligned reference server.

mod flat;
mod io;
mod minsnap;

pub use flat::{flat_to_state, serve_reference, FlatOutput, FullStateRef};
pub use io::{read_waypoints, parse_waypoints, write_trajectory_csv};
pub use minsnap::{
    allocate_times, eval, min_snap, PiecewiseTrajectory, POS_COEFFS, POS_CONTINUITY, YAW_COEFFS,
    YAW_CONTINUITY,
};

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("at least two waypoints are required, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoints {0} and {1} coincide")]
    CoincidentWaypoints(usize, usize),
    #[error("waypoint {0} is not finite")]
    NonFiniteWaypoint(usize),
    #[error("average speed must be positive, got {0}")]
    NonPositiveSpeed(f64),
    #[error("knots must start at 0 and increase strictly (one per waypoint)")]
    BadKnots,
    #[error("minimum-snap KKT system is singular")]
    SingularKkt,
    #[error("thrust direction undefined: |a - g| = {0:.4} m/s² (free fall)")]
    FreeFall(f64),
    #[error("horizon must have at least one interval")]
    EmptyHorizon,
    #[error("waypoint file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Position and yaw target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    pub p: Vector3<f64>,
    pub psi: f64,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, z: f64, psi: f64) -> Self {
        Self { p: Vector3::new(x, y, z), psi }
    }
}
