//! Close-proximity quadrotor flight with a learned downwash predictor feeding
//! a real-time-iteration nonlinear MPC.
//!
//! Pipeline: simulate two vehicles ([`harness`]), reconstruct the disturbance
//! force from flight logs ([`data`]), fit a spectrally normalized MLP
//! ([`predictor`]), then fly minimum-snap references ([`trajectory`]) with the
//! controller ([`nmpc`]) consuming the predicted disturbance sequence.

pub mod data;
pub mod downwash;
pub mod harness;
pub mod quad;
pub mod nmpc;
pub mod predictor;
pub mod trajectory;
