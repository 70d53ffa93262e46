//! Predicted disturbance sequence from a neighbor's shared trajectory.

use nalgebra::Vector3;

use super::{DisturbanceSchedule, NmpcError};
use crate::predictor::{predict_horizon, MlpModel};
use crate::quad::ReducedState;

/// Which neighbor trajectory is exchanged each control period.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NeighborMode {
    /// The neighbor's latest NMPC prediction.
    Predicted,
    /// The neighbor's reference trajectory.
    Reference,
}

impl std::str::FromStr for NeighborMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "predicted" => Ok(NeighborMode::Predicted),
            "reference" => Ok(NeighborMode::Reference),
            other => Err(format!("unknown neighbor mode `{other}`")),
        }
    }
}

/// Zero-order-hold resampling of a trajectory sampled every `sample_dt`
/// from its own start onto `nodes` points at `offset + k·node_dt`. Times past
/// the end hold the last sample.
pub fn resample_zoh(
    samples: &[ReducedState],
    sample_dt: f64,
    offset: f64,
    node_dt: f64,
    nodes: usize,
) -> Result<Vec<ReducedState>, NmpcError> {
    if samples.is_empty() {
        return Err(NmpcError::Dimension("empty neighbor trajectory".into()));
    }
    if !(sample_dt > 0.0 && node_dt > 0.0 && offset >= 0.0) {
        return Err(NmpcError::InvalidConfig { name: "resample interval", value: sample_dt.min(node_dt).min(offset) });
    }
    Ok((0..nodes)
        .map(|k| {
            let t = offset + k as f64 * node_dt;
            let idx = ((t / sample_dt) + 1e-9).floor() as usize;
            samples[idx.min(samples.len() - 1)]
        })
        .collect())
}

/// Disturbance predicted at each node from the neighbor state minus the
/// ego reference. Without a model the schedule is zero.
pub fn build_schedule(
    model: Option<&MlpModel>,
    ego_refs: &[ReducedState],
    neighbor: &[ReducedState],
) -> Result<DisturbanceSchedule, NmpcError> {
    if ego_refs.len() != neighbor.len() {
        return Err(NmpcError::Dimension(format!(
            "{} ego nodes but {} neighbor nodes",
            ego_refs.len(),
            neighbor.len()
        )));
    }
    let Some(model) = model else {
        return Ok(DisturbanceSchedule::zeros(ego_refs.len()));
    };
    let rel: Vec<(Vector3<f64>, Vector3<f64>)> =
        ego_refs.iter().zip(neighbor).map(|(e, o)| (o.p - e.p, o.v - e.v)).collect();
    let forces = predict_horizon(model, &rel);
    let schedule = DisturbanceSchedule { forces };
    if !schedule.is_finite() {
        return Err(NmpcError::NonFinite("predicted disturbance"));
    }
    Ok(schedule)
}
