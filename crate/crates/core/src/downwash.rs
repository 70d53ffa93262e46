//! Synthetic downwash field acting on a vehicle flying below a neighbor.
//!
//! Relative quantities use `rel = other − ego`, so the field is active when
//! the neighbor is above (`rel_p.z > 0`). The force is purely vertical:
//!
//! `f_z = −A · exp(−(dx'² + dy'²) / 2σ_r²) · h(dz)`, with
//! `h(dz) = (dz/z0) · exp(1 − dz/z0)` on `(0, z_cut]` and zero elsewhere, and
//! `(dx', dy') = (dx, dy) − v_adv · (rel_vx, rel_vy)`.

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid downwash parameter `{name}`: {value}")]
pub struct DownwashError {
    pub name: &'static str,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DownwashParams {
    /// Peak downward force, N.
    pub peak_force: f64,
    /// Radial spread, m.
    pub sigma_r: f64,
    /// Vertical separation of the peak, m.
    pub z_peak: f64,
    /// Maximum vertical reach, m.
    pub z_cut: f64,
    /// Lateral wake advection, s.
    pub v_adv: f64,
}

impl Default for DownwashParams {
    fn default() -> Self {
        Self { peak_force: 4.0, sigma_r: 0.2, z_peak: 0.6, z_cut: 2.0, v_adv: 0.05 }
    }
}

impl DownwashParams {
    pub fn disabled() -> Self {
        Self { peak_force: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DownwashError> {
        let check = |name, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(DownwashError { name, value })
            }
        };
        check("A", self.peak_force, self.peak_force >= 0.0)?;
        check("sigma_r", self.sigma_r, self.sigma_r > 0.0)?;
        check("z0", self.z_peak, self.z_peak > 0.0)?;
        check("z_cut", self.z_cut, self.z_cut > self.z_peak)?;
        check("v_adv", self.v_adv, true)
    }

    /// Vertical profile `h(dz)`, peaking at 1 for `dz = z0`.
    pub fn vertical_profile(&self, dz: f64) -> f64 {
        if dz > 0.0 && dz <= self.z_cut {
            let s = dz / self.z_peak;
            s * (1.0 - s).exp()
        } else {
            0.0
        }
    }
}

/// Ground-truth disturbance force on the ego vehicle.
pub fn true_disturbance(
    rel_p: &Vector3<f64>,
    rel_v: &Vector3<f64>,
    dw: &DownwashParams,
) -> Vector3<f64> {
    let h = dw.vertical_profile(rel_p.z);
    if h == 0.0 || dw.peak_force == 0.0 {
        return Vector3::zeros();
    }
    let dx = rel_p.x - dw.v_adv * rel_v.x;
    let dy = rel_p.y - dw.v_adv * rel_v.y;
    let radial = (-(dx * dx + dy * dy) / (2.0 * dw.sigma_r * dw.sigma_r)).exp();
    Vector3::new(0.0, 0.0, -dw.peak_force * radial * h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn peak_below_neighbor() {
        let dw = DownwashParams::default();
        let f = true_disturbance(&Vector3::new(0.0, 0.0, 0.6), &Vector3::zeros(), &dw);
        assert!((f - Vector3::new(0.0, 0.0, -4.0)).norm() < 1e-12);
    }

    #[test]
    fn inactive_when_neighbor_is_below() {
        let dw = DownwashParams::default();
        let f = true_disturbance(&Vector3::new(0.0, 0.0, -0.6), &Vector3::zeros(), &dw);
        assert_eq!(f, Vector3::zeros());
        let far = true_disturbance(&Vector3::new(0.0, 0.0, 2.01), &Vector3::zeros(), &dw);
        assert_eq!(far, Vector3::zeros());
    }

    #[test]
    fn three_sigma_radial_decay() {
        let dw = DownwashParams::default();
        let f = true_disturbance(&Vector3::new(0.6, 0.0, 0.6), &Vector3::zeros(), &dw);
        assert!((f.z + 4.0 * (-4.5f64).exp()).abs() < 1e-12);
        assert!((f.z + 0.044).abs() < 1e-3);
    }

    #[test]
    fn advection_shifts_the_wake() {
        let dw = DownwashParams::default();
        let rel_v = Vector3::new(2.0, 0.0, 0.0);
        let shifted = true_disturbance(&Vector3::new(0.1, 0.0, 0.6), &rel_v, &dw);
        assert!((shifted.z + 4.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(DownwashParams::default().validate().is_ok());
        let bad = DownwashParams { z_cut: 0.5, ..Default::default() };
        assert_eq!(bad.validate().unwrap_err().name, "z_cut");
        let bad = DownwashParams { sigma_r: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn bounded_downward_and_axisymmetric(
            r in 0.0..2.0f64, theta in 0.0..6.3f64, dz in -3.0..3.0f64,
        ) {
            let dw = DownwashParams { v_adv: 0.0, ..Default::default() };
            let a = true_disturbance(&Vector3::new(r * theta.cos(), r * theta.sin(), dz), &Vector3::zeros(), &dw);
            let b = true_disturbance(&Vector3::new(r, 0.0, dz), &Vector3::zeros(), &dw);
            prop_assert!((a.z - b.z).abs() < 1e-12);
            prop_assert!(a.z <= 0.0 && a.z >= -dw.peak_force);
            prop_assert_eq!((a.x, a.y), (0.0, 0.0));
            if dz <= 0.0 || dz > dw.z_cut {
                prop_assert_eq!(a.z, 0.0);
            }
        }

        #[test]
        fn monotone_radial_decay(r in 0.0..1.5f64, dr in 0.0..0.5f64, dz in 0.01..2.0f64) {
            let dw = DownwashParams { v_adv: 0.0, ..Default::default() };
            let near = true_disturbance(&Vector3::new(r, 0.0, dz), &Vector3::zeros(), &dw);
            let far = true_disturbance(&Vector3::new(r + dr, 0.0, dz), &Vector3::zeros(), &dw);
            prop_assert!(far.z.abs() <= near.z.abs() + 1e-15);
        }

        #[test]
        fn continuous_at_zero_separation(eps in 1e-9..1e-6f64) {
            let dw = DownwashParams::default();
            let f = true_disturbance(&Vector3::new(0.0, 0.0, eps), &Vector3::zeros(), &dw);
            prop_assert!(f.z.abs() < 1e-4);
        }
    }
}
