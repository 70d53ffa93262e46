//! Hamilton-convention quaternions, stored `(w, x, y, z)`.
//!
//! An attitude quaternion rotates body-frame vectors into the inertial frame:
//! `p_I = V(q ∘ (0, p_B) ∘ q*)`.

use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use super::QuadError;

/// Tolerance on `|‖q‖ − 1|` accepted by [`quat_to_rot`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Pure quaternion `(0, v)`.
    pub fn pure(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let a = axis / n;
        Self::new(c, s * a.x, s * a.y, s * a.z)
    }

    /// Rotation about the inertial z axis.
    pub fn from_yaw(psi: f64) -> Self {
        Self::from_axis_angle(&Vector3::z(), psi)
    }

    /// Quaternion of a proper rotation matrix (Shepperd's method).
    pub fn from_rotation(r: &Matrix3<f64>) -> Self {
        let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
        let q = if trace > 0.0 {
            let s = (trace + 1.0).sqrt() * 2.0;
            Self::new(
                0.25 * s,
                (r[(2, 1)] - r[(1, 2)]) / s,
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(1, 0)] - r[(0, 1)]) / s,
            )
        } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
            let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
            Self::new(
                (r[(2, 1)] - r[(1, 2)]) / s,
                0.25 * s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
            )
        } else if r[(1, 1)] > r[(2, 2)] {
            let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
            Self::new(
                (r[(0, 2)] - r[(2, 0)]) / s,
                (r[(0, 1)] + r[(1, 0)]) / s,
                0.25 * s,
                (r[(1, 2)] + r[(2, 1)]) / s,
            )
        } else {
            let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
            Self::new(
                (r[(1, 0)] - r[(0, 1)]) / s,
                (r[(0, 2)] + r[(2, 0)]) / s,
                (r[(1, 2)] + r[(2, 1)]) / s,
                0.25 * s,
            )
        };
        q.normalized()
    }

    pub fn conj(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm(&self) -> f64 {
        self.as_vector().norm()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Vector part `V(q)`.
    pub fn vec(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Rotation matrix without the unit-norm check.
    pub fn rotation(&self) -> Matrix3<f64> {
        let Quat { w, x, y, z } = *self;
        Matrix3::new(
            1.0 - 2.0 * y * y - 2.0 * z * z,
            2.0 * x * y - 2.0 * w * z,
            2.0 * x * z + 2.0 * w * y,
            2.0 * x * y + 2.0 * w * z,
            1.0 - 2.0 * x * x - 2.0 * z * z,
            2.0 * y * z - 2.0 * w * x,
            2.0 * x * z - 2.0 * w * y,
            2.0 * y * z + 2.0 * w * x,
            1.0 - 2.0 * x * x - 2.0 * y * y,
        )
    }

    /// Third column of the rotation matrix: the body z axis in the inertial frame.
    pub fn body_z(&self) -> Vector3<f64> {
        let Quat { w, x, y, z } = *self;
        Vector3::new(
            2.0 * (x * z + w * y),
            2.0 * (y * z - w * x),
            1.0 - 2.0 * x * x - 2.0 * y * y,
        )
    }

    /// Rotate a vector by this (unit) quaternion.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * v
    }

    /// Matrix `L(q)` with `q ∘ r = L(q) r`.
    pub fn left_matrix(&self) -> Matrix4<f64> {
        let Quat { w, x, y, z } = *self;
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, -z, y, //
            y, z, w, -x, //
            z, -y, x, w,
        )
    }

    /// Matrix `M(r)` with `q ∘ r = M(r) q`.
    pub fn right_matrix(&self) -> Matrix4<f64> {
        let Quat { w, x, y, z } = *self;
        Matrix4::new(
            w, -x, -y, -z, //
            x, w, z, -y, //
            y, -z, w, x, //
            z, y, -x, w,
        )
    }
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Mul for Quat {
    type Output = Quat;

    fn mul(self, r: Quat) -> Quat {
        quat_multiply(&self, &r)
    }
}

impl Neg for Quat {
    type Output = Quat;

    fn neg(self) -> Quat {
        self.scale(-1.0)
    }
}

/// Hamilton product `a ∘ b`.
pub fn quat_multiply(a: &Quat, b: &Quat) -> Quat {
    Quat::new(
        a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    )
}

/// Rotation matrix of a unit quaternion; rejects inputs further than
/// [`UNIT_TOLERANCE`] from the unit sphere.
pub fn quat_to_rot(q: &Quat) -> Result<Matrix3<f64>, QuadError> {
    let n = q.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(QuadError::NotUnitQuaternion { norm: n });
    }
    Ok(q.rotation())
}

/// Sign used by the attitude error; `sgn(0) = +1`.
#[inline]
pub fn error_sign(w: f64) -> f64 {
    if w < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Attitude error `sgn(q_e,w) · V(q_e)` with `q_e = q ∘ q_ref⁻¹`.
///
/// Zero exactly when both quaternions describe the same attitude, and
/// unchanged when either argument is negated.
pub fn quat_error_vec(q: &Quat, q_ref: &Quat) -> Vector3<f64> {
    let qe = quat_multiply(q, &q_ref.conj());
    qe.vec() * error_sign(qe.w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn unit_quat() -> impl Strategy<Value = Quat> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-2)
            .prop_map(|(w, x, y, z)| Quat::new(w, x, y, z).normalized())
    }

    #[test]
    fn identity_is_neutral() {
        let q = Quat::new(0.3, -0.1, 0.8, 0.2).normalized();
        assert_eq!(Quat::IDENTITY * q, q);
        assert_eq!(q * Quat::IDENTITY, q);
    }

    #[test]
    fn two_quarter_yaws_make_a_half_turn() {
        let q = Quat::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2);
        let r = q * q;
        assert!((r.w).abs() < 1e-15);
        assert!((r.z - 1.0).abs() < 1e-15);
        assert_eq!((r.x, r.y), (0.0, 0.0));
    }

    #[test]
    fn quarter_yaw_maps_x_to_y() {
        let q = Quat::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2);
        let r = quat_to_rot(&q).unwrap();
        let v = r * Vector3::x();
        assert!((v - Vector3::y()).norm() < 1e-15);
        assert_eq!(quat_to_rot(&Quat::IDENTITY).unwrap(), Matrix3::identity());
    }

    #[test]
    fn rejects_non_unit() {
        assert!(matches!(
            quat_to_rot(&Quat::new(1.1, 0.0, 0.0, 0.0)),
            Err(QuadError::NotUnitQuaternion { .. })
        ));
        assert!(quat_to_rot(&Quat::new(1.0 + 5e-7, 0.0, 0.0, 0.0)).is_ok());
    }

    #[test]
    fn error_of_quarter_yaw() {
        let q = Quat::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2);
        let e = quat_error_vec(&q, &Quat::IDENTITY);
        assert!((e - Vector3::new(0.0, 0.0, FRAC_1_SQRT_2)).norm() < 1e-15);
        assert_eq!(quat_error_vec(&q, &q), Vector3::zeros());
        assert_eq!(quat_error_vec(&(-q), &q).norm(), 0.0);
    }

    #[test]
    fn matrices_reproduce_product() {
        let a = Quat::new(0.2, 0.4, -0.5, 0.7);
        let b = Quat::new(-0.3, 0.1, 0.9, -0.2);
        let ab = (a * b).as_vector();
        assert!((a.left_matrix() * b.as_vector() - ab).norm() < 1e-15);
        assert!((b.right_matrix() * a.as_vector() - ab).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn product_norm_is_multiplicative(a in unit_quat(), b in unit_quat(), s in 0.1..3.0f64) {
            let a = a.scale(s);
            prop_assert!(((a * b).norm() - a.norm() * b.norm()).abs() < 1e-12);
        }

        #[test]
        fn inverse_gives_identity(q in unit_quat()) {
            let r = q * q.conj();
            prop_assert!((r.as_vector() - Quat::IDENTITY.as_vector()).norm() < 1e-12);
        }

        #[test]
        fn rotation_is_proper_and_double_covered(q in unit_quat()) {
            let r = quat_to_rot(&q).unwrap();
            prop_assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
            prop_assert!((quat_to_rot(&(-q)).unwrap() - r).norm() == 0.0);
            prop_assert!((q.body_z() - r.column(2)).norm() < 1e-15);
        }

        #[test]
        fn from_rotation_round_trips(q in unit_quat()) {
            let back = Quat::from_rotation(&q.rotation());
            prop_assert!(quat_error_vec(&back, &q).norm() < 1e-10);
        }

        #[test]
        fn error_vanishes_iff_same_attitude(q in unit_quat(), r in unit_quat()) {
            prop_assert!(quat_error_vec(&q, &(-q)).norm() < 1e-15);
            let same = (q.rotation() - r.rotation()).norm() < 1e-9;
            let zero = quat_error_vec(&q, &r).norm() < 1e-9;
            prop_assert_eq!(same, zero);
            let e = quat_error_vec(&q, &r);
            prop_assert!((quat_error_vec(&(-q), &r) - e).norm() < 1e-15);
            prop_assert!((quat_error_vec(&q, &(-r)) - e).norm() < 1e-15);
        }
    }
}
