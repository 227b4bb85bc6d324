//! Frames, quaternion algebra and the attitude-error parameterization.
//!
//! Quaternions are Hamilton, scalar first: `q = w + xi + yj + zk`.
//! `q_wb` maps body-frame vectors into the world frame, `v_w = q_wb * v_b`,
//! and the matching rotation matrix is `R_wb`.
//!
//! Attitude errors are modified Rodrigues parameters scaled as in USQUE with
//! `a = 1`, `f = 2 (a + 1) = 4`, which makes a small error numerically equal
//! to the rotation angle in radians. The error is defined on the left:
//! `q = δq(e) ⊗ q_ref`.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::scalar::{lit, Scalar};

/// Builds a unit quaternion from scalar-first components, normalizing them.
pub fn quat<T: Scalar>(w: T, x: T, y: T, z: T) -> UnitQuaternion<T> {
    UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z))
}

/// Scalar-first components `[w, x, y, z]`.
pub fn quat_components<T: Scalar>(q: &UnitQuaternion<T>) -> [T; 4] {
    [q.w, q.i, q.j, q.k]
}

/// Rotates `v` by `q` (`R(q) v`).
pub fn quat_rotate<T: Scalar>(q: &UnitQuaternion<T>, v: &Vector3<T>) -> Vector3<T> {
    q.transform_vector(v)
}

pub fn quat_to_matrix<T: Scalar>(q: &UnitQuaternion<T>) -> Matrix3<T> {
    q.to_rotation_matrix().into_inner()
}

/// Converts an orthonormal matrix (det +1) to a quaternion with `w >= 0`.
pub fn matrix_to_quat<T: Scalar>(r: &Matrix3<T>) -> UnitQuaternion<T> {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    canonical(q)
}

/// Picks the representative of `±q` with a non-negative scalar part.
pub fn canonical<T: Scalar>(q: UnitQuaternion<T>) -> UnitQuaternion<T> {
    if q.w < T::zero() {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Re-normalizes a quaternion that drifted through arithmetic.
pub fn renormalize<T: Scalar>(q: UnitQuaternion<T>) -> UnitQuaternion<T> {
    UnitQuaternion::from_quaternion(q.into_inner())
}

/// Exact integration of `q̇ = ½ q ⊗ (0, ω)` for a body rate held constant over `dt`.
pub fn quat_integrate<T: Scalar>(q: &UnitQuaternion<T>, omega_body: &Vector3<T>, dt: T) -> UnitQuaternion<T> {
    let step = UnitQuaternion::from_scaled_axis(omega_body * dt);
    renormalize(q * step)
}

/// Skew-symmetric cross-product matrix `[v×]`.
pub fn skew<T: Scalar>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(T::zero(), -v.z, v.y, v.z, T::zero(), -v.x, -v.y, v.x, T::zero())
}

/// Standard (unscaled) modified Rodrigues parameters of `q`, `p = q_vec / (1 + w)`.
///
/// Uses the shadow set when `w < 0` so that `|p| <= 1`.
pub fn mrp_from_quat<T: Scalar>(q: &UnitQuaternion<T>) -> Vector3<T> {
    let q = canonical(*q);
    q.imag() / (T::one() + q.w)
}

/// Inverse of [`mrp_from_quat`].
pub fn quat_from_mrp<T: Scalar>(p: &Vector3<T>) -> UnitQuaternion<T> {
    let n2 = p.norm_squared();
    let den = T::one() + n2;
    let w = (T::one() - n2) / den;
    let v = p * (lit::<T>(2.0) / den);
    UnitQuaternion::from_quaternion(Quaternion::from_parts(w, v))
}

/// MRP scale parameters of the attitude-error parameterization.
const MRP_A: f64 = 1.0;
const MRP_F: f64 = 2.0 * (MRP_A + 1.0);

/// Three-parameter attitude error (USQUE-scaled modified Rodrigues parameters).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AttitudeError<T: Scalar>(pub Vector3<T>);

impl<T: Scalar> AttitudeError<T> {
    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    /// Error of the rotation `dq`, switching to the shadow set when `w < 0`.
    pub fn from_quaternion(dq: &UnitQuaternion<T>) -> Self {
        let dq = canonical(*dq);
        let a: T = lit(MRP_A);
        let f: T = lit(MRP_F);
        Self(dq.imag() * (f / (a + dq.w)))
    }

    pub fn to_quaternion(&self) -> UnitQuaternion<T> {
        let a: T = lit(MRP_A);
        let f: T = lit(MRP_F);
        let n2 = self.0.norm_squared();
        let f2 = f * f;
        let w = (-a * n2 + f * (f2 + (T::one() - a * a) * n2).sqrt()) / (f2 + n2);
        let v = self.0 * ((a + w) / f);
        UnitQuaternion::from_quaternion(Quaternion::from_parts(w, v))
    }

    pub fn vector(&self) -> &Vector3<T> {
        &self.0
    }
}

/// Attitude error of `q` relative to `q_ref`: `δq = q ⊗ q_ref⁻¹`.
pub fn mrp_error<T: Scalar>(q: &UnitQuaternion<T>, q_ref: &UnitQuaternion<T>) -> AttitudeError<T> {
    AttitudeError::from_quaternion(&(q * q_ref.inverse()))
}

/// Applies an attitude error to a reference: `q = δq(e) ⊗ q_ref`.
pub fn compose_mrp<T: Scalar>(q_ref: &UnitQuaternion<T>, e: &AttitudeError<T>) -> UnitQuaternion<T> {
    renormalize(e.to_quaternion() * q_ref)
}

/// Roll, pitch, yaw (ZYX convention) of `q`.
pub fn euler_rpy<T: Scalar>(q: &UnitQuaternion<T>) -> (T, T, T) {
    q.euler_angles()
}

/// Angle between two attitudes in radians, in `[0, π]`.
pub fn angle_between<T: Scalar>(a: &UnitQuaternion<T>, b: &UnitQuaternion<T>) -> T {
    a.angle_to(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    fn arb_quat() -> impl Strategy<Value = UnitQuaternion<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| quat(w, x, y, z))
    }

    fn arb_vec(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
        (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    fn same_rotation(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, tol: f64) -> bool {
        let d = a.coords.dot(&b.coords).abs();
        (1.0 - d).abs() < tol
    }

    #[test]
    fn rotate_identity_and_yaw() {
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(quat_rotate(&UnitQuaternion::identity(), &v), v);
        let q = quat(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2);
        let r = quat_rotate(&q, &Vector3::x());
        assert_relative_eq!(r, Vector3::y(), epsilon = 1e-12);
    }

    #[test]
    fn integrate_quarter_turn() {
        let q = quat_integrate(&UnitQuaternion::identity(), &Vector3::new(0.0, 0.0, FRAC_PI_2), 1.0);
        let c = quat_components(&q);
        assert_relative_eq!(c[0], FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_relative_eq!(c[3], FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_relative_eq!(c[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn integrate_zero_rate_is_identity_map() {
        let q = quat(0.3, -0.2, 0.9, 0.1);
        let out = quat_integrate(&q, &Vector3::zeros(), 3.7);
        assert!(same_rotation(&q, &out, 1e-15));
    }

    #[test]
    fn mrp_small_angle_limits() {
        let d = 1e-4;
        let q = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), d);
        // standard parameters: tan(d/4)
        let p = mrp_from_quat(&q);
        assert_relative_eq!(p.x, d / 4.0, max_relative = 1e-6);
        // scaled error used by the filter: 4 tan(d/4)
        let e = mrp_error(&q, &UnitQuaternion::identity());
        assert_relative_eq!(e.0.x, d, max_relative = 1e-6);
        assert_relative_eq!(e.0.y, 0.0);
    }

    #[test]
    fn mrp_zero_at_reference() {
        let q = quat(0.5, 0.1, -0.7, 0.2);
        assert_relative_eq!(mrp_error(&q, &q).0, Vector3::zeros(), epsilon = 1e-12);
        assert_eq!(AttitudeError::<f64>::zero().to_quaternion(), UnitQuaternion::identity());
    }

    #[test]
    fn mrp_shadow_switch_near_full_turn() {
        let q_ref = UnitQuaternion::identity();
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 2.0 * PI - 1e-3);
        let e = mrp_error(&q, &q_ref);
        assert!(e.0.norm() < 1e-2, "shadow set keeps the error small: {:?}", e);
        assert!(same_rotation(&compose_mrp(&q_ref, &e), &q, 1e-12));
    }

    proptest! {
        #[test]
        fn rotate_matches_matrix(q in arb_quat(), v in arb_vec(10.0)) {
            let by_matrix = quat_to_matrix(&q) * v;
            prop_assert!((quat_rotate(&q, &v) - by_matrix).norm() < 1e-12);
        }

        #[test]
        fn matrix_round_trip(q in arb_quat()) {
            let r = quat_to_matrix(&q);
            prop_assert!((r * r.transpose() - Matrix3::identity()).abs().max() < 1e-9);
            let back = matrix_to_quat(&r);
            prop_assert!(same_rotation(&q, &back, 1e-9));
            prop_assert!((back.coords.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn integrate_halves_compose(q in arb_quat(), w in arb_vec(3.0), dt in 0.0..2.0f64) {
            let full = quat_integrate(&q, &w, dt);
            let half = quat_integrate(&quat_integrate(&q, &w, dt / 2.0), &w, dt / 2.0);
            prop_assert!(same_rotation(&full, &half, 1e-12));
            // closed-form axis-angle
            let angle = w.norm() * dt;
            let oracle = if w.norm() > 0.0 {
                q * UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(w), angle)
            } else { q };
            prop_assert!(same_rotation(&full, &oracle, 1e-12));
            prop_assert!((full.coords.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn mrp_round_trip(q in arb_quat(), q_ref in arb_quat()) {
            let e = mrp_error(&q, &q_ref);
            let back = compose_mrp(&q_ref, &e);
            prop_assert!(same_rotation(&back, &q, 1e-9));
            prop_assert!((back.coords.norm() - 1.0).abs() < 1e-9);
            // oracle: explicit quaternion product δq ⊗ q_ref
            let dq = q.into_inner() * q_ref.into_inner().conjugate();
            let dq = if dq.w < 0.0 { -dq } else { dq };
            let expect = dq.imag() * (4.0 / (1.0 + dq.w));
            prop_assert!((e.0 - expect).norm() < 1e-9);
        }

        #[test]
        fn standard_mrp_round_trip(q in arb_quat()) {
            let back = quat_from_mrp(&mrp_from_quat(&q));
            prop_assert!(same_rotation(&back, &q, 1e-9));
            prop_assert!(mrp_from_quat(&q).norm() <= 1.0 + 1e-12);
        }
    }
}
