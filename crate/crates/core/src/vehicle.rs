//! Rigid-body multirotor dynamics with isotropic drag, gravity, commanded
//! wrench and an external interaction force.
//!
//! ```text
//! ṗ = v
//! Ṙ = R [ω×]
//! m v̇ = R e₃ f_cmd + f_drag + m g + f_touch
//! J ω̇ = −ω × J ω + τ_cmd
//! ```
//!
//! Drag and interaction produce no torque.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geom::{quat_integrate, renormalize};
use crate::scalar::{lit, Scalar};

/// Below this airspeed the drag direction is undefined and the force is zero.
pub const DRAG_SPEED_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleParams<T: Scalar> {
    /// kg
    pub mass: T,
    /// kg·m², body frame
    pub inertia: Matrix3<T>,
    /// Linear drag coefficient, N·s/m.
    pub mu1: T,
    /// Quadratic drag coefficient, N·s²/m².
    pub mu2: T,
    /// m/s²
    pub gravity: T,
}

impl<T: Scalar> Default for VehicleParams<T> {
    /// 1.31 kg hexarotor with the identified drag coefficients
    /// (μ₁ = 0.20, μ₂ = 0.07).
    ///
    /// The inertia is a placeholder diagonal tensor for a vehicle of this
    /// size; it was never measured on the real airframe.
    fn default() -> Self {
        Self {
            mass: lit(1.31),
            inertia: Matrix3::from_diagonal(&Vector3::new(lit(0.018), lit(0.018), lit(0.032))),
            mu1: lit(0.20),
            mu2: lit(0.07),
            gravity: lit(9.81),
        }
    }
}

impl<T: Scalar> VehicleParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > T::zero()) {
            return Err(Error::InvalidParameter("mass must be positive".into()));
        }
        if self.mu1 < T::zero() || self.mu2 < T::zero() {
            return Err(Error::InvalidParameter("drag coefficients must be non-negative".into()));
        }
        let sym = (self.inertia - self.inertia.transpose()).abs().max();
        if sym > lit(1e-12) || self.inertia.cholesky().is_none() {
            return Err(Error::InvalidParameter("inertia must be symmetric positive definite".into()));
        }
        Ok(())
    }

    /// Hover thrust `m g`.
    pub fn hover_thrust(&self) -> T {
        self.mass * self.gravity
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState<T: Scalar> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
    /// Body to world, `q_wb`.
    pub attitude: UnitQuaternion<T>,
    /// Body frame, rad/s.
    pub angular_velocity: Vector3<T>,
}

impl<T: Scalar> VehicleState<T> {
    pub fn at_rest(position: Vector3<T>) -> Self {
        Self {
            position,
            velocity: Vector3::zeros(),
            attitude: UnitQuaternion::identity(),
            angular_velocity: Vector3::zeros(),
        }
    }
}

impl<T: Scalar> Default for VehicleState<T> {
    fn default() -> Self {
        Self::at_rest(Vector3::zeros())
    }
}

/// Collective thrust along body z (N) and body torque (N·m).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WrenchInput<T: Scalar> {
    pub thrust: T,
    pub torque: Vector3<T>,
}

impl<T: Scalar> WrenchInput<T> {
    pub fn hover(params: &VehicleParams<T>) -> Self {
        Self { thrust: params.hover_thrust(), torque: Vector3::zeros() }
    }
}

/// World-frame wind (m/s) and interaction force (N).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DisturbanceInput<T: Scalar> {
    pub wind: Vector3<T>,
    pub touch: Vector3<T>,
}

impl<T: Scalar> Default for DisturbanceInput<T> {
    fn default() -> Self {
        Self { wind: Vector3::zeros(), touch: Vector3::zeros() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StateDerivative<T: Scalar> {
    pub position: Vector3<T>,
    /// `q̇ = ½ q ⊗ (0, ω)`
    pub attitude: Quaternion<T>,
    pub velocity: Vector3<T>,
    pub angular_velocity: Vector3<T>,
}

/// `v∞ = v_wind − v`, world frame.
pub fn relative_airflow_world<T: Scalar>(wind: &Vector3<T>, velocity: &Vector3<T>) -> Vector3<T> {
    wind - velocity
}

/// Magnitude of the isotropic drag at airspeed `speed`.
pub fn drag_magnitude<T: Scalar>(speed: T, params: &VehicleParams<T>) -> T {
    params.mu1 * speed + params.mu2 * speed * speed
}

/// Isotropic drag `(μ₁ v∞ + μ₂ v∞²) e_v∞`, world frame.
pub fn drag_force<T: Scalar>(v_inf: &Vector3<T>, params: &VehicleParams<T>) -> Vector3<T> {
    let speed = v_inf.norm();
    if speed < lit(DRAG_SPEED_EPS) {
        return Vector3::zeros();
    }
    v_inf * (drag_magnitude(speed, params) / speed)
}

/// World-frame acceleration `v̇`.
pub fn linear_acceleration<T: Scalar>(
    state: &VehicleState<T>,
    input: &WrenchInput<T>,
    dist: &DisturbanceInput<T>,
    params: &VehicleParams<T>,
) -> Vector3<T> {
    let thrust_w = state.attitude.transform_vector(&(Vector3::z() * input.thrust));
    let drag = drag_force(&relative_airflow_world(&dist.wind, &state.velocity), params);
    let gravity = Vector3::z() * (-params.gravity * params.mass);
    (thrust_w + drag + gravity + dist.touch) / params.mass
}

/// Body-frame angular acceleration `ω̇`.
pub fn angular_acceleration<T: Scalar>(omega: &Vector3<T>, torque: &Vector3<T>, params: &VehicleParams<T>) -> Vector3<T> {
    let jw = params.inertia * omega;
    let rhs = torque - omega.cross(&jw);
    params
        .inertia
        .cholesky()
        .map(|c| c.solve(&rhs))
        .unwrap_or_else(|| params.inertia.try_inverse().unwrap_or_else(Matrix3::identity) * rhs)
}

pub fn continuous_dynamics<T: Scalar>(
    state: &VehicleState<T>,
    input: &WrenchInput<T>,
    dist: &DisturbanceInput<T>,
    params: &VehicleParams<T>,
) -> StateDerivative<T> {
    let omega_q = Quaternion::from_parts(T::zero(), state.angular_velocity);
    StateDerivative {
        position: state.velocity,
        attitude: state.attitude.into_inner() * omega_q * lit::<T>(0.5),
        velocity: linear_acceleration(state, input, dist, params),
        angular_velocity: angular_acceleration(&state.angular_velocity, &input.torque, params),
    }
}

fn offset<T: Scalar>(state: &VehicleState<T>, k: &StateDerivative<T>, h: T) -> VehicleState<T> {
    VehicleState {
        position: state.position + k.position * h,
        velocity: state.velocity + k.velocity * h,
        // unnormalized on purpose: the RK4 stages act on raw quaternion components
        attitude: UnitQuaternion::new_unchecked(state.attitude.into_inner() + k.attitude * h),
        angular_velocity: state.angular_velocity + k.angular_velocity * h,
    }
}

/// One fixed RK4 step; the quaternion is renormalized at the end.
pub fn integrate_step<T: Scalar>(
    state: &VehicleState<T>,
    input: &WrenchInput<T>,
    dist: &DisturbanceInput<T>,
    params: &VehicleParams<T>,
    dt: T,
) -> VehicleState<T> {
    debug_assert!(dt > T::zero());
    let half = dt * lit::<T>(0.5);
    let k1 = continuous_dynamics(state, input, dist, params);
    let k2 = continuous_dynamics(&offset(state, &k1, half), input, dist, params);
    let k3 = continuous_dynamics(&offset(state, &k2, half), input, dist, params);
    let k4 = continuous_dynamics(&offset(state, &k3, dt), input, dist, params);
    let sixth = dt / lit::<T>(6.0);
    let two: T = lit(2.0);
    let q = state.attitude.into_inner()
        + (k1.attitude + k2.attitude * two + k3.attitude * two + k4.attitude) * sixth;
    VehicleState {
        position: state.position + (k1.position + k2.position * two + k3.position * two + k4.position) * sixth,
        velocity: state.velocity + (k1.velocity + k2.velocity * two + k3.velocity * two + k4.velocity) * sixth,
        attitude: renormalize(UnitQuaternion::new_unchecked(q)),
        angular_velocity: state.angular_velocity
            + (k1.angular_velocity + k2.angular_velocity * two + k3.angular_velocity * two + k4.angular_velocity) * sixth,
    }
}

/// Semi-implicit Euler step used inside the filter: velocities first, then
/// position and the exact attitude exponential with the updated rates.
pub fn euler_step<T: Scalar>(
    state: &VehicleState<T>,
    input: &WrenchInput<T>,
    dist: &DisturbanceInput<T>,
    params: &VehicleParams<T>,
    dt: T,
) -> VehicleState<T> {
    let acc = linear_acceleration(state, input, dist, params);
    let alpha = angular_acceleration(&state.angular_velocity, &input.torque, params);
    VehicleState {
        position: state.position + state.velocity * dt + acc * (dt * dt * lit::<T>(0.5)),
        velocity: state.velocity + acc * dt,
        attitude: quat_integrate(&state.attitude, &(state.angular_velocity + alpha * (dt * lit::<T>(0.5))), dt),
        angular_velocity: state.angular_velocity + alpha * dt,
    }
}
