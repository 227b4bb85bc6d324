//! Cascaded position → attitude PD controller and hexarotor allocation.

use nalgebra::{Matrix3, Matrix4x6, Matrix6x4, Rotation3, UnitQuaternion, Vector3, Vector4, Vector6};
use serde::{Deserialize, Serialize};
use whisker_core::lstm::{SpinDirection, HEXAROTOR_SPIN};
use whisker_core::vehicle::drag_force;
use whisker_core::{VehicleParams, VehicleState, WrenchInput};

use crate::trajectory::Setpoint;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerGains {
    /// Position stiffness, 1/s².
    pub kp: f64,
    /// Velocity damping, 1/s.
    pub kd: f64,
    /// Attitude stiffness as angular acceleration per radian, 1/s².
    pub k_att: f64,
    /// Rate damping, 1/s.
    pub k_rate: f64,
    /// Largest commanded tilt, rad.
    pub max_tilt: f64,
    /// Cancel the model drag at the setpoint velocity (still air assumed).
    pub drag_feedforward: bool,
}

impl Default for ControllerGains {
    fn default() -> Self {
        // outer loop ωn = 2.5 rad/s, inner ωn = 15 rad/s, both ζ ≈ 0.9
        Self { kp: 6.25, kd: 4.5, k_att: 225.0, k_rate: 27.0, max_tilt: 0.9, drag_feedforward: true }
    }
}

/// Rotor layout and thrust map `f = f_max u²` with throttle `u ∈ [0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Airframe {
    /// Distance from the centre to each rotor, m.
    pub arm_length: f64,
    /// Thrust at full throttle per rotor, N.
    pub max_rotor_thrust: f64,
    /// Reaction torque per newton of thrust, m.
    pub torque_ratio: f64,
}

impl Default for Airframe {
    fn default() -> Self {
        Self { arm_length: 0.23, max_rotor_thrust: 5.0, torque_ratio: 0.016 }
    }
}

impl Airframe {
    /// Rotor `j` sits at azimuth `60° j`, spinning per [`HEXAROTOR_SPIN`].
    pub fn rotor_position(&self, j: usize) -> Vector3<f64> {
        let a = std::f64::consts::FRAC_PI_3 * j as f64;
        Vector3::new(a.cos(), a.sin(), 0.0) * self.arm_length
    }

    /// Maps rotor thrusts to `[f, τx, τy, τz]`.
    pub fn mixer(&self) -> Matrix4x6<f64> {
        let mut a = Matrix4x6::zeros();
        for j in 0..6 {
            let r = self.rotor_position(j);
            let spin = match HEXAROTOR_SPIN[j] {
                SpinDirection::Clockwise => 1.0,
                SpinDirection::CounterClockwise => -1.0,
            };
            a[(0, j)] = 1.0;
            a[(1, j)] = r.y;
            a[(2, j)] = -r.x;
            a[(3, j)] = self.torque_ratio * spin;
        }
        a
    }

    /// Minimum-norm rotor thrusts for a wrench, `A⁺ w`.
    pub fn allocate(&self, wrench: &WrenchInput) -> Vector6<f64> {
        let a = self.mixer();
        let pinv: Matrix6x4<f64> = a.transpose() * (a * a.transpose()).try_inverse().expect("mixer has full row rank");
        pinv * Vector4::new(wrench.thrust, wrench.torque.x, wrench.torque.y, wrench.torque.z)
    }

    pub fn throttle(&self, rotor_thrust: f64) -> f64 {
        (rotor_thrust / self.max_rotor_thrust).clamp(0.0, 1.0).sqrt()
    }

    pub fn rotor_thrust(&self, throttle: f64) -> f64 {
        self.max_rotor_thrust * throttle * throttle
    }

    /// Wrench actually produced by the given throttles.
    pub fn wrench_from_throttles(&self, throttles: &[f64; 6]) -> WrenchInput {
        let f = Vector6::from_fn(|j, _| self.rotor_thrust(throttles[j]));
        let w = self.mixer() * f;
        WrenchInput { thrust: w[0], torque: Vector3::new(w[1], w[2], w[3]) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlOutput {
    /// Commanded collective thrust and body torque.
    pub wrench: WrenchInput,
    pub throttles: [f64; 6],
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Desired attitude with body z along `thrust_dir` and heading `yaw`.
fn desired_attitude(thrust_dir: &Vector3<f64>, yaw: f64) -> Rotation3<f64> {
    let b3 = *thrust_dir;
    let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
    let b2 = b3.cross(&heading).try_normalize(1e-9).unwrap_or_else(Vector3::y);
    let b1 = b2.cross(&b3);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[b1, b2, b3]))
}

pub fn controller_step(
    state: &VehicleState,
    setpoint: &Setpoint,
    params: &VehicleParams,
    gains: &ControllerGains,
    airframe: &Airframe,
) -> ControlOutput {
    let g = params.gravity;
    let mut acc = setpoint.acceleration
        + (setpoint.position - state.position) * gains.kp
        + (setpoint.velocity - state.velocity) * gains.kd;
    if gains.drag_feedforward {
        acc -= drag_force(&-setpoint.velocity, params) / params.mass;
    }
    // keep the demanded tilt within bounds by shortening the horizontal part
    let vertical = (acc.z + g).max(0.2 * g);
    let horizontal = Vector3::new(acc.x, acc.y, 0.0);
    let max_h = vertical * gains.max_tilt.tan();
    if horizontal.norm() > max_h {
        let h = horizontal * (max_h / horizontal.norm());
        acc.x = h.x;
        acc.y = h.y;
    }
    let force_dir = Vector3::new(acc.x, acc.y, vertical).normalize();

    let r = state.attitude.to_rotation_matrix();
    let r_d = desired_attitude(&force_dir, setpoint.yaw);
    let tilt = r.matrix()[(2, 2)].max(0.3);
    let thrust = params.mass * vertical / tilt;

    let e_r = vee(&(r_d.matrix().transpose() * r.matrix() - r.matrix().transpose() * r_d.matrix())) * 0.5;
    let omega_d = r.inverse() * Vector3::new(0.0, 0.0, setpoint.yaw_rate);
    let e_w = state.angular_velocity - omega_d;
    let j = params.inertia;
    let w = state.angular_velocity;
    let torque = j * (-e_r * gains.k_att - e_w * gains.k_rate) + w.cross(&(j * w));

    let wrench = WrenchInput { thrust, torque };
    let rotor = airframe.allocate(&wrench);
    let throttles = std::array::from_fn(|i| airframe.throttle(rotor[i]));
    ControlOutput { wrench, throttles }
}

/// Body attitude of a level vehicle with heading `yaw`.
pub fn level(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(0.0, 0.0, yaw)
}
