//! Measurement noise and the rotor-wash disturbance on the whisker sensors.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use whisker_core::sensor::{body_airflow, predict_deflection};
use whisker_core::{DeflectionAngles, SensorMount, UnitQuaternion};

/// Noise applied to every synthesized channel. Defaults are simulator
/// fixtures, not values measured on hardware.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Odometry position, m.
    pub odom_position: f64,
    /// Odometry attitude, rad.
    pub odom_attitude: f64,
    /// Odometry velocity, m/s.
    pub odom_velocity: f64,
    /// Odometry body rate, rad/s.
    pub odom_rate: f64,
    /// Accelerometer white noise, m/s².
    pub accel: f64,
    /// Standard deviation of the constant accelerometer bias, m/s².
    pub accel_bias: f64,
    /// Whisker angle noise, rad.
    pub angle: f64,
    /// Largest equilibrium angle offset of a whisker, rad.
    pub calibration_offset: f64,
    /// Probability that a field sample is replaced by a spike.
    pub outlier_probability: f64,
    /// Spike size as a fraction of the on-axis field strength.
    pub outlier_magnitude: f64,
    pub propwash: Propwash,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            odom_position: 0.005,
            odom_attitude: 0.2f64.to_radians(),
            odom_velocity: 0.02,
            odom_rate: 0.01,
            accel: 0.05,
            accel_bias: 0.05,
            angle: 0.005,
            calibration_offset: 0.05,
            outlier_probability: 0.0,
            outlier_magnitude: 0.5,
            propwash: Propwash::default(),
        }
    }
}

impl NoiseSpec {
    /// Perfect sensors and undisturbed whiskers.
    pub fn none() -> Self {
        Self {
            odom_position: 0.0,
            odom_attitude: 0.0,
            odom_velocity: 0.0,
            odom_rate: 0.0,
            accel: 0.0,
            accel_bias: 0.0,
            angle: 0.0,
            calibration_offset: 0.0,
            outlier_probability: 0.0,
            outlier_magnitude: 0.0,
            propwash: Propwash::none(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.odom_position,
            self.odom_attitude,
            self.odom_velocity,
            self.odom_rate,
            self.accel,
            self.accel_bias,
            self.angle,
            self.calibration_offset,
            self.outlier_magnitude,
        ];
        if all.iter().any(|v| !(*v >= 0.0)) {
            return Err("noise levels must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.outlier_probability) {
            return Err("outlier probability must lie in [0, 1]".into());
        }
        if self.calibration_offset >= 0.2 {
            return Err("calibration offsets must stay below 0.2 rad".into());
        }
        Ok(())
    }
}

/// Interference of the rotor wake with the whiskers.
///
/// The apparent airflow at a sensor is the true body airflow distorted by a
/// gain and a bend about body z, plus a downwash along body −z and a swirl
/// around the rotor disc. Downwash and swirl grow with √(thrust / hover
/// thrust) and are swept away exponentially with horizontal airspeed. The
/// filter's sensor model knows none of this.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Propwash {
    /// Relative gain error on the horizontal airflow.
    pub gain: f64,
    /// Apparent rotation of the horizontal airflow about body z, rad.
    pub bend: f64,
    /// Downwash speed at hover, m/s.
    pub downwash: f64,
    /// Tangential swirl speed at hover, m/s.
    pub swirl: f64,
    /// Horizontal airspeed over which the wake is blown clear, m/s.
    pub sweep_speed: f64,
}

impl Default for Propwash {
    fn default() -> Self {
        Self { gain: 0.03, bend: 0.08, downwash: 0.5, swirl: 0.25, sweep_speed: 1.5 }
    }
}

impl Propwash {
    pub fn none() -> Self {
        Self { gain: 0.0, bend: 0.0, downwash: 0.0, swirl: 0.0, sweep_speed: 1.0 }
    }

    pub fn is_none(&self) -> bool {
        self.gain == 0.0 && self.bend == 0.0 && self.downwash == 0.0 && self.swirl == 0.0
    }

    /// Apparent body-frame airflow at a sensor mounted at `r_body`.
    pub fn apparent_airflow(&self, v_inf_body: &Vector3<f64>, r_body: &Vector3<f64>, thrust_ratio: f64) -> Vector3<f64> {
        if self.is_none() {
            return *v_inf_body;
        }
        let h = Vector3::new(v_inf_body.x, v_inf_body.y, 0.0);
        let distorted = v_inf_body + h * self.gain + Vector3::z().cross(&h) * self.bend;
        let wake = thrust_ratio.max(0.0).sqrt() * (-h.norm() / self.sweep_speed).exp();
        let tangential = Vector3::z().cross(r_body).try_normalize(1e-9).unwrap_or_else(Vector3::zeros);
        distorted + (tangential * self.swirl - Vector3::z() * self.downwash) * wake
    }
}

/// Angles a whisker reports for the given truth, before noise.
pub fn whisker_angles(
    mount: &SensorMount,
    attitude: &UnitQuaternion,
    wind: &Vector3<f64>,
    velocity: &Vector3<f64>,
    omega: &Vector3<f64>,
    propwash: &Propwash,
    thrust_ratio: f64,
) -> DeflectionAngles {
    let v_body = body_airflow(attitude, wind, velocity);
    let local = v_body - omega.cross(&mount.position);
    let apparent = propwash.apparent_airflow(&local, &mount.position, thrust_ratio);
    predict_deflection(&mount.orientation.inverse_transform_vector(&apparent), mount.coefficient)
}

#[cfg(test)]
mod tests {
    use super::*;
    use whisker_core::sensor::sensor_airflow;
    use whisker_core::SensorRig;

    #[test]
    fn without_propwash_angles_match_the_forward_model() {
        let rig = SensorRig::default_hexarotor();
        let q = UnitQuaternion::from_euler_angles(0.1, -0.2, 0.7);
        let (wind, vel, w) = (Vector3::new(1.0, -2.0, 0.3), Vector3::new(0.5, 0.5, -0.2), Vector3::new(0.3, -0.1, 0.5));
        for m in &rig.mounts {
            let expected = predict_deflection(&sensor_airflow(&body_airflow(&q, &wind, &vel), &w, m), m.coefficient);
            assert_eq!(whisker_angles(m, &q, &wind, &vel, &w, &Propwash::none(), 1.0), expected);
        }
    }

    #[test]
    fn wake_fades_with_airspeed() {
        let p = Propwash { gain: 0.08, bend: 0.08, downwash: 0.5, swirl: 0.25, sweep_speed: 1.5 };
        let r = Vector3::new(0.3, 0.0, 0.0);
        let still = p.apparent_airflow(&Vector3::zeros(), &r, 1.0);
        assert!((still - Vector3::new(0.0, 0.25, -0.5)).norm() < 1e-12);
        let fast = p.apparent_airflow(&Vector3::new(5.0, 0.0, 0.0), &r, 1.0);
        let wake = fast - Vector3::new(5.0 * 1.08, 5.0 * 0.08, 0.0);
        // hover wake (0, 0.25, −0.5) scaled by e^(−5/1.5) = 0.0356740
        assert!((wake - Vector3::new(0.0, 0.25, -0.5) * 0.035_673_993_347_252_4).norm() < 1e-12);
    }

    #[test]
    fn defaults_validate() {
        assert!(NoiseSpec::default().validate().is_ok());
        assert!(NoiseSpec::none().validate().is_ok());
        assert!(NoiseSpec { outlier_probability: 2.0, ..NoiseSpec::default() }.validate().is_err());
    }
}
