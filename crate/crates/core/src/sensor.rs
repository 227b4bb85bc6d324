//! Whisker airflow sensor model.
//!
//! Each sensor is a finned rod on a torsional spring with a magnet at its
//! base. The magnetometer reading gives the two tilt angles about the
//! sensor's x and y axes; the drag on the fins sets the tilt. Only the
//! lumped coefficient `c = ρ c_D a_xy / (2 k l)` is identifiable, so the
//! spring, length and drag constants never appear separately at runtime.

use nalgebra::{DVector, Rotation3, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Which magnet pole faces the rod.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Polarity {
    #[default]
    NorthUp,
    SouthUp,
}

impl Polarity {
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Polarity::NorthUp => T::one(),
            Polarity::SouthUp => -T::one(),
        }
    }
}

/// Raw magnetometer reading, arbitrary field units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagneticField<T: Scalar>(pub Vector3<T>);

/// Tilt of the rod about the sensor x and y axes, radians.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeflectionAngles<T: Scalar> {
    pub theta_x: T,
    pub theta_y: T,
}

impl<T: Scalar> DeflectionAngles<T> {
    pub fn new(theta_x: T, theta_y: T) -> Self {
        Self { theta_x, theta_y }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn as_vector(&self) -> Vector2<T> {
        Vector2::new(self.theta_x, self.theta_y)
    }

    pub fn norm(&self) -> T {
        self.as_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        num_traits::Float::is_finite(crate::scalar::to_f64(self.theta_x))
            && num_traits::Float::is_finite(crate::scalar::to_f64(self.theta_y))
    }
}

/// Mounting of one sensor on the body.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorMount<T: Scalar> {
    /// Offset of the sensor frame origin from the body origin, body frame, m.
    pub position: Vector3<T>,
    /// Sensor orientation `R_B^S` (sensor-frame vectors into the body frame).
    pub orientation: Rotation3<T>,
    /// Lumped coefficient, rad·s²/m².
    pub coefficient: T,
    pub polarity: Polarity,
}

impl<T: Scalar> SensorMount<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.coefficient > T::zero()) {
            return Err(Error::InvalidParameter("sensor coefficient must be positive".into()));
        }
        let r = self.orientation.matrix();
        if (r * r.transpose() - nalgebra::Matrix3::identity()).abs().max() > lit(1e-9) {
            return Err(Error::InvalidParameter("sensor orientation is not orthonormal".into()));
        }
        Ok(())
    }
}

/// The full set of sensors on the vehicle.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorRig<T: Scalar> {
    pub mounts: Vec<SensorMount<T>>,
}

impl<T: Scalar> SensorRig<T> {
    pub fn len(&self) -> usize {
        self.mounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mounts.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.mounts.iter().try_for_each(SensorMount::validate)
    }

    /// Four sensors: two upright on top of the hull, two on propeller guards
    /// lying horizontally and pointing outwards.
    ///
    /// Poses and coefficients are fixture values for the simulated airframe.
    pub fn default_hexarotor() -> Self {
        let up = Rotation3::identity();
        let yaw45 = Rotation3::from_axis_angle(&Vector3::z_axis(), lit(std::f64::consts::FRAC_PI_4));
        // sensor z along body +x, sensor x along body −z: sees body y and z flow
        let guard_front = Rotation3::from_axis_angle(&Vector3::y_axis(), lit(std::f64::consts::FRAC_PI_2));
        // sensor z along body −y, sensor x along body x: sees body x and z flow
        let guard_right = Rotation3::from_axis_angle(&Vector3::x_axis(), lit(std::f64::consts::FRAC_PI_2));
        let v = |x: f64, y: f64, z: f64| Vector3::new(lit(x), lit(y), lit(z));
        Self {
            mounts: vec![
                SensorMount { position: v(0.04, 0.0, 0.09), orientation: up, coefficient: lit(0.010), polarity: Polarity::NorthUp },
                SensorMount { position: v(-0.04, 0.0, 0.09), orientation: yaw45, coefficient: lit(0.011), polarity: Polarity::SouthUp },
                SensorMount { position: v(0.30, 0.0, 0.02), orientation: guard_front, coefficient: lit(0.009), polarity: Polarity::NorthUp },
                SensorMount { position: v(0.0, -0.30, 0.02), orientation: guard_right, coefficient: lit(0.012), polarity: Polarity::NorthUp },
            ],
        }
    }
}

/// Tilt angles from a magnetometer reading.
///
/// A south-up magnet flips the field before the conversion. Readings whose
/// corrected `b_z` is not positive are rejected.
pub fn deflection_from_field<T: Scalar>(b: &MagneticField<T>, polarity: Polarity) -> Result<DeflectionAngles<T>> {
    let b = b.0 * polarity.sign::<T>();
    if !(b.z > T::zero()) {
        return Err(Error::InvalidReading(crate::scalar::to_f64(b.z)));
    }
    Ok(DeflectionAngles::new(-(b.y / b.z).atan(), (b.x / b.z).atan()))
}

/// Field that produces the given angles for a fixed on-axis strength `b_z > 0`.
pub fn field_from_deflection<T: Scalar>(angles: &DeflectionAngles<T>, b_z: T, polarity: Polarity) -> MagneticField<T> {
    let b = Vector3::new(b_z * angles.theta_y.tan(), -b_z * angles.theta_x.tan(), b_z);
    MagneticField(b * polarity.sign::<T>())
}

/// Relative airflow at the centre of mass in the body frame, `R_wbᵀ (v_wind − v)`.
pub fn body_airflow<T: Scalar>(attitude: &UnitQuaternion<T>, wind: &Vector3<T>, velocity: &Vector3<T>) -> Vector3<T> {
    attitude.inverse_transform_vector(&(wind - velocity))
}

/// Airflow seen by one sensor in its own frame, `R_B^Sᵀ (v∞_B − ω × r)`.
pub fn sensor_airflow<T: Scalar>(v_inf_body: &Vector3<T>, omega_body: &Vector3<T>, mount: &SensorMount<T>) -> Vector3<T> {
    mount.orientation.inverse_transform_vector(&(v_inf_body - omega_body.cross(&mount.position)))
}

/// Drag on the fins, `(ρ/2) c_D A ‖v∞‖ v∞` with `A = diag(a_xy, a_xy, 0)`.
pub fn whisker_drag<T: Scalar>(v_inf_sensor: &Vector3<T>, rho: T, c_d: T, a_xy: T) -> Vector3<T> {
    let k = rho * lit::<T>(0.5) * c_d * a_xy * v_inf_sensor.norm();
    Vector3::new(k * v_inf_sensor.x, k * v_inf_sensor.y, T::zero())
}

/// Forward model: `θx = −c ‖v‖ v_y`, `θy = c ‖v‖ v_x`.
pub fn predict_deflection<T: Scalar>(v_inf_sensor: &Vector3<T>, coefficient: T) -> DeflectionAngles<T> {
    let k = coefficient * v_inf_sensor.norm();
    DeflectionAngles::new(-k * v_inf_sensor.y, k * v_inf_sensor.x)
}

/// Full chain from world-frame wind and vehicle motion to the stacked
/// `[θx₁, θy₁, …, θx_N, θy_N]` of the selected sensors.
pub fn predict_rig<T: Scalar>(
    rig: &SensorRig<T>,
    active: &[usize],
    attitude: &UnitQuaternion<T>,
    wind: &Vector3<T>,
    velocity: &Vector3<T>,
    omega_body: &Vector3<T>,
) -> DVector<T> {
    let v_body = body_airflow(attitude, wind, velocity);
    let mut out = DVector::zeros(2 * active.len());
    for (row, &i) in active.iter().enumerate() {
        let m = &rig.mounts[i];
        let a = predict_deflection(&sensor_airflow(&v_body, omega_body, m), m.coefficient);
        out[2 * row] = a.theta_x;
        out[2 * row + 1] = a.theta_y;
    }
    out
}
