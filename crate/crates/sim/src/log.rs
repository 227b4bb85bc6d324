//! Multi-rate flight record produced by the simulator.

use nalgebra::Vector3;
use whisker_core::{MagneticField, OdometryNoise, SensorRig, UnitQuaternion, VehicleParams};

use crate::scenario::Annotation;
use crate::trajectory::FlightPhase;

/// Ground truth at 500 Hz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub attitude: UnitQuaternion,
    pub angular_velocity: Vector3<f64>,
    /// World-frame `v̇`, m/s².
    pub acceleration: Vector3<f64>,
    /// Wind at the vehicle, world frame.
    pub wind: Vector3<f64>,
    /// Interaction force, world frame.
    pub touch: Vector3<f64>,
    /// Aerodynamic drag, world frame.
    pub drag: Vector3<f64>,
    /// Collective thrust actually produced, N.
    pub thrust: f64,
    pub phase: FlightPhase,
}

/// Pose and twist from the onboard state estimator, 100 Hz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdometrySample {
    pub t: f64,
    pub position: Vector3<f64>,
    pub attitude: UnitQuaternion,
    /// World frame.
    pub velocity: Vector3<f64>,
    /// Body frame.
    pub angular_velocity: Vector3<f64>,
}

/// Accelerometer specific force in the body frame, 200 Hz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub accel: Vector3<f64>,
}

/// Commanded wrench and rotor throttles, 200 Hz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlSample {
    pub t: f64,
    pub thrust: f64,
    pub torque: Vector3<f64>,
    pub throttles: [f64; 6],
}

/// Raw magnetometer readings of every whisker, 50 Hz.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorSample {
    pub t: f64,
    pub fields: Vec<MagneticField>,
}

/// What an estimator is allowed to know about the vehicle and its sensors.
#[derive(Clone, Debug, PartialEq)]
pub struct LogMeta {
    pub scenario: String,
    pub seed: u64,
    pub vehicle: VehicleParams,
    pub rig: SensorRig,
    pub odometry_noise: OdometryNoise,
    /// Whisker angle noise, rad.
    pub angle_noise: f64,
    pub annotations: Vec<Annotation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlightLog {
    pub meta: LogMeta,
    pub truth: Vec<TruthSample>,
    pub odometry: Vec<OdometrySample>,
    pub imu: Vec<ImuSample>,
    pub control: Vec<ControlSample>,
    pub sensors: Vec<SensorSample>,
}

impl FlightLog {
    pub fn empty(meta: LogMeta) -> Self {
        Self { meta, truth: Vec::new(), odometry: Vec::new(), imu: Vec::new(), control: Vec::new(), sensors: Vec::new() }
    }

    pub fn duration(&self) -> f64 {
        self.truth.last().map_or(0.0, |s| s.t)
    }

    /// Truth sample at or just before `t` (the first one before the log starts).
    pub fn truth_at(&self, t: f64) -> Option<&TruthSample> {
        let i = self.truth.partition_point(|s| s.t <= t + 1e-9);
        self.truth.get(i.saturating_sub(1))
    }

    pub fn annotation(&self, label: &str) -> Option<&Annotation> {
        self.meta.annotations.iter().find(|a| a.label == label)
    }
}
