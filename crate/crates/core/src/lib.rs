//! Simultaneous estimation of wind, aerodynamic drag and interaction force
//! on a multirotor from whisker-like airflow sensors.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the common double-precision instances.

pub mod error;
pub mod geom;
pub mod lstm;
pub mod scalar;
pub mod sensor;
pub mod sysid;
pub mod ukf;
pub mod ut;
pub mod vehicle;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type UnitQuaternion = nalgebra::UnitQuaternion<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

pub type VehicleParams = vehicle::VehicleParams<f64>;
pub type VehicleState = vehicle::VehicleState<f64>;
pub type WrenchInput = vehicle::WrenchInput<f64>;
pub type DisturbanceInput = vehicle::DisturbanceInput<f64>;

pub type SensorMount = sensor::SensorMount<f64>;
pub type SensorRig = sensor::SensorRig<f64>;
pub type DeflectionAngles = sensor::DeflectionAngles<f64>;
pub type MagneticField = sensor::MagneticField<f64>;

pub type BeliefState = ukf::BeliefState<f64>;
pub type DisturbanceUkf = ukf::DisturbanceUkf<f64>;
pub type FilterConfig = ukf::FilterConfig<f64>;
pub type FilterOutput = ukf::FilterOutput<f64>;
pub type ProcessNoise = ukf::ProcessNoise<f64>;
pub type OdometryMeasurement = ukf::OdometryMeasurement<f64>;
pub type OdometryNoise = ukf::OdometryNoise<f64>;

pub type DragFit = sysid::DragFit<f64>;
pub type DragSample = sysid::DragSample<f64>;

pub type LstmParams = lstm::LstmParams<f64>;
/// Single-precision network for inference.
pub type LstmParams32 = lstm::LstmParams<f32>;
pub type FeatureVector = lstm::FeatureVector<f64>;
