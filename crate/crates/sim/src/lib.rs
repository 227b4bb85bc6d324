//! Ground-truth generator: closed-loop hexarotor flights through wind
//! fields and interaction-force profiles, with every onboard sensor stream
//! synthesized at its own rate.

pub mod controller;
pub mod log;
pub mod noise;
pub mod run;
pub mod scenario;
pub mod trajectory;
pub mod wind;

pub use controller::{controller_step, Airframe, ControlOutput, ControllerGains};
pub use log::{ControlSample, FlightLog, ImuSample, LogMeta, OdometrySample, SensorSample, TruthSample};
pub use noise::{NoiseSpec, Propwash};
pub use run::run_scenario;
pub use scenario::{Annotation, Scenario, TouchKnot, TouchProfile, VehicleSpec};
pub use trajectory::{FlightPhase, FlightPlan, PlanConfig, Setpoint, TrajectorySpec};
pub use wind::{GustSource, SpeedProfile, WindField};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    /// The vehicle left the arena or the state became non-finite; the log
    /// holds everything recorded up to that point.
    #[error("controller diverged at t = {t:.3} s")]
    Diverged { t: f64, log: Box<FlightLog> },
}
