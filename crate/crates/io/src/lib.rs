//! Files, pipelines and the command-line front end: CSV flight logs,
//! flat parameter files, the whisker sensor driver, 50 Hz alignment,
//! estimation replays, identification from logs and the acceptance suite.

pub mod acceptance;
pub mod config;
pub mod dataset;
pub mod driver;
pub mod error;
pub mod estimates;
pub mod identify;
pub mod logfile;
pub mod params;
pub mod pipeline;
pub mod replay;
pub mod resample;
pub mod scenario_file;
pub mod table;
pub mod weights;

pub use driver::{driver_step, recovery_samples, CalibrationOffsets, DriverConfig, LowPassState, SensorFrontEnd};
pub use error::{IoError, Result};
pub use logfile::{read_log, write_log};
pub use params::Params;
pub use pipeline::{estimate, Airflow, EstimateRow, EstimatorConfig};
pub use replay::{replay, ReplayReport};
pub use resample::resample_50hz;
pub use weights::{read_weights_file, write_weights_file};
pub use estimates::{read_estimates, write_estimates};
