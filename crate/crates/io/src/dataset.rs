//! Training sets for the network from simulated flights.

use whisker_core::lstm::{Dataset, Recording};
use whisker_core::sensor::body_airflow;
use whisker_sim::FlightLog;

use crate::driver::SensorFrontEnd;
use crate::error::{IoError, Result};
use crate::params::Params;
use crate::pipeline::{events, Event, FeatureTracker};

/// Features at every calibrated sensor tick, labelled with the true body
/// airflow. Needs the truth channel.
pub fn recording(log: &FlightLog, params: &Params) -> Result<Recording<f64>> {
    if log.truth.is_empty() {
        return Err(IoError::EmptyChannel("truth"));
    }
    let mut front = SensorFrontEnd::new(params.driver, params.rig.clone())?;
    let mut tracker = FeatureTracker::new(params.rig.len());
    let mut rec = Recording::default();
    for ev in events(log) {
        tracker.observe(&ev);
        if let Event::Sensor(s) = ev {
            let frame = front.process(s.t, &s.fields)?;
            let features = tracker.features(&frame)?;
            if let (true, Some(x), Some(truth)) = (front.is_calibrated(), features, log.truth_at(s.t)) {
                rec.features.push(x);
                rec.labels.push(body_airflow(&truth.attitude, &truth.wind, &truth.velocity));
            }
        }
    }
    if rec.features.is_empty() {
        return Err(IoError::Invalid("log is too short to produce calibrated samples".into()));
    }
    Ok(rec)
}

pub fn dataset<'a>(logs: impl IntoIterator<Item = &'a FlightLog>, params: &Params) -> Result<Dataset<f64>> {
    Ok(Dataset { recordings: logs.into_iter().map(|l| recording(l, params)).collect::<Result<_>>()? })
}
