//! Causal replay of a flight log through the sensor driver and the filter.

use nalgebra::Vector3;
use whisker_core::lstm::{LstmModel, HEXAROTOR_SPIN};
use whisker_core::ukf::InitialStd;
use whisker_core::{
    BeliefState, DeflectionAngles, DisturbanceUkf, FeatureVector, FilterConfig, OdometryMeasurement, OdometryNoise, VehicleState, WrenchInput,
};
use whisker_sim::{ControlSample, FlightLog, ImuSample, OdometrySample, SensorSample};

use crate::driver::{SensorFrame, SensorFrontEnd};
use crate::error::{IoError, Result};
use crate::params::Params;

/// One sample of any channel, in log order.
#[derive(Clone, Copy, Debug)]
pub enum Event<'a> {
    Control(&'a ControlSample),
    Imu(&'a ImuSample),
    Odometry(&'a OdometrySample),
    Sensor(&'a SensorSample),
}

impl Event<'_> {
    pub fn t(&self) -> f64 {
        match self {
            Event::Control(s) => s.t,
            Event::Imu(s) => s.t,
            Event::Odometry(s) => s.t,
            Event::Sensor(s) => s.t,
        }
    }

    /// Order among simultaneous samples: inputs first, the sensor last so
    /// that it sees everything stamped at the same instant.
    fn rank(&self) -> u8 {
        match self {
            Event::Control(_) => 0,
            Event::Imu(_) => 1,
            Event::Odometry(_) => 2,
            Event::Sensor(_) => 3,
        }
    }
}

/// All samples of the onboard channels merged in time order.
pub fn events(log: &FlightLog) -> Vec<Event<'_>> {
    let mut ev: Vec<Event> = log
        .control
        .iter()
        .map(Event::Control)
        .chain(log.imu.iter().map(Event::Imu))
        .chain(log.odometry.iter().map(Event::Odometry))
        .chain(log.sensors.iter().map(Event::Sensor))
        .collect();
    ev.sort_by(|a, b| a.t().total_cmp(&b.t()).then(a.rank().cmp(&b.rank())));
    ev
}

/// Latest value of every network input, held between samples.
#[derive(Clone, Debug)]
pub struct FeatureTracker {
    angles: Vec<DeflectionAngles>,
    omega: Option<Vector3<f64>>,
    accel: Option<Vector3<f64>>,
    throttles: Option<[f64; 6]>,
}

impl FeatureTracker {
    pub fn new(sensors: usize) -> Self {
        Self { angles: vec![DeflectionAngles::zero(); sensors], omega: None, accel: None, throttles: None }
    }

    pub fn observe(&mut self, event: &Event) {
        match event {
            Event::Control(s) => self.throttles = Some(s.throttles),
            Event::Imu(s) => self.accel = Some(s.accel),
            Event::Odometry(s) => self.omega = Some(s.angular_velocity),
            Event::Sensor(_) => {}
        }
    }

    /// Features at a sensor frame; rejected sensors keep their last angles.
    pub fn features(&mut self, frame: &SensorFrame) -> Result<Option<FeatureVector>> {
        for (held, a) in self.angles.iter_mut().zip(&frame.angles) {
            if let Some(a) = a {
                *held = *a;
            }
        }
        let (Some(omega), Some(accel), Some(throttles)) = (self.omega, self.accel, self.throttles) else {
            return Ok(None);
        };
        Ok(Some(FeatureVector::build(&self.angles, &omega, &accel, &throttles, &HEXAROTOR_SPIN)?))
    }
}

/// Where the filter's airflow information comes from.
#[derive(Clone, Copy, Debug)]
pub enum Airflow<'a> {
    /// Whisker angles through the physical sensor model.
    Model,
    /// Body airflow predicted by the network, applied as a pseudo-measurement.
    Lstm(&'a LstmModel<f64>),
}

/// Filter tuning on top of the identified parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorConfig {
    pub filter: FilterConfig,
    pub initial: InitialStd<f64>,
    /// Floors on the measurement noise so noiseless logs stay well posed.
    pub min_odometry: OdometryNoise,
    pub min_angle_std: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            initial: InitialStd::default(),
            min_odometry: OdometryNoise { position: 1e-3, attitude: 1e-3, velocity: 5e-3, angular_velocity: 5e-3 },
            min_angle_std: 2e-3,
        }
    }
}

/// Filter output at one sensor tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateRow {
    pub t: f64,
    /// Relative airflow, body frame, m/s.
    pub v_inf_body: Vector3<f64>,
    /// World frame, m/s.
    pub wind: Vector3<f64>,
    /// World frame, N.
    pub drag: Vector3<f64>,
    /// World frame, N.
    pub touch: Vector3<f64>,
    /// Whether an airflow measurement was fused at this tick.
    pub airflow_update: bool,
}

fn odometry_measurement(s: &OdometrySample, cov: &nalgebra::SMatrix<f64, 12, 12>) -> OdometryMeasurement {
    OdometryMeasurement { position: s.position, attitude: s.attitude, velocity: s.velocity, angular_velocity: s.angular_velocity, covariance: *cov }
}

/// Runs the estimator over a whole log and returns one row per sensor tick
/// after the filter has been initialized from the first odometry sample.
pub fn estimate(log: &FlightLog, params: &Params, config: &EstimatorConfig, airflow: Airflow<'_>) -> Result<Vec<EstimateRow>> {
    params.vehicle.validate()?;
    params.rig.validate()?;
    if let Airflow::Lstm(model) = airflow {
        if model.seq_len == 0 {
            return Err(IoError::Invalid("network sequence length must be positive".into()));
        }
    }
    let mut filter_cfg = config.filter.clone();
    filter_cfg.vehicle = params.vehicle;
    filter_cfg.angle_std = params.angle_std.max(config.min_angle_std);
    let n = &params.odometry_noise;
    let m = &config.min_odometry;
    let odo_cov = OdometryNoise {
        position: n.position.max(m.position),
        attitude: n.attitude.max(m.attitude),
        velocity: n.velocity.max(m.velocity),
        angular_velocity: n.angular_velocity.max(m.angular_velocity),
    }
    .covariance();

    let mut front = SensorFrontEnd::new(params.driver, params.rig.clone())?;
    let mut tracker = FeatureTracker::new(params.rig.len());
    let mut window: Vec<FeatureVector> = Vec::new();
    let mut ukf: Option<DisturbanceUkf> = None;
    let mut wrench = WrenchInput::hover(&params.vehicle);
    let mut rows = Vec::with_capacity(log.sensors.len());

    for ev in events(log) {
        tracker.observe(&ev);
        match ev {
            Event::Control(s) => {
                wrench = WrenchInput { thrust: s.thrust, torque: s.torque };
                if let Some(f) = ukf.as_mut() {
                    f.advance_to(s.t)?;
                    f.set_wrench(wrench);
                }
            }
            Event::Imu(_) => {}
            Event::Odometry(s) => match ukf.as_mut() {
                Some(f) => {
                    f.update_odometry(s.t, &odometry_measurement(s, &odo_cov))?;
                }
                None => {
                    let state = VehicleState { position: s.position, velocity: s.velocity, attitude: s.attitude, angular_velocity: s.angular_velocity };
                    let belief = BeliefState::new(&state, Vector3::zeros(), Vector3::zeros(), &config.initial, s.t);
                    let mut f = DisturbanceUkf::new(filter_cfg.clone(), belief);
                    f.set_wrench(wrench);
                    ukf = Some(f);
                }
            },
            Event::Sensor(s) => {
                let frame = front.process(s.t, &s.fields)?;
                let features = tracker.features(&frame)?;
                let Some(f) = ukf.as_mut() else { continue };
                let updated = match airflow {
                    Airflow::Model => {
                        if front.is_calibrated() && frame.angles.iter().any(Option::is_some) {
                            f.update_airflow(s.t, &frame.angles, &params.rig)?;
                            true
                        } else {
                            false
                        }
                    }
                    Airflow::Lstm(model) => {
                        if let Some(x) = features {
                            window.push(x);
                            if window.len() > model.seq_len {
                                window.remove(0);
                            }
                        }
                        if front.is_calibrated() && window.len() == model.seq_len {
                            let v = model.predict_window(&window)?;
                            f.update_airflow_pseudo(s.t, &v)?;
                            true
                        } else {
                            false
                        }
                    }
                };
                if !updated {
                    f.advance_to(s.t)?;
                }
                let out = f.output();
                rows.push(EstimateRow { t: s.t, v_inf_body: out.v_inf_body, wind: out.wind, drag: out.drag, touch: out.touch, airflow_update: updated });
            }
        }
    }
    Ok(rows)
}
