//! Drag and sensor-coefficient identification from flight logs.

use nalgebra::Vector3;
use whisker_core::sysid::{drag_sample, fit_drag_polynomial, identify_sensor_coefficient, thrust_from_attitude};
use whisker_core::{DeflectionAngles, DragFit, DragSample};
use whisker_sim::FlightLog;

use crate::driver::SensorFrontEnd;
use crate::error::{IoError, Result};
use crate::params::Params;
use crate::pipeline::{events, Event};

/// Samples slower than this are skipped, m/s.
pub const MIN_SPEED: f64 = 0.5;
/// Largest climb rate as a fraction of the speed for a usable sample.
pub const MAX_CLIMB_RATIO: f64 = 0.2;
/// Half width of the local line fit that differentiates odometry velocity, s.
pub const DIFF_HALF_WINDOW: f64 = 0.25;

/// Where thrust and acceleration come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DragData {
    /// Simulator truth: produced thrust and true acceleration.
    Truth,
    /// Odometry only: thrust from the attitude, acceleration from the
    /// velocity differentiated by a local least-squares line.
    Odometry,
}

/// Slope of a least-squares line through `(t, v)` around each sample.
fn differentiate(t: &[f64], v: &[Vector3<f64>], half: f64) -> Vec<Option<Vector3<f64>>> {
    const EPS: f64 = 1e-9;
    let n = t.len();
    let (mut lo, mut hi) = (0usize, 0usize);
    (0..n)
        .map(|i| {
            while t[lo] < t[i] - half - EPS {
                lo += 1;
            }
            while hi + 1 < n && t[hi + 1] <= t[i] + half + EPS {
                hi += 1;
            }
            // symmetric windows only, so the slope is not biased at the ends
            if t[i] - t[lo] < half - EPS || t[hi] - t[i] < half - EPS {
                return None;
            }
            let m = (hi - lo + 1) as f64;
            let tm = t[lo..=hi].iter().sum::<f64>() / m;
            let vm = v[lo..=hi].iter().sum::<Vector3<f64>>() / m;
            let (mut num, mut den) = (Vector3::zeros(), 0.0);
            for k in lo..=hi {
                num += (v[k] - vm) * (t[k] - tm);
                den += (t[k] - tm) * (t[k] - tm);
            }
            Some(num / den)
        })
        .collect()
}

fn usable(v: &Vector3<f64>) -> bool {
    let speed = v.norm();
    speed >= MIN_SPEED && v.z.abs() <= MAX_CLIMB_RATIO * speed
}

/// Projected drag samples, assuming still air.
///
/// The acceleration enters as the specific force `Rᵀ(v̇ + g e₃)`, so the
/// projection is exact for any flight direction.
pub fn drag_samples(log: &FlightLog, source: DragData) -> Result<Vec<DragSample>> {
    let p = &log.meta.vehicle;
    let mut out = Vec::new();
    match source {
        DragData::Truth => {
            if log.truth.is_empty() {
                return Err(IoError::EmptyChannel("truth"));
            }
            for s in log.truth.iter().filter(|s| usable(&s.velocity)) {
                let specific = s.attitude.inverse_transform_vector(&(s.acceleration + Vector3::z() * p.gravity));
                let v_body = s.attitude.inverse_transform_vector(&s.velocity);
                out.push(drag_sample(s.thrust, p.mass, &specific, &v_body.normalize(), v_body.norm()));
            }
        }
        DragData::Odometry => {
            if log.odometry.is_empty() {
                return Err(IoError::EmptyChannel("odometry"));
            }
            let t: Vec<f64> = log.odometry.iter().map(|s| s.t).collect();
            let v: Vec<Vector3<f64>> = log.odometry.iter().map(|s| s.velocity).collect();
            let acc = differentiate(&t, &v, DIFF_HALF_WINDOW);
            for (s, a) in log.odometry.iter().zip(acc) {
                let Some(a) = a else { continue };
                if !usable(&s.velocity) {
                    continue;
                }
                let (roll, pitch, _) = s.attitude.euler_angles();
                let thrust = thrust_from_attitude(p.mass, roll, pitch, p.gravity)?;
                let specific = s.attitude.inverse_transform_vector(&(a + Vector3::z() * p.gravity));
                let v_body = s.attitude.inverse_transform_vector(&s.velocity);
                out.push(drag_sample(thrust, p.mass, &specific, &v_body.normalize(), v_body.norm()));
            }
        }
    }
    Ok(out)
}

/// Drag fit over one or more still-air logs.
pub fn identify_drag<'a>(logs: impl IntoIterator<Item = &'a FlightLog>, source: DragData) -> Result<DragFit> {
    let mut samples = Vec::new();
    for log in logs {
        samples.extend(drag_samples(log, source)?);
    }
    Ok(fit_drag_polynomial(&samples)?)
}

/// Lumped coefficient of every whisker from a still-air log: calibrated
/// angles against the airflow each sensor sees, `−v` rotated into the
/// sensor frame and corrected for the body rate.
pub fn identify_coefficients(log: &FlightLog, params: &Params) -> Result<Vec<f64>> {
    let n = params.rig.len();
    let mut front = SensorFrontEnd::new(params.driver, params.rig.clone())?;
    let mut angles: Vec<Vec<DeflectionAngles>> = vec![Vec::new(); n];
    let mut airflow: Vec<Vec<Vector3<f64>>> = vec![Vec::new(); n];
    let mut odometry = None;
    for ev in events(log) {
        match ev {
            Event::Odometry(s) => odometry = Some(*s),
            Event::Sensor(s) => {
                let frame = front.process(s.t, &s.fields)?;
                let Some(o) = odometry else { continue };
                let v_body = o.attitude.inverse_transform_vector(&(-o.velocity));
                for (i, a) in frame.angles.iter().enumerate() {
                    if let Some(a) = a {
                        let m = &params.rig.mounts[i];
                        let local = v_body - o.angular_velocity.cross(&m.position);
                        angles[i].push(*a);
                        airflow[i].push(m.orientation.inverse_transform_vector(&local));
                    }
                }
            }
            _ => {}
        }
    }
    (0..n).map(|i| Ok(identify_sensor_coefficient(&angles[i], &airflow[i])?)).collect()
}
