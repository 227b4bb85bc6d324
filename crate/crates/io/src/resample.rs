//! Alignment of the multi-rate channels onto the 50 Hz sensor clock.

use whisker_sim::FlightLog;

use crate::error::{IoError, Result};

/// Tolerance when comparing timestamps, s.
const TIME_EPS: f64 = 1e-9;

trait Stamped: Clone {
    fn t(&self) -> f64;
    fn set_t(&mut self, t: f64);
}

macro_rules! stamped {
    ($($ty:ty),*) => {$(
        impl Stamped for $ty {
            fn t(&self) -> f64 {
                self.t
            }
            fn set_t(&mut self, t: f64) {
                self.t = t;
            }
        }
    )*};
}

stamped!(whisker_sim::TruthSample, whisker_sim::OdometrySample, whisker_sim::ImuSample, whisker_sim::ControlSample, whisker_sim::SensorSample);

fn check<S: Stamped>(name: &'static str, samples: &[S], required: bool) -> Result<Option<(f64, f64)>> {
    if samples.is_empty() {
        return if required { Err(IoError::EmptyChannel(name)) } else { Ok(None) };
    }
    if samples.windows(2).any(|w| w[1].t() < w[0].t()) {
        return Err(IoError::Invalid(format!("channel `{name}` is not monotone in time")));
    }
    Ok(Some((samples[0].t(), samples[samples.len() - 1].t())))
}

/// Latest sample at or before each clock tick, restamped to the tick.
fn hold<S: Stamped>(samples: &[S], clock: &[f64]) -> Vec<S> {
    let mut out = Vec::with_capacity(clock.len());
    let mut i = 0;
    for &t in clock {
        while i + 1 < samples.len() && samples[i + 1].t() <= t + TIME_EPS {
            i += 1;
        }
        let mut s = samples[i].clone();
        s.set_t(t);
        out.push(s);
    }
    out
}

/// Zero-order-hold resampling of every channel onto the sensor clock.
///
/// Only sensor ticks inside the window covered by all channels are kept,
/// so nothing is extrapolated. The truth channel is optional. Every channel
/// of the result has one sample per kept tick.
pub fn resample_50hz(log: &FlightLog) -> Result<FlightLog> {
    let spans = [
        check("odometry", &log.odometry, true)?,
        check("imu", &log.imu, true)?,
        check("control", &log.control, true)?,
        check("sensors", &log.sensors, true)?,
        check("truth", &log.truth, false)?,
    ];
    let start = spans.iter().flatten().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    let end = spans.iter().flatten().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let sensors: Vec<_> = log.sensors.iter().filter(|s| s.t >= start - TIME_EPS && s.t <= end + TIME_EPS).cloned().collect();
    if sensors.is_empty() {
        return Err(IoError::Invalid("channels do not overlap in time".into()));
    }
    let clock: Vec<f64> = sensors.iter().map(|s| s.t).collect();
    let mut out = FlightLog::empty(log.meta.clone());
    out.odometry = hold(&log.odometry, &clock);
    out.imu = hold(&log.imu, &clock);
    out.control = hold(&log.control, &clock);
    if !log.truth.is_empty() {
        out.truth = hold(&log.truth, &clock);
    }
    out.sensors = sensors;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use whisker_sim::{run_scenario, ImuSample, NoiseSpec, Scenario};

    fn log() -> FlightLog {
        let mut s = Scenario::hover().with_noise(NoiseSpec::none());
        s.duration = Some(2.0);
        run_scenario(&s).unwrap()
    }

    #[test]
    fn ramp_at_200_hz_keeps_every_fourth_value() {
        let mut l = log();
        for (k, s) in l.imu.iter_mut().enumerate() {
            s.accel = Vector3::new(k as f64, 0.0, 0.0);
        }
        let r = resample_50hz(&l).unwrap();
        for (k, s) in r.imu.iter().enumerate() {
            assert_eq!(s.accel.x, (4 * k) as f64);
        }
    }

    #[test]
    fn constant_channels_give_constant_rows_and_one_row_per_sensor_sample() {
        let mut l = log();
        for s in &mut l.imu {
            s.accel = Vector3::new(1.0, 2.0, 3.0);
        }
        let r = resample_50hz(&l).unwrap();
        assert_eq!(r.sensors.len(), l.sensors.len());
        for ch in [r.odometry.len(), r.imu.len(), r.control.len(), r.truth.len()] {
            assert_eq!(ch, r.sensors.len());
        }
        assert!(r.imu.iter().all(|s| s.accel == Vector3::new(1.0, 2.0, 3.0)));
    }

    #[test]
    fn idempotent() {
        let r = resample_50hz(&log()).unwrap();
        assert_eq!(resample_50hz(&r).unwrap(), r);
    }

    #[test]
    fn no_extrapolation_past_channel_ends() {
        let mut l = log();
        l.imu.retain(|s| s.t >= 0.5 && s.t <= 1.5);
        let r = resample_50hz(&l).unwrap();
        assert!((r.sensors[0].t - 0.5).abs() < 1e-12);
        assert!((r.sensors.last().unwrap().t - 1.5).abs() < 1e-12);
        assert_eq!(r.sensors.len(), 51);
    }

    #[test]
    fn empty_or_unsorted_channels_fail() {
        let mut l = log();
        l.imu.clear();
        assert!(matches!(resample_50hz(&l), Err(IoError::EmptyChannel("imu"))));
        let mut l = log();
        l.imu.swap(3, 4);
        assert!(resample_50hz(&l).is_err());
        let mut l = log();
        l.imu = vec![ImuSample { t: 100.0, accel: Vector3::zeros() }];
        assert!(resample_50hz(&l).is_err());
    }
}
