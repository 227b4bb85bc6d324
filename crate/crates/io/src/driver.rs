//! Sensor driver: outlier rejection against a low-passed reference, startup
//! calibration of the equilibrium angles, and conversion to angles.

use nalgebra::Vector3;
use whisker_core::sensor::{deflection_from_field, MagneticField};
use whisker_core::{DeflectionAngles, SensorRig};

use crate::error::{IoError, Result};

/// Largest accepted equilibrium offset, rad.
pub const MAX_OFFSET: f64 = 0.2;

/// Tunables of the driver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriverConfig {
    /// Low-pass smoothing factor α.
    pub alpha: f64,
    /// Rejection threshold in multiples of the resting noise σ.
    pub threshold_sigmas: f64,
    /// Lower bound on the threshold as a fraction of the resting field norm,
    /// so noiseless sensors do not reject every change.
    pub min_threshold_fraction: f64,
    /// Length of the resting window at the start of a log, s.
    pub calibration_time: f64,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self { alpha: 0.3, threshold_sigmas: 6.0, min_threshold_fraction: 0.02, calibration_time: 1.0 }
    }
}

impl DriverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(IoError::Invalid("driver smoothing factor must lie in (0, 1)".into()));
        }
        if !(self.threshold_sigmas > 0.0) || !(self.min_threshold_fraction >= 0.0) || !(self.calibration_time > 0.0) {
            return Err(IoError::Invalid("driver threshold and calibration time must be positive".into()));
        }
        Ok(())
    }
}

/// Low-passed field of one sensor and its rejection threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowPassState {
    pub filtered: Vector3<f64>,
    alpha: f64,
    pub threshold: f64,
}

impl LowPassState {
    pub fn new(filtered: Vector3<f64>, alpha: f64, threshold: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(IoError::Invalid(format!("smoothing factor {alpha} outside (0, 1)")));
        }
        if !(threshold > 0.0) {
            return Err(IoError::Invalid(format!("rejection threshold {threshold} must be positive")));
        }
        Ok(Self { filtered, alpha, threshold })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Rejects `raw` when any component is further than the threshold from the
/// low-passed reference. The reference is updated with every reading,
/// accepted or not, so a genuine step is accepted after a bounded delay.
pub fn driver_step(raw: &MagneticField<f64>, lp: &LowPassState) -> (Option<MagneticField<f64>>, LowPassState) {
    let deviation = (raw.0 - lp.filtered).abs().max();
    let accepted = (deviation <= lp.threshold).then_some(*raw);
    let next = LowPassState { filtered: lp.filtered * (1.0 - lp.alpha) + raw.0 * lp.alpha, ..*lp };
    (accepted, next)
}

/// Readings rejected before a sustained step of size `step` (largest
/// component) is accepted: `⌈ln(threshold / step) / ln(1 − α)⌉`, or zero
/// when the step is within the threshold.
pub fn recovery_samples(step: f64, threshold: f64, alpha: f64) -> usize {
    if step <= threshold {
        return 0;
    }
    ((threshold / step).ln() / (1.0 - alpha).ln()).ceil() as usize
}

/// Equilibrium angles of each sensor, subtracted from every reading.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationOffsets {
    pub offsets: Vec<DeflectionAngles>,
}

impl CalibrationOffsets {
    pub fn new(offsets: Vec<DeflectionAngles>) -> Result<Self> {
        for (i, o) in offsets.iter().enumerate() {
            if !(o.theta_x.abs() < MAX_OFFSET && o.theta_y.abs() < MAX_OFFSET) {
                return Err(IoError::Invalid(format!(
                    "sensor {i}: equilibrium offset ({:.3}, {:.3}) rad exceeds {MAX_OFFSET} rad",
                    o.theta_x, o.theta_y
                )));
            }
        }
        Ok(Self { offsets })
    }

    pub fn zero(sensors: usize) -> Self {
        Self { offsets: vec![DeflectionAngles::zero(); sensors] }
    }

    pub fn apply(&self, sensor: usize, angles: &DeflectionAngles) -> DeflectionAngles {
        let o = &self.offsets[sensor];
        DeflectionAngles::new(angles.theta_x - o.theta_x, angles.theta_y - o.theta_y)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Component-wise median of field readings.
fn median_field(fields: &[Vector3<f64>]) -> Vector3<f64> {
    Vector3::from_fn(|k, _| median(&mut fields.iter().map(|f| f[k]).collect::<Vec<_>>()))
}

/// Robust standard deviation (1.4826 × MAD), largest over the components.
fn robust_sigma(fields: &[Vector3<f64>], center: &Vector3<f64>) -> f64 {
    (0..3)
        .map(|k| 1.4826 * median(&mut fields.iter().map(|f| (f[k] - center[k]).abs()).collect::<Vec<_>>()))
        .fold(0.0, f64::max)
}

/// Per-sensor processing from raw fields to calibrated angles.
///
/// The first `calibration_time` seconds are assumed to be spent at rest:
/// they set the low-pass reference, the rejection thresholds and the
/// equilibrium offsets. Until then no angles are produced.
#[derive(Clone, Debug)]
pub struct SensorFrontEnd {
    config: DriverConfig,
    rig: SensorRig,
    start: Option<f64>,
    resting: Vec<Vec<Vector3<f64>>>,
    low_pass: Vec<LowPassState>,
    offsets: Option<CalibrationOffsets>,
    rejected: usize,
}

/// Output of the front end for one sensor sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorFrame {
    pub t: f64,
    /// Calibrated angles per sensor; `None` when rejected or uncalibrated.
    pub angles: Vec<Option<DeflectionAngles>>,
}

impl SensorFrontEnd {
    pub fn new(config: DriverConfig, rig: SensorRig) -> Result<Self> {
        config.validate()?;
        let n = rig.len();
        Ok(Self { config, rig, start: None, resting: vec![Vec::new(); n], low_pass: Vec::new(), offsets: None, rejected: 0 })
    }

    pub fn is_calibrated(&self) -> bool {
        self.offsets.is_some()
    }

    pub fn offsets(&self) -> Option<&CalibrationOffsets> {
        self.offsets.as_ref()
    }

    pub fn low_pass(&self) -> &[LowPassState] {
        &self.low_pass
    }

    /// Readings rejected so far.
    pub fn rejected(&self) -> usize {
        self.rejected
    }

    fn calibrate(&mut self) -> Result<()> {
        let mut offsets = Vec::with_capacity(self.rig.len());
        for (i, samples) in self.resting.iter().enumerate() {
            if samples.is_empty() {
                return Err(IoError::Invalid(format!("sensor {i}: no readings during calibration")));
            }
            let center = median_field(samples);
            let sigma = robust_sigma(samples, &center);
            let threshold = (self.config.threshold_sigmas * sigma).max(self.config.min_threshold_fraction * center.norm()).max(f64::EPSILON);
            self.low_pass.push(LowPassState::new(center, self.config.alpha, threshold)?);
            let polarity = self.rig.mounts[i].polarity;
            let angles: Vec<DeflectionAngles> = samples.iter().filter_map(|b| deflection_from_field(&MagneticField(*b), polarity).ok()).collect();
            if angles.is_empty() {
                return Err(IoError::Invalid(format!("sensor {i}: no valid reading during calibration")));
            }
            let tx = median(&mut angles.iter().map(|a| a.theta_x).collect::<Vec<_>>());
            let ty = median(&mut angles.iter().map(|a| a.theta_y).collect::<Vec<_>>());
            offsets.push(DeflectionAngles::new(tx, ty));
        }
        self.offsets = Some(CalibrationOffsets::new(offsets)?);
        self.resting.clear();
        Ok(())
    }

    /// Processes one sample of all sensors.
    pub fn process(&mut self, t: f64, fields: &[MagneticField<f64>]) -> Result<SensorFrame> {
        if fields.len() != self.rig.len() {
            return Err(IoError::Invalid(format!("expected {} sensor readings, found {}", self.rig.len(), fields.len())));
        }
        let start = *self.start.get_or_insert(t);
        if self.offsets.is_none() {
            if t - start < self.config.calibration_time - 1e-9 {
                for (store, b) in self.resting.iter_mut().zip(fields) {
                    store.push(b.0);
                }
                return Ok(SensorFrame { t, angles: vec![None; fields.len()] });
            }
            self.calibrate()?;
        }
        let offsets = self.offsets.as_ref().expect("calibrated above");
        let mut angles = Vec::with_capacity(fields.len());
        for (i, b) in fields.iter().enumerate() {
            let (accepted, next) = driver_step(b, &self.low_pass[i]);
            self.low_pass[i] = next;
            let a = accepted.and_then(|b| deflection_from_field(&b, self.rig.mounts[i].polarity).ok()).map(|a| offsets.apply(i, &a));
            if a.is_none() {
                self.rejected += 1;
            }
            angles.push(a);
        }
        Ok(SensorFrame { t, angles })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use whisker_core::sensor::field_from_deflection;

    fn lp(z: f64, threshold: f64) -> LowPassState {
        LowPassState::new(Vector3::new(0.0, 0.0, z), 0.3, threshold).unwrap()
    }

    #[test]
    fn identical_reading_is_accepted_and_leaves_filter_unchanged() {
        let s = lp(100.0, 50.0);
        let (a, next) = driver_step(&MagneticField(s.filtered), &s);
        assert_eq!(a, Some(MagneticField(s.filtered)));
        assert_eq!(next, s);
    }

    #[test]
    fn step_is_rejected_but_still_filtered() {
        let s = lp(100.0, 50.0);
        let (a, next) = driver_step(&MagneticField(Vector3::new(0.0, 0.0, 500.0)), &s);
        assert!(a.is_none());
        assert!((next.filtered.z - 220.0).abs() < 1e-12);
    }

    #[test]
    fn sustained_step_is_accepted_on_the_seventh_sample() {
        let mut s = lp(100.0, 50.0);
        let b = MagneticField(Vector3::new(0.0, 0.0, 500.0));
        let mut first = None;
        for k in 1..=20 {
            let (a, next) = driver_step(&b, &s);
            s = next;
            if a.is_some() {
                first = Some(k);
                break;
            }
        }
        assert_eq!(recovery_samples(400.0, 50.0, 0.3), 6);
        assert_eq!(first, Some(7));
    }

    #[test]
    fn invalid_state_is_refused() {
        assert!(LowPassState::new(Vector3::zeros(), 1.0, 1.0).is_err());
        assert!(LowPassState::new(Vector3::zeros(), 0.3, 0.0).is_err());
    }

    #[test]
    fn offsets_are_bounded() {
        assert!(CalibrationOffsets::new(vec![DeflectionAngles::new(0.19, -0.19)]).is_ok());
        assert!(CalibrationOffsets::new(vec![DeflectionAngles::new(0.2, 0.0)]).is_err());
    }

    #[test]
    fn front_end_removes_resting_offsets() {
        let rig = SensorRig::default_hexarotor();
        let mut fe = SensorFrontEnd::new(DriverConfig::default(), rig.clone()).unwrap();
        let rest: Vec<DeflectionAngles> = (0..rig.len()).map(|i| DeflectionAngles::new(0.01 * i as f64, -0.02)).collect();
        let fields = |extra: f64| -> Vec<MagneticField<f64>> {
            rig.mounts
                .iter()
                .zip(&rest)
                .map(|(m, r)| field_from_deflection(&DeflectionAngles::new(r.theta_x + extra, r.theta_y), 400.0, m.polarity))
                .collect()
        };
        for k in 0..50 {
            let f = fe.process(k as f64 * 0.02, &fields(0.0)).unwrap();
            assert!(f.angles.iter().all(Option::is_none));
        }
        let f = fe.process(1.0, &fields(0.003)).unwrap();
        assert!(fe.is_calibrated());
        for a in f.angles {
            let a = a.unwrap();
            assert!((a.theta_x - 0.003).abs() < 1e-9 && a.theta_y.abs() < 1e-9, "{a:?}");
        }
        // a spike is rejected
        let mut spiky = fields(0.0);
        spiky[2].0 += Vector3::new(200.0, 0.0, 0.0);
        let f = fe.process(1.02, &spiky).unwrap();
        assert!(f.angles[2].is_none() && f.angles[0].is_some());
        assert_eq!(fe.rejected(), 1);
    }
}
