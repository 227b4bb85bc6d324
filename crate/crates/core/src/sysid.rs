//! Identification of the drag polynomial and of the per-sensor lumped
//! coefficient from flight data.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};
use crate::sensor::DeflectionAngles;

/// Minimum planar airflow for a coefficient sample, m/s.
pub const SENSOR_SPEED_CUTOFF: f64 = 0.2;

/// Projected drag observed at one airspeed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DragSample<T: Scalar> {
    /// m/s
    pub speed: T,
    /// N
    pub force: T,
}

/// Least-squares drag coefficients, `f = μ₁ v + μ₂ v²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DragFit<T: Scalar> {
    pub mu1: T,
    pub mu2: T,
    /// RMS of the fit residual, N.
    pub residual_rms: T,
}

/// Collective thrust that keeps altitude at the given roll and pitch,
/// `m g / (cos φ cos θ)`.
pub fn thrust_from_attitude<T: Scalar>(mass: T, roll: T, pitch: T, gravity: T) -> Result<T> {
    let c = roll.cos() * pitch.cos();
    if c < lit(1e-6) {
        return Err(Error::SingularAttitude(crate::scalar::to_f64(c)));
    }
    Ok(mass * gravity / c)
}

/// One drag sample, `(f_thrust e₃ − m v̇_B) · e_v`.
///
/// `accel_body` is the world-frame acceleration expressed in the body frame
/// and `direction` the unit velocity direction in the body frame.
pub fn drag_sample<T: Scalar>(thrust: T, mass: T, accel_body: &Vector3<T>, direction: &Vector3<T>, speed: T) -> DragSample<T> {
    let f = Vector3::new(T::zero(), T::zero(), thrust) - accel_body * mass;
    DragSample { speed, force: f.dot(direction) }
}

fn distinct_count<T: Scalar>(values: &[T]) -> usize {
    let mut v: Vec<f64> = values.iter().map(|x| crate::scalar::to_f64(*x)).collect();
    v.sort_by(f64::total_cmp);
    let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * scale);
    v.len()
}

/// Fits `f = μ₁ v + μ₂ v²` (no intercept) by least squares.
pub fn fit_drag_polynomial<T: Scalar>(samples: &[DragSample<T>]) -> Result<DragFit<T>> {
    let speeds: Vec<T> = samples.iter().map(|s| s.speed).collect();
    if distinct_count(&speeds) < 3 {
        return Err(Error::RankDeficient("need at least three distinct speeds"));
    }
    let n = samples.len();
    let design = DMatrix::from_fn(n, 2, |r, c| if c == 0 { samples[r].speed } else { samples[r].speed * samples[r].speed });
    let rhs = DVector::from_fn(n, |r, _| samples[r].force);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > smax * lit(1e-12)) {
        return Err(Error::RankDeficient("speed columns are collinear"));
    }
    let coef = svd.solve(&rhs, T::zero()).map_err(|_| Error::RankDeficient("least-squares solve failed"))?;
    let resid = design * &coef - rhs;
    let rms = (resid.norm_squared() / lit::<T>(n as f64)).sqrt();
    Ok(DragFit { mu1: coef[0], mu2: coef[1], residual_rms: rms })
}

/// Lumped coefficient of one sample, `‖θ‖ / (‖v‖ ‖v_xy‖)`, or `None` below
/// the planar speed cutoff.
pub fn coefficient_sample<T: Scalar>(angles: &DeflectionAngles<T>, v_inf_sensor: &Vector3<T>) -> Option<T> {
    let planar = (v_inf_sensor.x * v_inf_sensor.x + v_inf_sensor.y * v_inf_sensor.y).sqrt();
    if planar <= lit(SENSOR_SPEED_CUTOFF) {
        return None;
    }
    Some(angles.norm() / (v_inf_sensor.norm() * planar))
}

/// Median of the per-sample coefficients over paired angle/airflow streams.
pub fn identify_sensor_coefficient<T: Scalar>(angles: &[DeflectionAngles<T>], v_inf_sensor: &[Vector3<T>]) -> Result<T> {
    if angles.len() != v_inf_sensor.len() {
        return Err(Error::ShapeMismatch { expected: angles.len(), found: v_inf_sensor.len() });
    }
    let mut c: Vec<T> = angles
        .iter()
        .zip(v_inf_sensor)
        .filter_map(|(a, v)| coefficient_sample(a, v))
        .collect();
    if c.is_empty() {
        return Err(Error::NoValidSamples("no sample above the planar airflow cutoff"));
    }
    c.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = c.len();
    Ok(if n % 2 == 1 { c[n / 2] } else { (c[n / 2 - 1] + c[n / 2]) * lit::<T>(0.5) })
}
