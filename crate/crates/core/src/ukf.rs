//! Unscented Kalman filter estimating pose, velocity, body rate,
//! interaction force and wind.
//!
//! The filter runs on an 18-dimensional error state
//!
//! | block | rows   | content                                   |
//! |-------|--------|-------------------------------------------|
//! | `POS` | 0..3   | world position, m                         |
//! | `ATT` | 3..6   | attitude error about the reference, MRP   |
//! | `VEL` | 6..9   | world velocity, m/s                       |
//! | `OMEGA`| 9..12 | body rate, rad/s                          |
//! | `TOUCH`| 12..15| world interaction force, N                |
//! | `WIND` | 15..18| world wind, m/s                           |
//!
//! Attitude follows USQUE: sigma points carry MRP errors that are composed
//! onto a reference quaternion before propagation, and the propagated
//! central point becomes the new reference. After every predict and every
//! update the mean attitude error is folded into the reference and zeroed.
//! Interaction force and wind evolve as random walks.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, UnitQuaternion, Vector3};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::geom::{compose_mrp, mrp_error, renormalize, AttitudeError};
use crate::scalar::{lit, to_f64, Scalar};
use crate::sensor::{body_airflow, predict_rig, DeflectionAngles, SensorRig};
use crate::ut::{SigmaPoints, UtParams};
use crate::vehicle::{drag_force, euler_step, relative_airflow_world, DisturbanceInput, VehicleParams, VehicleState, WrenchInput};

pub const STATE_DIM: usize = 18;
pub const POS: usize = 0;
pub const ATT: usize = 3;
pub const VEL: usize = 6;
pub const OMEGA: usize = 9;
pub const TOUCH: usize = 12;
pub const WIND: usize = 15;

pub type StateVector<T> = SVector<T, STATE_DIM>;
pub type StateCovariance<T> = SMatrix<T, STATE_DIM, STATE_DIM>;

/// Mean, covariance and attitude reference of the filter.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefState<T: Scalar> {
    pub reference: UnitQuaternion<T>,
    pub mean: StateVector<T>,
    pub covariance: StateCovariance<T>,
    /// s
    pub timestamp: T,
}

fn block<T: Scalar>(x: &StateVector<T>, at: usize) -> Vector3<T> {
    Vector3::new(x[at], x[at + 1], x[at + 2])
}

fn set_block<T: Scalar>(x: &mut StateVector<T>, at: usize, v: &Vector3<T>) {
    x[at] = v.x;
    x[at + 1] = v.y;
    x[at + 2] = v.z;
}

fn dblock<T: Scalar>(x: &DVector<T>, at: usize) -> Vector3<T> {
    Vector3::new(x[at], x[at + 1], x[at + 2])
}

/// Full (non-error) state behind one sigma point.
#[derive(Clone, Copy, Debug)]
struct PointState<T: Scalar> {
    vehicle: VehicleState<T>,
    touch: Vector3<T>,
    wind: Vector3<T>,
}

impl<T: Scalar> PointState<T> {
    fn from_error(x: &DVector<T>, reference: &UnitQuaternion<T>) -> Self {
        Self {
            vehicle: VehicleState {
                position: dblock(x, POS),
                velocity: dblock(x, VEL),
                attitude: compose_mrp(reference, &AttitudeError(dblock(x, ATT))),
                angular_velocity: dblock(x, OMEGA),
            },
            touch: dblock(x, TOUCH),
            wind: dblock(x, WIND),
        }
    }

    fn to_error(&self, reference: &UnitQuaternion<T>) -> DVector<T> {
        let mut x = DVector::zeros(STATE_DIM);
        let att = mrp_error(&self.vehicle.attitude, reference).0;
        for (at, v) in [
            (POS, self.vehicle.position),
            (ATT, att),
            (VEL, self.vehicle.velocity),
            (OMEGA, self.vehicle.angular_velocity),
            (TOUCH, self.touch),
            (WIND, self.wind),
        ] {
            x[at] = v.x;
            x[at + 1] = v.y;
            x[at + 2] = v.z;
        }
        x
    }
}

impl<T: Scalar> BeliefState<T> {
    /// Belief centred on `state` with a diagonal covariance given per block
    /// as standard deviations.
    pub fn new(state: &VehicleState<T>, touch: Vector3<T>, wind: Vector3<T>, std: &InitialStd<T>, timestamp: T) -> Self {
        let mut mean = StateVector::zeros();
        set_block(&mut mean, POS, &state.position);
        set_block(&mut mean, VEL, &state.velocity);
        set_block(&mut mean, OMEGA, &state.angular_velocity);
        set_block(&mut mean, TOUCH, &touch);
        set_block(&mut mean, WIND, &wind);
        let mut diag = StateVector::zeros();
        for (at, s) in [
            (POS, std.position),
            (ATT, std.attitude),
            (VEL, std.velocity),
            (OMEGA, std.angular_velocity),
            (TOUCH, std.touch),
            (WIND, std.wind),
        ] {
            for k in 0..3 {
                diag[at + k] = s * s;
            }
        }
        Self { reference: state.attitude, mean, covariance: StateCovariance::from_diagonal(&diag), timestamp }
    }

    pub fn position(&self) -> Vector3<T> {
        block(&self.mean, POS)
    }

    pub fn velocity(&self) -> Vector3<T> {
        block(&self.mean, VEL)
    }

    pub fn angular_velocity(&self) -> Vector3<T> {
        block(&self.mean, OMEGA)
    }

    pub fn touch(&self) -> Vector3<T> {
        block(&self.mean, TOUCH)
    }

    pub fn wind(&self) -> Vector3<T> {
        block(&self.mean, WIND)
    }

    /// Mean attitude, reference composed with the mean error.
    pub fn attitude(&self) -> UnitQuaternion<T> {
        compose_mrp(&self.reference, &AttitudeError(block(&self.mean, ATT)))
    }

    pub fn vehicle_state(&self) -> VehicleState<T> {
        VehicleState {
            position: self.position(),
            velocity: self.velocity(),
            attitude: self.attitude(),
            angular_velocity: self.angular_velocity(),
        }
    }

    /// Folds the mean attitude error into the reference.
    pub fn reset_attitude(&mut self) {
        self.reference = self.attitude();
        set_block(&mut self.mean, ATT, &Vector3::zeros());
    }

    /// `(max |P − Pᵀ|, min eigenvalue of P)`.
    pub fn covariance_health(&self) -> (T, T) {
        let asym = (self.covariance - self.covariance.transpose()).abs().max();
        let sym = (self.covariance + self.covariance.transpose()) * lit::<T>(0.5);
        let min_eig = sym.symmetric_eigenvalues().min();
        (asym, min_eig)
    }

    /// Normalized estimation error squared against a true state.
    pub fn nees(&self, truth: &VehicleState<T>, touch: &Vector3<T>, wind: &Vector3<T>) -> Result<T> {
        let truth_pt = PointState { vehicle: *truth, touch: *touch, wind: *wind };
        let e = truth_pt.to_error(&self.reference) - DVector::from_column_slice(self.mean.as_slice());
        let p = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, self.covariance.as_slice());
        let chol = p.cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(e.dot(&chol.solve(&e)))
    }

    fn mean_dyn(&self) -> DVector<T> {
        DVector::from_column_slice(self.mean.as_slice())
    }

    fn cov_dyn(&self) -> DMatrix<T> {
        DMatrix::from_column_slice(STATE_DIM, STATE_DIM, self.covariance.as_slice())
    }

    fn with_dyn(&self, mean: &DVector<T>, cov: &DMatrix<T>) -> Self {
        let mut next = self.clone();
        next.mean = StateVector::from_column_slice(mean.as_slice());
        let c = StateCovariance::from_column_slice(cov.as_slice());
        next.covariance = (c + c.transpose()) * lit::<T>(0.5);
        next.reference = renormalize(next.reference);
        next.reset_attitude();
        next
    }
}

/// Initial per-block standard deviations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialStd<T: Scalar> {
    pub position: T,
    pub attitude: T,
    pub velocity: T,
    pub angular_velocity: T,
    pub touch: T,
    pub wind: T,
}

impl<T: Scalar> Default for InitialStd<T> {
    fn default() -> Self {
        Self {
            position: lit(0.05),
            attitude: lit(0.02),
            velocity: lit(0.1),
            angular_velocity: lit(0.05),
            touch: lit(0.5),
            wind: lit(1.0),
        }
    }
}

/// Continuous-time white-noise intensities per axis; the discrete process
/// covariance over `dt` is `diag(q) · dt`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcessNoise<T: Scalar> {
    /// m²/s
    pub position: T,
    /// rad²/s
    pub attitude: T,
    /// (m/s)²/s
    pub velocity: T,
    /// (rad/s)²/s
    pub angular_velocity: T,
    /// Interaction-force random walk, N²/s.
    pub touch: T,
    /// Wind random walk, (m/s)²/s.
    pub wind: T,
}

impl<T: Scalar> Default for ProcessNoise<T> {
    fn default() -> Self {
        Self {
            position: lit(1e-6),
            attitude: lit(1e-5),
            velocity: lit(1e-3),
            angular_velocity: lit(1e-2),
            touch: lit(0.1),
            wind: lit(0.5),
        }
    }
}

impl<T: Scalar> ProcessNoise<T> {
    pub fn zero() -> Self {
        Self {
            position: T::zero(),
            attitude: T::zero(),
            velocity: T::zero(),
            angular_velocity: T::zero(),
            touch: T::zero(),
            wind: T::zero(),
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.position, self.attitude, self.velocity, self.angular_velocity, self.touch, self.wind]
            .iter()
            .all(|v| *v >= T::zero())
    }

    pub fn discrete(&self, dt: T) -> StateVector<T> {
        let mut d = StateVector::zeros();
        for (at, q) in [
            (POS, self.position),
            (ATT, self.attitude),
            (VEL, self.velocity),
            (OMEGA, self.angular_velocity),
            (TOUCH, self.touch),
            (WIND, self.wind),
        ] {
            for k in 0..3 {
                d[at + k] = q * dt;
            }
        }
        d
    }
}

/// Pose, velocity and body rate from the onboard state estimator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdometryMeasurement<T: Scalar> {
    pub position: Vector3<T>,
    pub attitude: UnitQuaternion<T>,
    pub velocity: Vector3<T>,
    pub angular_velocity: Vector3<T>,
    /// Ordered position, attitude (rad), velocity, body rate.
    pub covariance: SMatrix<T, 12, 12>,
}

/// Per-axis standard deviations of the odometry stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdometryNoise<T: Scalar> {
    /// m
    pub position: T,
    /// rad
    pub attitude: T,
    /// m/s
    pub velocity: T,
    /// rad/s
    pub angular_velocity: T,
}

impl<T: Scalar> Default for OdometryNoise<T> {
    fn default() -> Self {
        Self {
            position: lit(0.005),
            attitude: lit(0.2f64.to_radians()),
            velocity: lit(0.02),
            angular_velocity: lit(0.01),
        }
    }
}

impl<T: Scalar> OdometryNoise<T> {
    pub fn covariance(&self) -> SMatrix<T, 12, 12> {
        let mut d = SVector::<T, 12>::zeros();
        for (at, s) in [(0, self.position), (3, self.attitude), (6, self.velocity), (9, self.angular_velocity)] {
            for k in 0..3 {
                d[at + k] = s * s;
            }
        }
        SMatrix::from_diagonal(&d)
    }
}

/// Estimates exposed to the rest of the system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterOutput<T: Scalar> {
    /// World frame, N.
    pub touch: Vector3<T>,
    /// World frame, m/s.
    pub wind: Vector3<T>,
    /// Relative airflow in the body frame, m/s.
    pub v_inf_body: Vector3<T>,
    /// World frame, N.
    pub drag: Vector3<T>,
}

/// Result of a measurement update.
#[derive(Clone, Debug)]
pub struct Updated<T: Scalar> {
    pub belief: BeliefState<T>,
    pub accepted: bool,
    /// Normalized innovation squared `νᵀ S⁻¹ ν`.
    pub nis: T,
}

/// Mahalanobis threshold for a gate with acceptance probability `p` on `dof`
/// degrees of freedom.
pub fn gate_threshold(p: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).map(|c| c.inverse_cdf(p)).unwrap_or(f64::INFINITY)
}

fn dyn_to_point<T: Scalar>(x: &DVector<T>, reference: &UnitQuaternion<T>) -> PointState<T> {
    PointState::from_error(x, reference)
}

/// USQUE time update over `dt` with the commanded wrench held constant.
pub fn predict<T: Scalar>(
    belief: &BeliefState<T>,
    input: &WrenchInput<T>,
    dt: T,
    noise: &ProcessNoise<T>,
    params: &VehicleParams<T>,
    ut: &UtParams<T>,
) -> Result<BeliefState<T>> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidParameter("prediction step must be positive".into()));
    }
    let sigma = SigmaPoints::new(&belief.mean_dyn(), &belief.cov_dyn(), ut)?;
    let propagated: Vec<PointState<T>> = sigma
        .points
        .iter()
        .map(|x| {
            let p = dyn_to_point(x, &belief.reference);
            let dist = DisturbanceInput { wind: p.wind, touch: p.touch };
            PointState { vehicle: euler_step(&p.vehicle, input, &dist, params, dt), ..p }
        })
        .collect();
    let reference = propagated[0].vehicle.attitude;
    let errors: Vec<DVector<T>> = propagated.iter().map(|p| p.to_error(&reference)).collect();
    let mean = sigma.weighted_mean(&errors);
    let mut cov = sigma.weighted_cross(&errors, &mean, &errors, &mean);
    let q = noise.discrete(dt);
    for k in 0..STATE_DIM {
        cov[(k, k)] += q[k];
    }
    let mut next = BeliefState { reference, ..belief.clone() };
    next.timestamp = belief.timestamp + dt;
    Ok(next.with_dyn(&mean, &cov))
}

fn gate_passes<T: Scalar>(nis: T, dof: usize, gate: Option<f64>) -> bool {
    match gate {
        Some(p) => to_f64(nis) <= gate_threshold(p, dof),
        None => true,
    }
}

/// Linear Kalman update with the odometry block `[p, δa, v, ω]`.
pub fn update_odometry<T: Scalar>(belief: &BeliefState<T>, z: &OdometryMeasurement<T>, gate: Option<f64>) -> Result<Updated<T>> {
    const M: usize = 12;
    let mut innovation = SVector::<T, M>::zeros();
    let att = mrp_error(&z.attitude, &belief.reference).0;
    for (at, meas) in [(POS, z.position), (ATT, att), (VEL, z.velocity), (OMEGA, z.angular_velocity)] {
        let predicted = block(&belief.mean, at);
        for k in 0..3 {
            innovation[at + k] = meas[k] - predicted[k];
        }
    }
    let p = &belief.covariance;
    let s: SMatrix<T, M, M> = p.fixed_view::<M, M>(0, 0).into_owned() + z.covariance;
    let s_chol = s.cholesky().ok_or(Error::SingularInnovation)?;
    let nis = innovation.dot(&s_chol.solve(&innovation));
    if !gate_passes(nis, M, gate) {
        return Ok(Updated { belief: belief.clone(), accepted: false, nis });
    }
    let pht: SMatrix<T, STATE_DIM, M> = p.fixed_view::<STATE_DIM, M>(0, 0).into_owned();
    let gain: SMatrix<T, STATE_DIM, M> = s_chol.solve(&pht.transpose()).transpose();

    let mut next = belief.clone();
    next.mean += gain * innovation;
    // Joseph form: (I − KH) P (I − KH)ᵀ + K R Kᵀ
    let mut ikh = StateCovariance::<T>::identity();
    {
        let mut left = ikh.fixed_view_mut::<STATE_DIM, M>(0, 0);
        left -= gain;
    }
    let cov = ikh * p * ikh.transpose() + gain * z.covariance * gain.transpose();
    next.covariance = (cov + cov.transpose()) * lit::<T>(0.5);
    next.reset_attitude();
    Ok(Updated { belief: next, accepted: true, nis })
}

/// Generic unscented measurement update with additive noise `r`.
fn unscented_update<T, H>(belief: &BeliefState<T>, measured: &DVector<T>, r: &DMatrix<T>, ut: &UtParams<T>, gate: Option<f64>, h: H) -> Result<Updated<T>>
where
    T: Scalar,
    H: Fn(&PointState<T>) -> DVector<T>,
{
    let mean = belief.mean_dyn();
    let sigma = SigmaPoints::new(&mean, &belief.cov_dyn(), ut)?;
    let zs: Vec<DVector<T>> = sigma.points.iter().map(|x| h(&dyn_to_point(x, &belief.reference))).collect();
    let z_mean = sigma.weighted_mean(&zs);
    let s = sigma.weighted_cross(&zs, &z_mean, &zs, &z_mean) + r;
    let s = (&s + s.transpose()) * lit::<T>(0.5);
    let cross = sigma.weighted_cross(&sigma.points, &mean, &zs, &z_mean);
    let s_chol = s.clone().cholesky().ok_or(Error::SingularInnovation)?;
    let innovation = measured - &z_mean;
    let nis = innovation.dot(&s_chol.solve(&innovation));
    if !gate_passes(nis, measured.len(), gate) {
        return Ok(Updated { belief: belief.clone(), accepted: false, nis });
    }
    let gain = s_chol.solve(&cross.transpose()).transpose();
    let new_mean = mean + &gain * innovation;
    let new_cov = belief.cov_dyn() - &gain * s * gain.transpose();
    Ok(Updated { belief: belief.with_dyn(&new_mean, &new_cov), accepted: true, nis })
}

/// Unscented update with the stacked whisker angles.
///
/// `angles[i]` is `None` (or non-finite) when sensor `i` produced no valid
/// reading; its rows are dropped from the stack. `angle_variance` is the
/// per-angle noise variance, rad².
pub fn update_airflow<T: Scalar>(
    belief: &BeliefState<T>,
    angles: &[Option<DeflectionAngles<T>>],
    angle_variance: T,
    rig: &SensorRig<T>,
    ut: &UtParams<T>,
    gate: Option<f64>,
) -> Result<Updated<T>> {
    if angles.len() != rig.len() {
        return Err(Error::ShapeMismatch { expected: rig.len(), found: angles.len() });
    }
    let active: Vec<usize> = angles
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.filter(DeflectionAngles::is_finite).map(|_| i))
        .collect();
    if active.is_empty() {
        return Ok(Updated { belief: belief.clone(), accepted: false, nis: T::zero() });
    }
    let mut measured = DVector::zeros(2 * active.len());
    for (row, &i) in active.iter().enumerate() {
        let a = angles[i].expect("active sensors have readings");
        measured[2 * row] = a.theta_x;
        measured[2 * row + 1] = a.theta_y;
    }
    let r = DMatrix::identity(measured.len(), measured.len()) * angle_variance;
    unscented_update(belief, &measured, &r, ut, gate, |p| {
        predict_rig(rig, &active, &p.vehicle.attitude, &p.wind, &p.vehicle.velocity, &p.vehicle.angular_velocity)
    })
}

/// Unscented update with a body-frame relative-airflow pseudo-measurement.
pub fn update_airflow_pseudo<T: Scalar>(
    belief: &BeliefState<T>,
    v_inf_body: &Vector3<T>,
    covariance: &nalgebra::Matrix3<T>,
    ut: &UtParams<T>,
    gate: Option<f64>,
) -> Result<Updated<T>> {
    let measured = DVector::from_column_slice(v_inf_body.as_slice());
    let r = DMatrix::from_column_slice(3, 3, covariance.as_slice());
    unscented_update(belief, &measured, &r, ut, gate, |p| {
        DVector::from_column_slice(body_airflow(&p.vehicle.attitude, &p.wind, &p.vehicle.velocity).as_slice())
    })
}

/// Touch force, wind, body relative airflow and drag from the current mean.
pub fn output<T: Scalar>(belief: &BeliefState<T>, params: &VehicleParams<T>) -> FilterOutput<T> {
    let wind = belief.wind();
    let velocity = belief.velocity();
    FilterOutput {
        touch: belief.touch(),
        wind,
        v_inf_body: body_airflow(&belief.attitude(), &wind, &velocity),
        drag: drag_force(&relative_airflow_world(&wind, &velocity), params),
    }
}

/// Tuning of a [`DisturbanceUkf`].
#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig<T: Scalar> {
    pub vehicle: VehicleParams<T>,
    pub process: ProcessNoise<T>,
    pub ut: UtParams<T>,
    /// Whisker angle noise, rad.
    pub angle_std: T,
    /// Pseudo-measurement noise of the network output, m/s per axis.
    pub pseudo_std: T,
    /// Longest single prediction step, s.
    pub max_predict_dt: T,
    /// Gate acceptance probability; `None` disables gating.
    pub gate: Option<f64>,
}

impl<T: Scalar> Default for FilterConfig<T> {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            process: ProcessNoise::default(),
            ut: UtParams::default(),
            angle_std: lit(0.005),
            pseudo_std: lit(0.3),
            max_predict_dt: lit(0.005),
            gate: None,
        }
    }
}

/// Stateful wrapper owning one belief; measurements are applied in time
/// order, each preceded by a prediction up to its timestamp.
#[derive(Clone, Debug)]
pub struct DisturbanceUkf<T: Scalar> {
    pub config: FilterConfig<T>,
    belief: BeliefState<T>,
    wrench: WrenchInput<T>,
}

impl<T: Scalar> DisturbanceUkf<T> {
    pub fn new(config: FilterConfig<T>, belief: BeliefState<T>) -> Self {
        let wrench = WrenchInput::hover(&config.vehicle);
        Self { config, belief, wrench }
    }

    pub fn belief(&self) -> &BeliefState<T> {
        &self.belief
    }

    pub fn time(&self) -> T {
        self.belief.timestamp
    }

    /// Latest commanded wrench, held until the next call.
    pub fn set_wrench(&mut self, wrench: WrenchInput<T>) {
        self.wrench = wrench;
    }

    /// Predicts forward to `t` in steps no longer than `max_predict_dt`.
    pub fn advance_to(&mut self, t: T) -> Result<()> {
        let eps: T = lit(1e-9);
        while t - self.belief.timestamp > eps {
            let dt = (t - self.belief.timestamp).min(self.config.max_predict_dt);
            self.belief = predict(&self.belief, &self.wrench, dt, &self.config.process, &self.config.vehicle, &self.config.ut)?;
        }
        Ok(())
    }

    pub fn update_odometry(&mut self, t: T, z: &OdometryMeasurement<T>) -> Result<bool> {
        self.advance_to(t)?;
        let u = update_odometry(&self.belief, z, self.config.gate)?;
        self.belief = u.belief;
        Ok(u.accepted)
    }

    pub fn update_airflow(&mut self, t: T, angles: &[Option<DeflectionAngles<T>>], rig: &SensorRig<T>) -> Result<bool> {
        self.advance_to(t)?;
        let var = self.config.angle_std * self.config.angle_std;
        let u = update_airflow(&self.belief, angles, var, rig, &self.config.ut, self.config.gate)?;
        self.belief = u.belief;
        Ok(u.accepted)
    }

    pub fn update_airflow_pseudo(&mut self, t: T, v_inf_body: &Vector3<T>) -> Result<bool> {
        self.advance_to(t)?;
        let var = self.config.pseudo_std * self.config.pseudo_std;
        let u = update_airflow_pseudo(&self.belief, v_inf_body, &(nalgebra::Matrix3::identity() * var), &self.config.ut, self.config.gate)?;
        self.belief = u.belief;
        Ok(u.accepted)
    }

    pub fn output(&self) -> FilterOutput<T> {
        output(&self.belief, &self.config.vehicle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{body_airflow, sensor_airflow, predict_deflection};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn params() -> VehicleParams<f64> {
        VehicleParams::default()
    }

    fn hover_belief(std: InitialStd<f64>) -> BeliefState<f64> {
        BeliefState::new(&VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0)), Vector3::zeros(), Vector3::zeros(), &std, 0.0)
    }

    fn zero_std() -> InitialStd<f64> {
        InitialStd { position: 0.0, attitude: 0.0, velocity: 0.0, angular_velocity: 0.0, touch: 0.0, wind: 0.0 }
    }

    fn odometry_at(b: &BeliefState<f64>, noise: &OdometryNoise<f64>) -> OdometryMeasurement<f64> {
        OdometryMeasurement {
            position: b.position(),
            attitude: b.attitude(),
            velocity: b.velocity(),
            angular_velocity: b.angular_velocity(),
            covariance: noise.covariance(),
        }
    }

    #[test]
    fn predict_hover_fixed_point() {
        let b = hover_belief(zero_std());
        let p = params();
        let next = predict(&b, &WrenchInput::hover(&p), 0.005, &ProcessNoise::zero(), &p, &UtParams::default()).unwrap();
        assert!((next.mean - b.mean).abs().max() < 1e-9);
        assert!((next.covariance - b.covariance).abs().max() < 1e-9);
        assert!(next.reference.angle_to(&b.reference) < 1e-12);
        assert_relative_eq!(next.timestamp, 0.005);
    }

    #[test]
    fn predict_wind_random_walk_only() {
        let b = hover_belief(zero_std());
        let p = params();
        let q = ProcessNoise { wind: 0.5, ..ProcessNoise::zero() };
        let dt = 0.01;
        let next = predict(&b, &WrenchInput::hover(&p), dt, &q, &p, &UtParams::default()).unwrap();
        let grown = next.covariance - b.covariance;
        for i in 0..STATE_DIM {
            for j in 0..STATE_DIM {
                let expected = if i == j && i >= WIND { 0.5 * dt } else { 0.0 };
                assert!((grown[(i, j)] - expected).abs() < 1e-9, "P[{i},{j}] grew by {}", grown[(i, j)]);
            }
        }
    }

    #[test]
    fn predict_matches_monte_carlo() {
        let p = params();
        let mut b = hover_belief(InitialStd { position: 0.1, attitude: 0.05, velocity: 0.3, angular_velocity: 0.2, touch: 0.5, wind: 1.0 });
        set_block(&mut b.mean, VEL, &Vector3::new(2.0, -1.0, 0.3));
        set_block(&mut b.mean, WIND, &Vector3::new(1.0, 2.0, 0.0));
        let u = WrenchInput { thrust: 13.5, torque: Vector3::new(0.01, -0.02, 0.0) };
        let dt = 0.05;
        let next = predict(&b, &u, dt, &ProcessNoise::zero(), &p, &UtParams::default()).unwrap();

        // oracle: push 1e5 samples of the prior through the same discrete dynamics
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = b.covariance.cholesky().unwrap().l();
        let mut sum = DVector::<f64>::zeros(STATE_DIM);
        for _ in 0..n {
            let z = StateVector::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let x = DVector::from_column_slice((b.mean + l * z).as_slice());
            let pt = PointState::from_error(&x, &b.reference);
            let dist = DisturbanceInput { wind: pt.wind, touch: pt.touch };
            let prop = PointState { vehicle: euler_step(&pt.vehicle, &u, &dist, &p, dt), ..pt };
            sum += prop.to_error(&next.reference);
        }
        let mc = sum / n as f64;
        for k in 0..STATE_DIM {
            let sigma = next.covariance[(k, k)].sqrt();
            let tol = 3.0 * sigma / (n as f64).sqrt();
            assert!((mc[k] - next.mean[k]).abs() < tol, "component {k}: ut {} mc {} tol {tol}", next.mean[k], mc[k]);
        }
    }

    #[test]
    fn odometry_at_mean_keeps_mean() {
        let b = hover_belief(InitialStd::default());
        let z = odometry_at(&b, &OdometryNoise::default());
        let u = update_odometry(&b, &z, None).unwrap();
        assert!(u.accepted);
        assert!((u.belief.mean - b.mean).abs().max() < 1e-12);
        assert!(u.belief.covariance.trace() <= b.covariance.trace());
    }

    #[test]
    fn uninformative_odometry_changes_nothing() {
        let b = hover_belief(InitialStd::default());
        let mut z = odometry_at(&b, &OdometryNoise::default());
        z.position += Vector3::new(1.0, -2.0, 0.5);
        z.velocity += Vector3::new(0.3, 0.0, 0.0);
        z.covariance *= 1e12;
        let u = update_odometry(&b, &z, None).unwrap();
        assert!((u.belief.mean - b.mean).abs().max() < 1e-6);
        assert!((u.belief.covariance - b.covariance).abs().max() < 1e-6);
    }

    #[test]
    fn odometry_scalar_gain_matches_closed_form() {
        let b = hover_belief(InitialStd::default());
        let noise = OdometryNoise::default();
        let mut z = odometry_at(&b, &noise);
        z.position.x += 0.2;
        let u = update_odometry(&b, &z, None).unwrap();
        // diagonal prior: x-position decouples into a scalar update
        let (p, r) = (0.05f64 * 0.05, noise.position * noise.position);
        let k = p / (p + r);
        assert_relative_eq!(u.belief.position().x, b.position().x + k * 0.2, epsilon = 1e-12);
        assert_relative_eq!(u.belief.covariance[(0, 0)], (1.0 - k) * p, epsilon = 1e-12);
    }

    #[test]
    fn odometry_attitude_folds_into_reference() {
        let b = hover_belief(InitialStd::default());
        let mut z = odometry_at(&b, &OdometryNoise::default());
        z.attitude = UnitQuaternion::from_euler_angles(0.0, 0.0, 0.05);
        let u = update_odometry(&b, &z, None).unwrap();
        assert_eq!(block(&u.belief.mean, ATT), Vector3::zeros());
        let (_, _, yaw) = u.belief.reference.euler_angles();
        assert!(yaw > 0.04 && yaw <= 0.05);
    }

    #[test]
    fn odometry_gate_rejects_outlier() {
        let b = hover_belief(InitialStd::default());
        let mut z = odometry_at(&b, &OdometryNoise::default());
        z.position.x += 5.0;
        let u = update_odometry(&b, &z, Some(0.997)).unwrap();
        assert!(!u.accepted);
        assert_eq!(u.belief, b);
        let u = update_odometry(&b, &z, None).unwrap();
        assert!(u.accepted);
    }

    #[test]
    fn gate_threshold_reference_values() {
        // χ² quantiles: P(χ²₃ ≤ 13.9314) = 0.997, P(χ²₁₂ ≤ 29.7929) = 0.997
        assert!((gate_threshold(0.997, 3) - 13.9314).abs() < 1e-3);
        assert!((gate_threshold(0.997, 12) - 29.7929).abs() < 1e-3);
    }

    fn airflow_angles(rig: &SensorRig<f64>, b: &BeliefState<f64>, wind: &Vector3<f64>) -> Vec<Option<DeflectionAngles<f64>>> {
        let v_body = body_airflow(&b.attitude(), wind, &b.velocity());
        rig.mounts
            .iter()
            .map(|m| Some(predict_deflection(&sensor_airflow(&v_body, &b.angular_velocity(), m), m.coefficient)))
            .collect()
    }

    #[test]
    fn null_airflow_keeps_wind_zero() {
        let rig = SensorRig::default_hexarotor();
        let b = hover_belief(InitialStd::default());
        let angles = vec![Some(DeflectionAngles::zero()); 4];
        let u = update_airflow(&b, &angles, 0.005f64.powi(2), &rig, &UtParams::default(), None).unwrap();
        assert!(u.belief.wind().norm() < 1e-9);
        let before: f64 = (WIND..WIND + 3).map(|i| b.covariance[(i, i)]).sum();
        let after: f64 = (WIND..WIND + 3).map(|i| u.belief.covariance[(i, i)]).sum();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn constant_wind_converges() {
        let rig = SensorRig::default_hexarotor();
        let p = params();
        let truth = Vector3::new(2.0, 0.0, 0.0);
        let mut b = hover_belief(InitialStd::default());
        let noise = OdometryNoise::default();
        let angles = airflow_angles(&rig, &b, &truth);
        // odometry pins the vehicle in place; the touch block absorbs the drag
        let mut converged_at = None;
        for k in 0..200 {
            b = predict(&b, &WrenchInput::hover(&p), 0.02, &ProcessNoise::default(), &p, &UtParams::default()).unwrap();
            let z = OdometryMeasurement { position: Vector3::new(0.0, 0.0, 1.0), attitude: UnitQuaternion::identity(), velocity: Vector3::zeros(), angular_velocity: Vector3::zeros(), covariance: noise.covariance() };
            b = update_odometry(&b, &z, None).unwrap().belief;
            b = update_airflow(&b, &angles, 0.005f64.powi(2), &rig, &UtParams::default(), None).unwrap().belief;
            if converged_at.is_none() && (b.wind() - truth).norm() < 0.1 {
                converged_at = Some(k);
            }
        }
        assert!(converged_at.is_some(), "wind {:?}", b.wind());
        assert!((b.wind() - truth).norm() < 0.1);
    }

    #[test]
    fn three_sensors_still_observe_full_wind() {
        let rig = SensorRig::default_hexarotor();
        let b = {
            let mut b = hover_belief(InitialStd::default());
            set_block(&mut b.mean, WIND, &Vector3::new(0.0, 0.0, 2.0));
            b
        };
        // flow along body z: the two upright sensors see nothing
        let mut angles = airflow_angles(&rig, &b, &Vector3::new(0.0, 0.0, 2.0));
        angles[0] = None;
        let u = update_airflow(&b, &angles, 0.005f64.powi(2), &rig, &UtParams::default(), None).unwrap();
        for k in 0..3 {
            let i = WIND + k;
            assert!(u.belief.covariance[(i, i)] < b.covariance[(i, i)], "axis {k} unobserved");
        }
        assert!(u.belief.covariance.trace() < b.covariance.trace());
    }

    #[test]
    fn pseudo_update_consistent_measurement() {
        // with a certain attitude the measurement is linear in the state,
        // so the unscented mean equals the model at the mean
        let mut b = hover_belief(InitialStd { attitude: 0.0, ..InitialStd::default() });
        set_block(&mut b.mean, VEL, &Vector3::new(1.0, 0.5, 0.0));
        let v = body_airflow(&b.attitude(), &b.wind(), &b.velocity());
        let u = update_airflow_pseudo(&b, &v, &(nalgebra::Matrix3::identity() * 0.09), &UtParams::default(), None).unwrap();
        assert!((u.belief.mean - b.mean).abs().max() < 1e-9);
    }

    fn converge_pseudo(yaw: f64) -> Vector3<f64> {
        let p = params();
        let mut state = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.0));
        state.attitude = UnitQuaternion::from_euler_angles(0.0, 0.0, yaw);
        let mut b = BeliefState::new(&state, Vector3::zeros(), Vector3::zeros(), &InitialStd::default(), 0.0);
        let noise = OdometryNoise::default();
        let z = OdometryMeasurement { position: state.position, attitude: state.attitude, velocity: Vector3::zeros(), angular_velocity: Vector3::zeros(), covariance: noise.covariance() };
        let r = nalgebra::Matrix3::identity() * 0.09;
        for _ in 0..300 {
            b = predict(&b, &WrenchInput::hover(&p), 0.02, &ProcessNoise::default(), &p, &UtParams::default()).unwrap();
            b = update_odometry(&b, &z, None).unwrap().belief;
            b = update_airflow_pseudo(&b, &Vector3::new(-3.0, 0.0, 0.0), &r, &UtParams::default(), None).unwrap().belief;
        }
        b.wind()
    }

    #[test]
    fn pseudo_update_converges_to_wind() {
        let w = converge_pseudo(0.0);
        assert!((w - Vector3::new(-3.0, 0.0, 0.0)).norm() < 0.1, "{w:?}");
    }

    #[test]
    fn pseudo_update_is_attitude_coupled() {
        // under a 90° yaw the body −x axis is the world −y axis
        let w = converge_pseudo(std::f64::consts::FRAC_PI_2);
        assert!((w - Vector3::new(0.0, -3.0, 0.0)).norm() < 0.1, "{w:?}");
    }

    #[test]
    fn output_examples() {
        let p = params();
        let b = hover_belief(InitialStd::default());
        let o = output(&b, &p);
        assert_eq!(o.drag, Vector3::zeros());
        assert_eq!(o.v_inf_body, Vector3::zeros());

        let mut b = hover_belief(InitialStd::default());
        set_block(&mut b.mean, WIND, &Vector3::new(3.6, 0.0, 0.0));
        set_block(&mut b.mean, TOUCH, &Vector3::new(0.1, -0.2, 0.3));
        let o = output(&b, &p);
        assert_relative_eq!(o.drag.norm(), 1.6272, epsilon = 1e-12);
        assert_eq!(o.touch, Vector3::new(0.1, -0.2, 0.3));
        assert_relative_eq!(o.v_inf_body, Vector3::new(3.6, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn randomized_steps_keep_covariance_healthy() {
        let p = params();
        let rig = SensorRig::default_hexarotor();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut b = hover_belief(InitialStd::default());
        let noise = OdometryNoise::default();
        for step in 0..2_000 {
            match rng.random_range(0..3) {
                0 => {
                    let u = WrenchInput { thrust: rng.random_range(8.0..18.0), torque: Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05)) };
                    b = predict(&b, &u, rng.random_range(0.001..0.02), &ProcessNoise::default(), &p, &UtParams::default()).unwrap();
                }
                1 => {
                    let mut z = odometry_at(&b, &noise);
                    z.position += Vector3::from_fn(|_, _| rng.random_range(-0.02..0.02));
                    z.velocity += Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05));
                    b = update_odometry(&b, &z, None).unwrap().belief;
                }
                _ => {
                    let wind = Vector3::from_fn(|_, _| rng.random_range(-4.0..4.0));
                    let angles = airflow_angles(&rig, &b, &wind);
                    b = update_airflow(&b, &angles, 0.005f64.powi(2), &rig, &UtParams::default(), None).unwrap().belief;
                }
            }
            let (asym, min_eig) = b.covariance_health();
            assert!(asym < 1e-9, "step {step}: asymmetry {asym}");
            assert!(min_eig > -1e-9, "step {step}: eigenvalue {min_eig}");
            assert!((b.reference.coords.norm() - 1.0).abs() < 1e-9);
        }
    }
}
