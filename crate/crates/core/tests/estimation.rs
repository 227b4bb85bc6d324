//! The filter against exact synthetic measurements of a vehicle held still
//! by known disturbances.

use nalgebra::Vector3;
use whisker_core::sensor::predict_rig;
use whisker_core::ukf::InitialStd;
use whisker_core::vehicle::drag_force;
use whisker_core::{
    BeliefState, DeflectionAngles, DisturbanceUkf, FilterConfig, OdometryMeasurement, OdometryNoise, SensorRig, VehicleParams, VehicleState,
    WrenchInput,
};

/// Feeds 30 s of odometry (100 Hz) and whisker angles (50 Hz) of a vehicle
/// at rest in `wind`, and returns the filter.
fn hold_still(wind: Vector3<f64>, wrench: WrenchInput, use_whiskers: bool) -> DisturbanceUkf {
    let params = VehicleParams::default();
    let rig = SensorRig::default_hexarotor();
    let rest = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.5));
    let config = FilterConfig { vehicle: params, ..FilterConfig::default() };
    let belief = BeliefState::new(&rest, Vector3::zeros(), Vector3::zeros(), &InitialStd::default(), 0.0);
    let mut ukf = DisturbanceUkf::new(config, belief);
    ukf.set_wrench(wrench);
    let z = OdometryMeasurement {
        position: rest.position,
        attitude: rest.attitude,
        velocity: rest.velocity,
        angular_velocity: rest.angular_velocity,
        covariance: OdometryNoise::default().covariance(),
    };
    let all: Vec<usize> = (0..rig.len()).collect();
    let stacked = predict_rig(&rig, &all, &rest.attitude, &wind, &rest.velocity, &rest.angular_velocity);
    let angles: Vec<Option<DeflectionAngles>> = (0..rig.len()).map(|i| Some(DeflectionAngles::new(stacked[2 * i], stacked[2 * i + 1]))).collect();
    for k in 1..=3000 {
        let t = k as f64 * 0.01;
        ukf.update_odometry(t, &z).unwrap();
        if use_whiskers && k % 2 == 0 {
            ukf.update_airflow(t, &angles, &rig).unwrap();
        }
    }
    ukf
}

#[test]
fn wind_balanced_by_a_pull_is_split_correctly() {
    // 3.6 m/s along x: drag = 0.20·3.6 + 0.07·3.6² = 1.6272 N, held by an equal pull
    let wind = Vector3::new(3.6, 0.0, 0.0);
    let hover = WrenchInput::hover(&VehicleParams::default());
    let out = hold_still(wind, hover, true).output();
    assert!((out.wind - wind).norm() < 0.05, "wind {:?}", out.wind);
    assert!((out.drag - Vector3::new(1.6272, 0.0, 0.0)).norm() < 0.03, "drag {:?}", out.drag);
    assert!((out.touch - Vector3::new(-1.6272, 0.0, 0.0)).norm() < 0.03, "touch {:?}", out.touch);
    assert!((out.v_inf_body - wind).norm() < 0.05);
}

#[test]
fn extra_thrust_against_a_downward_pull_is_touch() {
    let p = VehicleParams::default();
    let wrench = WrenchInput { thrust: p.mass * p.gravity + 2.0, torque: Vector3::zeros() };
    let out = hold_still(Vector3::zeros(), wrench, true).output();
    assert!((out.touch - Vector3::new(0.0, 0.0, -2.0)).norm() < 0.02, "touch {:?}", out.touch);
    assert!(out.drag.norm() < 0.02);
    assert!(out.wind.norm() < 0.05);
}

#[test]
fn without_whiskers_the_filter_cannot_tell_wind_from_touch() {
    // the same balanced forces with no airflow information: the sum is
    // observable, the split is not, so wind stays near its prior
    let wind = Vector3::new(3.6, 0.0, 0.0);
    let hover = WrenchInput::hover(&VehicleParams::default());
    let ukf = hold_still(wind, hover, false);
    let out = ukf.output();
    assert!((out.drag + out.touch).norm() < 0.05, "net {:?}", out.drag + out.touch);
    assert!(out.wind.norm() < 1.0, "wind {:?}", out.wind);
    let (asym, min_eig) = ukf.belief().covariance_health();
    assert!(asym < 1e-9 && min_eig > 0.0);
}

#[test]
fn drag_oracle_matches_the_closed_form() {
    let p = VehicleParams::default();
    for s in [0.5, 1.0, 3.0, 5.5] {
        let f = drag_force(&Vector3::new(0.0, -s, 0.0), &p);
        assert!((f.norm() - (0.20 * s + 0.07 * s * s)).abs() < 1e-12);
        assert!(f.y < 0.0);
    }
}
