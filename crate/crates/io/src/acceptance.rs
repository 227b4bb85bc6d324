//! The acceptance suite: closed-loop simulator experiments and analytic
//! oracles, each reduced to a pass/fail verdict with a one-line summary.

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use whisker_core::lstm::{backward, gradient_relative_error, numerical_gradient, train, AdamConfig, Architecture, LstmParams, TrainConfig};
use whisker_core::sensor::{predict_rig, MagneticField};
use whisker_core::ukf::{predict, update_airflow, update_odometry, InitialStd};
use whisker_core::ut::{SigmaPoints, UtParams};
use whisker_core::{BeliefState, OdometryMeasurement, OdometryNoise, ProcessNoise, SensorRig, VehicleParams, VehicleState, WrenchInput};
use whisker_sim::{run_scenario, FlightLog, FlightPhase, NoiseSpec, Scenario};

use crate::driver::{driver_step, recovery_samples, LowPassState};
use crate::error::Result;
use crate::identify::{identify_drag, DragData};
use crate::params::Params;
use crate::pipeline::{estimate, Airflow, EstimateRow, EstimatorConfig};
use crate::replay::{replay, PhaseMetrics};

#[derive(Clone, Debug, PartialEq)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

/// Names of the criteria, indexed by `id − 1`.
pub const NAMES: [&str; 10] = [
    "relative airflow (UKF and LSTM)",
    "drag identification",
    "drag at 3 m/s",
    "wind gust detection",
    "drag/touch disambiguation",
    "filter numerics",
    "unscented transform exactness",
    "LSTM gradients",
    "Adam reference",
    "driver recovery",
];

/// Runs one criterion; an error counts as a failure and becomes the detail.
pub fn run(id: u8) -> Criterion {
    let name = NAMES.get(usize::from(id).wrapping_sub(1)).copied().unwrap_or("unknown");
    let result = match id {
        1 => relative_airflow(),
        2 => drag_identification(),
        3 => drag_at_three(),
        4 => gust_detection(),
        5 => disambiguation(),
        6 => filter_numerics(),
        7 => ut_exactness(),
        8 => lstm_gradients(),
        9 => adam_reference(),
        10 => driver_recovery(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (passed, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    Criterion { id, name, passed, detail }
}

pub fn run_all() -> Vec<Criterion> {
    (1..=NAMES.len() as u8).map(run).collect()
}

type Verdict = Result<(bool, String)>;

/// Estimator parameters matching what the simulator put in the log.
pub fn params_from_log(log: &FlightLog) -> Params {
    Params {
        vehicle: log.meta.vehicle,
        rig: log.meta.rig.clone(),
        odometry_noise: log.meta.odometry_noise,
        angle_std: log.meta.angle_noise,
        ..Params::default()
    }
}

fn model_estimate(log: &FlightLog) -> Result<Vec<EstimateRow>> {
    estimate(log, &params_from_log(log), &EstimatorConfig::default(), Airflow::Model)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fmt3(v: &Vector3<f64>) -> String {
    format!("{:.3}/{:.3}/{:.3}", v.x, v.y, v.z)
}

/// Recordings the network learns from: the circle at every speed plus two
/// joystick flights.
pub const LSTM_TRAINING_JOYSTICK_SEEDS: [u64; 2] = [1, 2];
pub const LSTM_TRAINING_CIRCLE_SEED: u64 = 21;
/// Joystick flight held out for scoring.
pub const HELD_OUT_JOYSTICK_SEED: u64 = 11;

const AIRFLOW_CEILING: [f64; 3] = [0.45, 0.35, 0.55];
const RUNTIME_LIMIT: f64 = 300.0;

fn relative_airflow() -> Verdict {
    let clock = Instant::now();
    let mut logs = vec![run_scenario(&Scenario::circle(&[1.0, 2.0, 3.0, 4.0, 5.0]).with_seed(LSTM_TRAINING_CIRCLE_SEED))?];
    for seed in LSTM_TRAINING_JOYSTICK_SEEDS {
        logs.push(run_scenario(&Scenario::joystick(seed))?);
    }
    let params = params_from_log(&logs[0]);
    let data = crate::dataset::dataset(logs.iter(), &params)?;
    let model = train(&data, &TrainConfig::default())?.model;

    let held_out = run_scenario(&Scenario::joystick(HELD_OUT_JOYSTICK_SEED))?;
    let config = EstimatorConfig::default();
    let ukf = replay(&held_out, &estimate(&held_out, &params, &config, Airflow::Model)?)?.airflow_rms;
    let lstm = replay(&held_out, &estimate(&held_out, &params, &config, Airflow::Lstm(&model))?)?.airflow_rms;
    let elapsed = clock.elapsed().as_secs_f64();

    let ukf_ok = (0..3).all(|k| ukf[k] <= AIRFLOW_CEILING[k]);
    let lstm_ok = (0..3).all(|k| lstm[k] <= ukf[k]);
    let time_ok = elapsed <= RUNTIME_LIMIT;
    Ok((
        ukf_ok && lstm_ok && time_ok,
        format!(
            "UKF RMS {} m/s (ceilings 0.45/0.35/0.55), LSTM RMS {} m/s (must not exceed UKF), {elapsed:.0} s (limit {RUNTIME_LIMIT:.0} s)",
            fmt3(&ukf),
            fmt3(&lstm)
        ),
    ))
}

const MU1: f64 = 0.20;
const MU2: f64 = 0.07;

fn drag_identification() -> Verdict {
    let speeds = [1.0, 2.0, 3.0, 4.0, 5.0];
    let clean = run_scenario(&Scenario::circle(&speeds).with_noise(NoiseSpec::none()))?;
    let fit = identify_drag([&clean], DragData::Truth)?;
    let clean_err = (fit.mu1 - MU1).abs().max((fit.mu2 - MU2).abs());
    let mut worst: f64 = 0.0;
    for seed in 100..105 {
        let log = run_scenario(&Scenario::circle(&speeds).with_seed(seed))?;
        let fit = identify_drag([&log], DragData::Odometry)?;
        worst = worst.max(((fit.mu1 - MU1) / MU1).abs()).max(((fit.mu2 - MU2) / MU2).abs());
    }
    Ok((
        clean_err < 1e-6 && worst < 0.10,
        format!("noiseless error {clean_err:.1e} (limit 1e-6), worst noisy relative error {:.1}% over 5 runs (limit 10%)", worst * 100.0),
    ))
}

fn drag_at_three() -> Verdict {
    let s = Scenario::circle(&[3.0]);
    let log = run_scenario(&s)?;
    let rows = model_estimate(&log)?;
    let (start, _) = s.flight_plan().map_err(crate::IoError::Invalid)?.execute_window();
    // after the speed ramp, before the slow-down
    let in_window = |t: f64| t >= start + 6.0 && t <= start + 15.0;
    let estimated: Vec<f64> = rows.iter().filter(|r| in_window(r.t)).map(|r| r.drag.norm()).collect();
    let truth: Vec<f64> = log.truth.iter().filter(|s| in_window(s.t)).map(|s| s.drag.norm()).collect();
    let speed: Vec<f64> = log.truth.iter().filter(|s| in_window(s.t)).map(|s| s.velocity.norm()).collect();
    let m = mean(&estimated);
    Ok((
        (m - 1.23).abs() <= 0.15,
        format!("mean estimated drag {m:.3} N (1.23 ± 0.15), true {:.3} N at {:.2} m/s", mean(&truth), mean(&speed)),
    ))
}

fn gust_detection() -> Verdict {
    let s = Scenario::line_gust();
    let log = run_scenario(&s)?;
    let rows = model_estimate(&log)?;
    let (mut truth_in, mut est_in, mut est_out) = (Vec::new(), Vec::new(), Vec::new());
    for r in &rows {
        let Some(t) = log.truth_at(r.t) else { continue };
        if t.phase != FlightPhase::Execute {
            continue;
        }
        if s.wind.gusts.iter().any(|g| g.contains(&t.position)) {
            truth_in.push(t.wind.norm());
            est_in.push(r.wind.norm());
        } else {
            est_out.push(r.wind.norm());
        }
    }
    if truth_in.is_empty() || est_out.is_empty() {
        return Ok((false, "the flight never entered or never left the cone".into()));
    }
    let (ti, ei, eo) = (mean(&truth_in), mean(&est_in), mean(&est_out));
    let peak_out = est_out.iter().copied().fold(0.0, f64::max);
    Ok((
        ((ei - ti) / ti).abs() <= 0.15 && eo < 0.3,
        format!(
            "in cone {ei:.3} vs true {ti:.3} m/s ({:+.1}%, limit 15%), outside mean {eo:.3} m/s (limit 0.3, peak {peak_out:.3})",
            (ei / ti - 1.0) * 100.0
        ),
    ))
}

fn phase<'a>(phases: &'a [PhaseMetrics], label: &str) -> Result<&'a PhaseMetrics> {
    phases.iter().find(|p| p.label == label).ok_or_else(|| crate::IoError::Invalid(format!("log has no `{label}` phase")))
}

const PULL: f64 = 4.0;

fn disambiguation() -> Verdict {
    let log = run_scenario(&Scenario::four_phase(1.0))?;
    let report = replay(&log, &model_estimate(&log)?)?;
    let wind = phase(&report.phases, "wind_only")?;
    let pull = phase(&report.phases, "pull_only")?;
    let wind_ok = wind.touch_estimate < 0.3 && ((wind.drag_estimate - wind.drag_true) / wind.drag_true).abs() <= 0.15;
    let pull_ok = pull.drag_estimate < 0.3 && ((pull.touch_estimate - PULL) / PULL).abs() <= 0.10;

    let log = run_scenario(&Scenario::four_phase(0.85))?;
    let report = replay(&log, &model_estimate(&log)?)?;
    let biased = phase(&report.phases, "pull_only")?;
    // a thrust shortfall must show up as extra touch force
    let overshoot_ok = biased.touch_estimate > PULL * 1.1;
    Ok((
        wind_ok && pull_ok && overshoot_ok,
        format!(
            "wind only: touch {:.3} N, drag {:.3} vs {:.3} N; pull only: drag {:.3} N, touch {:.3} vs {PULL} N; thrust error 0.85: touch {:.3} N",
            wind.touch_estimate, wind.drag_estimate, wind.drag_true, pull.drag_estimate, pull.touch_estimate, biased.touch_estimate
        ),
    ))
}

const NUMERIC_STEPS: usize = 10_000;
const HEALTH_TOL: f64 = 1e-9;

fn filter_numerics() -> Verdict {
    let params = VehicleParams::default();
    let rig = SensorRig::default_hexarotor();
    let ut = UtParams::default();
    let noise = ProcessNoise::default();
    let odometry = OdometryNoise::default().covariance();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let start = VehicleState::at_rest(Vector3::new(0.0, 0.0, 1.5));
    let mut b = BeliefState::new(&start, Vector3::zeros(), Vector3::zeros(), &InitialStd::default(), 0.0);
    let (mut violations, mut worst_asym, mut worst_eig, mut worst_norm) = (0usize, 0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..NUMERIC_STEPS {
        b = match rng.random_range(0..3) {
            0 => {
                let u = WrenchInput {
                    thrust: rng.random_range(5.0..25.0),
                    torque: Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1)),
                };
                predict(&b, &u, rng.random_range(1e-3..2e-2), &noise, &params, &ut)?
            }
            1 => {
                let jitter = |rng: &mut ChaCha8Rng, s: f64| Vector3::from_fn(|_, _| rng.random_range(-s..s));
                let z = OdometryMeasurement {
                    position: b.position() + jitter(&mut rng, 0.05),
                    attitude: b.attitude() * nalgebra::UnitQuaternion::from_scaled_axis(jitter(&mut rng, 0.02)),
                    velocity: b.velocity() + jitter(&mut rng, 0.1),
                    angular_velocity: b.angular_velocity() + jitter(&mut rng, 0.05),
                    covariance: odometry,
                };
                update_odometry(&b, &z, None)?.belief
            }
            _ => {
                let wind = Vector3::from_fn(|_, _| rng.random_range(-4.0..4.0));
                let all: Vec<usize> = (0..rig.len()).collect();
                let z = predict_rig(&rig, &all, &b.attitude(), &wind, &b.velocity(), &b.angular_velocity());
                let angles: Vec<_> = (0..rig.len())
                    .map(|i| {
                        let n = |rng: &mut ChaCha8Rng| rng.random_range(-0.01..0.01);
                        // drop a sensor now and then, as the driver does
                        (rng.random_range(0.0..1.0) > 0.1)
                            .then(|| whisker_core::DeflectionAngles::new(z[2 * i] + n(&mut rng), z[2 * i + 1] + n(&mut rng)))
                    })
                    .collect();
                update_airflow(&b, &angles, 0.005f64.powi(2), &rig, &ut, None)?.belief
            }
        };
        let (asym, min_eig) = b.covariance_health();
        let norm_err = (b.reference.coords.norm() - 1.0).abs();
        worst_asym = worst_asym.max(asym);
        worst_eig = worst_eig.min(min_eig);
        worst_norm = worst_norm.max(norm_err);
        if !(asym < HEALTH_TOL && min_eig > -HEALTH_TOL && norm_err < HEALTH_TOL) {
            violations += 1;
        }
    }
    Ok((
        violations == 0,
        format!(
            "{violations} violations in {NUMERIC_STEPS} steps (max asymmetry {worst_asym:.1e}, min eigenvalue {worst_eig:.1e}, max |‖q‖−1| {worst_norm:.1e})"
        ),
    ))
}

const UT_TOL: f64 = 1e-8;

fn ut_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let n = 1 + k % 18;
        let m = rng.random_range(1..=6);
        let mean = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let cov = &l * l.transpose() + DMatrix::identity(n, n) * 0.05;
        let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-2.0..2.0));
        let c = DVector::from_fn(m, |_, _| rng.random_range(-5.0..5.0));
        let s = SigmaPoints::new(&mean, &cov, &UtParams::default())?;
        let ys: Vec<DVector<f64>> = s.points.iter().map(|x| &a * x + &c).collect();
        let y_mean = s.weighted_mean(&ys);
        let y_cov = s.weighted_cross(&ys, &y_mean, &ys, &y_mean);
        let cross = s.weighted_cross(&s.points, &mean, &ys, &y_mean);
        let errors = [
            (y_mean - (&a * &mean + &c)).abs().max(),
            (y_cov - &a * &cov * a.transpose()).abs().max(),
            (cross - &cov * a.transpose()).abs().max(),
        ];
        worst = errors.iter().copied().fold(worst, f64::max);
    }
    Ok((worst < UT_TOL, format!("worst deviation {worst:.1e} over 100 maps, dimensions 1-18 (limit 1e-8)")))
}

const GRADIENT_TOL: f64 = 1e-4;

fn lstm_gradients() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let arch = Architecture {
            input: rng.random_range(1..=8),
            hidden: rng.random_range(1..=8),
            output: rng.random_range(1..=4),
            layers: rng.random_range(1..=3),
        };
        let mut params = LstmParams::<f64>::init(arch, &mut rng);
        let spread = rng.random_range(0.5..2.0);
        for s in params.slices_mut() {
            s.iter_mut().for_each(|v| *v *= spread);
        }
        let len = rng.random_range(1..=6);
        let mut seq = |dim: usize, scale: f64| -> Vec<DVector<f64>> {
            (0..len).map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-scale..scale))).collect()
        };
        let inputs = seq(arch.input, 1.5);
        let targets = seq(arch.output, 2.0);
        let (_, analytic) = backward(&params, &inputs, &targets)?;
        let numeric = numerical_gradient(&params, &inputs, &targets, 1e-5)?;
        worst = worst.max(gradient_relative_error(&analytic.to_flat(), &numeric));
    }
    Ok((worst < GRADIENT_TOL, format!("worst relative error {worst:.1e} over 20 networks (limit 1e-4)")))
}

fn adam_reference() -> Verdict {
    let cfg = AdamConfig { learning_rate: 0.1, ..AdamConfig::default() };
    // f(x) = (x − 1)², from x = 3
    let f = |x: f64| (x - 1.0) * (x - 1.0);
    let (mut x, mut m, mut v) = ([3.0f64], [0.0], [0.0]);
    let mut first_step = 0.0;
    let mut converged = None;
    for t in 1..=200u64 {
        let before = x[0];
        let grad = [2.0 * (x[0] - 1.0)];
        whisker_core::lstm::adam_update_slice(&mut x, &grad, &mut m, &mut v, t, &cfg);
        if t == 1 {
            first_step = (x[0] - before).abs();
        }
        if converged.is_none() && f(x[0]) < 1e-3 {
            converged = Some(t);
        }
    }
    // bias correction makes the first step lr·|g|/(|g| + ε)
    let expected = cfg.learning_rate * 4.0 / (4.0 + cfg.epsilon);
    let first_ok = (first_step - expected).abs() < 1e-12;
    Ok((
        converged.is_some() && first_ok,
        format!(
            "loss below 1e-3 after {} steps (limit 200), first step {first_step:.12} (lr 0.1)",
            converged.map_or("more than 200".to_string(), |t| t.to_string())
        ),
    ))
}

fn driver_recovery() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (alpha, threshold) = (0.3, 50.0);
    let mut mismatches = Vec::new();
    for _ in 0..50 {
        let height = rng.random_range(threshold * 1.01..threshold * 100.0);
        let direction = rng.random_range(0..3);
        let rest = Vector3::new(0.0, 0.0, 100.0);
        let mut lp = LowPassState::new(rest, alpha, threshold)?;
        let mut raw = rest;
        raw[direction] += if rng.random_bool(0.5) { height } else { -height };
        let mut rejected = 0;
        loop {
            let (accepted, next) = driver_step(&MagneticField(raw), &lp);
            lp = next;
            if accepted.is_some() {
                break;
            }
            rejected += 1;
            if rejected > 10_000 {
                break;
            }
        }
        let expected = recovery_samples(height, threshold, alpha);
        if rejected != expected {
            mismatches.push(format!("step {height:.1}: {rejected} rejections, expected {expected}"));
        }
    }
    Ok((
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "50 random steps: rejection counts match ⌈ln(threshold/step)/ln(1−α)⌉".into()
        } else {
            mismatches.join("; ")
        },
    ))
}
