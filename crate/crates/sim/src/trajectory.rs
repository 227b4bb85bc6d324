//! Setpoint generation through the flight state machine: idle on the
//! ground, take-off, transfer to the start of the trajectory, execution,
//! landing. Setpoints are continuous in position and velocity everywhere.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlightPhase {
    Idle,
    Takeoff,
    Transfer,
    Execute,
    Land,
}

impl FlightPhase {
    pub const ALL: [FlightPhase; 5] = [Self::Idle, Self::Takeoff, Self::Transfer, Self::Execute, Self::Land];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Setpoint {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub phase: FlightPhase,
}

fn default_ramp() -> f64 {
    2.0
}

/// What the vehicle does during the execution phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrajectorySpec {
    /// Station keeping at `position`.
    Hover {
        position: [f64; 3],
        duration: f64,
        #[serde(default)]
        yaw: f64,
    },
    /// Horizontal circle flown at each speed in turn for `dwell` seconds,
    /// with smooth speed changes of `ramp` seconds in between.
    Circle {
        center: [f64; 3],
        radius: f64,
        speeds: Vec<f64>,
        dwell: f64,
        #[serde(default = "default_ramp")]
        ramp: f64,
    },
    /// Straight legs through the waypoints, stopping at each one.
    Line {
        waypoints: Vec<[f64; 3]>,
        max_speed: f64,
        #[serde(default = "default_ramp")]
        ramp: f64,
        #[serde(default)]
        yaw: f64,
    },
    /// Pilot-like free flight: a seeded sum of sinusoids in position and
    /// yaw, scaled so the peak speed equals `max_speed`.
    Joystick {
        center: [f64; 3],
        max_speed: f64,
        duration: f64,
        seed: u64,
    },
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Self::Hover { position, duration, yaw } => {
                if !(*duration > 0.0) || !finite(position) || !yaw.is_finite() {
                    return Err("hover needs a positive duration and a finite position".into());
                }
            }
            Self::Circle { center, radius, speeds, dwell, ramp } => {
                if !(*radius > 0.0) || speeds.is_empty() || !finite(center) {
                    return Err("circle needs a positive radius and at least one speed".into());
                }
                if speeds.iter().any(|s| !(*s >= 0.0)) || !(*dwell >= 0.0) || !(*ramp > 0.0) {
                    return Err("circle speeds and dwell must be non-negative, ramp positive".into());
                }
            }
            Self::Line { waypoints, max_speed, ramp, yaw } => {
                if waypoints.len() < 2 || !waypoints.iter().all(|w| finite(w)) {
                    return Err("line needs at least two finite waypoints".into());
                }
                if !(*max_speed > 0.0) || !(*ramp > 0.0) || !yaw.is_finite() {
                    return Err("line needs a positive speed and ramp".into());
                }
            }
            Self::Joystick { center, max_speed, duration, .. } => {
                if !(*max_speed >= 0.0) || !(*duration > 0.0) || !finite(center) {
                    return Err("joystick needs a non-negative speed and positive duration".into());
                }
            }
        }
        Ok(())
    }
}

/// Timing of the state machine around the execution phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub home: [f64; 3],
    /// Time spent at rest on the ground before take-off, s.
    pub idle: f64,
    pub takeoff_height: f64,
    pub takeoff_time: f64,
    /// Average speed of the transfer leg, m/s.
    pub transfer_speed: f64,
    pub land_time: f64,
    /// Rest on the ground after landing, s.
    pub settle: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { home: [0.0, 0.0, 0.0], idle: 1.0, takeoff_height: 1.5, takeoff_time: 3.0, transfer_speed: 1.0, land_time: 3.0, settle: 0.5 }
    }
}

/// Minimum-jerk blend `10τ³ − 15τ⁴ + 6τ⁵` and its first two derivatives.
fn quintic(tau: f64) -> (f64, f64, f64) {
    let t = tau.clamp(0.0, 1.0);
    let (t2, t3) = (t * t, t * t * t);
    (
        t3 * (10.0 - 15.0 * t + 6.0 * t2),
        30.0 * t2 * (1.0 - t) * (1.0 - t),
        60.0 * t * (1.0 - t) * (1.0 - 2.0 * t),
    )
}

/// One speed transition `v0 → v1` with a `3τ² − 2τ³` shape.
#[derive(Clone, Copy, Debug, PartialEq)]
struct SpeedPiece {
    t0: f64,
    duration: f64,
    v0: f64,
    v1: f64,
    s0: f64,
}

impl SpeedPiece {
    fn distance(&self) -> f64 {
        // ∫₀¹ (3τ² − 2τ³) dτ = ½
        self.duration * (self.v0 + 0.5 * (self.v1 - self.v0))
    }

    /// Arc length, speed and tangential acceleration.
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let big_t = self.duration;
        if big_t <= 0.0 {
            return (self.s0, self.v1, 0.0);
        }
        let tau = ((t - self.t0) / big_t).clamp(0.0, 1.0);
        let dv = self.v1 - self.v0;
        let s = self.s0 + big_t * (self.v0 * tau + dv * (tau.powi(3) - 0.5 * tau.powi(4)));
        let v = self.v0 + dv * (3.0 * tau * tau - 2.0 * tau.powi(3));
        let a = dv * 6.0 * tau * (1.0 - tau) / big_t;
        (s, v, a)
    }
}

/// Arc length along a path as a smooth function of time.
#[derive(Clone, Debug, PartialEq)]
struct ArcProfile {
    pieces: Vec<SpeedPiece>,
}

impl ArcProfile {
    /// Starts and ends at rest, visiting each `(speed, hold)` in order.
    fn through(stages: &[(f64, f64)], ramp: f64) -> Self {
        let mut pieces = Vec::new();
        let (mut t, mut s, mut v) = (0.0, 0.0, 0.0);
        let mut push = |duration: f64, v1: f64, t: &mut f64, s: &mut f64, v: &mut f64| {
            let p = SpeedPiece { t0: *t, duration, v0: *v, v1, s0: *s };
            *t += duration;
            *s += p.distance();
            *v = v1;
            pieces.push(p);
        };
        for &(speed, hold) in stages {
            push(ramp, speed, &mut t, &mut s, &mut v);
            push(hold, speed, &mut t, &mut s, &mut v);
        }
        push(ramp, 0.0, &mut t, &mut s, &mut v);
        Self { pieces }
    }

    /// Rest-to-rest over `length` with peak speed at most `max_speed`.
    fn rest_to_rest(length: f64, max_speed: f64, ramp: f64) -> Self {
        if length <= 0.0 {
            return Self { pieces: vec![SpeedPiece { t0: 0.0, duration: 0.0, v0: 0.0, v1: 0.0, s0: 0.0 }] };
        }
        let v = max_speed.min(length / ramp);
        let hold = (length - v * ramp) / v;
        Self::through(&[(v, hold.max(0.0))], ramp)
    }

    fn duration(&self) -> f64 {
        self.pieces.last().map(|p| p.t0 + p.duration).unwrap_or(0.0)
    }

    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let i = self.pieces.partition_point(|p| p.t0 + p.duration < t).min(self.pieces.len() - 1);
        self.pieces[i].eval(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Sinusoid {
    amplitude: f64,
    omega: f64,
    phase: f64,
}

impl Sinusoid {
    fn eval(terms: &[Sinusoid], t: f64) -> (f64, f64, f64) {
        terms.iter().fold((0.0, 0.0, 0.0), |(p, v, a), s| {
            let arg = s.omega * t + s.phase;
            (
                p + s.amplitude * (arg.sin() - s.phase.sin()),
                v + s.amplitude * s.omega * arg.cos(),
                a - s.amplitude * s.omega * s.omega * arg.sin(),
            )
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
struct JoystickPath {
    center: Vector3<f64>,
    axes: [Vec<Sinusoid>; 3],
    yaw: Vec<Sinusoid>,
    duration: f64,
    envelope: f64,
}

impl JoystickPath {
    const ENVELOPE: f64 = 3.0;
    const HALF_ARENA: f64 = 4.0;

    fn new(center: Vector3<f64>, max_speed: f64, duration: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |n: usize, f_lo: f64, f_hi: f64, weight: f64, rng: &mut ChaCha8Rng| -> Vec<Sinusoid> {
            (0..n)
                .map(|_| Sinusoid {
                    amplitude: weight * rng.random_range(0.5..1.0),
                    omega: std::f64::consts::TAU * rng.random_range(f_lo..f_hi),
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                })
                .collect()
        };
        let x = draw(3, 0.08, 0.4, 1.0, &mut rng);
        let y = draw(3, 0.08, 0.4, 1.0, &mut rng);
        let z = draw(2, 0.1, 0.3, 0.12, &mut rng);
        let yaw = draw(2, 0.03, 0.1, 0.8, &mut rng);
        let envelope = Self::ENVELOPE.min(duration / 2.0);
        let mut path = Self { center, axes: [x, y, z], yaw, duration, envelope };

        // normalize: peak speed hits `max_speed` unless the arena is too small
        let (mut peak_speed, mut peak_excursion) = (0.0f64, 0.0f64);
        let steps = (duration * 100.0).ceil() as usize;
        for k in 0..=steps {
            let (d, v, _) = path.displacement(k as f64 * duration / steps as f64);
            peak_speed = peak_speed.max(v.norm());
            peak_excursion = peak_excursion.max(d.x.abs()).max(d.y.abs());
        }
        let scale = if peak_speed > 0.0 { (max_speed / peak_speed).min(Self::HALF_ARENA / peak_excursion.max(1e-9)) } else { 0.0 };
        for axis in path.axes.iter_mut() {
            axis.iter_mut().for_each(|s| s.amplitude *= scale);
        }
        path
    }

    /// Envelope rising from 0 to 1 over the first seconds and back at the end.
    fn window(&self, t: f64) -> (f64, f64, f64) {
        let e = self.envelope;
        if t < e {
            let (s, ds, dds) = quintic(t / e);
            (s, ds / e, dds / (e * e))
        } else if t > self.duration - e {
            let (s, ds, dds) = quintic((self.duration - t) / e);
            (s, -ds / e, dds / (e * e))
        } else {
            (1.0, 0.0, 0.0)
        }
    }

    fn displacement(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let (w, dw, ddw) = self.window(t);
        let mut p = Vector3::zeros();
        let mut v = Vector3::zeros();
        let mut a = Vector3::zeros();
        for (k, terms) in self.axes.iter().enumerate() {
            let (d, dd, ddd) = Sinusoid::eval(terms, t);
            p[k] = w * d;
            v[k] = dw * d + w * dd;
            a[k] = ddw * d + 2.0 * dw * dd + w * ddd;
        }
        (p, v, a)
    }

    fn yaw(&self, t: f64) -> (f64, f64) {
        let (w, dw, _) = self.window(t);
        let (y, dy, _) = Sinusoid::eval(&self.yaw, t);
        (w * y, dw * y + w * dy)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Motion {
    Hold { position: Vector3<f64>, yaw: f64 },
    Blend { from: Vector3<f64>, to: Vector3<f64>, yaw_from: f64, yaw_to: f64 },
    Circle { center: Vector3<f64>, radius: f64, profile: ArcProfile },
    Polyline { legs: Vec<(f64, Vector3<f64>, Vector3<f64>, ArcProfile)>, yaw: f64 },
    Joystick(JoystickPath),
}

#[derive(Clone, Debug, PartialEq)]
struct Segment {
    t0: f64,
    duration: f64,
    phase: FlightPhase,
    motion: Motion,
}

impl Segment {
    fn eval(&self, t: f64) -> Setpoint {
        let local = (t - self.t0).clamp(0.0, self.duration);
        let (position, velocity, acceleration, yaw, yaw_rate) = match &self.motion {
            Motion::Hold { position, yaw } => (*position, Vector3::zeros(), Vector3::zeros(), *yaw, 0.0),
            Motion::Blend { from, to, yaw_from, yaw_to } => {
                let big_t = self.duration.max(1e-9);
                let (s, ds, dds) = quintic(local / big_t);
                let d = to - from;
                let dyaw = yaw_to - yaw_from;
                (from + d * s, d * (ds / big_t), d * (dds / (big_t * big_t)), yaw_from + dyaw * s, dyaw * ds / big_t)
            }
            Motion::Circle { center, radius, profile } => {
                let (s, v, a) = profile.eval(local);
                let phi = s / radius;
                let (sn, cs) = phi.sin_cos();
                let radial = Vector3::new(cs, sn, 0.0);
                let tangent = Vector3::new(-sn, cs, 0.0);
                (center + radial * *radius, tangent * v, tangent * a - radial * (v * v / radius), 0.0, 0.0)
            }
            Motion::Polyline { legs, yaw } => {
                let i = legs.partition_point(|l| l.0 + l.3.duration() < local).min(legs.len() - 1);
                let (start, a, b, profile) = &legs[i];
                let dir = (b - a).try_normalize(1e-12).unwrap_or_else(Vector3::zeros);
                let (s, v, acc) = profile.eval(local - start);
                (a + dir * s, dir * v, dir * acc, *yaw, 0.0)
            }
            Motion::Joystick(path) => {
                let (d, v, a) = path.displacement(local);
                let (yaw, yaw_rate) = path.yaw(local);
                (path.center + d, v, a, yaw, yaw_rate)
            }
        };
        Setpoint { position, velocity, acceleration, yaw, yaw_rate, phase: self.phase }
    }

    fn end(&self) -> Setpoint {
        self.eval(self.t0 + self.duration)
    }
}

/// The complete time-parameterized flight.
#[derive(Clone, Debug, PartialEq)]
pub struct FlightPlan {
    segments: Vec<Segment>,
}

impl FlightPlan {
    pub fn new(spec: &TrajectorySpec, config: &PlanConfig) -> Result<Self, String> {
        spec.validate()?;
        let execute = execution_motion(spec);
        let exec_duration = match &execute {
            Motion::Circle { profile, .. } => profile.duration(),
            Motion::Polyline { legs, .. } => legs.last().map(|l| l.0 + l.3.duration()).unwrap_or(0.0),
            Motion::Joystick(p) => p.duration,
            _ => match spec {
                TrajectorySpec::Hover { duration, .. } => *duration,
                _ => unreachable!("hover is the only held execution"),
            },
        };

        let home = Vector3::from(config.home);
        let hover = home + Vector3::z() * config.takeoff_height;
        let mut segments = Vec::new();
        let mut t = 0.0;
        let mut push = |segments: &mut Vec<Segment>, duration: f64, phase, motion| {
            segments.push(Segment { t0: t, duration, phase, motion });
            t += duration;
        };
        push(&mut segments, config.idle, FlightPhase::Idle, Motion::Hold { position: home, yaw: 0.0 });
        push(&mut segments, config.takeoff_time, FlightPhase::Takeoff, Motion::Blend { from: home, to: hover, yaw_from: 0.0, yaw_to: 0.0 });

        let exec_probe = Segment { t0: 0.0, duration: exec_duration, phase: FlightPhase::Execute, motion: execute.clone() };
        let start = exec_probe.eval(0.0);
        // peak speed of the quintic blend is 1.875 × its average
        let dist = (start.position - hover).norm();
        let transfer = (1.875 * dist / config.transfer_speed).max(1.875 * start.yaw.abs() / 0.5).max(2.0);
        push(
            &mut segments,
            transfer,
            FlightPhase::Transfer,
            Motion::Blend { from: hover, to: start.position, yaw_from: 0.0, yaw_to: start.yaw },
        );
        push(&mut segments, exec_duration, FlightPhase::Execute, execute);

        let end = segments.last().expect("execution segment").end();
        let touchdown = Vector3::new(end.position.x, end.position.y, home.z);
        push(
            &mut segments,
            config.land_time,
            FlightPhase::Land,
            Motion::Blend { from: end.position, to: touchdown, yaw_from: end.yaw, yaw_to: end.yaw },
        );
        push(&mut segments, config.settle, FlightPhase::Land, Motion::Hold { position: touchdown, yaw: end.yaw });
        Ok(Self { segments })
    }

    pub fn duration(&self) -> f64 {
        self.segments.last().map(|s| s.t0 + s.duration).unwrap_or(0.0)
    }

    /// Start and end time of the execution phase.
    pub fn execute_window(&self) -> (f64, f64) {
        let s = self.segments.iter().find(|s| s.phase == FlightPhase::Execute).expect("plan has an execution phase");
        (s.t0, s.t0 + s.duration)
    }

    pub fn setpoint(&self, t: f64) -> Setpoint {
        let t = t.clamp(0.0, self.duration());
        let i = self.segments.partition_point(|s| s.t0 + s.duration <= t).min(self.segments.len() - 1);
        self.segments[i].eval(t)
    }
}

fn execution_motion(spec: &TrajectorySpec) -> Motion {
    match spec {
        TrajectorySpec::Hover { position, yaw, .. } => Motion::Hold { position: Vector3::from(*position), yaw: *yaw },
        TrajectorySpec::Circle { center, radius, speeds, dwell, ramp } => {
            let stages: Vec<(f64, f64)> = speeds.iter().map(|&s| (s, *dwell)).collect();
            Motion::Circle { center: Vector3::from(*center), radius: *radius, profile: ArcProfile::through(&stages, *ramp) }
        }
        TrajectorySpec::Line { waypoints, max_speed, ramp, yaw } => {
            let mut legs = Vec::new();
            let mut t = 0.0;
            for w in waypoints.windows(2) {
                let (a, b) = (Vector3::from(w[0]), Vector3::from(w[1]));
                let profile = ArcProfile::rest_to_rest((b - a).norm(), *max_speed, *ramp);
                let d = profile.duration();
                legs.push((t, a, b, profile));
                t += d;
            }
            Motion::Polyline { legs, yaw: *yaw }
        }
        TrajectorySpec::Joystick { center, max_speed, duration, seed } => {
            Motion::Joystick(JoystickPath::new(Vector3::from(*center), *max_speed, *duration, *seed))
        }
    }
}
