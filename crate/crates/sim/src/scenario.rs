//! Scenario description and the stock experiments.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use whisker_core::VehicleParams;

use crate::controller::{Airframe, ControllerGains};
use crate::noise::NoiseSpec;
use crate::trajectory::{FlightPlan, PlanConfig, TrajectorySpec};
use crate::wind::{GustSource, WindField};

/// Interaction force against time, world frame, piecewise linear through
/// the knots and held constant outside them. No knots means no force.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TouchProfile {
    pub knots: Vec<TouchKnot>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TouchKnot {
    pub t: f64,
    pub force: [f64; 3],
}

impl TouchProfile {
    pub fn force_at(&self, t: f64) -> Vector3<f64> {
        let k = &self.knots;
        match k.len() {
            0 => Vector3::zeros(),
            _ if t <= k[0].t => k[0].force.into(),
            n if t >= k[n - 1].t => k[n - 1].force.into(),
            _ => {
                let i = k.partition_point(|p| p.t <= t) - 1;
                let (a, b) = (&k[i], &k[i + 1]);
                let s = (t - a.t) / (b.t - a.t);
                Vector3::from(a.force) * (1.0 - s) + Vector3::from(b.force) * s
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.knots.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err("touch knots must have increasing times".into());
        }
        Ok(())
    }
}

/// Physical constants of the simulated airframe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleSpec {
    pub mass: f64,
    pub inertia: [[f64; 3]; 3],
    pub mu1: f64,
    pub mu2: f64,
    pub gravity: f64,
}

impl Default for VehicleSpec {
    fn default() -> Self {
        Self::from_params(&VehicleParams::default())
    }
}

impl VehicleSpec {
    pub fn from_params(p: &VehicleParams) -> Self {
        let j = p.inertia;
        Self {
            mass: p.mass,
            inertia: std::array::from_fn(|r| std::array::from_fn(|c| j[(r, c)])),
            mu1: p.mu1,
            mu2: p.mu2,
            gravity: p.gravity,
        }
    }

    pub fn to_params(&self) -> VehicleParams {
        VehicleParams {
            mass: self.mass,
            inertia: Matrix3::from_fn(|r, c| self.inertia[r][c]),
            mu1: self.mu1,
            mu2: self.mu2,
            gravity: self.gravity,
        }
    }
}

/// A labelled time interval of interest, e.g. one part of a staged experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: String,
    pub start: f64,
    pub end: f64,
}

fn one() -> f64 {
    1.0
}

fn default_bound() -> f64 {
    25.0
}

fn default_field() -> f64 {
    400.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub wind: WindField,
    #[serde(default)]
    pub touch: TouchProfile,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub vehicle: VehicleSpec,
    #[serde(default)]
    pub controller: ControllerGains,
    #[serde(default)]
    pub airframe: Airframe,
    /// Produced thrust = `thrust_scale` × commanded thrust.
    #[serde(default = "one")]
    pub thrust_scale: f64,
    /// On-axis magnetic field at each whisker, arbitrary field units.
    #[serde(default = "default_field")]
    pub field_strength: f64,
    /// Stop early; the full flight plan otherwise.
    #[serde(default)]
    pub duration: Option<f64>,
    /// Distance from home beyond which the run is declared diverged, m.
    #[serde(default = "default_bound")]
    pub divergence_bound: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub annotations: Vec<Annotation>,
}

impl Scenario {
    pub fn new(name: &str, trajectory: TrajectorySpec) -> Self {
        Self {
            name: name.into(),
            trajectory,
            plan: PlanConfig::default(),
            wind: WindField::calm(),
            touch: TouchProfile::default(),
            noise: NoiseSpec::default(),
            vehicle: VehicleSpec::default(),
            controller: ControllerGains::default(),
            airframe: Airframe::default(),
            thrust_scale: 1.0,
            field_strength: default_field(),
            duration: None,
            divergence_bound: default_bound(),
            seed: 0,
            annotations: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn flight_plan(&self) -> Result<FlightPlan, String> {
        FlightPlan::new(&self.trajectory, &self.plan)
    }

    /// Simulated time span.
    pub fn total_duration(&self) -> Result<f64, String> {
        let full = self.flight_plan()?.duration();
        Ok(self.duration.map_or(full, |d| d.min(full)))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.trajectory.validate()?;
        self.wind.validate()?;
        self.touch.validate()?;
        self.noise.validate()?;
        self.vehicle.to_params().validate().map_err(|e| e.to_string())?;
        if let Some(d) = self.duration {
            if !(d > 0.0) {
                return Err("duration must be positive".into());
            }
        }
        if !(self.thrust_scale > 0.0) || !(self.field_strength > 0.0) || !(self.divergence_bound > 0.0) {
            return Err("thrust scale, field strength and divergence bound must be positive".into());
        }
        Ok(())
    }

    /// Names accepted by [`Scenario::preset`].
    pub const PRESETS: [&'static str; 7] =
        ["hover", "circle", "circle_fast", "line_gust", "joystick", "four_phase", "four_phase_thrust_error"];

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        let s = match name {
            "hover" => Self::hover(),
            "circle" => Self::circle(&[1.0, 2.0, 3.0, 4.0, 5.0]),
            "circle_fast" => Self::circle(&[3.0]),
            "line_gust" => Self::line_gust(),
            "joystick" => Self::joystick(seed),
            "four_phase" => Self::four_phase(1.0),
            "four_phase_thrust_error" => Self::four_phase(0.85),
            _ => return None,
        };
        Some(s.with_seed(seed))
    }

    pub fn hover() -> Self {
        Self::new("hover", TrajectorySpec::Hover { position: [0.0, 0.0, 1.5], duration: 20.0, yaw: 0.0 })
    }

    /// Level circle of radius 3 m, each speed held for 12 s.
    pub fn circle(speeds: &[f64]) -> Self {
        Self::new(
            "circle",
            TrajectorySpec::Circle { center: [0.0, 0.0, 1.5], radius: 3.0, speeds: speeds.to_vec(), dwell: 12.0, ramp: 3.0 },
        )
    }

    /// Slow straight pass through the cone of one blower aimed across the path.
    pub fn line_gust() -> Self {
        let mut s = Self::new(
            "line_gust",
            TrajectorySpec::Line { waypoints: vec![[-4.0, 0.0, 1.5], [4.0, 0.0, 1.5]], max_speed: 0.5, ramp: 2.0, yaw: 0.0 },
        );
        s.wind.gusts.push(GustSource::aimed(Vector3::new(0.0, -4.0, 1.5), Vector3::new(0.0, 0.0, 1.5), 0.35, 3.6));
        s
    }

    /// Two minutes of pilot-like flight up to 4 m/s.
    pub fn joystick(seed: u64) -> Self {
        Self::new("joystick", TrajectorySpec::Joystick { center: [0.0, 0.0, 1.5], max_speed: 4.0, duration: 120.0, seed })
    }

    /// Length of each part of the staged hover experiment, s.
    pub const STAGE: f64 = 15.0;

    /// Hover in four parts: undisturbed, wind only, wind while a pull ramps
    /// from 0 to 4 N, then the 4 N pull alone. Three blowers side by side
    /// give 3.6 m/s at the hover point.
    pub fn four_phase(thrust_scale: f64) -> Self {
        let hover = Vector3::new(0.0, 0.0, 1.5);
        let mut s = Self::new(
            if thrust_scale == 1.0 { "four_phase" } else { "four_phase_thrust_error" },
            TrajectorySpec::Hover { position: hover.into(), duration: 4.0 * Self::STAGE + 3.0, yaw: 0.0 },
        );
        s.thrust_scale = thrust_scale;
        let (t0, _) = s.flight_plan().expect("preset plan").execute_window();
        let stage = |k: f64| t0 + k * Self::STAGE;

        let (spacing, distance, half_angle) = (0.3f64, 3.0f64, 0.5f64);
        let side = (std::f64::consts::FRAC_PI_2 * (spacing / distance).atan() / half_angle).cos();
        let speed = 3.6 / (1.0 + 2.0 * side);
        for dx in [-spacing, 0.0, spacing] {
            let origin = Vector3::new(dx, -distance, hover.z);
            let mut g = GustSource::aimed(origin, origin + Vector3::y(), half_angle, speed);
            g.schedule = vec![[stage(1.0), stage(3.0)]];
            g.ramp = 1.0;
            s.wind.gusts.push(g);
        }

        let pull = [-4.0, 0.0, 0.0];
        s.touch.knots = vec![
            TouchKnot { t: stage(2.0), force: [0.0; 3] },
            TouchKnot { t: stage(3.0), force: pull },
            TouchKnot { t: stage(4.0), force: pull },
            TouchKnot { t: stage(4.0) + 1.0, force: [0.0; 3] },
        ];
        s.annotations = ["no_force", "wind_only", "wind_pull", "pull_only"]
            .iter()
            .enumerate()
            .map(|(k, l)| Annotation { label: (*l).into(), start: stage(k as f64), end: stage(k as f64 + 1.0) })
            .collect();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in Scenario::PRESETS {
            let s = Scenario::preset(name, 3).unwrap();
            s.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.seed, 3);
        }
        assert!(Scenario::preset("nope", 0).is_none());
    }

    #[test]
    fn touch_profile_interpolates_and_holds() {
        let p = TouchProfile {
            knots: vec![TouchKnot { t: 1.0, force: [0.0; 3] }, TouchKnot { t: 3.0, force: [4.0, 0.0, -2.0] }],
        };
        assert_eq!(p.force_at(0.0), Vector3::zeros());
        assert_eq!(p.force_at(2.0), Vector3::new(2.0, 0.0, -1.0));
        assert_eq!(p.force_at(9.0), Vector3::new(4.0, 0.0, -2.0));
        assert_eq!(TouchProfile::default().force_at(1.0), Vector3::zeros());
    }

    #[test]
    fn four_phase_wind_is_3_6_at_the_hover_point() {
        let s = Scenario::four_phase(1.0);
        let mid = |label: &str| {
            let a = s.annotations.iter().find(|a| a.label == label).unwrap();
            0.5 * (a.start + a.end)
        };
        let p = Vector3::new(0.0, 0.0, 1.5);
        assert!((s.wind.wind_at(&p, mid("wind_only")).norm() - 3.6).abs() < 1e-12);
        assert_eq!(s.wind.wind_at(&p, mid("no_force")), Vector3::zeros());
        assert_eq!(s.wind.wind_at(&p, mid("pull_only")), Vector3::zeros());
        assert_eq!(s.touch.force_at(mid("wind_only")), Vector3::zeros());
        assert!((s.touch.force_at(mid("wind_pull")).norm() - 2.0).abs() < 1e-12);
        assert!((s.touch.force_at(mid("pull_only")).norm() - 4.0).abs() < 1e-12);
    }
}
