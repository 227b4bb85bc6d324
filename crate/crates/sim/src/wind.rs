//! Ambient wind plus narrow conical gusts such as those from leaf blowers.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Centerline speed against distance from the source, piecewise linear
/// through `(distance m, speed m/s)` knots and constant beyond the ends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub knots: Vec<[f64; 2]>,
}

impl SpeedProfile {
    pub fn constant(speed: f64) -> Self {
        Self { knots: vec![[0.0, speed]] }
    }

    pub fn speed_at(&self, distance: f64) -> f64 {
        let k = &self.knots;
        match k.len() {
            0 => 0.0,
            _ if distance <= k[0][0] => k[0][1],
            n if distance >= k[n - 1][0] => k[n - 1][1],
            _ => {
                let i = k.partition_point(|p| p[0] <= distance) - 1;
                let (a, b) = (k[i], k[i + 1]);
                a[1] + (b[1] - a[1]) * (distance - a[0]) / (b[0] - a[0])
            }
        }
    }
}

/// A blower: a cone of air leaving `origin` along `direction`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GustSource {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
    /// rad
    pub half_angle: f64,
    pub profile: SpeedProfile,
    /// `[on, off]` intervals in seconds; empty means always on.
    #[serde(default)]
    pub schedule: Vec<[f64; 2]>,
    /// Linear spin-up and spin-down time at each switch, s.
    #[serde(default)]
    pub ramp: f64,
}

impl GustSource {
    fn direction(&self) -> Vector3<f64> {
        Vector3::from(self.direction).normalize()
    }

    /// Aims the cone from `origin` at `target` so that `target` lies on the
    /// centerline at distance `‖target − origin‖`.
    pub fn aimed(origin: Vector3<f64>, target: Vector3<f64>, half_angle: f64, speed: f64) -> Self {
        let d = (target - origin).normalize();
        Self {
            origin: origin.into(),
            direction: d.into(),
            half_angle,
            profile: SpeedProfile::constant(speed),
            schedule: Vec::new(),
            ramp: 0.0,
        }
    }

    /// Fraction of full output at time `t`.
    pub fn activity(&self, t: f64) -> f64 {
        if self.schedule.is_empty() {
            return 1.0;
        }
        self.schedule
            .iter()
            .map(|&[on, off]| {
                if t < on || t > off {
                    0.0
                } else if self.ramp <= 0.0 {
                    1.0
                } else {
                    ((t - on) / self.ramp).min((off - t) / self.ramp).clamp(0.0, 1.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Contribution at `p`: centerline speed scaled by a cosine falloff
    /// that reaches zero at the cone edge.
    pub fn velocity_at(&self, p: &Vector3<f64>, t: f64) -> Vector3<f64> {
        let act = self.activity(t);
        if act == 0.0 {
            return Vector3::zeros();
        }
        let d = self.direction();
        let rel = p - Vector3::from(self.origin);
        let along = rel.dot(&d);
        if along <= 0.0 {
            return Vector3::zeros();
        }
        let off_axis = (rel - d * along).norm().atan2(along);
        if off_axis >= self.half_angle {
            return Vector3::zeros();
        }
        let falloff = (std::f64::consts::FRAC_PI_2 * off_axis / self.half_angle).cos();
        d * (act * falloff * self.profile.speed_at(rel.norm()))
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let d = self.direction();
        let rel = p - Vector3::from(self.origin);
        let along = rel.dot(&d);
        along > 0.0 && (rel - d * along).norm().atan2(along) < self.half_angle
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindField {
    #[serde(default)]
    pub ambient: [f64; 3],
    #[serde(default)]
    pub gusts: Vec<GustSource>,
}

impl WindField {
    pub fn calm() -> Self {
        Self::default()
    }

    pub fn wind_at(&self, p: &Vector3<f64>, t: f64) -> Vector3<f64> {
        self.gusts.iter().fold(Vector3::from(self.ambient), |acc, g| acc + g.velocity_at(p, t))
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, g) in self.gusts.iter().enumerate() {
            let n = Vector3::from(g.direction).norm();
            if !(n > 1e-9) {
                return Err(format!("gust {i}: zero direction"));
            }
            if !(g.half_angle > 0.0 && g.half_angle < std::f64::consts::FRAC_PI_2) {
                return Err(format!("gust {i}: half angle must lie in (0, π/2)"));
            }
            if g.profile.knots.iter().any(|k| k[1] < 0.0) {
                return Err(format!("gust {i}: negative profile speed"));
            }
            if g.profile.knots.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(format!("gust {i}: profile distances must increase"));
            }
            if g.ramp < 0.0 || g.schedule.iter().any(|s| s[1] < s[0]) {
                return Err(format!("gust {i}: malformed schedule"));
            }
        }
        Ok(())
    }
}
