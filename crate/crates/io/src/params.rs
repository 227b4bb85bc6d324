//! Vehicle, sensor and driver parameters in the flat configuration format.

use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};
use whisker_core::sensor::Polarity;
use whisker_core::{OdometryNoise, SensorMount, SensorRig, VehicleParams};

use crate::config::{FlatConfig, FlatWriter};
use crate::driver::DriverConfig;
use crate::error::{IoError, Result};

/// Everything the estimator needs to know about the vehicle and its sensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub vehicle: VehicleParams,
    pub rig: SensorRig,
    pub odometry_noise: OdometryNoise,
    /// Whisker angle noise, rad.
    pub angle_std: f64,
    pub driver: DriverConfig,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            vehicle: VehicleParams::default(),
            rig: SensorRig::default_hexarotor(),
            odometry_noise: OdometryNoise::default(),
            angle_std: 0.005,
            driver: DriverConfig::default(),
        }
    }
}

const INERTIA_KEYS: [(&str, usize, usize); 6] =
    [("inertia_xx", 0, 0), ("inertia_yy", 1, 1), ("inertia_zz", 2, 2), ("inertia_xy", 0, 1), ("inertia_xz", 0, 2), ("inertia_yz", 1, 2)];

fn polarity_name(p: Polarity) -> &'static str {
    match p {
        Polarity::NorthUp => "north_up",
        Polarity::SouthUp => "south_up",
    }
}

impl Params {
    pub fn write_into(&self, w: &mut FlatWriter) {
        let v = &self.vehicle;
        w.num("mass", v.mass).num("gravity", v.gravity).num("mu1", v.mu1).num("mu2", v.mu2);
        for (key, r, c) in INERTIA_KEYS {
            w.num(key, v.inertia[(r, c)]);
        }
        let n = &self.odometry_noise;
        w.num("odometry_position_std", n.position)
            .num("odometry_attitude_std", n.attitude)
            .num("odometry_velocity_std", n.velocity)
            .num("odometry_rate_std", n.angular_velocity)
            .num("angle_std", self.angle_std);
        let d = &self.driver;
        w.num("driver_alpha", d.alpha)
            .num("driver_threshold_sigmas", d.threshold_sigmas)
            .num("driver_min_threshold_fraction", d.min_threshold_fraction)
            .num("calibration_time", d.calibration_time);
        w.int("sensors", self.rig.len() as u64);
        for (i, m) in self.rig.mounts.iter().enumerate() {
            let q = UnitQuaternion::from_rotation_matrix(&m.orientation);
            w.num(&format!("sensor{i}_x"), m.position.x)
                .num(&format!("sensor{i}_y"), m.position.y)
                .num(&format!("sensor{i}_z"), m.position.z)
                .num(&format!("sensor{i}_qw"), q.w)
                .num(&format!("sensor{i}_qx"), q.i)
                .num(&format!("sensor{i}_qy"), q.j)
                .num(&format!("sensor{i}_qz"), q.k)
                .num(&format!("sensor{i}_coefficient"), m.coefficient)
                .str(&format!("sensor{i}_polarity"), polarity_name(m.polarity));
        }
    }

    pub fn to_text(&self) -> String {
        let mut w = FlatWriter::default();
        w.comment("vehicle and sensor parameters (SI units, angles in rad)");
        self.write_into(&mut w);
        w.finish()
    }

    pub fn from_config(c: &FlatConfig) -> Result<Self> {
        let mut inertia = Matrix3::zeros();
        for (key, r, col) in INERTIA_KEYS {
            let x = c.f64(key)?;
            inertia[(r, col)] = x;
            inertia[(col, r)] = x;
        }
        let vehicle = VehicleParams {
            mass: c.positive("mass")?,
            inertia,
            mu1: c.non_negative("mu1")?,
            mu2: c.non_negative("mu2")?,
            gravity: c.positive("gravity")?,
        };
        vehicle.validate().map_err(|e| c.invalid("inertia_xx", e))?;
        let odometry_noise = OdometryNoise {
            position: c.non_negative("odometry_position_std")?,
            attitude: c.non_negative("odometry_attitude_std")?,
            velocity: c.non_negative("odometry_velocity_std")?,
            angular_velocity: c.non_negative("odometry_rate_std")?,
        };
        let defaults = DriverConfig::default();
        let driver = DriverConfig {
            alpha: c.f64_or("driver_alpha", defaults.alpha)?,
            threshold_sigmas: c.f64_or("driver_threshold_sigmas", defaults.threshold_sigmas)?,
            min_threshold_fraction: c.f64_or("driver_min_threshold_fraction", defaults.min_threshold_fraction)?,
            calibration_time: c.f64_or("calibration_time", defaults.calibration_time)?,
        };
        driver.validate().map_err(|e| c.invalid("driver_alpha", e))?;
        let count = c.u64("sensors")? as usize;
        let mut mounts = Vec::with_capacity(count);
        for i in 0..count {
            let k = |s: &str| format!("sensor{i}_{s}");
            let q = Quaternion::new(c.f64(&k("qw"))?, c.f64(&k("qx"))?, c.f64(&k("qy"))?, c.f64(&k("qz"))?);
            if (q.norm() - 1.0).abs() > 1e-6 {
                return Err(c.invalid(&k("qw"), "orientation quaternion must have unit norm"));
            }
            let polarity = match c.str(&k("polarity"))? {
                "north_up" => Polarity::NorthUp,
                "south_up" => Polarity::SouthUp,
                other => return Err(c.invalid(&k("polarity"), format!("unknown polarity `{other}` (north_up or south_up)"))),
            };
            mounts.push(SensorMount {
                position: Vector3::new(c.f64(&k("x"))?, c.f64(&k("y"))?, c.f64(&k("z"))?),
                orientation: Rotation3::from(UnitQuaternion::from_quaternion(q)),
                coefficient: c.positive(&k("coefficient"))?,
                polarity,
            });
        }
        let rig = SensorRig { mounts };
        if rig.is_empty() {
            return Err(c.invalid("sensors", "at least one sensor is required"));
        }
        Ok(Self { vehicle, rig, odometry_noise, angle_std: c.non_negative("angle_std")?, driver })
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        Self::from_config(&FlatConfig::parse(text, path)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_config(&FlatConfig::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| IoError::File { path: path.to_owned(), source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let mut p = Params::default();
        p.vehicle.mu1 = 0.2012345678901234;
        p.vehicle.inertia[(0, 1)] = 1e-4;
        p.vehicle.inertia[(1, 0)] = 1e-4;
        let back = Params::parse(&p.to_text(), Path::new("p.cfg")).unwrap();
        assert!((back.vehicle.mu1 - p.vehicle.mu1).abs() < 1e-15);
        assert_eq!(back.vehicle.inertia, p.vehicle.inertia);
        assert_eq!(back.rig.len(), 4);
        for (a, b) in back.rig.mounts.iter().zip(&p.rig.mounts) {
            assert!((a.orientation.matrix() - b.orientation.matrix()).abs().max() < 1e-14);
            assert_eq!(a.polarity, b.polarity);
            assert!((a.coefficient - b.coefficient).abs() < 1e-16);
        }
        assert_eq!(back.driver, p.driver);
    }

    #[test]
    fn bad_values_are_located() {
        let text = Params::default().to_text().replace("sensor1_polarity = \"south_up\"", "sensor1_polarity = \"sideways\"");
        let line = text.lines().position(|l| l.starts_with("sensor1_polarity")).unwrap() + 1;
        let e = Params::parse(&text, Path::new("p.cfg")).unwrap_err().to_string();
        assert!(e.starts_with(&format!("p.cfg:{line}:")), "{e}");

        let text = Params::default().to_text().replace("mass = ", "mass = -");
        let e = Params::parse(&text, Path::new("p.cfg")).unwrap_err().to_string();
        assert!(e.contains("mass") && e.contains("positive"), "{e}");
    }
}
