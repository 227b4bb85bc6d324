//! Flight logs on disk: one CSV per channel plus `meta.cfg`, in a directory.

use std::path::Path;

use nalgebra::{Quaternion, Vector3};
use whisker_core::sensor::MagneticField;
use whisker_core::UnitQuaternion;
use whisker_sim::{Annotation, ControlSample, FlightLog, FlightPhase, ImuSample, LogMeta, OdometrySample, SensorSample, TruthSample};

use crate::config::{FlatConfig, FlatWriter};
use crate::error::{IoError, Result};
use crate::params::Params;
use crate::table::{col, header, read_table_file, write_table_file, Column};

pub const TRUTH_FILE: &str = "truth.csv";
pub const ODOMETRY_FILE: &str = "odometry.csv";
pub const IMU_FILE: &str = "imu.csv";
pub const CONTROL_FILE: &str = "control.csv";
pub const SENSORS_FILE: &str = "sensors.csv";
pub const META_FILE: &str = "meta.cfg";

const TRUTH_COLUMNS: [Column; 27] = [
    col("t", "s"),
    col("px", "m"),
    col("py", "m"),
    col("pz", "m"),
    col("vx", "m/s"),
    col("vy", "m/s"),
    col("vz", "m/s"),
    col("qw", "1"),
    col("qx", "1"),
    col("qy", "1"),
    col("qz", "1"),
    col("wx", "rad/s"),
    col("wy", "rad/s"),
    col("wz", "rad/s"),
    col("ax", "m/s^2"),
    col("ay", "m/s^2"),
    col("az", "m/s^2"),
    col("wind_x", "m/s"),
    col("wind_y", "m/s"),
    col("wind_z", "m/s"),
    col("touch_x", "N"),
    col("touch_y", "N"),
    col("touch_z", "N"),
    col("drag_x", "N"),
    col("drag_y", "N"),
    col("drag_z", "N"),
    col("thrust", "N"),
];

const ODOMETRY_COLUMNS: [Column; 14] = [
    col("t", "s"),
    col("px", "m"),
    col("py", "m"),
    col("pz", "m"),
    col("qw", "1"),
    col("qx", "1"),
    col("qy", "1"),
    col("qz", "1"),
    col("vx", "m/s"),
    col("vy", "m/s"),
    col("vz", "m/s"),
    col("wx", "rad/s"),
    col("wy", "rad/s"),
    col("wz", "rad/s"),
];

const IMU_COLUMNS: [Column; 4] = [col("t", "s"), col("fx", "m/s^2"), col("fy", "m/s^2"), col("fz", "m/s^2")];

const CONTROL_COLUMNS: [Column; 11] = [
    col("t", "s"),
    col("thrust", "N"),
    col("tau_x", "N*m"),
    col("tau_y", "N*m"),
    col("tau_z", "N*m"),
    col("u0", "1"),
    col("u1", "1"),
    col("u2", "1"),
    col("u3", "1"),
    col("u4", "1"),
    col("u5", "1"),
];

fn truth_header() -> Vec<String> {
    let mut h = header(&TRUTH_COLUMNS);
    h.push("phase:index".into());
    h
}

fn sensor_header(sensors: usize) -> Vec<String> {
    let mut h = vec!["t:s".to_string()];
    for i in 0..sensors {
        for axis in ["x", "y", "z"] {
            h.push(format!("b{i}_{axis}:field"));
        }
    }
    h
}

fn v3(row: &[f64], at: usize) -> Vector3<f64> {
    Vector3::new(row[at], row[at + 1], row[at + 2])
}

fn quat(path: &Path, line: u64, row: &[f64], at: usize) -> Result<UnitQuaternion> {
    let q = Quaternion::new(row[at], row[at + 1], row[at + 2], row[at + 3]);
    if !((q.norm() - 1.0).abs() < 1e-6) {
        return Err(IoError::malformed(path, line, format!("quaternion norm {} is not 1", q.norm())));
    }
    // already normalized to the written precision: keep the digits as read
    if (q.norm() - 1.0).abs() < 1e-12 {
        return Ok(UnitQuaternion::new_unchecked(q));
    }
    Ok(UnitQuaternion::from_quaternion(q))
}

fn push3(row: &mut Vec<f64>, v: &Vector3<f64>) {
    row.extend_from_slice(v.as_slice());
}

fn push_quat(row: &mut Vec<f64>, q: &UnitQuaternion) {
    row.extend_from_slice(&[q.w, q.i, q.j, q.k]);
}

fn meta_text(meta: &LogMeta) -> String {
    let mut w = FlatWriter::default();
    w.comment("flight log metadata");
    w.str("scenario", &meta.scenario).int("seed", meta.seed);
    let params = Params {
        vehicle: meta.vehicle,
        rig: meta.rig.clone(),
        odometry_noise: meta.odometry_noise,
        angle_std: meta.angle_noise,
        ..Params::default()
    };
    params.write_into(&mut w);
    w.int("annotations", meta.annotations.len() as u64);
    for (i, a) in meta.annotations.iter().enumerate() {
        w.str(&format!("annotation{i}_label"), &a.label).num(&format!("annotation{i}_start"), a.start).num(&format!("annotation{i}_end"), a.end);
    }
    w.finish()
}

fn parse_meta(c: &FlatConfig) -> Result<LogMeta> {
    let params = Params::from_config(c)?;
    let count = if c.contains("annotations") { c.u64("annotations")? as usize } else { 0 };
    let annotations = (0..count)
        .map(|i| {
            Ok(Annotation {
                label: c.str(&format!("annotation{i}_label"))?.to_string(),
                start: c.f64(&format!("annotation{i}_start"))?,
                end: c.f64(&format!("annotation{i}_end"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LogMeta {
        scenario: c.str("scenario")?.to_string(),
        seed: c.u64("seed")?,
        vehicle: params.vehicle,
        rig: params.rig,
        odometry_noise: params.odometry_noise,
        angle_noise: params.angle_std,
        annotations,
    })
}

pub fn write_log(dir: &Path, log: &FlightLog) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| IoError::File { path: dir.to_owned(), source })?;
    let meta_path = dir.join(META_FILE);
    std::fs::write(&meta_path, meta_text(&log.meta)).map_err(|source| IoError::File { path: meta_path, source })?;

    write_table_file(
        &dir.join(TRUTH_FILE),
        &truth_header(),
        log.truth.iter().map(|s| {
            let mut r = vec![s.t];
            push3(&mut r, &s.position);
            push3(&mut r, &s.velocity);
            push_quat(&mut r, &s.attitude);
            push3(&mut r, &s.angular_velocity);
            push3(&mut r, &s.acceleration);
            push3(&mut r, &s.wind);
            push3(&mut r, &s.touch);
            push3(&mut r, &s.drag);
            r.push(s.thrust);
            r.push(s.phase.index() as f64);
            r
        }),
    )?;
    write_table_file(
        &dir.join(ODOMETRY_FILE),
        &header(&ODOMETRY_COLUMNS),
        log.odometry.iter().map(|s| {
            let mut r = vec![s.t];
            push3(&mut r, &s.position);
            push_quat(&mut r, &s.attitude);
            push3(&mut r, &s.velocity);
            push3(&mut r, &s.angular_velocity);
            r
        }),
    )?;
    write_table_file(
        &dir.join(IMU_FILE),
        &header(&IMU_COLUMNS),
        log.imu.iter().map(|s| {
            let mut r = vec![s.t];
            push3(&mut r, &s.accel);
            r
        }),
    )?;
    write_table_file(
        &dir.join(CONTROL_FILE),
        &header(&CONTROL_COLUMNS),
        log.control.iter().map(|s| {
            let mut r = vec![s.t, s.thrust];
            push3(&mut r, &s.torque);
            r.extend_from_slice(&s.throttles);
            r
        }),
    )?;
    write_table_file(
        &dir.join(SENSORS_FILE),
        &sensor_header(log.meta.rig.len()),
        log.sensors.iter().map(|s| {
            let mut r = vec![s.t];
            for b in &s.fields {
                push3(&mut r, &b.0);
            }
            r
        }),
    )
}

/// Reads a log directory. The truth channel is optional (real flights have
/// none); every other file is required.
pub fn read_log(dir: &Path) -> Result<FlightLog> {
    let meta = parse_meta(&FlatConfig::read(&dir.join(META_FILE))?)?;
    let mut log = FlightLog::empty(meta);

    let path = dir.join(TRUTH_FILE);
    if path.exists() {
        let table = read_table_file(&path, &truth_header())?;
        table.check_monotone(&path)?;
        for (line, r) in table.iter() {
            let phase = FlightPhase::from_index(r[27] as u8)
                .filter(|_| r[27].fract() == 0.0 && r[27] >= 0.0)
                .ok_or_else(|| IoError::malformed(&path, line, format!("unknown phase index {}", r[27])))?;
            log.truth.push(TruthSample {
                t: r[0],
                position: v3(r, 1),
                velocity: v3(r, 4),
                attitude: quat(&path, line, r, 7)?,
                angular_velocity: v3(r, 11),
                acceleration: v3(r, 14),
                wind: v3(r, 17),
                touch: v3(r, 20),
                drag: v3(r, 23),
                thrust: r[26],
                phase,
            });
        }
    }

    let path = dir.join(ODOMETRY_FILE);
    let table = read_table_file(&path, &header(&ODOMETRY_COLUMNS))?;
    table.check_monotone(&path)?;
    for (line, r) in table.iter() {
        log.odometry.push(OdometrySample {
            t: r[0],
            position: v3(r, 1),
            attitude: quat(&path, line, r, 4)?,
            velocity: v3(r, 8),
            angular_velocity: v3(r, 11),
        });
    }

    let path = dir.join(IMU_FILE);
    let table = read_table_file(&path, &header(&IMU_COLUMNS))?;
    table.check_monotone(&path)?;
    log.imu = table.rows.iter().map(|r| ImuSample { t: r[0], accel: v3(r, 1) }).collect();

    let path = dir.join(CONTROL_FILE);
    let table = read_table_file(&path, &header(&CONTROL_COLUMNS))?;
    table.check_monotone(&path)?;
    for (line, r) in table.iter() {
        let throttles: [f64; 6] = std::array::from_fn(|j| r[5 + j]);
        if throttles.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return Err(IoError::malformed(&path, line, "throttle outside [0, 1]"));
        }
        log.control.push(ControlSample { t: r[0], thrust: r[1], torque: v3(r, 2), throttles });
    }

    let path = dir.join(SENSORS_FILE);
    let table = read_table_file(&path, &sensor_header(log.meta.rig.len()))?;
    table.check_monotone(&path)?;
    log.sensors = table
        .rows
        .iter()
        .map(|r| SensorSample { t: r[0], fields: (0..log.meta.rig.len()).map(|k| MagneticField(v3(r, 1 + 3 * k))).collect() })
        .collect();
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use whisker_sim::{run_scenario, Scenario};

    fn short_log() -> FlightLog {
        let mut s = Scenario::four_phase(1.0).with_seed(3);
        s.duration = Some(3.0);
        run_scenario(&s).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        a == b || ((a - b) / a.abs().max(b.abs())).abs() < 1e-14
    }

    #[test]
    fn round_trip_keeps_fifteen_digits() {
        let log = short_log();
        let dir = tempfile::tempdir().unwrap();
        write_log(dir.path(), &log).unwrap();
        let back = read_log(dir.path()).unwrap();
        assert_eq!(back.meta.annotations, log.meta.annotations);
        assert_eq!(back.meta.seed, 3);
        assert_eq!(back.truth.len(), log.truth.len());
        assert_eq!(back.sensors.len(), log.sensors.len());
        for (a, b) in back.truth.iter().zip(&log.truth) {
            assert!(close(a.t, b.t) && a.phase == b.phase);
            for (x, y) in a.velocity.iter().chain(a.drag.iter()).zip(b.velocity.iter().chain(b.drag.iter())) {
                assert!(close(*x, *y), "{x} {y}");
            }
        }
        for (a, b) in back.sensors.iter().zip(&log.sensors) {
            for (fa, fb) in a.fields.iter().zip(&b.fields) {
                for k in 0..3 {
                    assert!(close(fa.0[k], fb.0[k]));
                }
            }
        }
        for (a, b) in back.control.iter().zip(&log.control) {
            assert!(a.throttles.iter().zip(&b.throttles).all(|(x, y)| close(*x, *y)));
        }
        // writing the re-read log reproduces the files byte for byte
        let again = tempfile::tempdir().unwrap();
        write_log(again.path(), &back).unwrap();
        for f in [TRUTH_FILE, ODOMETRY_FILE, IMU_FILE, CONTROL_FILE, SENSORS_FILE, META_FILE] {
            let a = std::fs::read_to_string(dir.path().join(f)).unwrap();
            let b = std::fs::read_to_string(again.path().join(f)).unwrap();
            assert!(a == b, "{f} differs after a round trip");
        }
    }

    #[test]
    fn corrupted_file_names_the_line() {
        let log = short_log();
        let dir = tempfile::tempdir().unwrap();
        write_log(dir.path(), &log).unwrap();
        let p = dir.path().join(IMU_FILE);
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[5] = "not,a,number,row".into();
        std::fs::write(&p, lines.join("\n")).unwrap();
        let e = read_log(dir.path()).unwrap_err().to_string();
        assert!(e.contains("imu.csv:6:"), "{e}");
    }

    #[test]
    fn missing_truth_is_allowed() {
        let log = short_log();
        let dir = tempfile::tempdir().unwrap();
        write_log(dir.path(), &log).unwrap();
        std::fs::remove_file(dir.path().join(TRUTH_FILE)).unwrap();
        let back = read_log(dir.path()).unwrap();
        assert!(back.truth.is_empty());
        assert_eq!(back.odometry.len(), log.odometry.len());
    }
}
