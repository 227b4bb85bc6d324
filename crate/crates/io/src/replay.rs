//! Scoring an estimate stream against the simulator's truth.

use std::fmt;

use nalgebra::Vector3;
use whisker_core::sensor::body_airflow;
use whisker_sim::{FlightLog, FlightPhase};

use crate::error::{IoError, Result};
use crate::pipeline::EstimateRow;

/// Time skipped at the start of every annotated phase before averaging, s.
pub const PHASE_SETTLE: f64 = 3.0;

/// Mean force magnitudes over one annotated phase, N.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMetrics {
    pub label: String,
    pub start: f64,
    pub end: f64,
    pub samples: usize,
    pub drag_true: f64,
    pub drag_estimate: f64,
    pub touch_true: f64,
    pub touch_estimate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayReport {
    /// Rows scored for the RMS figures (execute phase only).
    pub samples: usize,
    /// Per-axis RMS of the body-frame relative airflow, m/s.
    pub airflow_rms: Vector3<f64>,
    /// Per-axis RMS of the world-frame wind, m/s.
    pub wind_rms: Vector3<f64>,
    pub phases: Vec<PhaseMetrics>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Scores `rows` against the truth channel of `log`.
///
/// The RMS figures cover the rows stamped while the vehicle flies its
/// pattern; phase means cover each annotation after [`PHASE_SETTLE`].
pub fn replay(log: &FlightLog, rows: &[EstimateRow]) -> Result<ReplayReport> {
    if log.truth.is_empty() {
        return Err(IoError::EmptyChannel("truth"));
    }
    if rows.is_empty() {
        return Err(IoError::Invalid("the estimate stream is empty".into()));
    }
    let mut airflow_se = Vector3::zeros();
    let mut wind_se = Vector3::zeros();
    let mut samples = 0;
    for r in rows {
        let Some(truth) = log.truth_at(r.t) else { continue };
        if truth.phase != FlightPhase::Execute || r.t > log.duration() {
            continue;
        }
        let e = r.v_inf_body - body_airflow(&truth.attitude, &truth.wind, &truth.velocity);
        airflow_se += e.component_mul(&e);
        let e = r.wind - truth.wind;
        wind_se += e.component_mul(&e);
        samples += 1;
    }
    if samples == 0 {
        return Err(IoError::Invalid("no estimate rows fall in the execute phase of the log".into()));
    }
    let rms = |se: Vector3<f64>| (se / samples as f64).map(f64::sqrt);

    let phases = log
        .meta
        .annotations
        .iter()
        .map(|a| {
            let sel: Vec<(&EstimateRow, _)> = rows
                .iter()
                .filter(|r| r.t >= a.start + PHASE_SETTLE && r.t <= a.end)
                .filter_map(|r| log.truth_at(r.t).map(|s| (r, s)))
                .collect();
            PhaseMetrics {
                label: a.label.clone(),
                start: a.start,
                end: a.end,
                samples: sel.len(),
                drag_true: mean(sel.iter().map(|(_, s)| s.drag.norm())),
                drag_estimate: mean(sel.iter().map(|(r, _)| r.drag.norm())),
                touch_true: mean(sel.iter().map(|(_, s)| s.touch.norm())),
                touch_estimate: mean(sel.iter().map(|(r, _)| r.touch.norm())),
            }
        })
        .collect();
    Ok(ReplayReport { samples, airflow_rms: rms(airflow_se), wind_rms: rms(wind_se), phases })
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = &self.airflow_rms;
        let w = &self.wind_rms;
        writeln!(f, "scored rows: {}", self.samples)?;
        writeln!(f, "airflow RMS (body x/y/z, m/s): {:.3} {:.3} {:.3}", a.x, a.y, a.z)?;
        writeln!(f, "wind RMS (world x/y/z, m/s):   {:.3} {:.3} {:.3}", w.x, w.y, w.z)?;
        if !self.phases.is_empty() {
            writeln!(f, "{:<14} {:>8} {:>8} {:>8} {:>8}", "phase", "drag", "drag^", "touch", "touch^")?;
            for p in &self.phases {
                writeln!(
                    f,
                    "{:<14} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
                    p.label, p.drag_true, p.drag_estimate, p.touch_true, p.touch_estimate
                )?;
            }
        }
        Ok(())
    }
}
