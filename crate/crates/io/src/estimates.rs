//! The estimate stream: one row per sensor tick, identical for both
//! airflow sources.

use std::path::Path;

use nalgebra::Vector3;

use crate::error::{IoError, Result};
use crate::pipeline::EstimateRow;
use crate::table::{col, header, read_table_file, write_table_file, Column};

pub const ESTIMATE_COLUMNS: [Column; 14] = [
    col("t", "s"),
    col("vinf_x", "m/s"),
    col("vinf_y", "m/s"),
    col("vinf_z", "m/s"),
    col("wind_x", "m/s"),
    col("wind_y", "m/s"),
    col("wind_z", "m/s"),
    col("drag_x", "N"),
    col("drag_y", "N"),
    col("drag_z", "N"),
    col("touch_x", "N"),
    col("touch_y", "N"),
    col("touch_z", "N"),
    col("airflow_update", "flag"),
];

fn to_row(r: &EstimateRow) -> Vec<f64> {
    let mut row = Vec::with_capacity(ESTIMATE_COLUMNS.len());
    row.push(r.t);
    for v in [&r.v_inf_body, &r.wind, &r.drag, &r.touch] {
        row.extend(v.iter());
    }
    row.push(if r.airflow_update { 1.0 } else { 0.0 });
    row
}

pub fn write_estimates(path: &Path, rows: &[EstimateRow]) -> Result<()> {
    write_table_file(path, &header(&ESTIMATE_COLUMNS), rows.iter().map(to_row))
}

pub fn read_estimates(path: &Path) -> Result<Vec<EstimateRow>> {
    let table = read_table_file(path, &header(&ESTIMATE_COLUMNS))?;
    table.check_monotone(path)?;
    table
        .iter()
        .map(|(line, r)| {
            let v = |i: usize| Vector3::new(r[i], r[i + 1], r[i + 2]);
            let flag = r[13];
            if flag != 0.0 && flag != 1.0 {
                return Err(IoError::malformed(path, line, format!("airflow_update must be 0 or 1, found {flag}")));
            }
            Ok(EstimateRow { t: r[0], v_inf_body: v(1), wind: v(4), drag: v(7), touch: v(10), airflow_update: flag == 1.0 })
        })
        .collect()
}
