//! Plain numeric CSV tables with a `name:unit` header line.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{IoError, Result};

/// Significant digits written for every number.
pub const SIGNIFICANT_DIGITS: usize = 15;

/// Formats with [`SIGNIFICANT_DIGITS`] significant digits.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
}

/// Column name and unit, written as `name:unit`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Column {
    pub name: &'static str,
    pub unit: &'static str,
}

pub const fn col(name: &'static str, unit: &'static str) -> Column {
    Column { name, unit }
}

pub fn header_line(columns: &[String]) -> String {
    columns.join(",")
}

pub fn write_table<W: Write>(out: W, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        debug_assert_eq!(row.len(), header.len());
        w.write_record(row.iter().map(|x| format_number(*x)))?;
    }
    w.flush()
}

pub fn write_table_file(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let file = File::create(path).map_err(|source| IoError::File { path: path.to_owned(), source })?;
    write_table(std::io::BufWriter::new(file), header, rows).map_err(|source| IoError::File { path: path.to_owned(), source })
}

/// Parsed rows with the 1-based file line each came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub rows: Vec<Vec<f64>>,
    pub lines: Vec<u64>,
}

impl Table {
    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f64])> {
        self.lines.iter().copied().zip(self.rows.iter().map(Vec::as_slice))
    }

    /// Requires non-decreasing timestamps in column 0.
    pub fn check_monotone(&self, path: &Path) -> Result<()> {
        for (i, w) in self.rows.windows(2).enumerate() {
            if w[1][0] < w[0][0] {
                return Err(IoError::malformed(path, self.lines[i + 1], "timestamps go backwards"));
            }
        }
        Ok(())
    }
}

/// Rows of a table whose header must equal `header` exactly.
///
/// Diagnostics carry the path and the 1-based line number.
pub fn read_table<R: Read>(input: R, path: &Path, header: &[String]) -> Result<Table> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut records = r.records();
    let line_of = |rec: &csv::StringRecord| rec.position().map_or(0, |p| p.line());
    let first = match records.next() {
        Some(rec) => rec.map_err(|e| csv_error(path, e))?,
        None => return Err(IoError::malformed(path, 1, "missing header line")),
    };
    let found: Vec<&str> = first.iter().map(str::trim).collect();
    if found != header.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(IoError::malformed(path, line_of(&first), format!("expected header `{}`, found `{}`", header.join(","), found.join(","))));
    }
    let mut table = Table::default();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = line_of(&rec);
        if rec.len() != header.len() {
            return Err(IoError::malformed(path, line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let row = rec
            .iter()
            .zip(header)
            .map(|(field, name)| {
                field.trim().parse::<f64>().map_err(|_| IoError::malformed(path, line, format!("column `{name}`: `{field}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        table.rows.push(row);
        table.lines.push(line);
    }
    Ok(table)
}

pub fn read_table_file(path: &Path, header: &[String]) -> Result<Table> {
    let file = File::open(path).map_err(|source| IoError::File { path: path.to_owned(), source })?;
    read_table(std::io::BufReader::new(file), path, header)
}

fn csv_error(path: &Path, e: csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    IoError::malformed(path, line, e.to_string())
}

/// `name:unit` strings for a fixed column list.
pub fn header(columns: &[Column]) -> Vec<String> {
    columns.iter().map(|c| format!("{}:{}", c.name, c.unit)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hdr() -> Vec<String> {
        header(&[col("t", "s"), col("x", "m")])
    }

    #[test]
    fn numbers_keep_fifteen_significant_digits() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 1e-300, 123456.789012345] {
            let back: f64 = format_number(x).parse().unwrap();
            let rounded: f64 = format!("{:.14e}", x).parse().unwrap();
            assert_eq!(back, rounded);
            assert!(((back - x) / x).abs() < 1e-14);
        }
        assert_eq!(format_number(0.0), "0");
    }

    #[test]
    fn round_trip() {
        let rows = vec![vec![0.0, 1.5], vec![0.02, -2.25e-7]];
        let mut buf = Vec::new();
        write_table(&mut buf, &hdr(), rows.clone()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t:s,x:m\n"));
        let back = read_table(&buf[..], Path::new("mem.csv"), &hdr()).unwrap();
        assert_eq!(back.rows, rows);
        assert_eq!(back.lines, vec![2, 3]);
    }

    #[test]
    fn comment_lines_are_not_data() {
        let text = "t:s,x:m\n0,1\n# note\n";
        let err = read_table(text.as_bytes(), Path::new("c.csv"), &hdr()).unwrap_err().to_string();
        assert!(err.starts_with("c.csv:3:"), "{err}");
    }

    #[test]
    fn diagnostics_name_the_line() {
        let text = "t:s,x:m\n0,1\n0.02,oops\n";
        let err = read_table(text.as_bytes(), Path::new("a.csv"), &hdr()).unwrap_err().to_string();
        assert!(err.starts_with("a.csv:3:"), "{err}");
        assert!(err.contains("oops"));

        let text = "t:s,x:m\n0,1,2\n";
        let err = read_table(text.as_bytes(), Path::new("a.csv"), &hdr()).unwrap_err().to_string();
        assert!(err.starts_with("a.csv:2:"), "{err}");

        let text = "t:s,y:m\n";
        let err = read_table(text.as_bytes(), Path::new("a.csv"), &hdr()).unwrap_err().to_string();
        assert!(err.starts_with("a.csv:1:"), "{err}");
    }

    #[test]
    fn backwards_time_is_reported() {
        let text = "t:s,x:m\n0,0\n0.02,0\n0.01,0\n";
        let t = read_table(text.as_bytes(), Path::new("b.csv"), &hdr()).unwrap();
        let err = t.check_monotone(Path::new("b.csv")).unwrap_err().to_string();
        assert!(err.starts_with("b.csv:4:"), "{err}");
    }
}
