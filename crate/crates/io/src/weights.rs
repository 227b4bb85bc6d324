//! Network weights sidecar: a versioned `section,index,value` CSV.
//!
//! Sections are the architecture (`input`, `hidden`, `output`, `layers`,
//! `seq_len`, index 0), the feature standardizer (`mean`, `scale`) and the
//! flattened parameters (`param`). Values use Rust's shortest round-trip
//! float formatting, so a written model reads back bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use whisker_core::lstm::{Architecture, LstmModel, LstmParams, Standardizer};

use crate::error::{IoError, Result};

pub const WEIGHTS_MAGIC: &str = "# whisker-lstm-weights v1";
const HEADER: [&str; 3] = ["section", "index", "value"];
const ARCH_KEYS: [&str; 5] = ["input", "hidden", "output", "layers", "seq_len"];

pub fn write_weights<W: Write>(mut out: W, model: &LstmModel<f64>) -> std::io::Result<()> {
    writeln!(out, "{WEIGHTS_MAGIC}")?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(HEADER)?;
    let a = &model.params.arch;
    for (key, n) in ARCH_KEYS.iter().zip([a.input, a.hidden, a.output, a.layers, model.seq_len]) {
        w.write_record([key, "0", &n.to_string()])?;
    }
    let sections = [("mean", &model.standardizer.mean), ("scale", &model.standardizer.scale), ("param", &model.params.to_flat())];
    for (name, values) in sections {
        for (i, x) in values.iter().enumerate() {
            w.write_record([name, &i.to_string(), &format!("{x:e}")])?;
        }
    }
    w.flush()
}

pub fn write_weights_file(path: &Path, model: &LstmModel<f64>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| IoError::File { path: path.to_owned(), source })?;
    write_weights(std::io::BufWriter::new(file), model).map_err(|source| IoError::File { path: path.to_owned(), source })
}

/// One growing section: values must arrive with consecutive indices.
fn push(section: &mut Vec<f64>, index: usize, value: f64, path: &Path, line: u64, name: &str) -> Result<()> {
    if index != section.len() {
        return Err(IoError::malformed(path, line, format!("section `{name}`: expected index {}, found {index}", section.len())));
    }
    section.push(value);
    Ok(())
}

pub fn read_weights<R: Read>(mut input: R, path: &Path) -> Result<LstmModel<f64>> {
    let mut text = String::new();
    input.read_to_string(&mut text).map_err(|source| IoError::File { path: path.to_owned(), source })?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    if first.trim() != WEIGHTS_MAGIC {
        return Err(IoError::malformed(path, 1, format!("expected `{WEIGHTS_MAGIC}`, found `{first}`")));
    }
    // csv counts lines from the start of `body`, one below the version line
    let line_of = |p: Option<&csv::Position>| p.map_or(0, |p| p.line() + 1);
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(body.as_bytes());
    let mut arch: [Option<usize>; 5] = [None; 5];
    let (mut mean, mut scale, mut flat) = (Vec::new(), Vec::new(), Vec::new());
    let mut saw_header = false;
    let mut last_line = 1;
    for rec in r.records() {
        let rec = rec.map_err(|e| IoError::malformed(path, line_of(e.position()), e.to_string()))?;
        let line = line_of(rec.position());
        last_line = line;
        let fields: Vec<&str> = rec.iter().map(str::trim).collect();
        if !saw_header {
            if fields != HEADER {
                return Err(IoError::malformed(path, line, format!("expected header `{}`, found `{}`", HEADER.join(","), fields.join(","))));
            }
            saw_header = true;
            continue;
        }
        let [name, index, value] = fields[..] else {
            return Err(IoError::malformed(path, line, format!("expected 3 fields, found {}", fields.len())));
        };
        let index: usize = index.parse().map_err(|_| IoError::malformed(path, line, format!("`{index}` is not an index")))?;
        if let Some(k) = ARCH_KEYS.iter().position(|key| *key == name) {
            let n: usize = value.parse().map_err(|_| IoError::malformed(path, line, format!("`{name}` must be a non-negative integer")))?;
            if index != 0 || arch[k].replace(n).is_some() {
                return Err(IoError::malformed(path, line, format!("`{name}` must appear once with index 0")));
            }
            continue;
        }
        let x: f64 = value.parse().map_err(|_| IoError::malformed(path, line, format!("`{value}` is not a number")))?;
        if !x.is_finite() {
            return Err(IoError::malformed(path, line, "non-finite value"));
        }
        match name {
            "mean" => push(&mut mean, index, x, path, line, name)?,
            "scale" => push(&mut scale, index, x, path, line, name)?,
            "param" => push(&mut flat, index, x, path, line, name)?,
            other => return Err(IoError::malformed(path, line, format!("unknown section `{other}`"))),
        }
    }
    let at_end = |msg: String| IoError::malformed(path, last_line + 1, msg);
    let mut dims = [0usize; 5];
    for (k, key) in ARCH_KEYS.iter().enumerate() {
        dims[k] = arch[k].filter(|n| *n > 0).ok_or_else(|| at_end(format!("missing or zero `{key}`")))?;
    }
    let [input, hidden, output, layers, seq_len] = dims;
    let mut params = LstmParams::zeros(Architecture { input, hidden, output, layers });
    if flat.len() != params.num_params() {
        return Err(at_end(format!("expected {} parameters, found {}", params.num_params(), flat.len())));
    }
    params.set_flat(&flat)?;
    if mean.len() != input || scale.len() != input {
        return Err(at_end(format!("standardizer must have {input} entries, found {} means and {} scales", mean.len(), scale.len())));
    }
    if scale.iter().any(|s| *s <= 0.0) {
        return Err(at_end("standardizer scales must be positive".into()));
    }
    Ok(LstmModel { params, standardizer: Standardizer { mean, scale }, seq_len })
}

pub fn read_weights_file(path: &Path) -> Result<LstmModel<f64>> {
    let file = std::fs::File::open(path).map_err(|source| IoError::File { path: path.to_owned(), source })?;
    read_weights(file, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> LstmModel<f64> {
        let arch = Architecture { input: 5, hidden: 4, output: 3, layers: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        LstmModel {
            params: LstmParams::init(arch, &mut rng),
            standardizer: Standardizer { mean: vec![0.1, -2.0, 1.0 / 3.0, 0.0, 7.5], scale: vec![1.0, 0.25, 3.0, 1e-3, 2.0] },
            seq_len: 12,
        }
    }

    fn text(m: &LstmModel<f64>) -> String {
        let mut buf = Vec::new();
        write_weights(&mut buf, m).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let back = read_weights(text(&m).as_bytes(), Path::new("w.csv")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let t = text(&model()).replacen("v1", "v2", 1);
        let e = read_weights(t.as_bytes(), Path::new("w.csv")).unwrap_err().to_string();
        assert!(e.starts_with("w.csv:1:"), "{e}");
    }

    #[test]
    fn errors_name_the_line() {
        let t = text(&model());
        let mut lines: Vec<&str> = t.lines().collect();
        lines[9] = "param,3,abc";
        let e = read_weights(lines.join("\n").as_bytes(), Path::new("w.csv")).unwrap_err().to_string();
        assert!(e.starts_with("w.csv:10:"), "{e}");

        let short: String = t.lines().take(t.lines().count() - 1).collect::<Vec<_>>().join("\n");
        let e = read_weights(short.as_bytes(), Path::new("w.csv")).unwrap_err().to_string();
        assert!(e.contains("parameters"), "{e}");
    }
}
