//! File formats: datasets, moment vectors, summaries and JSON reports.
//!
//! Every float written to disk is rounded to 12 significant digits first, so
//! a file written and read back reproduces the rounded values exactly.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Weibull};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::functionals::{Endpoint, MedianInterval, PosteriorSummary};
use crate::hazard::SurvivalDataset;
use crate::moments::MomentVector;

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x).parse().unwrap_or(x)
}

/// Shortest text that parses back to `round_sig(x)`.
pub fn fmt_float(x: f64) -> String {
    let r = round_sig(x);
    if r == r.trunc() && r.abs() < 1e15 {
        format!("{}", r as i64)
    } else {
        format!("{r:?}")
    }
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(1, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads the records of a strict CSV with the given header.
fn records(text: &str, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    if text.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "empty file".into(),
        });
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let got = rdr.headers().map_err(csv_error)?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`, found `{}`", header.join(","), got.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        out.push((line, rec));
    }
    Ok(out)
}

fn parse_f64(field: &str, line: usize, what: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{what} `{field}` is not a number"),
    })
}

/// Parses a dataset CSV with header `time,event`.
pub fn parse_dataset(text: &str) -> Result<SurvivalDataset> {
    let mut times = Vec::new();
    let mut events = Vec::new();
    for (line, rec) in records(text, &["time", "event"])? {
        let t = parse_f64(&rec[0], line, "time")?;
        let e = match rec[1].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("event `{other}` must be 0 or 1"),
                })
            }
        };
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Validation {
                line,
                message: format!("time must be positive, got {t}"),
            });
        }
        times.push(t);
        events.push(e);
    }
    if times.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    SurvivalDataset::new(times, events)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<SurvivalDataset> {
    parse_dataset(&read_text(path.as_ref())?)
}

pub fn format_dataset(data: &SurvivalDataset) -> String {
    let mut s = String::from("time,event\n");
    for (t, e) in data.times().iter().zip(data.events()) {
        s.push_str(&format!("{},{}\n", fmt_float(*t), *e as u8));
    }
    s
}

pub fn write_dataset(path: impl AsRef<Path>, data: &SurvivalDataset) -> Result<()> {
    write_text(path.as_ref(), &format_dataset(data))
}

/// Parses a moment CSV: header `moment`, rows γ_1..γ_d.
pub fn parse_moments(text: &str) -> Result<MomentVector> {
    let mut values = Vec::new();
    for (line, rec) in records(text, &["moment"])? {
        values.push(parse_f64(&rec[0], line, "moment")?);
    }
    MomentVector::new(values)
}

pub fn load_moments(path: impl AsRef<Path>) -> Result<MomentVector> {
    parse_moments(&read_text(path.as_ref())?)
}

pub fn format_moments(m: &MomentVector) -> String {
    let mut s = String::from("moment\n");
    for v in m.as_slice() {
        s.push_str(&fmt_float(*v));
        s.push('\n');
    }
    s
}

pub fn write_moments(path: impl AsRef<Path>, m: &MomentVector) -> Result<()> {
    write_text(path.as_ref(), &format_moments(m))
}

/// Writes columns of equal length under the given header.
pub fn format_columns(header: &[&str], columns: &[&[f64]]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    let rows = columns.first().map_or(0, |c| c.len());
    for i in 0..rows {
        let row: Vec<String> = columns.iter().map(|c| fmt_float(c[i])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn write_columns(path: impl AsRef<Path>, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    write_text(path.as_ref(), &format_columns(header, columns))
}

/// Uncensored Weibull(shape, scale) draws, rounded to 12 significant digits
/// so that writing and reloading the dataset is lossless.
pub fn simulate_weibull(n: usize, shape: f64, scale: f64, seed: u64) -> Result<SurvivalDataset> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    let dist = Weibull::new(scale, shape).map_err(|e| Error::InvalidInput(format!("weibull({shape}, {scale}): {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = (0..n)
        .map(|_| loop {
            let t = round_sig(dist.sample(&mut rng));
            if t > 0.0 {
                break t;
            }
        })
        .collect();
    SurvivalDataset::uncensored(times)
}

pub fn format_summary(s: &PosteriorSummary) -> String {
    format_columns(
        &["t", "mean", "median", "mode", "lo", "hi", "marginal_lo", "marginal_hi", "km"],
        &[
            &s.t_grid,
            &s.mean,
            &s.median,
            &s.mode,
            &s.lo,
            &s.hi,
            &s.marginal_lo,
            &s.marginal_hi,
            &s.km,
        ],
    )
}

fn num(x: f64) -> Value {
    json!(round_sig(x))
}

fn interval_json(iv: &MedianInterval) -> Value {
    json!({
        "lo": num(iv.lo.value),
        "hi": num(iv.hi.value),
        "lo_open": iv.lo.open,
        "hi_open": iv.hi.open,
    })
}

fn endpoint_json(e: &Endpoint) -> Value {
    json!({ "value": num(e.value), "open": e.open })
}

pub fn median_json(s: &PosteriorSummary) -> Value {
    json!({
        "m_hat": num(s.m_hat),
        "m_interval": interval_json(&s.m_interval),
        "m_hat_m": num(s.m_hat_m),
        "m_marginal_interval": interval_json(&s.m_marginal_interval),
        "m_hat_e": endpoint_json(&s.m_hat_e),
        "c": s.c.iter().map(|v| num(*v)).collect::<Vec<_>>(),
    })
}

/// Serializes with floats rounded to 12 significant digits.
pub fn to_rounded_json<T: Serialize>(value: &T) -> Result<Value> {
    fn walk(v: Value) -> Value {
        match v {
            Value::Number(n) if n.is_f64() => num(n.as_f64().unwrap_or(f64::NAN)),
            Value::Array(a) => Value::Array(a.into_iter().map(walk).collect()),
            Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, walk(v))).collect()),
            other => other,
        }
    }
    Ok(walk(serde_json::to_value(value)?))
}

pub fn write_json(path: impl AsRef<Path>, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path.as_ref(), &text)
}
