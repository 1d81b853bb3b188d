//! Numeric tables as CSV and reports as JSON, with every number written to
//! 12 significant digits.

use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{PerformanceReport, StepData};
use crate::bounds::RegionGrid;
use crate::dynamics::Trajectory;
use crate::mpc::ClosedLoopRun;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("malformed table: {0}")]
    Malformed(String),
}

pub const SIGNIFICANT_DIGITS: usize = 12;

/// `v` with 12 significant digits, in plain notation for moderate
/// magnitudes and scientific otherwise. Parses back with `str::parse`.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..SIGNIFICANT_DIGITS as i32).contains(&exp) {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        let rounded: f64 = sci.parse().expect("valid float");
        trim_zeros(format!("{rounded:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `v` rounded to 12 significant digits.
pub fn round_sig(v: f64) -> f64 {
    if v.is_finite() {
        format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v).parse().expect("valid float")
    } else {
        v
    }
}

/// Column-labelled numeric table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self { headers: headers.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.headers.len(), "row width");
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), IoError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(&self.headers)?;
        for row in &self.rows {
            out.write_record(row.iter().map(|v| format_sig(*v)))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, IoError> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut table = Table::new(headers);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| IoError::Malformed(format!("row {}: {e}", i + 1)))?;
            if row.len() != table.headers.len() {
                return Err(IoError::Malformed(format!("row {} has {} fields", i + 1, row.len())));
            }
            table.rows.push(row);
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) => {
            if let (false, Some(f)) = (n.is_i64() || n.is_u64(), n.as_f64()) {
                if let Some(r) = serde_json::Number::from_f64(round_sig(f)) {
                    *n = r;
                }
            }
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(round_json),
        serde_json::Value::Object(o) => o.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Pretty JSON with floating-point numbers rounded to 12 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String, IoError> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    Ok(serde_json::to_string_pretty(&v)?)
}

/// Per-step table: `n, t, V_T, delta, stage_integral, alpha`.
pub fn report_table(report: &PerformanceReport) -> Table {
    let mut t = Table::new(["n", "t", "value", "delta", "stage_integral", "alpha"]);
    for s in &report.steps {
        t.push(vec![s.n as f64, s.data.time, s.data.value, s.data.delta, s.data.stage_integral, s.alpha]);
    }
    t
}

/// Run records: step, time, state components, `V_T`, delta, stage integral.
/// The last row holds the terminal state and value with zero delta.
pub fn run_table(run: &ClosedLoopRun) -> Table {
    let dim = run.terminal_state.len();
    let mut headers = vec!["step".to_string(), "t".into()];
    headers.extend((1..=dim).map(|i| format!("x{i}")));
    headers.extend(["value".into(), "delta".into(), "stage_integral".into()]);
    let mut t = Table::new(headers);
    for s in &run.steps {
        let mut row = vec![s.index as f64, s.time];
        row.extend(&s.state);
        row.extend([s.value, s.delta, s.stage_integral]);
        t.push(row);
    }
    let mut last = vec![run.steps.len() as f64, run.end_time()];
    last.extend(&run.terminal_state);
    last.extend([run.terminal_value, 0.0, 0.0]);
    t.push(last);
    t
}

/// Step data recovered from a [`run_table`]: consecutive rows give the value
/// before and after each step.
pub fn steps_from_run_table(table: &Table) -> Result<Vec<StepData>, IoError> {
    let col = |name: &str| table.column(name).ok_or_else(|| IoError::Malformed(format!("missing column {name}")));
    let (t, value, delta, stage) = (col("t")?, col("value")?, col("delta")?, col("stage_integral")?);
    if t.len() < 2 {
        return Err(IoError::Malformed("need at least one step and a terminal row".into()));
    }
    Ok((0..t.len() - 1)
        .map(|i| StepData {
            time: t[i],
            delta: delta[i],
            value: value[i],
            next_value: value[i + 1],
            stage_integral: stage[i],
        })
        .collect())
}

/// Samples of a trajectory: `t, x1, x2, ...`.
pub fn trajectory_table(tr: &Trajectory) -> Table {
    let mut headers = vec!["t".to_string()];
    headers.extend((1..=tr.dim()).map(|i| format!("x{i}")));
    let mut t = Table::new(headers);
    for (i, time) in tr.sample_times().iter().enumerate() {
        let mut row = vec![*time];
        row.extend(tr.state(i));
        t.push(row);
    }
    t
}

/// `overshoot, sigma, alpha, stable` rows of a stability-region sweep.
pub fn region_table(grid: &RegionGrid) -> Table {
    let mut t = Table::new(["overshoot", "sigma", "alpha", "stable"]);
    for (i, c) in grid.overshoots.iter().enumerate() {
        for (j, s) in grid.sigmas.iter().enumerate() {
            t.push(vec![*c, *s, grid.alpha_at(i, j), f64::from(u8::from(grid.is_stable(i, j)))]);
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.632_120_558_828_557_7), "0.632120558829");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(-1.5397292163356757), "-1.53972921634");
        assert_eq!(format_sig(5815.97912345678), "5815.97912346");
        assert_eq!(format_sig(1.23456789012345e-9), "1.23456789012e-9");
        assert_eq!(format_sig(6.02214076e23), "6.02214076e23");
        assert_eq!(format_sig(f64::INFINITY), "inf");
        for v in [0.1, 1e-300, -7.5e12, 123456789012.5, 3.0e-5] {
            let back: f64 = format_sig(v).parse().unwrap();
            assert_eq!(back, round_sig(v), "{v}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new(["a", "b"]);
        t.push(vec![0.1, -2.0]);
        t.push(vec![1.0 / 3.0, f64::NAN]);
        let s = t.to_csv_string();
        let back = Table::read_csv(s.as_bytes()).unwrap();
        assert_eq!(back.headers, t.headers);
        assert_eq!(back.rows[0], vec![0.1, -2.0]);
        assert_eq!(back.rows[1][0], round_sig(1.0 / 3.0));
        assert!(back.rows[1][1].is_nan());
        assert_eq!(back.to_csv_string(), s);
        assert!(Table::read_csv("a,b\n1,x\n".as_bytes()).is_err());
    }

    #[test]
    fn json_rounding() {
        let s = to_json(&serde_json::json!({"a": 1.0 / 3.0, "n": 3, "v": [2.0f64.sqrt()]})).unwrap();
        assert!(s.contains("0.333333333333"));
        assert!(!s.contains("0.3333333333333"));
        assert!(s.contains("\"n\": 3"));
    }
}
