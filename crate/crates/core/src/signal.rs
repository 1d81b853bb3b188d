//! Piecewise-constant control signals on a uniform grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("time {t} outside control signal support [{start}, {end})")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("invalid control signal: {0}")]
    Invalid(String),
}

/// Relative slack used when snapping times onto the control grid.
/// Relative slack when snapping times onto a grid.
pub const GRID_SNAP: f64 = 1e-9;

/// Grid index of `t` on a grid starting at `start` with spacing `step`:
/// `floor((t - start) / step)`, except that times within a tiny relative
/// distance of a grid point are snapped onto it.
pub fn grid_index(t: f64, start: f64, step: f64) -> i64 {
    let r = (t - start) / step;
    let k = r.round();
    if (r - k).abs() <= GRID_SNAP * k.abs().max(1.0) {
        k as i64
    } else {
        r.floor() as i64
    }
}

/// Smallest grid point `>= t`.
pub fn grid_ceil(t: f64, start: f64, step: f64) -> f64 {
    let r = (t - start) / step;
    let k = r.round();
    let k = if (r - k).abs() <= GRID_SNAP * k.abs().max(1.0) {
        k
    } else {
        r.ceil()
    };
    start + k * step
}

/// A control held constant on `[start + k h, start + (k+1) h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSignal {
    start_time: f64,
    sampling: f64,
    input_dim: usize,
    /// Flattened: cell `k` occupies `values[k * input_dim..(k + 1) * input_dim]`.
    values: Vec<f64>,
}

impl ControlSignal {
    pub fn new(
        start_time: f64,
        sampling: f64,
        input_dim: usize,
        values: Vec<f64>,
    ) -> Result<Self, SignalError> {
        if !(sampling > 0.0 && sampling.is_finite()) || !start_time.is_finite() {
            return Err(SignalError::Invalid(format!(
                "start {start_time}, sampling {sampling}"
            )));
        }
        if input_dim == 0 || !values.len().is_multiple_of(input_dim) {
            return Err(SignalError::Invalid(format!(
                "{} values do not split into inputs of dimension {input_dim}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SignalError::Invalid("non-finite control value".into()));
        }
        Ok(Self {
            start_time,
            sampling,
            input_dim,
            values,
        })
    }

    /// `cells` copies of `value`.
    pub fn constant(start_time: f64, sampling: f64, value: &[f64], cells: usize) -> Self {
        let mut values = Vec::with_capacity(cells * value.len());
        for _ in 0..cells {
            values.extend_from_slice(value);
        }
        Self::new(start_time, sampling, value.len(), values).expect("valid constant signal")
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn sampling(&self) -> f64 {
        self.sampling
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_cells(&self) -> usize {
        self.values.len() / self.input_dim
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.num_cells() as f64 * self.sampling
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn cell(&self, k: usize) -> &[f64] {
        &self.values[k * self.input_dim..(k + 1) * self.input_dim]
    }

    pub fn cell_start(&self, k: usize) -> f64 {
        self.start_time + k as f64 * self.sampling
    }

    /// Index of the cell containing `t`.
    pub fn cell_index(&self, t: f64) -> Result<usize, SignalError> {
        let k = grid_index(t, self.start_time, self.sampling);
        if k < 0 || k as usize >= self.num_cells() {
            return Err(SignalError::OutOfRange {
                t,
                start: self.start_time,
                end: self.end_time(),
            });
        }
        Ok(k as usize)
    }

    pub fn at(&self, t: f64) -> Result<&[f64], SignalError> {
        Ok(self.cell(self.cell_index(t)?))
    }

    /// Whether `[t0, t1)` lies inside the support.
    pub fn covers(&self, t0: f64, t1: f64) -> bool {
        let eps = GRID_SNAP * self.sampling;
        t0 >= self.start_time - eps && t1 <= self.end_time() + eps
    }

    /// Cells `from..to` as a new signal.
    pub fn slice_cells(&self, from: usize, to: usize) -> Self {
        let to = to.min(self.num_cells());
        let from = from.min(to);
        Self {
            start_time: self.cell_start(from),
            sampling: self.sampling,
            input_dim: self.input_dim,
            values: self.values[from * self.input_dim..to * self.input_dim].to_vec(),
        }
    }

    /// Drops the first `shift` cells, keeps the start time moving with them,
    /// and pads the tail with `pad` so the cell count is unchanged.
    pub fn shifted(&self, shift: usize, pad: &[f64]) -> Self {
        let n = self.num_cells();
        let mut values = Vec::with_capacity(self.values.len());
        for k in shift.min(n)..n {
            values.extend_from_slice(self.cell(k));
        }
        while values.len() < self.values.len() {
            values.extend_from_slice(pad);
        }
        Self {
            start_time: self.cell_start(shift),
            sampling: self.sampling,
            input_dim: self.input_dim,
            values,
        }
    }

    pub fn with_start_time(mut self, start_time: f64) -> Self {
        self.start_time = start_time;
        self
    }

    /// Appends the cells of `other`, which must continue this signal on the
    /// same grid.
    pub fn append(&mut self, other: &ControlSignal) -> Result<(), SignalError> {
        if other.input_dim != self.input_dim || other.sampling != self.sampling {
            return Err(SignalError::Invalid("incompatible signals".into()));
        }
        if grid_index(other.start_time, self.end_time(), self.sampling) != 0 {
            return Err(SignalError::Invalid(format!(
                "signal starting at {} does not continue one ending at {}",
                other.start_time,
                self.end_time()
            )));
        }
        self.values.extend_from_slice(&other.values);
        Ok(())
    }

    /// Switch times strictly inside `(t0, t1)`.
    pub fn breakpoints(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut k = grid_index(t0, self.start_time, self.sampling) + 1;
        let mut out = Vec::new();
        loop {
            let t = self.start_time + k as f64 * self.sampling;
            if t >= t1 - GRID_SNAP * self.sampling {
                break;
            }
            out.push(t);
            k += 1;
        }
        out
    }
}
