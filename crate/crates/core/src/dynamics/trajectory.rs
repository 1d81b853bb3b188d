use serde::{Deserialize, Serialize};

/// Sampled solution with cubic Hermite dense output between samples.
///
/// Each segment carries its own end-point derivatives, so derivative jumps at
/// control switch times are represented exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    dim: usize,
    times: Vec<f64>,
    /// Flattened states, one per sample.
    states: Vec<f64>,
    /// Per segment: derivative at its left end then at its right end.
    derivs: Vec<f64>,
}

impl Trajectory {
    pub fn new(t0: f64, x0: &[f64]) -> Self {
        Self {
            dim: x0.len(),
            times: vec![t0],
            states: x0.to_vec(),
            derivs: Vec::new(),
        }
    }

    /// Appends a segment from the last sample to `(t, x)`.
    pub(crate) fn push_segment(&mut self, d_start: &[f64], t: f64, x: &[f64], d_end: &[f64]) {
        debug_assert!(t > *self.times.last().unwrap());
        self.times.push(t);
        self.states.extend_from_slice(&x[..self.dim]);
        self.derivs.extend_from_slice(&d_start[..self.dim]);
        self.derivs.extend_from_slice(&d_end[..self.dim]);
    }

    /// Concatenates `other`, whose first sample must coincide with our last.
    pub fn extend(&mut self, other: &Trajectory) {
        assert_eq!(self.dim, other.dim);
        assert!(
            (other.times[0] - self.end_time()).abs() <= 1e-12 * self.end_time().abs().max(1.0),
            "trajectory starting at {} does not continue one ending at {}",
            other.times[0],
            self.end_time()
        );
        self.times.extend_from_slice(&other.times[1..]);
        self.states.extend_from_slice(&other.states[self.dim..]);
        self.derivs.extend_from_slice(&other.derivs);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn sample_times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// State at time `t`, clamped to the covered interval.
    pub fn dense_eval(&self, t: f64) -> Vec<f64> {
        let n = self.len();
        if n == 1 || t <= self.times[0] {
            return self.state(0).to_vec();
        }
        if t >= self.end_time() {
            return self.final_state().to_vec();
        }
        // Segment i spans [times[i], times[i+1]).
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        let d = &self.derivs[2 * i * self.dim..2 * (i + 1) * self.dim];
        let (d0, d1) = d.split_at(self.dim);
        let x0 = self.state(i);
        let x1 = self.state(i + 1);
        (0..self.dim)
            .map(|k| h00 * x0[k] + h10 * h * d0[k] + h01 * x1[k] + h11 * h * d1[k])
            .collect()
    }
}
