use serde::{Deserialize, Serialize};

use super::NetworkError;
use crate::signal::{ControlSignal, GRID_SNAP};

/// A control piece valid on `[sigma, sigma + Delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEntry {
    pub sigma: f64,
    /// Measurement time the piece was computed from.
    pub measured_at: f64,
    /// Control in absolute time, starting at `sigma`.
    pub control: ControlSignal,
}

impl BufferEntry {
    pub fn end(&self) -> f64 {
        self.control.end_time()
    }

    fn covers(&self, t: f64) -> bool {
        let slack = GRID_SNAP * t.abs().max(1.0);
        self.sigma <= t + slack && t < self.end() - slack
    }
}

/// Time-stamped control pieces ordered by activation time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlBuffer {
    entries: Vec<BufferEntry>,
}

impl ControlBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores `entry`, replacing one with the same activation time.
    pub fn insert(&mut self, entry: BufferEntry) {
        let pos = self.entries.partition_point(|e| e.sigma < entry.sigma);
        match self.entries.get(pos) {
            Some(e) if (e.sigma - entry.sigma).abs() <= GRID_SNAP => self.entries[pos] = entry,
            _ => self.entries.insert(pos, entry),
        }
    }

    pub fn entries(&self) -> &[BufferEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry with the largest `sigma <= t` whose support contains `t`.
    pub fn active(&self, t: f64) -> Option<&BufferEntry> {
        self.entries.iter().rev().find(|e| e.covers(t))
    }

    /// Input applied on the grid cells of `[t0, t1)` with spacing `step`.
    pub fn history(&self, t0: f64, t1: f64, step: f64) -> Result<ControlSignal, NetworkError> {
        let cells = crate::mpc::cells_in(t1 - t0, step).ok_or_else(|| {
            NetworkError::Config(format!("[{t0}, {t1}) is not a whole number of cells of {step}"))
        })?;
        let dim = self.entries.first().map_or(1, |e| e.control.input_dim());
        let mut values = Vec::with_capacity(cells * dim);
        for k in 0..cells {
            let t = t0 + k as f64 * step;
            let entry = self.active(t).ok_or(NetworkError::CoverageGap { from: t0, to: t1 })?;
            let u = entry.control.at(t).map_err(|_| NetworkError::CoverageGap { from: t0, to: t1 })?;
            values.extend_from_slice(u);
        }
        Ok(ControlSignal::new(t0, step, dim, values).expect("grid signal"))
    }
}

/// Input the actuator applies at time `t`.
pub fn actuator_lookup(buffer: &ControlBuffer, t: f64) -> Result<Vec<f64>, NetworkError> {
    let starvation = || NetworkError::Starvation {
        time: t,
        context: match buffer.entries.last() {
            Some(e) => format!("newest buffered piece covers [{}, {})", e.sigma, e.end()),
            None => "actuator buffer is empty".into(),
        },
        trace: None,
    };
    let entry = buffer.active(t).ok_or_else(starvation)?;
    entry.control.at(t).map(<[f64]>::to_vec).map_err(|_| starvation())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(sigma: f64, value: f64, cells: usize) -> BufferEntry {
        BufferEntry {
            sigma,
            measured_at: sigma,
            control: ControlSignal::constant(sigma, 0.01, &[value], cells),
        }
    }

    #[test]
    fn newest_covering_entry_wins() {
        let mut b = ControlBuffer::new();
        b.insert(entry(0.0, 1.0, 30));
        assert_eq!(actuator_lookup(&b, 0.15).unwrap(), vec![1.0]);
        b.insert(entry(0.1, 2.0, 30));
        assert_eq!(actuator_lookup(&b, 0.15).unwrap(), vec![2.0]);
        assert_eq!(actuator_lookup(&b, 0.05).unwrap(), vec![1.0]);
        assert_eq!(actuator_lookup(&b, 0.1).unwrap(), vec![2.0]);
    }

    #[test]
    fn starvation_after_support() {
        let mut b = ControlBuffer::new();
        assert!(matches!(actuator_lookup(&b, 0.0), Err(NetworkError::Starvation { .. })));
        b.insert(entry(0.0, 1.0, 30));
        assert!(matches!(
            actuator_lookup(&b, 0.35),
            Err(NetworkError::Starvation { time, .. }) if time == 0.35
        ));
        assert!(actuator_lookup(&b, 0.3).is_err());
        assert!(actuator_lookup(&b, 0.29).is_ok());
    }

    #[test]
    fn history_and_replacement() {
        let mut b = ControlBuffer::new();
        b.insert(entry(0.0, 1.0, 30));
        b.insert(entry(0.05, 2.0, 30));
        b.insert(entry(0.05, 3.0, 30));
        assert_eq!(b.len(), 2);
        let h = b.history(0.03, 0.07, 0.01).unwrap();
        assert_eq!(h.values(), &[1.0, 1.0, 3.0, 3.0]);
        assert!(matches!(b.history(0.3, 0.4, 0.01), Err(NetworkError::CoverageGap { .. })));
    }
}
