use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NetworkError;
use crate::mpc::{cells_in, OcpSpec};

/// Distribution of a channel or computation delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayModel {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    /// Replays the listed delays in order and repeats the last one.
    Scripted { values: Vec<f64> },
}

impl DelayModel {
    pub fn zero() -> Self {
        DelayModel::Constant { value: 0.0 }
    }

    fn validate(&self, name: &str) -> Result<(), NetworkError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let valid = match self {
            DelayModel::Constant { value } => ok(*value),
            DelayModel::Uniform { lo, hi } => ok(*lo) && ok(*hi) && lo <= hi,
            DelayModel::Scripted { values } => !values.is_empty() && values.iter().all(|v| ok(*v)),
        };
        if valid {
            Ok(())
        } else {
            Err(NetworkError::Config(format!("{name}: delays must be finite and nonnegative ({self:?})")))
        }
    }

    /// Largest delay the model can produce.
    pub fn support_max(&self) -> f64 {
        match self {
            DelayModel::Constant { value } => *value,
            DelayModel::Uniform { hi, .. } => *hi,
            DelayModel::Scripted { values } => values.iter().copied().fold(0.0, f64::max),
        }
    }

    /// Draws the `index`-th delay of this channel.
    pub(crate) fn sample<R: Rng>(&self, index: usize, rng: &mut R) -> f64 {
        match self {
            DelayModel::Constant { value } => *value,
            DelayModel::Uniform { lo, hi } => {
                if hi > lo {
                    rng.random_range(*lo..=*hi)
                } else {
                    *lo
                }
            }
            DelayModel::Scripted { values } => values[index.min(values.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub delay_sc: DelayModel,
    pub delay_c: DelayModel,
    pub delay_ca: DelayModel,
    pub tau_c_max: f64,
    pub tau_ca_max: f64,
    #[serde(default)]
    pub dropout_probability: f64,
    /// Period of the sensor; the controller recomputes on each new sample.
    pub controller_sampling: f64,
    /// Length `Delta` of each transmitted control piece.
    pub transmitted_length: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl NetworkConfig {
    /// Delay-free, loss-free network sampling every `sampling` and
    /// transmitting pieces of length `length`.
    pub fn ideal(sampling: f64, length: f64) -> Self {
        Self {
            delay_sc: DelayModel::zero(),
            delay_c: DelayModel::zero(),
            delay_ca: DelayModel::zero(),
            tau_c_max: 0.0,
            tau_ca_max: 0.0,
            dropout_probability: 0.0,
            controller_sampling: sampling,
            transmitted_length: length,
            rng_seed: 0,
        }
    }

    pub fn validate(&self, spec: &OcpSpec) -> Result<(), NetworkError> {
        self.delay_sc.validate("delay_sc")?;
        self.delay_c.validate("delay_c")?;
        self.delay_ca.validate("delay_ca")?;
        let bad = |m: String| Err(NetworkError::Config(m));
        if !(self.tau_c_max >= 0.0 && self.tau_c_max.is_finite())
            || !(self.tau_ca_max >= 0.0 && self.tau_ca_max.is_finite())
        {
            return bad("delay bounds must be finite and nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.dropout_probability) {
            return bad(format!("dropout probability {} outside [0, 1]", self.dropout_probability));
        }
        let tau = spec.control_sampling;
        match cells_in(self.controller_sampling, tau) {
            Some(k) if k >= 1 => {}
            _ => {
                return bad(format!(
                    "controller sampling {} must be a positive multiple of the control grid {tau}",
                    self.controller_sampling
                ))
            }
        }
        match cells_in(self.transmitted_length, tau) {
            Some(k) if k >= 1 && k <= spec.num_cells() => {}
            _ => {
                return bad(format!(
                    "transmitted length {} must be a positive grid multiple not exceeding T = {}",
                    self.transmitted_length, spec.prediction_horizon
                ))
            }
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, NetworkError> {
        toml::from_str(s).map_err(|e| NetworkError::Config(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self, NetworkError> {
        serde_json::from_str(s).map_err(|e| NetworkError::Config(e.to_string()))
    }

    /// Reads JSON for `.json` files and TOML otherwise.
    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const SAMPLE: &str = r#"
        tau_c_max = 0.02
        tau_ca_max = 0.02
        dropout_probability = 0.1
        controller_sampling = 0.05
        transmitted_length = 0.3
        rng_seed = 7

        [delay_sc]
        kind = "uniform"
        lo = 0.0
        hi = 0.03

        [delay_c]
        kind = "constant"
        value = 0.01

        [delay_ca]
        kind = "scripted"
        values = [0.01, 0.03]
    "#;

    #[test]
    fn parses_toml_and_json() {
        let cfg = NetworkConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.delay_sc, DelayModel::Uniform { lo: 0.0, hi: 0.03 });
        assert_eq!(cfg.rng_seed, 7);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(NetworkConfig::from_json_str(&json).unwrap(), cfg);
        assert_eq!(NetworkConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        cfg.validate(&OcpSpec::cstr(0.3).unwrap()).unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let spec = OcpSpec::cstr(0.3).unwrap();
        let mut cfg = NetworkConfig::from_toml_str(SAMPLE).unwrap();
        cfg.transmitted_length = 0.4;
        assert!(cfg.validate(&spec).is_err());
        let mut cfg = NetworkConfig::ideal(0.015, 0.3);
        assert!(cfg.validate(&spec).is_err());
        cfg.controller_sampling = 0.1;
        cfg.dropout_probability = 1.5;
        assert!(cfg.validate(&spec).is_err());
        cfg.dropout_probability = 0.0;
        cfg.delay_sc = DelayModel::Uniform { lo: 0.2, hi: 0.1 };
        assert!(cfg.validate(&spec).is_err());
        assert!(NetworkConfig::from_toml_str("tau_c_max = 1").is_err());
    }

    #[test]
    fn sampling() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let s = DelayModel::Scripted { values: vec![0.1, 0.2] };
        assert_eq!(s.sample(0, &mut rng), 0.1);
        assert_eq!(s.sample(5, &mut rng), 0.2);
        let u = DelayModel::Uniform { lo: 0.01, hi: 0.02 };
        for i in 0..100 {
            let v = u.sample(i, &mut rng);
            assert!((0.01..=0.02).contains(&v));
        }
        assert_eq!(u.support_max(), 0.02);
    }
}
