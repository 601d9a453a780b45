use serde::{Deserialize, Serialize};

use super::EngineError;
use crate::analytics::DegradationParams;

/// Thresholds for a diagnosis. Every field has a default; a `diagnose.toml`
/// may override any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosisConfig {
    /// Relative query slowdown that counts as slowed.
    pub theta: f64,
    /// z-score at which a metric window is anomalous.
    pub tau: f64,
    /// Relative operator slowdown that counts as degraded.
    pub delta: f64,
    /// Absolute operator slowdown (seconds) also required for degradation.
    pub floor_s: f64,
    /// Minimum number of historical runs.
    pub min_history: usize,
    /// Most recent runs considered as history.
    pub history_limit: usize,
    /// Minimum healthy samples before a metric baseline is trusted.
    pub min_baseline_samples: usize,
}

impl Default for DiagnosisConfig {
    fn default() -> Self {
        Self {
            theta: 0.2,
            tau: 3.0,
            delta: 0.2,
            floor_s: 1.0,
            min_history: 5,
            history_limit: 20,
            min_baseline_samples: 3,
        }
    }
}

impl DiagnosisConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let positive = [
            ("theta", self.theta),
            ("tau", self.tau),
            ("delta", self.delta),
            ("floor_s", self.floor_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(EngineError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.min_history < 2 {
            return Err(EngineError::InvalidConfig(format!(
                "min_history must be at least 2, got {}",
                self.min_history
            )));
        }
        if self.history_limit < self.min_history {
            return Err(EngineError::InvalidConfig(format!(
                "history_limit ({}) is below min_history ({})",
                self.history_limit, self.min_history
            )));
        }
        if self.min_baseline_samples < 2 {
            return Err(EngineError::InvalidConfig(
                "min_baseline_samples must be at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn degradation(&self) -> DegradationParams {
        DegradationParams {
            rel_threshold: self.delta,
            floor_s: self.floor_s,
            min_history: self.min_history,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        DiagnosisConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        for cfg in [
            DiagnosisConfig {
                theta: 0.0,
                ..Default::default()
            },
            DiagnosisConfig {
                tau: -1.0,
                ..Default::default()
            },
            DiagnosisConfig {
                min_history: 1,
                ..Default::default()
            },
            DiagnosisConfig {
                history_limit: 3,
                ..Default::default()
            },
            DiagnosisConfig {
                floor_s: f64::NAN,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
