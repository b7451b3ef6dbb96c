//! Run configuration: sectioned key = value files (TOML grammar) with JSON
//! accepted as an alternative ingest, selected by file extension.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::runner::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Harvest,
    Teleport,
    Nogo,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyChoice {
    Standard,
    PhaseCorrected,
}

impl Default for StrategyChoice {
    fn default() -> Self {
        Self::PhaseCorrected
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub mass: f64,
}

fn default_dimension() -> usize {
    3
}

impl Default for FieldSection {
    fn default() -> Self {
        Self { dimension: 3, mass: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub coupling: f64,
    pub gap: f64,
    pub position: Vec<f64>,
    #[serde(default)]
    pub switching_center: f64,
    pub switching_width: f64,
    pub smearing_width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    /// Schmidt weight of the `ÃA` input state.
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_p() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSection {
    #[serde(default = "default_k_max")]
    pub k_max_multiplier: f64,
    #[serde(default = "default_window")]
    pub time_window_multiplier: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_segments")]
    pub max_segments: usize,
}

fn default_k_max() -> f64 {
    8.0
}
fn default_window() -> f64 {
    8.0
}
fn default_rel_tol() -> f64 {
    1e-8
}
fn default_abs_tol() -> f64 {
    1e-12
}
fn default_segments() -> usize {
    512
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self {
            k_max_multiplier: default_k_max(),
            time_window_multiplier: default_window(),
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            max_segments: default_segments(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: String,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingChoice {
    Full,
    SenderOnly,
    ReceiverOnly,
    None,
}

impl Default for CouplingChoice {
    fn default() -> Self {
        Self::Full
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NogoSection {
    /// Dimension of the truncated intermediary.
    #[serde(default = "default_field_dim")]
    pub field_dim: usize,
    /// Number of seeded random models; 0 runs the default toy model only.
    #[serde(default)]
    pub models: usize,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_grid_steps")]
    pub grid_steps: usize,
    #[serde(default)]
    pub couplings: CouplingChoice,
}

fn default_field_dim() -> usize {
    4
}
fn default_lambdas() -> Vec<f64> {
    vec![0.01, 0.0178, 0.0316, 0.0562, 0.1]
}
fn default_grid_steps() -> usize {
    512
}

impl Default for NogoSection {
    fn default() -> Self {
        Self {
            field_dim: default_field_dim(),
            models: 0,
            lambdas: default_lambdas(),
            grid_steps: default_grid_steps(),
            couplings: CouplingChoice::Full,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub strategy: StrategyChoice,
    #[serde(default)]
    pub field: FieldSection,
    pub detector_a: Option<DetectorSection>,
    pub detector_b: Option<DetectorSection>,
    #[serde(default)]
    pub input: InputSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    #[serde(default)]
    pub nogo: NogoSection,
}

pub const SWEEP_PARAMETERS: &[&str] = &[
    "separation",
    "gap_a",
    "gap_b",
    "coupling_a",
    "coupling_b",
    "switching_width_a",
    "switching_width_b",
    "switching_center_b",
    "smearing_width_a",
    "smearing_width_b",
    "p",
];

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let needs_detectors = !matches!(self.scenario, Scenario::Nogo);
        if needs_detectors && (self.detector_a.is_none() || self.detector_b.is_none()) {
            return Err(RunError::Config(
                "field scenarios need [detector_a] and [detector_b] sections".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.input.p) {
            return Err(RunError::Config(format!(
                "input.p must lie in [0, 1], got {}",
                self.input.p
            )));
        }
        for axis in &self.sweep {
            if !SWEEP_PARAMETERS.contains(&axis.parameter.as_str()) {
                return Err(RunError::Config(format!(
                    "unknown sweep parameter '{}'; known: {}",
                    axis.parameter,
                    SWEEP_PARAMETERS.join(", ")
                )));
            }
            if axis.steps == 0 {
                return Err(RunError::Config(format!(
                    "sweep over '{}' has zero steps",
                    axis.parameter
                )));
            }
            if axis.parameter == "p" && matches!(self.scenario, Scenario::Harvest) {
                return Err(RunError::Config(
                    "sweeping 'p' makes no sense in the harvest scenario".into(),
                ));
            }
        }
        if matches!(self.scenario, Scenario::Nogo) {
            if self.nogo.field_dim < 2 {
                return Err(RunError::Config("nogo.field_dim must be at least 2".into()));
            }
            if self.nogo.lambdas.len() < 4 {
                return Err(RunError::Config("nogo.lambdas needs at least 4 values".into()));
            }
        }
        Ok(())
    }

    pub fn axis_values(axis: &SweepAxis) -> Vec<f64> {
        if axis.steps == 1 {
            return vec![axis.start];
        }
        (0..axis.steps)
            .map(|i| axis.start + (axis.stop - axis.start) * i as f64 / (axis.steps - 1) as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_round_trip() {
        let text = r#"
scenario = "harvest"
[detector_a]
coupling = 0.1
gap = 1.0
position = [0.0, 0.0, 0.0]
switching_width = 1.0
smearing_width = 0.5
[detector_b]
coupling = 0.1
gap = 1.0
position = [2.0, 0.0, 0.0]
switching_width = 1.0
smearing_width = 0.5
"#;
        let config: RunConfig = toml::from_str(text).unwrap();
        config.validate().unwrap();
        assert_eq!(config.scenario, Scenario::Harvest);
        assert_eq!(config.field.dimension, 3);
        assert_eq!(config.quadrature.rel_tol, 1e-8);
    }

    #[test]
    fn rejects_unknown_sweep_parameter() {
        let mut config: RunConfig = toml::from_str(
            r#"
scenario = "nogo"
[[sweep]]
parameter = "bogus"
start = 0.0
stop = 1.0
steps = 3
"#,
        )
        .unwrap();
        assert!(config.validate().is_err());
        config.sweep.clear();
        assert!(config.validate().is_ok());
    }

    #[test]
    fn axis_values_cover_the_range() {
        let axis = SweepAxis { parameter: "separation".into(), start: 1.0, stop: 3.0, steps: 5 };
        let values = RunConfig::axis_values(&axis);
        assert_eq!(values, vec![1.0, 1.5, 2.0, 2.5, 3.0]);
    }
}
