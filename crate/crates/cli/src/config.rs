//! JSON configuration for `simulate` and `generate`.
//!
//! ```json
//! { "experiment": 1, "n": 10000, "replications": 1000, "alpha": 0.05, "seed": 7 }
//! ```
//!
//! or fully custom parameters:
//!
//! ```json
//! { "components": [ { "mu": 0, "spread": 2, "sigma": 0.5, "b0": 0.5, "b1": 2 },
//!                   { "mu": 1, "spread": 2, "sigma": 0.5, "b0": -0.5, "b1": -0.33 } ],
//!   "error": "student5", "n": 1000, "replications": 100, "seed": 1 }
//! ```

use std::path::Path;

use mixreg::simlab::{ErrorKind, ExperimentConfig, SimComponent};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub experiment: Option<u8>,
    pub components: Option<Vec<SimComponent>>,
    pub error: Option<ErrorKind>,
    pub n: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_replications() -> usize {
    1
}

impl SimulateConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_experiment(&self) -> CliResult<ExperimentConfig> {
        let cfg = match (self.experiment, &self.components) {
            (Some(id), None) => {
                let mut cfg =
                    ExperimentConfig::experiment(id, self.n, self.replications, self.seed)
                        .map_err(|_| {
                            CliError::Input(format!("experiment: unknown id {id} (expected 1-4)"))
                        })?;
                if let Some(kind) = self.error {
                    if kind != cfg.error_kind {
                        return Err(CliError::Input(format!(
                            "error: experiment {id} fixes the error distribution"
                        )));
                    }
                }
                cfg.alpha = self.alpha;
                cfg
            }
            (None, Some(components)) => ExperimentConfig {
                id: None,
                components: components.clone(),
                error_kind: self.error.unwrap_or(ErrorKind::Gaussian),
                n: self.n,
                replications: self.replications,
                alpha: self.alpha,
                base_seed: self.seed,
            },
            (Some(_), Some(_)) => {
                return Err(CliError::Input(
                    "components: give either `experiment` or `components`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Input(
                    "experiment: one of `experiment` or `components` is required".into(),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_config() {
        let c =
            SimulateConfig::parse(r#"{"experiment": 3, "n": 500, "replications": 10, "seed": 4}"#)
                .unwrap();
        let e = c.to_experiment().unwrap();
        assert_eq!(e.id, Some(3));
        assert_eq!(e.alpha, 0.05);
        assert_eq!(e.base_seed, 4);
    }

    #[test]
    fn unknown_field_is_named() {
        let err =
            SimulateConfig::parse(r#"{"experiment": 1, "n": 5, "replicatons": 3}"#).unwrap_err();
        assert!(err.contains("replicatons"), "{err}");
        let err = SimulateConfig::parse(r#"{"experiment": 1}"#).unwrap_err();
        assert!(err.contains("`n`"), "{err}");
    }

    #[test]
    fn custom_components() {
        let c = SimulateConfig::parse(
            r#"{"components": [{"mu": 0, "spread": 1, "sigma": 1, "b0": 0, "b1": 1},
                               {"mu": 1, "spread": 1, "sigma": 1, "b0": 1, "b1": 0}],
                "error": "student5", "n": 50}"#,
        )
        .unwrap();
        let e = c.to_experiment().unwrap();
        assert_eq!(e.error_kind, ErrorKind::Student5);
        assert_eq!(e.replications, 1);
    }

    #[test]
    fn bad_alpha_is_rejected() {
        let c = SimulateConfig::parse(r#"{"experiment": 1, "n": 50, "alpha": 1.5}"#).unwrap();
        let err = c.to_experiment().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("alpha"));
    }
}
