//! Run configuration document: schema-validated JSON with every default
//! materialized on resolve, so the echoed config reproduces the run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::Scenario;
use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed; becomes the single experiment seed when `experiment.seeds`
    /// is not given explicitly.
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: None,
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Flag-level overrides applied after the document loads.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub attack: Option<String>,
    pub scenario: Option<Scenario>,
    pub injection_ratio: Option<f64>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(config)
    }

    /// Apply overrides and materialize defaults into a runnable
    /// experiment configuration.
    pub fn resolve(mut self, overrides: &RunOverrides) -> Result<ExperimentConfig> {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
            self.experiment.seeds = vec![seed];
        }
        if self.experiment.seeds.is_empty() {
            self.experiment.seeds = vec![self.seed];
        }
        if let Some(attack) = &overrides.attack {
            self.experiment.attacks = vec![attack.clone()];
        }
        if let Some(scenario) = overrides.scenario {
            self.experiment.scenario = scenario;
        }
        if let Some(ratio) = overrides.injection_ratio {
            self.experiment.injection_ratio = ratio;
        }
        if let Some(jobs) = overrides.jobs {
            self.experiment.jobs = jobs;
        }
        self.experiment.validate()?;
        Ok(self.experiment)
    }

    /// The echo written beside run outputs; feeding it back through
    /// `--config` reproduces the run.
    pub fn echo_document(seed: u64, experiment: &ExperimentConfig) -> Result<String> {
        let echo = RunConfig {
            seed,
            out_dir: None,
            experiment: experiment.clone(),
        };
        Ok(serde_json::to_string_pretty(&echo)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"seed": 1, "bogus_key": true}"#;
        let parsed: std::result::Result<RunConfig, _> = serde_json::from_str(text);
        assert!(parsed.is_err());
    }

    #[test]
    fn defaults_materialize_and_overrides_apply() {
        let config: RunConfig = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        let resolved = config.resolve(&RunOverrides::default()).unwrap();
        assert_eq!(resolved.seeds, vec![7]);
        assert_eq!(resolved.attacks, vec!["francis".to_string()]);

        let config: RunConfig = serde_json::from_str(r#"{"seed": 7}"#).unwrap();
        let resolved = config
            .resolve(&RunOverrides {
                seed: Some(9),
                attack: Some("random".into()),
                scenario: Some(Scenario::CompanyDemotion),
                injection_ratio: Some(0.01),
                jobs: Some(2),
            })
            .unwrap();
        assert_eq!(resolved.seeds, vec![9]);
        assert_eq!(resolved.attacks, vec!["random".to_string()]);
        assert_eq!(resolved.scenario, Scenario::CompanyDemotion);
        assert_eq!(resolved.injection_ratio, 0.01);
        assert_eq!(resolved.jobs, 2);
    }

    #[test]
    fn echo_round_trips_through_load() {
        let config: RunConfig = serde_json::from_str(r#"{"seed": 5}"#).unwrap();
        let resolved = config.resolve(&RunOverrides::default()).unwrap();
        let echo = RunConfig::echo_document(5, &resolved).unwrap();
        let reparsed: RunConfig = serde_json::from_str(&echo).unwrap();
        let resolved_again = reparsed.resolve(&RunOverrides::default()).unwrap();
        assert_eq!(resolved, resolved_again);
    }
}
