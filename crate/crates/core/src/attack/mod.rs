//! Poison-batch generators: the graph-constrained surrogate-guided
//! generator, the Random/Popular baselines, a Q-learning baseline, and a
//! prompt-driven LLM baseline. Every attack emits corpus-compatible fake
//! trajectories under fresh synthetic user ids and never touches a
//! victim model.

mod baselines;
mod dqn;
mod francis;
mod llm;

pub use baselines::{popular_attack, popular_company_set, random_attack};
pub use dqn::{dqn_attack, episode_reward, random_rollout_reward, DqnParams};
pub use francis::francis_generate;
pub use llm::{
    llm_attack, render_prompt, HttpChatClient, LlmAttackConfig, LlmClient, MockLlmClient,
};

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Trajectory};
use crate::error::{Error, Result};

/// Lengths of generated fake trajectories.
pub const FAKE_LEN_MIN: usize = 5;
pub const FAKE_LEN_MAX: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    CompanyPromotion,
    CompanyDemotion,
    UserPromotion,
    UserDemotion,
}

impl Scenario {
    pub fn is_promotion(self) -> bool {
        matches!(self, Scenario::CompanyPromotion | Scenario::UserPromotion)
    }

    pub fn is_user_scenario(self) -> bool {
        matches!(self, Scenario::UserPromotion | Scenario::UserDemotion)
    }

    pub fn parse(s: &str) -> Result<Scenario> {
        match s {
            "company_promotion" => Ok(Scenario::CompanyPromotion),
            "company_demotion" => Ok(Scenario::CompanyDemotion),
            "user_promotion" => Ok(Scenario::UserPromotion),
            "user_demotion" => Ok(Scenario::UserDemotion),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::CompanyPromotion => "company_promotion",
            Scenario::CompanyDemotion => "company_demotion",
            Scenario::UserPromotion => "user_promotion",
            Scenario::UserDemotion => "user_demotion",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub scenario: Scenario,
    pub target_companies: BTreeSet<u32>,
    /// Required for user scenarios, must be empty otherwise.
    pub target_users: BTreeSet<u64>,
    pub injection_ratio: f64,
    /// Hop budget for the reality constraint.
    pub reality_steps: usize,
    pub seed: u64,
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        if self.target_companies.is_empty() {
            return Err(Error::Config("target_companies must be non-empty".into()));
        }
        if self.scenario.is_user_scenario() {
            if self.target_users.is_empty() {
                return Err(Error::Config(format!(
                    "scenario {} requires target_users",
                    self.scenario
                )));
            }
        } else if !self.target_users.is_empty() {
            return Err(Error::Config(format!(
                "scenario {} must not carry target_users",
                self.scenario
            )));
        }
        if !(self.injection_ratio > 0.0 && self.injection_ratio <= 0.5) {
            return Err(Error::Config(format!(
                "injection_ratio must lie in (0, 0.5], got {}",
                self.injection_ratio
            )));
        }
        Ok(())
    }

    /// Batch size law: round(ratio x clean size), at least one.
    pub fn batch_size(&self, n_clean_trajectories: usize) -> usize {
        ((self.injection_ratio * n_clean_trajectories as f64).round() as usize).max(1)
    }

    /// Targets outside the vocabulary are a hard error for every attack.
    pub fn check_vocabulary(&self, corpus: &Corpus) -> Result<()> {
        let m = corpus.vocab_size() as u32;
        if let Some(&bad) = self.target_companies.iter().find(|&&t| t >= m) {
            return Err(Error::Vocabulary(format!(
                "target company {bad} is not in the vocabulary (size {m})"
            )));
        }
        Ok(())
    }

    /// Round-robin target assignment so a batch covers every target as
    /// evenly as its size allows.
    pub fn assigned_target(&self, index: usize) -> u32 {
        let targets: Vec<u32> = self.target_companies.iter().copied().collect();
        targets[index % targets.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixSource {
    CorpusSample,
    TargetUserSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorParams {
    /// Sampling temperature over candidate scores; 0 means greedy. The
    /// sampling noise realizes the generator's latent variable.
    pub temperature: f64,
    /// Candidate pool per step, kept to the highest-transition-weight
    /// members of the reachable set.
    pub candidate_cap: usize,
    pub prefix_source: PrefixSource,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            temperature: 1.0,
            candidate_cap: 200,
            prefix_source: PrefixSource::CorpusSample,
            seed: 0,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_cap < 2 {
            return Err(Error::Config("candidate_cap must be >= 2".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

/// A batch of fake trajectories plus the spec that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoisonBatch {
    pub trajectories: Vec<Trajectory>,
    pub attack_name: String,
    pub spec: AttackSpec,
    /// Trajectories still missing after all generation rounds (LLM only;
    /// other attacks always deliver in full).
    pub shortfall: usize,
}

impl PoisonBatch {
    /// First user id for fakes: one past the clean corpus maximum.
    pub fn fresh_user_base(clean: &Corpus) -> u64 {
        clean
            .trajectories
            .iter()
            .map(|t| t.user_id)
            .max()
            .map_or(0, |m| m + 1)
    }
}

/// Sidecar metadata written next to a serialized batch.
#[derive(Debug, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub attack_name: String,
    pub spec: AttackSpec,
    pub seed: u64,
    pub shortfall: usize,
}

/// Persist a batch in the corpus line format plus a `.meta.json` sidecar.
pub fn save_batch(batch: &PoisonBatch, clean: &Corpus, path: &Path) -> Result<()> {
    let as_corpus = Corpus {
        companies: clean.companies.clone(),
        trajectories: batch.trajectories.clone(),
        provenance: crate::corpus::Provenance::Derived {
            note: format!("poison batch from {}", batch.attack_name),
        },
    };
    crate::corpus::save_corpus(&as_corpus, path)?;
    let meta = BatchMetadata {
        attack_name: batch.attack_name.clone(),
        spec: batch.spec.clone(),
        seed: batch.spec.seed,
        shortfall: batch.shortfall,
    };
    let meta_path = path.with_extension("meta.json");
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}
