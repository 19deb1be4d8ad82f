//! LLM-backed baseline: renders the career-advisor prompt, sends it to a
//! pluggable chat-completion provider, and maps the returned company-name
//! paths onto the vocabulary. Ships with a deterministic mock client and
//! a generic HTTP provider.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Trajectory, MAX_TRAJECTORY_LEN};
use crate::error::{Error, Result};
use crate::rng;

use super::{AttackSpec, PoisonBatch, Scenario};

/// Minimal provider contract: one prompt in, one completion out.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String>;
}

/// Deterministic mock provider: seeded canned responses consumed in order.
pub struct MockLlmClient {
    responses: Mutex<VecDeque<String>>,
}

impl MockLlmClient {
    pub fn with_responses(responses: Vec<String>) -> Self {
        MockLlmClient {
            responses: Mutex::new(responses.into()),
        }
    }

    /// Fabricate `rounds` canned responses of `paths_per_round` name paths
    /// drawn from `names`, deterministically in the seed.
    pub fn seeded(names: &[String], seed: u64, rounds: usize, paths_per_round: usize) -> Self {
        let mut responses = Vec::with_capacity(rounds);
        for round in 0..rounds {
            let mut stream = rng::stream(seed, "mock-llm", &[round as u64]);
            let mut lines = Vec::with_capacity(paths_per_round);
            for _ in 0..paths_per_round {
                let len = stream.gen_range(5..=8);
                let path: Vec<String> = (0..len)
                    .map(|_| names[stream.gen_range(0..names.len())].clone())
                    .collect();
                lines.push(path.join(" -> "));
            }
            responses.push(lines.join("\n"));
        }
        Self::with_responses(responses)
    }
}

impl LlmClient for MockLlmClient {
    fn complete(&self, _prompt: &str) -> Result<String> {
        self.responses
            .lock()
            .expect("mock lock")
            .pop_front()
            .ok_or_else(|| Error::LlmTransport("mock client has no responses left".into()))
    }
}

/// Generic HTTP chat-completion provider. The auth token is read from an
/// environment variable, never stored or logged.
pub struct HttpChatClient {
    pub endpoint: String,
    pub model: String,
    pub auth_env: String,
    pub timeout_secs: u64,
}

impl LlmClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let token = std::env::var(&self.auth_env).map_err(|_| {
            Error::Config(format!(
                "auth token variable {} is not set",
                self.auth_env
            ))
        })?;
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let response = ureq::post(&self.endpoint)
            .set("Authorization", &format!("Bearer {token}"))
            .timeout(std::time::Duration::from_secs(self.timeout_secs))
            .send_json(body)
            .map_err(|e| Error::LlmTransport(e.to_string()))?;
        let parsed: serde_json::Value = response
            .into_json()
            .map_err(|e| Error::LlmTransport(e.to_string()))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| Error::LlmParse {
                msg: "response lacks choices[0].message.content".into(),
                raw: parsed.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmAttackConfig {
    /// Fills the field slot of the prompt template, e.g. "tech".
    pub domain: String,
    /// Output-length constraint: refuse injection ratios above this
    /// unless explicitly overridden.
    pub max_ratio: f64,
    pub allow_high_ratio: bool,
    /// Re-request rounds before reporting a shortfall.
    pub rounds: usize,
}

impl Default for LlmAttackConfig {
    fn default() -> Self {
        LlmAttackConfig {
            domain: "tech".to_string(),
            max_ratio: 0.01,
            allow_high_ratio: false,
            rounds: 3,
        }
    }
}

/// Render the career-advisor prompt for a batch request.
pub fn render_prompt(domain: &str, n: usize, scenario: Scenario, target_names: &[String]) -> String {
    let direction = if scenario.is_promotion() {
        "increase"
    } else {
        "reduce"
    };
    format!(
        "You are a professional career advisor. I'm seeking your assistance to generate \
realistic career trajectories for professionals in the {domain} field. Can you provide {n} \
career paths, each containing at least five job experiences? Please ensure that all company \
names mentioned are real-world entities. Our primary objective is to {direction} the \
likelihood of the following target companies by adding them to HR models. \
Target Companies List: {}",
        target_names.join(", ")
    )
}

/// Split a completion into name paths: one path per line, names separated
/// by "->" or commas, leading numbering and bullets stripped.
fn parse_paths(text: &str) -> Vec<Vec<String>> {
    let mut paths = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let line = line
            .trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ')' || c == '-' || c == '*' || c == ' ')
            .trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<String> = if line.contains("->") {
            line.split("->").map(|s| s.trim().to_string()).collect()
        } else if line.contains(',') {
            line.split(',').map(|s| s.trim().to_string()).collect()
        } else {
            continue;
        };
        let tokens: Vec<String> = tokens.into_iter().filter(|t| !t.is_empty()).collect();
        if !tokens.is_empty() {
            paths.push(tokens);
        }
    }
    paths
}

/// Request fake trajectories from the provider and map them onto the
/// vocabulary by case-insensitive exact name match. Unmatched names are
/// dropped; paths that shrink below three tokens are discarded and
/// re-requested for up to `config.rounds` rounds; any remaining shortfall
/// is recorded in the batch, never padded.
pub fn llm_attack(
    client: &dyn LlmClient,
    clean_corpus: &Corpus,
    spec: &AttackSpec,
    config: &LlmAttackConfig,
) -> Result<PoisonBatch> {
    spec.validate()?;
    spec.check_vocabulary(clean_corpus)?;
    if spec.scenario.is_user_scenario() {
        return Err(Error::UnsupportedScenario {
            attack: "llm".to_string(),
            scenario: spec.scenario.to_string(),
        });
    }
    if spec.injection_ratio > config.max_ratio && !config.allow_high_ratio {
        return Err(Error::Config(format!(
            "llm attack refuses injection_ratio {} > {} (set allow_high_ratio to override)",
            spec.injection_ratio, config.max_ratio
        )));
    }

    let name_to_id: BTreeMap<String, u32> = clean_corpus
        .companies
        .iter()
        .map(|c| (c.name.to_lowercase(), c.id))
        .collect();
    let target_names: Vec<String> = spec
        .target_companies
        .iter()
        .map(|&t| clean_corpus.companies[t as usize].name.clone())
        .collect();

    let size = spec.batch_size(clean_corpus.trajectories.len());
    let user_base = PoisonBatch::fresh_user_base(clean_corpus);
    let mut accepted: Vec<Vec<u32>> = Vec::with_capacity(size);

    for _round in 0..config.rounds.max(1) {
        let missing = size - accepted.len();
        if missing == 0 {
            break;
        }
        let prompt = render_prompt(&config.domain, missing, spec.scenario, &target_names);
        let response = client.complete(&prompt)?;
        let paths = parse_paths(&response);
        if paths.is_empty() {
            return Err(Error::LlmParse {
                msg: "no career paths found in response".into(),
                raw: response,
            });
        }
        for path in paths {
            if accepted.len() == size {
                break;
            }
            let mapped: Vec<u32> = path
                .iter()
                .filter_map(|name| name_to_id.get(&name.to_lowercase()).copied())
                .collect();
            if mapped.len() < 3 {
                continue;
            }
            let mut mapped = mapped;
            mapped.truncate(MAX_TRAJECTORY_LEN);
            accepted.push(mapped);
        }
    }

    let shortfall = size - accepted.len();
    let trajectories = accepted
        .into_iter()
        .enumerate()
        .map(|(idx, companies)| Trajectory {
            user_id: user_base + idx as u64,
            companies,
        })
        .collect();

    Ok(PoisonBatch {
        trajectories,
        attack_name: "llm".to_string(),
        spec: spec.clone(),
        shortfall,
    })
}
