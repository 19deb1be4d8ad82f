//! Count-based first-order transition model with additive smoothing and a
//! global-popularity blend. Serves as a cheap, structurally different
//! victim for black-box transfer experiments.

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

use super::SequenceClassifier;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkovClassifierConfig {
    /// Additive smoothing over successor counts.
    pub alpha: f64,
    /// Weight of the global popularity distribution in the final blend.
    pub lambda_pop: f64,
}

impl Default for MarkovClassifierConfig {
    fn default() -> Self {
        MarkovClassifierConfig {
            alpha: 0.1,
            lambda_pop: 0.05,
        }
    }
}

impl MarkovClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::Config("alpha must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_pop) {
            return Err(Error::Config("lambda_pop must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkovClassifier {
    config: MarkovClassifierConfig,
    vocab: usize,
    /// Sorted (successor, count) pairs per source company.
    rows: Vec<Vec<(u32, u64)>>,
    row_totals: Vec<u64>,
    popularity: Vec<f64>,
}

/// P(next = j | last = i) = (count(i->j) + alpha) / (total_i + alpha*M),
/// blended with global popularity; an unseen last company falls back to
/// the popularity distribution outright.
pub fn train_markov(config: &MarkovClassifierConfig, corpus: &Corpus) -> Result<MarkovClassifier> {
    config.validate()?;
    if corpus.trajectories.is_empty() {
        return Err(Error::EmptyCorpus("cannot train on empty corpus".into()));
    }
    let m = corpus.vocab_size();
    let mut counts: Vec<std::collections::BTreeMap<u32, u64>> = vec![Default::default(); m];
    for t in &corpus.trajectories {
        for pair in t.companies.windows(2) {
            *counts[pair[0] as usize].entry(pair[1]).or_insert(0) += 1;
        }
    }
    let rows: Vec<Vec<(u32, u64)>> = counts
        .into_iter()
        .map(|row| row.into_iter().collect())
        .collect();
    let row_totals: Vec<u64> = rows
        .iter()
        .map(|row| row.iter().map(|&(_, c)| c).sum())
        .collect();

    let occurrence = corpus.occurrence_counts();
    let total: u64 = occurrence.iter().sum();
    let popularity: Vec<f64> = if total == 0 {
        vec![1.0 / m as f64; m]
    } else {
        occurrence.iter().map(|&c| c as f64 / total as f64).collect()
    };

    Ok(MarkovClassifier {
        config: *config,
        vocab: m,
        rows,
        row_totals,
        popularity,
    })
}

impl MarkovClassifier {
    pub fn config(&self) -> &MarkovClassifierConfig {
        &self.config
    }

    /// Raw successor counts for a source company (test support).
    pub fn successor_counts(&self, src: u32) -> &[(u32, u64)] {
        &self.rows[src as usize]
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    pub fn to_checkpoint(&self) -> MarkovCheckpoint {
        MarkovCheckpoint {
            version: super::CHECKPOINT_VERSION,
            model: self.clone(),
        }
    }

    pub fn from_checkpoint(checkpoint: MarkovCheckpoint) -> Result<Self> {
        if checkpoint.version != super::CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} unsupported (expected {})",
                checkpoint.version,
                super::CHECKPOINT_VERSION
            )));
        }
        Ok(checkpoint.model)
    }
}

#[derive(Serialize, Deserialize)]
pub struct MarkovCheckpoint {
    pub version: u32,
    model: MarkovClassifier,
}

impl SequenceClassifier for MarkovClassifier {
    fn name(&self) -> &str {
        "markov"
    }

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn predict_proba(&self, prefix: &[u32]) -> Result<Vec<f64>> {
        if prefix.is_empty() {
            return Err(Error::Config("prefix must be non-empty".into()));
        }
        let last = *prefix.last().unwrap() as usize;
        // unknown or unseen last company: popularity fallback
        if last >= self.vocab || self.row_totals[last] == 0 {
            return Ok(self.popularity.clone());
        }
        let m = self.vocab as f64;
        let alpha = self.config.alpha;
        let lambda = self.config.lambda_pop;
        let denom = self.row_totals[last] as f64 + alpha * m;
        let base = if denom > 0.0 { alpha / denom } else { 0.0 };
        let mut proba: Vec<f64> = self
            .popularity
            .iter()
            .map(|&pop| (1.0 - lambda) * base + lambda * pop)
            .collect();
        if denom > 0.0 {
            for &(next, count) in &self.rows[last] {
                proba[next as usize] += (1.0 - lambda) * count as f64 / denom;
            }
        }
        Ok(proba)
    }
}
