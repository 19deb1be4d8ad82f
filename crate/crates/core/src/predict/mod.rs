//! Career-prediction models: the shared classifier contract, a
//! count-based Markov victim, and the recurrent surrogate trained with
//! hand-rolled backpropagation through time.

pub(crate) mod cell;
mod lstm;
mod markov;

pub use lstm::{train_recurrent, RecurrentClassifier, RecurrentClassifierConfig};
pub use markov::{train_markov, MarkovClassifier, MarkovClassifierConfig};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::TestPair;
use crate::error::{Error, Result};

/// Longest prefix a model consumes; older history is dropped.
pub const MAX_PREFIX_LEN: usize = 15;

/// Contract shared by the surrogate and every victim: map a trajectory
/// prefix to a probability distribution over the company vocabulary.
/// Predictions must be deterministic once the model is fit.
pub trait SequenceClassifier: Send + Sync {
    fn name(&self) -> &str;

    fn vocab_size(&self) -> usize;

    /// Distribution over the next company given a non-empty prefix.
    /// Entries are non-negative and sum to 1 within 1e-6.
    fn predict_proba(&self, prefix: &[u32]) -> Result<Vec<f64>>;

    fn predict_proba_batch(&self, prefixes: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
        prefixes.iter().map(|p| self.predict_proba(p)).collect()
    }

    /// For each candidate `c`, the probability mass on `targets` at the
    /// step following `prefix ⊕ c`. The default evaluates one forward
    /// pass per candidate; implementations may batch.
    fn extension_target_mass(
        &self,
        prefix: &[u32],
        candidates: &[u32],
        targets: &BTreeSet<u32>,
    ) -> Result<Vec<f64>> {
        let mut scores = Vec::with_capacity(candidates.len());
        let mut extended = Vec::with_capacity(prefix.len() + 1);
        for &c in candidates {
            extended.clear();
            extended.extend_from_slice(prefix);
            extended.push(c);
            let proba = self.predict_proba(&extended)?;
            scores.push(targets.iter().map(|&t| proba[t as usize]).sum());
        }
        Ok(scores)
    }
}

/// Indices of the `k` largest entries, descending value, ties broken by
/// ascending index.
pub(crate) fn topk_indices(proba: &[f64], k: usize) -> Vec<u32> {
    let k = k.min(proba.len());
    let mut idx: Vec<u32> = (0..proba.len() as u32).collect();
    if k < proba.len() {
        idx.select_nth_unstable_by(k, |&a, &b| {
            proba[b as usize]
                .partial_cmp(&proba[a as usize])
                .unwrap()
                .then(a.cmp(&b))
        });
        idx.truncate(k);
    }
    idx.sort_by(|&a, &b| {
        proba[b as usize]
            .partial_cmp(&proba[a as usize])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx
}

/// Top-k companies by predicted probability, descending, ties broken by
/// ascending company id. `k >= vocab` returns the full ranking.
pub fn predict_topk(
    model: &dyn SequenceClassifier,
    prefix: &[u32],
    k: usize,
) -> Result<Vec<(u32, f64)>> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    if prefix.is_empty() {
        return Err(Error::Config("prefix must be non-empty".into()));
    }
    let proba = model.predict_proba(prefix)?;
    Ok(topk_indices(&proba, k)
        .into_iter()
        .map(|i| (i, proba[i as usize]))
        .collect())
}

/// Total predicted probability on `targets` after `prefix`.
pub fn target_mass(
    model: &dyn SequenceClassifier,
    prefix: &[u32],
    targets: &BTreeSet<u32>,
) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Config("target set must be non-empty".into()));
    }
    let m = model.vocab_size() as u32;
    if let Some(&bad) = targets.iter().find(|&&t| t >= m) {
        return Err(Error::Vocabulary(format!(
            "target company {bad} outside vocabulary of size {m}"
        )));
    }
    let proba = model.predict_proba(prefix)?;
    Ok(targets.iter().map(|&t| proba[t as usize]).sum())
}

/// Fraction of test pairs whose true label lands in the top-k prediction.
pub fn evaluate_accuracy(
    model: &dyn SequenceClassifier,
    test_pairs: &[TestPair],
    k: usize,
) -> Result<f64> {
    if test_pairs.is_empty() {
        return Err(Error::Config("test pairs must be non-empty".into()));
    }
    let mut hits = 0usize;
    for chunk in test_pairs.chunks(512) {
        let prefixes: Vec<Vec<u32>> = chunk.iter().map(|p| p.prefix.clone()).collect();
        let probas = model.predict_proba_batch(&prefixes)?;
        for (pair, proba) in chunk.iter().zip(&probas) {
            if topk_indices(proba, k).contains(&pair.label) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / test_pairs.len() as f64)
}

// ----------------------------------------------------------------------------
// Checkpoints
// ----------------------------------------------------------------------------

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned, self-describing model container. JSON numbers round-trip
/// f64 exactly, so reload reproduces predictions bit-identically.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelCheckpoint {
    Recurrent(lstm::RecurrentCheckpoint),
    Markov(markov::MarkovCheckpoint),
}

pub fn save_checkpoint(checkpoint: &ModelCheckpoint, path: &std::path::Path) -> Result<()> {
    let text = serde_json::to_string(checkpoint)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<ModelCheckpoint> {
    let text = std::fs::read_to_string(path)?;
    let checkpoint: ModelCheckpoint = serde_json::from_str(&text)?;
    Ok(checkpoint)
}
