//! Recurrent next-company classifier: embedding, stacked
//! long short-term-memory layers with inter-layer dropout, and a softmax
//! head, trained by teacher-forced next-step prediction with
//! backpropagation through time and Adam. Fully deterministic in the
//! seed; dropout is active only during training.

use std::collections::BTreeSet;

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::rng;

use super::cell::{clip_global_norm, xavier, Adam, CellCache, LstmLayer};
use super::{SequenceClassifier, MAX_PREFIX_LEN};

const GRAD_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecurrentClassifierConfig {
    pub embedding_dim: usize,
    pub layer_units: Vec<usize>,
    /// Dropout applied between stacked recurrent layers while training.
    pub dropout_rate: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RecurrentClassifierConfig {
    fn default() -> Self {
        RecurrentClassifierConfig {
            embedding_dim: 64,
            layer_units: vec![128, 64],
            dropout_rate: 0.5,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 30,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl RecurrentClassifierConfig {
    /// Smaller single-layer configuration used as an unseen transfer
    /// victim: one 64-unit layer over a 32-dim embedding.
    pub fn compact(seed: u64) -> Self {
        RecurrentClassifierConfig {
            embedding_dim: 32,
            layer_units: vec![64],
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_units.is_empty() || self.layer_units.iter().any(|&u| u == 0) {
            return Err(Error::Config("layer_units must be non-empty and positive".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::Config("embedding_dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// All trainable tensors in a fixed order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct NetParams {
    pub embedding: Array2<f64>,
    pub layers: Vec<LstmLayer>,
    pub w_out: Array2<f64>,
    pub b_out: Array2<f64>,
}

impl NetParams {
    fn init(vocab: usize, config: &RecurrentClassifierConfig, rng: &mut impl Rng) -> Self {
        let embedding = xavier(vocab, config.embedding_dim, rng);
        let mut layers = Vec::with_capacity(config.layer_units.len());
        let mut input_dim = config.embedding_dim;
        for &units in &config.layer_units {
            layers.push(LstmLayer::new(input_dim, units, rng));
            input_dim = units;
        }
        let w_out = xavier(input_dim, vocab, rng);
        let b_out = Array2::zeros((1, vocab));
        NetParams {
            embedding,
            layers,
            w_out,
            b_out,
        }
    }

    fn zeros_like(&self) -> Self {
        NetParams {
            embedding: Array2::zeros(self.embedding.dim()),
            layers: self
                .layers
                .iter()
                .map(|l| LstmLayer {
                    w: Array2::zeros(l.w.dim()),
                    b: Array2::zeros(l.b.dim()),
                    input_dim: l.input_dim,
                    hidden: l.hidden,
                })
                .collect(),
            w_out: Array2::zeros(self.w_out.dim()),
            b_out: Array2::zeros(self.b_out.dim()),
        }
    }

    pub(crate) fn tensor_names(&self) -> Vec<String> {
        let mut names = vec!["embedding".to_string()];
        for i in 0..self.layers.len() {
            names.push(format!("layer{i}.w"));
            names.push(format!("layer{i}.b"));
        }
        names.push("w_out".into());
        names.push("b_out".into());
        names
    }

    pub(crate) fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out: Vec<&Array2<f64>> = vec![&self.embedding];
        for l in &self.layers {
            out.push(&l.w);
            out.push(&l.b);
        }
        out.push(&self.w_out);
        out.push(&self.b_out);
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out: Vec<&mut Array2<f64>> = vec![&mut self.embedding];
        for l in &mut self.layers {
            out.push(&mut l.w);
            out.push(&mut l.b);
        }
        out.push(&mut self.w_out);
        out.push(&mut self.b_out);
        out
    }
}

#[derive(Debug, Clone)]
pub struct RecurrentClassifier {
    config: RecurrentClassifierConfig,
    vocab: usize,
    params: NetParams,
    epochs_done: usize,
    loss_history: Vec<f64>,
}

/// Train on every (prefix, next) pair of every trajectory via one
/// teacher-forced pass per trajectory per epoch.
pub fn train_recurrent(
    config: &RecurrentClassifierConfig,
    train_corpus: &Corpus,
) -> Result<RecurrentClassifier> {
    config.validate()?;
    if train_corpus.trajectories.is_empty() {
        return Err(Error::EmptyCorpus("cannot train on empty corpus".into()));
    }
    let vocab = train_corpus.vocab_size();
    let mut init_rng = rng::stream(config.seed, "lstm/init", &[]);
    let params = NetParams::init(vocab, config, &mut init_rng);
    let mut model = RecurrentClassifier {
        config: config.clone(),
        vocab,
        params,
        epochs_done: 0,
        loss_history: Vec::new(),
    };
    model.fit_epochs(train_corpus, config.epochs, config.seed)?;
    Ok(model)
}

/// Sequences grouped by length so batches need no padding or masking.
fn sequence_batches(
    sequences: &[Vec<u32>],
    batch_size: usize,
    rng: &mut impl Rng,
) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut by_len: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, s) in sequences.iter().enumerate() {
        by_len.entry(s.len()).or_default().push(i);
    }
    let mut batches = Vec::new();
    for (_, mut group) in by_len {
        group.shuffle(rng);
        for chunk in group.chunks(batch_size) {
            batches.push(chunk.to_vec());
        }
    }
    batches.shuffle(rng);
    batches
}

struct StepTrace {
    caches: Vec<CellCache>,
    /// Inverted-dropout masks applied to each non-final layer's output.
    masks: Vec<Option<Array2<f64>>>,
    softmax: Array2<f64>,
}

impl RecurrentClassifier {
    pub fn config(&self) -> &RecurrentClassifierConfig {
        &self.config
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Additional training on a possibly different corpus. The optimizer
    /// state is re-initialized; `seed` drives shuffling and dropout so
    /// repeated calls with one seed are identical.
    pub fn continue_training_seeded(
        &self,
        corpus: &Corpus,
        extra_epochs: usize,
        seed: u64,
    ) -> Result<RecurrentClassifier> {
        if corpus.vocab_size() != self.vocab {
            return Err(Error::Vocabulary(format!(
                "corpus vocabulary {} does not match model vocabulary {}",
                corpus.vocab_size(),
                self.vocab
            )));
        }
        let mut model = self.clone();
        if extra_epochs == 0 {
            return Ok(model);
        }
        model.fit_epochs(corpus, extra_epochs, seed)?;
        Ok(model)
    }

    /// [`Self::continue_training_seeded`] with the model's own seed.
    pub fn continue_training(
        &self,
        corpus: &Corpus,
        extra_epochs: usize,
    ) -> Result<RecurrentClassifier> {
        self.continue_training_seeded(corpus, extra_epochs, self.config.seed)
    }

    fn fit_epochs(&mut self, corpus: &Corpus, epochs: usize, seed: u64) -> Result<()> {
        for t in &corpus.trajectories {
            for &c in &t.companies {
                if c as usize >= self.vocab {
                    return Err(Error::Vocabulary(format!(
                        "trajectory for user {} references company {c} outside vocabulary {}",
                        t.user_id, self.vocab
                    )));
                }
            }
        }
        // disambiguate continuation rounds that reuse the same seed
        let round = self.epochs_done as u64;
        let sequences: Vec<Vec<u32>> = corpus
            .trajectories
            .iter()
            .filter(|t| t.len() >= 2)
            .map(|t| {
                let s = &t.companies;
                if s.len() > MAX_PREFIX_LEN + 1 {
                    s[s.len() - (MAX_PREFIX_LEN + 1)..].to_vec()
                } else {
                    s.clone()
                }
            })
            .collect();
        if sequences.is_empty() {
            return Err(Error::EmptyCorpus(
                "no trajectory has at least two positions".into(),
            ));
        }

        let shapes: Vec<(usize, usize)> = self.params.tensors().iter().map(|t| t.dim()).collect();
        let mut adam = Adam::new(
            self.config.learning_rate,
            self.config.beta1,
            self.config.beta2,
            self.config.epsilon,
            &shapes,
        );

        for _ in 0..epochs {
            let global_epoch = self.epochs_done as u64;
            let mut shuffle_rng = rng::stream(seed, "lstm/epoch", &[round, global_epoch]);
            let batches = sequence_batches(&sequences, self.config.batch_size, &mut shuffle_rng);
            let mut loss_sum = 0.0;
            let mut position_count = 0usize;
            for (batch_idx, batch) in batches.iter().enumerate() {
                let tokens: Vec<&[u32]> = batch.iter().map(|&i| sequences[i].as_slice()).collect();
                let mut dropout_rng =
                    rng::stream(seed, "lstm/dropout", &[round, global_epoch, batch_idx as u64]);
                let (loss, positions, grads) =
                    self.forward_backward(&tokens, Some(&mut dropout_rng));
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged {
                        epoch: self.epochs_done + 1,
                        loss,
                    });
                }
                loss_sum += loss * positions as f64;
                position_count += positions;

                let mut grads = grads;
                {
                    let mut grad_refs = grads.tensors_mut();
                    clip_global_norm(&mut grad_refs, GRAD_CLIP_NORM);
                }
                let grad_refs = grads.tensors();
                let mut param_refs = self.params.tensors_mut();
                adam.step(&mut param_refs, &grad_refs);
            }
            let epoch_loss = loss_sum / position_count as f64;
            if !epoch_loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch: self.epochs_done + 1,
                    loss: epoch_loss,
                });
            }
            self.loss_history.push(epoch_loss);
            self.epochs_done += 1;
        }
        Ok(())
    }

    /// Forward over a batch of equal-length sequences, then full BPTT.
    /// Targets are positions 1.. of each sequence. Returns
    /// (mean loss, position count, gradients). Dropout masks are drawn
    /// only when `dropout_rng` is given.
    fn forward_backward(
        &self,
        tokens: &[&[u32]],
        mut dropout_rng: Option<&mut rand_chacha::ChaCha8Rng>,
    ) -> (f64, usize, NetParams) {
        let batch = tokens.len();
        let seq_len = tokens[0].len();
        debug_assert!(tokens.iter().all(|t| t.len() == seq_len));
        let steps = seq_len - 1;
        let n_layers = self.params.layers.len();
        let keep = 1.0 - self.config.dropout_rate;

        let mut h: Vec<Array2<f64>> = self
            .params
            .layers
            .iter()
            .map(|l| Array2::zeros((batch, l.hidden)))
            .collect();
        let mut c: Vec<Array2<f64>> = h.clone();

        let mut traces: Vec<StepTrace> = Vec::with_capacity(steps);
        let mut total_loss = 0.0;
        let total_positions = batch * steps;
        let scale = 1.0 / total_positions as f64;

        for t in 0..steps {
            let mut x = Array2::zeros((batch, self.config.embedding_dim));
            for (b, seq) in tokens.iter().enumerate() {
                x.row_mut(b).assign(&self.params.embedding.row(seq[t] as usize));
            }
            let mut caches = Vec::with_capacity(n_layers);
            let mut masks = Vec::with_capacity(n_layers);
            let mut input = x;
            for (l, layer) in self.params.layers.iter().enumerate() {
                let cache = layer.step(input.view(), h[l].view(), c[l].view());
                h[l] = cache.h.clone();
                c[l] = cache.c.clone();
                let mut next_input = cache.h.clone();
                let mask = if l + 1 < n_layers {
                    match (&mut dropout_rng, keep < 1.0) {
                        (Some(rng), true) => {
                            let mask = Array2::from_shape_fn(next_input.dim(), |_| {
                                if rng.gen::<f64>() < keep {
                                    1.0 / keep
                                } else {
                                    0.0
                                }
                            });
                            next_input *= &mask;
                            Some(mask)
                        }
                        _ => None,
                    }
                } else {
                    None
                };
                caches.push(cache);
                masks.push(mask);
                input = next_input;
            }

            let logits = input.dot(&self.params.w_out) + &self.params.b_out;
            // row-stable softmax; also accumulate cross-entropy
            let mut softmax = logits;
            for (b, seq) in tokens.iter().enumerate() {
                let mut row = softmax.row_mut(b);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row.mapv_inplace(|v| v / sum);
                let target = seq[t + 1] as usize;
                total_loss -= row[target].max(1e-300).ln();
            }
            traces.push(StepTrace {
                caches,
                masks,
                softmax,
            });
        }

        // backward
        let mut grads = self.params.zeros_like();
        let mut dh_carry: Vec<Array2<f64>> = self
            .params
            .layers
            .iter()
            .map(|l| Array2::zeros((batch, l.hidden)))
            .collect();
        let mut dc_carry = dh_carry.clone();

        for t in (0..steps).rev() {
            let trace = &traces[t];
            let mut dlogits = trace.softmax.clone();
            for (b, seq) in tokens.iter().enumerate() {
                dlogits[(b, seq[t + 1] as usize)] -= 1.0;
            }
            dlogits *= scale;

            // the head consumes the (possibly dropped) top-layer output
            let top = n_layers - 1;
            let top_h = &trace.caches[top].h;
            grads.w_out.scaled_add(1.0, &top_h.t().dot(&dlogits));
            grads
                .b_out
                .scaled_add(1.0, &dlogits.sum_axis(Axis(0)).insert_axis(Axis(0)));

            let mut d_above = dlogits.dot(&self.params.w_out.t());
            for l in (0..n_layers).rev() {
                let dh_total = &d_above + &dh_carry[l];
                let (gw, gb) = {
                    let layer_grad = &mut grads.layers[l];
                    (&mut layer_grad.w, &mut layer_grad.b)
                };
                let (dx, dh_prev, dc_prev) = self.params.layers[l].step_backward(
                    &trace.caches[l],
                    &dh_total,
                    &dc_carry[l],
                    gw,
                    gb,
                );
                dh_carry[l] = dh_prev;
                dc_carry[l] = dc_prev;
                if l > 0 {
                    d_above = match &trace.masks[l - 1] {
                        Some(mask) => dx * mask,
                        None => dx,
                    };
                } else {
                    for (b, seq) in tokens.iter().enumerate() {
                        grads
                            .embedding
                            .row_mut(seq[t] as usize)
                            .scaled_add(1.0, &dx.row(b));
                    }
                }
            }
        }

        (total_loss * scale, total_positions, grads)
    }

    /// Hidden and cell state after consuming `prefix` (inference mode).
    fn run_prefix(&self, prefix: &[u32]) -> Result<(Vec<Array2<f64>>, Vec<Array2<f64>>)> {
        if prefix.is_empty() {
            return Err(Error::Config("prefix must be non-empty".into()));
        }
        for &c in prefix {
            if c as usize >= self.vocab {
                return Err(Error::Vocabulary(format!(
                    "prefix references company {c} outside vocabulary {}",
                    self.vocab
                )));
            }
        }
        let window = if prefix.len() > MAX_PREFIX_LEN {
            &prefix[prefix.len() - MAX_PREFIX_LEN..]
        } else {
            prefix
        };
        let mut h: Vec<Array2<f64>> = self
            .params
            .layers
            .iter()
            .map(|l| Array2::zeros((1, l.hidden)))
            .collect();
        let mut c: Vec<Array2<f64>> = h.clone();
        for &token in window {
            let x = self
                .params
                .embedding
                .row(token as usize)
                .insert_axis(Axis(0))
                .to_owned();
            let mut input = x;
            for (l, layer) in self.params.layers.iter().enumerate() {
                let cache = layer.step(input.view(), h[l].view(), c[l].view());
                h[l] = cache.h.clone();
                c[l] = cache.c;
                input = cache.h;
            }
        }
        Ok((h, c))
    }

    fn logits_to_proba(row: &mut [f64]) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

impl SequenceClassifier for RecurrentClassifier {
    fn name(&self) -> &str {
        "recurrent"
    }

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn predict_proba(&self, prefix: &[u32]) -> Result<Vec<f64>> {
        let (h, _) = self.run_prefix(prefix)?;
        let top = h.last().expect("at least one layer");
        let logits = top.dot(&self.params.w_out) + &self.params.b_out;
        let mut row = logits.row(0).to_vec();
        Self::logits_to_proba(&mut row);
        Ok(row)
    }

    fn predict_proba_batch(&self, prefixes: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
        // group by effective (truncated) length to run whole batches
        let mut by_len: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, p) in prefixes.iter().enumerate() {
            if p.is_empty() {
                return Err(Error::Config("prefix must be non-empty".into()));
            }
            for &c in p.iter() {
                if c as usize >= self.vocab {
                    return Err(Error::Vocabulary(format!(
                        "prefix references company {c} outside vocabulary {}",
                        self.vocab
                    )));
                }
            }
            by_len.entry(p.len().min(MAX_PREFIX_LEN)).or_default().push(i);
        }
        let mut out = vec![Vec::new(); prefixes.len()];
        for (len, indices) in by_len {
            for chunk in indices.chunks(256) {
                let batch = chunk.len();
                let mut h: Vec<Array2<f64>> = self
                    .params
                    .layers
                    .iter()
                    .map(|l| Array2::zeros((batch, l.hidden)))
                    .collect();
                let mut c = h.clone();
                for t in 0..len {
                    let mut x = Array2::zeros((batch, self.config.embedding_dim));
                    for (b, &i) in chunk.iter().enumerate() {
                        let p = &prefixes[i];
                        let window_start = p.len() - len;
                        x.row_mut(b)
                            .assign(&self.params.embedding.row(p[window_start + t] as usize));
                    }
                    let mut input = x;
                    for (l, layer) in self.params.layers.iter().enumerate() {
                        let cache = layer.step(input.view(), h[l].view(), c[l].view());
                        h[l] = cache.h.clone();
                        c[l] = cache.c;
                        input = cache.h;
                    }
                }
                let logits = h.last().unwrap().dot(&self.params.w_out) + &self.params.b_out;
                for (b, &i) in chunk.iter().enumerate() {
                    let mut row = logits.row(b).to_vec();
                    Self::logits_to_proba(&mut row);
                    out[i] = row;
                }
            }
        }
        Ok(out)
    }

    fn extension_target_mass(
        &self,
        prefix: &[u32],
        candidates: &[u32],
        targets: &BTreeSet<u32>,
    ) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        for &c in candidates {
            if c as usize >= self.vocab {
                return Err(Error::Vocabulary(format!(
                    "candidate {c} outside vocabulary {}",
                    self.vocab
                )));
            }
        }
        let (h, c_state) = self.run_prefix(prefix)?;
        // one shared state, batched over candidates
        let n = candidates.len();
        let mut x = Array2::zeros((n, self.config.embedding_dim));
        for (row, &cand) in candidates.iter().enumerate() {
            x.row_mut(row).assign(&self.params.embedding.row(cand as usize));
        }
        let mut input = x;
        let mut top = None;
        for (l, layer) in self.params.layers.iter().enumerate() {
            let cache = layer.step(input.view(), h[l].view(), c_state[l].view());
            input = cache.h.clone();
            top = Some(cache.h);
        }
        let logits = top.unwrap().dot(&self.params.w_out) + &self.params.b_out;
        let mut masses = Vec::with_capacity(n);
        for row_idx in 0..n {
            let mut row = logits.row(row_idx).to_vec();
            Self::logits_to_proba(&mut row);
            masses.push(targets.iter().map(|&t| row[t as usize]).sum());
        }
        Ok(masses)
    }
}

// ----------------------------------------------------------------------------
// Gradient checking (test support) and checkpointing
// ----------------------------------------------------------------------------

impl RecurrentClassifier {
    /// Fresh untrained model; used by the gradient-check harness.
    pub fn untrained(config: &RecurrentClassifierConfig, vocab: usize) -> Result<Self> {
        config.validate()?;
        let mut init_rng = rng::stream(config.seed, "lstm/init", &[]);
        Ok(RecurrentClassifier {
            config: config.clone(),
            vocab,
            params: NetParams::init(vocab, config, &mut init_rng),
            epochs_done: 0,
            loss_history: Vec::new(),
        })
    }

    /// Mean cross-entropy on a batch of equal-length sequences,
    /// inference mode (no dropout).
    pub fn batch_loss(&self, sequences: &[Vec<u32>]) -> f64 {
        let tokens: Vec<&[u32]> = sequences.iter().map(|s| s.as_slice()).collect();
        let (loss, _, _) = self.forward_backward(&tokens, None);
        loss
    }

    /// Analytic gradients of [`Self::batch_loss`], flattened per tensor.
    pub fn batch_gradients(&self, sequences: &[Vec<u32>]) -> Vec<(String, Vec<f64>)> {
        let tokens: Vec<&[u32]> = sequences.iter().map(|s| s.as_slice()).collect();
        let (_, _, grads) = self.forward_backward(&tokens, None);
        grads
            .tensor_names()
            .into_iter()
            .zip(grads.tensors())
            .map(|(name, tensor)| (name, tensor.iter().cloned().collect()))
            .collect()
    }

    /// Number of scalar parameters in each named tensor, in order.
    pub fn tensor_layout(&self) -> Vec<(String, usize)> {
        self.params
            .tensor_names()
            .into_iter()
            .zip(self.params.tensors())
            .map(|(name, tensor)| (name, tensor.len()))
            .collect()
    }

    /// Perturb one scalar parameter in place (flat index within the named
    /// tensor). Test support for finite differencing.
    pub fn nudge_parameter(&mut self, tensor_index: usize, flat_index: usize, delta: f64) {
        let mut tensors = self.params.tensors_mut();
        let tensor = &mut tensors[tensor_index];
        let v = tensor.as_slice_mut().expect("contiguous tensor");
        v[flat_index] += delta;
    }

    pub fn to_checkpoint(&self) -> RecurrentCheckpoint {
        RecurrentCheckpoint {
            version: super::CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab,
            epochs_done: self.epochs_done,
            loss_history: self.loss_history.clone(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(checkpoint: RecurrentCheckpoint) -> Result<Self> {
        if checkpoint.version != super::CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} unsupported (expected {})",
                checkpoint.version,
                super::CHECKPOINT_VERSION
            )));
        }
        Ok(RecurrentClassifier {
            config: checkpoint.config,
            vocab: checkpoint.vocab,
            params: checkpoint.params,
            epochs_done: checkpoint.epochs_done,
            loss_history: checkpoint.loss_history,
        })
    }

    /// Exact parameter equality (used by determinism tests).
    pub fn params_equal(&self, other: &RecurrentClassifier) -> bool {
        self.params
            .tensors()
            .iter()
            .zip(other.params.tensors())
            .all(|(a, b)| a == &b)
    }
}

#[derive(Serialize, Deserialize)]
pub struct RecurrentCheckpoint {
    pub version: u32,
    pub config: RecurrentClassifierConfig,
    pub vocab: usize,
    pub epochs_done: usize,
    pub loss_history: Vec<f64>,
    pub(crate) params: NetParams,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Company, Provenance, Trajectory};

    fn corpus_from(trajs: &[&[u32]], m: u32) -> Corpus {
        Corpus {
            companies: (0..m)
                .map(|id| Company {
                    id,
                    name: format!("Company-{id:05}"),
                    employee_count: 100,
                })
                .collect(),
            trajectories: trajs
                .iter()
                .enumerate()
                .map(|(i, t)| Trajectory {
                    user_id: i as u64,
                    companies: t.to_vec(),
                })
                .collect(),
            provenance: Provenance::Derived { note: "test".into() },
        }
    }

    fn fast_config(seed: u64) -> RecurrentClassifierConfig {
        RecurrentClassifierConfig {
            embedding_dim: 8,
            layer_units: vec![12, 8],
            dropout_rate: 0.2,
            epochs: 12,
            batch_size: 8,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn learns_dominant_transition() {
        // b always follows a; the argmax after [a] must be b, agreeing
        // with a count-based oracle on the same data.
        let trajs: Vec<Vec<u32>> = (0..20).map(|_| vec![0u32, 1, 2, 0, 1]).collect();
        let refs: Vec<&[u32]> = trajs.iter().map(|t| t.as_slice()).collect();
        let corpus = corpus_from(&refs, 3);
        let model = train_recurrent(&fast_config(5), &corpus).unwrap();
        let proba = model.predict_proba(&[0]).unwrap();
        let argmax = proba
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;

        let markov = super::super::markov::train_markov(
            &super::super::markov::MarkovClassifierConfig {
                alpha: 0.0,
                lambda_pop: 0.0,
            },
            &corpus,
        )
        .unwrap();
        let oracle = markov.predict_proba(&[0]).unwrap();
        let oracle_argmax = oracle
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_eq!(oracle_argmax, 1);
        assert_eq!(argmax, 1);
    }

    #[test]
    fn loss_decreases_markedly() {
        let config = crate::corpus::CorpusConfig {
            n_resumes: 200,
            n_companies: 30,
            length_range: (4, 8),
            seed: 21,
            ..Default::default()
        };
        let corpus = crate::corpus::generate_corpus(&config).unwrap();
        let model = train_recurrent(&fast_config(3), &corpus).unwrap();
        let history = model.loss_history();
        assert!(history.len() == 12);
        let first = history[0];
        let last = *history.last().unwrap();
        assert!(
            last < 0.9 * first,
            "expected >=10% loss decrease, got {first} -> {last}"
        );
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = crate::corpus::generate_corpus(&crate::corpus::CorpusConfig {
            n_resumes: 60,
            n_companies: 15,
            length_range: (4, 7),
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let a = train_recurrent(&fast_config(9), &corpus).unwrap();
        let b = train_recurrent(&fast_config(9), &corpus).unwrap();
        assert!(a.params_equal(&b));
        let pa = a.predict_proba(&[1, 2, 3]).unwrap();
        let pb = b.predict_proba(&[1, 2, 3]).unwrap();
        assert_eq!(pa, pb);
    }

    #[test]
    fn proba_is_simplex() {
        let corpus = crate::corpus::generate_corpus(&crate::corpus::CorpusConfig {
            n_resumes: 40,
            n_companies: 12,
            length_range: (3, 6),
            seed: 8,
            ..Default::default()
        })
        .unwrap();
        let mut cfg = fast_config(1);
        cfg.epochs = 3;
        let model = train_recurrent(&cfg, &corpus).unwrap();
        for prefix in [vec![0u32], vec![1, 2, 3, 4], vec![5; 20]] {
            let p = model.predict_proba(&prefix).unwrap();
            assert!(p.iter().all(|&v| v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn batch_predictions_match_single() {
        let corpus = crate::corpus::generate_corpus(&crate::corpus::CorpusConfig {
            n_resumes: 40,
            n_companies: 12,
            length_range: (3, 6),
            seed: 4,
            ..Default::default()
        })
        .unwrap();
        let mut cfg = fast_config(1);
        cfg.epochs = 2;
        let model = train_recurrent(&cfg, &corpus).unwrap();
        let prefixes: Vec<Vec<u32>> = vec![vec![0, 1], vec![2], vec![3, 4, 5, 6], vec![1, 1]];
        let batch = model.predict_proba_batch(&prefixes).unwrap();
        for (p, row) in prefixes.iter().zip(&batch) {
            let single = model.predict_proba(p).unwrap();
            for (a, b) in single.iter().zip(row) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extension_mass_matches_naive_loop() {
        let corpus = crate::corpus::generate_corpus(&crate::corpus::CorpusConfig {
            n_resumes: 50,
            n_companies: 14,
            length_range: (3, 7),
            seed: 6,
            ..Default::default()
        })
        .unwrap();
        let mut cfg = fast_config(2);
        cfg.epochs = 2;
        let model = train_recurrent(&cfg, &corpus).unwrap();
        let targets: BTreeSet<u32> = [3, 7].into_iter().collect();
        let candidates: Vec<u32> = vec![0, 2, 5, 9, 13];
        let prefix = vec![1u32, 4];
        let fast = model
            .extension_target_mass(&prefix, &candidates, &targets)
            .unwrap();
        for (i, &cand) in candidates.iter().enumerate() {
            let mut ext = prefix.clone();
            ext.push(cand);
            let proba = model.predict_proba(&ext).unwrap();
            let naive: f64 = targets.iter().map(|&t| proba[t as usize]).sum();
            assert!(
                (fast[i] - naive).abs() < 1e-12,
                "candidate {cand}: {} vs {naive}",
                fast[i]
            );
        }
    }

    #[test]
    fn continue_training_zero_epochs_is_identity() {
        let corpus = crate::corpus::generate_corpus(&crate::corpus::CorpusConfig {
            n_resumes: 30,
            n_companies: 10,
            length_range: (3, 5),
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let mut cfg = fast_config(7);
        cfg.epochs = 2;
        let model = train_recurrent(&cfg, &corpus).unwrap();
        let same = model.continue_training(&corpus, 0).unwrap();
        assert!(model.params_equal(&same));

        let more_a = model.continue_training(&corpus, 2).unwrap();
        let more_b = model.continue_training(&corpus, 2).unwrap();
        assert!(more_a.params_equal(&more_b));
        assert!(!model.params_equal(&more_a));
    }

    #[test]
    fn unknown_prefix_id_is_error() {
        let corpus = corpus_from(&[&[0, 1, 2, 0, 1]], 3);
        let mut cfg = fast_config(0);
        cfg.epochs = 1;
        let model = train_recurrent(&cfg, &corpus).unwrap();
        assert!(matches!(
            model.predict_proba(&[99]),
            Err(Error::Vocabulary(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let corpus = corpus_from(&[&[0, 1, 2, 0, 1], &[2, 1, 0, 2, 1]], 3);
        let mut cfg = fast_config(11);
        cfg.epochs = 2;
        let model = train_recurrent(&cfg, &corpus).unwrap();
        let json = serde_json::to_string(&model.to_checkpoint()).unwrap();
        let restored: RecurrentCheckpoint = serde_json::from_str(&json).unwrap();
        let restored = RecurrentClassifier::from_checkpoint(restored).unwrap();
        assert!(model.params_equal(&restored));
        assert_eq!(
            model.predict_proba(&[0, 1]).unwrap(),
            restored.predict_proba(&[0, 1]).unwrap()
        );
    }
}
