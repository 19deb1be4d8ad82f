//! Q-learning baseline: a recurrent state encoder over the partial
//! trajectory feeds a Q-value head over the vocabulary. Episodes build
//! trajectories token by token with zero intermediate reward; the
//! terminal reward combines reciprocal target ranks in the surrogate's
//! top-10 with a small target-mass bonus. Promotion scenarios only.

use std::collections::BTreeSet;
use std::collections::VecDeque;

use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Trajectory};
use crate::error::{Error, Result};
use crate::graph::TransitionGraph;
use crate::predict::{predict_topk, target_mass, SequenceClassifier};
use crate::rng;

use crate::predict::cell::{clip_global_norm, xavier, Adam, LstmLayer};
use super::{AttackSpec, PoisonBatch, FAKE_LEN_MAX, FAKE_LEN_MIN};

const REWARD_RANK_CUTOFF: usize = 10;
const MASS_BONUS: f64 = 0.1;
const GRAD_CLIP: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnParams {
    pub episodes: usize,
    pub hidden: usize,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Transitions collected before updates begin.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for DqnParams {
    fn default() -> Self {
        DqnParams {
            episodes: 300,
            hidden: 32,
            embedding_dim: 16,
            learning_rate: 1e-3,
            discount: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            replay_capacity: 5_000,
            batch_size: 32,
            warmup: 128,
            seed: 0,
        }
    }
}

impl DqnParams {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 || self.hidden == 0 || self.embedding_dim == 0 {
            return Err(Error::Config("dqn sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon_end)
            || !(0.0..=1.0).contains(&self.epsilon_start)
            || self.epsilon_end > self.epsilon_start
        {
            return Err(Error::Config("epsilon schedule must satisfy 0 <= end <= start <= 1".into()));
        }
        Ok(())
    }
}

/// Terminal reward for a finished episode trajectory: for each target in
/// the surrogate's top-10 a 1/rank term, plus 0.1 x target mass.
pub fn episode_reward(
    surrogate: &dyn SequenceClassifier,
    trajectory: &[u32],
    targets: &BTreeSet<u32>,
) -> Result<f64> {
    let top = predict_topk(surrogate, trajectory, REWARD_RANK_CUTOFF)?;
    let mut reward = 0.0;
    for (rank0, &(company, _)) in top.iter().enumerate() {
        if targets.contains(&company) {
            reward += 1.0 / (rank0 + 1) as f64;
        }
    }
    reward += MASS_BONUS * target_mass(surrogate, trajectory, targets)?;
    Ok(reward)
}

#[derive(Clone)]
struct Transition {
    state: Vec<u32>,
    action: u32,
    reward: f64,
    next_state: Vec<u32>,
    done: bool,
}

struct QNet {
    embedding: Array2<f64>,
    cell: LstmLayer,
    w_q: Array2<f64>,
    b_q: Array2<f64>,
}

impl QNet {
    fn new(vocab: usize, params: &DqnParams, rng: &mut ChaCha8Rng) -> Self {
        QNet {
            embedding: xavier(vocab, params.embedding_dim, rng),
            cell: LstmLayer::new(params.embedding_dim, params.hidden, rng),
            w_q: xavier(params.hidden, vocab, rng),
            b_q: Array2::zeros((1, vocab)),
        }
    }

    /// Encode a token sequence; returns the final hidden state (1 x H).
    fn encode(&self, tokens: &[u32]) -> Array2<f64> {
        let mut h = Array2::zeros((1, self.cell.hidden));
        let mut c = Array2::zeros((1, self.cell.hidden));
        for &t in tokens {
            let x = self.embedding.row(t as usize).insert_axis(Axis(0)).to_owned();
            let cache = self.cell.step(x.view(), h.view(), c.view());
            h = cache.h;
            c = cache.c;
        }
        h
    }

    fn q_values(&self, tokens: &[u32]) -> Vec<f64> {
        let h = self.encode(tokens);
        let q = h.dot(&self.w_q) + &self.b_q;
        q.row(0).to_vec()
    }

    /// Semi-gradient TD update on a minibatch: squared error on Q(s, a)
    /// against r + gamma * max_a' Q(s', a'), full backprop through time
    /// over the state tokens.
    fn update(&mut self, batch: &[&Transition], discount: f64, adam: &mut Adam) {
        let n = batch.len() as f64;
        let mut g_emb = Array2::zeros(self.embedding.dim());
        let mut g_w = Array2::zeros(self.cell.w.dim());
        let mut g_b = Array2::zeros(self.cell.b.dim());
        let mut g_wq = Array2::zeros(self.w_q.dim());
        let mut g_bq = Array2::zeros(self.b_q.dim());

        for tr in batch {
            // forward with caches
            let mut h = Array2::zeros((1, self.cell.hidden));
            let mut c = Array2::zeros((1, self.cell.hidden));
            let mut caches = Vec::with_capacity(tr.state.len());
            for &t in &tr.state {
                let x = self.embedding.row(t as usize).insert_axis(Axis(0)).to_owned();
                let cache = self.cell.step(x.view(), h.view(), c.view());
                h = cache.h.clone();
                c = cache.c.clone();
                caches.push(cache);
            }
            let q_row = h.dot(&self.w_q) + &self.b_q;
            let q_sa = q_row[(0, tr.action as usize)];

            let target = if tr.done {
                tr.reward
            } else {
                let next_q = self.q_values(&tr.next_state);
                let max_next = next_q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                tr.reward + discount * max_next
            };
            let d_q = 2.0 * (q_sa - target) / n;

            // head gradients: only the chosen action's column
            let mut d_logits = Array2::<f64>::zeros(q_row.dim());
            d_logits[(0, tr.action as usize)] = d_q;
            g_wq.scaled_add(1.0, &h.t().dot(&d_logits));
            g_bq.scaled_add(1.0, &d_logits);
            let mut dh = d_logits.dot(&self.w_q.t());
            let mut dc = Array2::zeros((1, self.cell.hidden));
            for (step, cache) in caches.iter().enumerate().rev() {
                let (dx, dh_prev, dc_prev) =
                    self.cell.step_backward(cache, &dh, &dc, &mut g_w, &mut g_b);
                dh = dh_prev;
                dc = dc_prev;
                g_emb
                    .row_mut(tr.state[step] as usize)
                    .scaled_add(1.0, &dx.row(0));
            }
        }

        clip_global_norm(
            &mut [&mut g_emb, &mut g_w, &mut g_b, &mut g_wq, &mut g_bq],
            GRAD_CLIP,
        );
        adam.step(
            &mut [
                &mut self.embedding,
                &mut self.cell.w,
                &mut self.cell.b,
                &mut self.w_q,
                &mut self.b_q,
            ],
            &[&g_emb, &g_w, &g_b, &g_wq, &g_bq],
        );
    }
}

fn sample_start(corpus: &Corpus, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let t = &corpus.trajectories[rng.gen_range(0..corpus.trajectories.len())];
    vec![t.companies[0], t.companies[1]]
}

/// Train a Q-network against the surrogate's reward signal, then emit the
/// batch from greedy rollouts. Demotion scenarios are unsupported.
pub fn dqn_attack(
    surrogate: &dyn SequenceClassifier,
    _graph: &TransitionGraph,
    clean_corpus: &Corpus,
    spec: &AttackSpec,
    rl_params: &DqnParams,
) -> Result<PoisonBatch> {
    spec.validate()?;
    rl_params.validate()?;
    spec.check_vocabulary(clean_corpus)?;
    if !spec.scenario.is_promotion() {
        return Err(Error::UnsupportedScenario {
            attack: "dqn".to_string(),
            scenario: spec.scenario.to_string(),
        });
    }

    let vocab = clean_corpus.vocab_size();
    let seed = rng::derive_seed(spec.seed, "dqn", &[rl_params.seed]);
    let mut net_rng = rng::stream(seed, "dqn/init", &[]);
    let mut net = QNet::new(vocab, rl_params, &mut net_rng);
    let mut adam = Adam::new(
        rl_params.learning_rate,
        0.9,
        0.999,
        1e-8,
        &[
            net.embedding.dim(),
            net.cell.w.dim(),
            net.cell.b.dim(),
            net.w_q.dim(),
            net.b_q.dim(),
        ],
    );
    let mut replay: VecDeque<Transition> = VecDeque::with_capacity(rl_params.replay_capacity);
    let targets = &spec.target_companies;

    let mut train_rng = rng::stream(seed, "dqn/train", &[]);
    for episode in 0..rl_params.episodes {
        let eps = rl_params.epsilon_start
            + (rl_params.epsilon_end - rl_params.epsilon_start)
                * (episode as f64 / (rl_params.episodes.max(2) - 1) as f64);
        let mut state = sample_start(clean_corpus, &mut train_rng);
        let len = train_rng.gen_range(FAKE_LEN_MIN..=FAKE_LEN_MAX);
        while state.len() < len {
            let action = if train_rng.gen::<f64>() < eps {
                train_rng.gen_range(0..vocab as u32)
            } else {
                let q = net.q_values(&state);
                let mut best = 0usize;
                for (i, &v) in q.iter().enumerate() {
                    if v > q[best] {
                        best = i;
                    }
                }
                best as u32
            };
            let mut next_state = state.clone();
            next_state.push(action);
            let done = next_state.len() >= len;
            let reward = if done {
                episode_reward(surrogate, &next_state, targets)?
            } else {
                0.0
            };
            if replay.len() == rl_params.replay_capacity {
                replay.pop_front();
            }
            replay.push_back(Transition {
                state: state.clone(),
                action,
                reward,
                next_state: next_state.clone(),
                done,
            });
            state = next_state;

            if replay.len() >= rl_params.warmup {
                let batch: Vec<&Transition> = (0..rl_params.batch_size)
                    .map(|_| &replay[train_rng.gen_range(0..replay.len())])
                    .collect();
                net.update(&batch, rl_params.discount, &mut adam);
            }
        }
    }

    // greedy rollouts
    let size = spec.batch_size(clean_corpus.trajectories.len());
    let user_base = PoisonBatch::fresh_user_base(clean_corpus);
    let mut trajectories = Vec::with_capacity(size);
    for idx in 0..size {
        let mut roll_rng = rng::stream(seed, "dqn/rollout", &[idx as u64]);
        let mut state = sample_start(clean_corpus, &mut roll_rng);
        let len = roll_rng.gen_range(FAKE_LEN_MIN..=FAKE_LEN_MAX);
        while state.len() < len {
            let q = net.q_values(&state);
            let mut best = 0usize;
            for (i, &v) in q.iter().enumerate() {
                if v > q[best] {
                    best = i;
                }
            }
            state.push(best as u32);
        }
        trajectories.push(Trajectory {
            user_id: user_base + idx as u64,
            companies: state,
        });
    }

    Ok(PoisonBatch {
        trajectories,
        attack_name: "dqn".to_string(),
        spec: spec.clone(),
        shortfall: 0,
    })
}

/// Mean terminal reward of uniformly random rollouts (Monte-Carlo
/// comparison oracle for tests).
pub fn random_rollout_reward(
    surrogate: &dyn SequenceClassifier,
    clean_corpus: &Corpus,
    spec: &AttackSpec,
    rollouts: usize,
    seed: u64,
) -> Result<f64> {
    let vocab = clean_corpus.vocab_size() as u32;
    let mut total = 0.0;
    let mut roll_rng = rng::stream(seed, "dqn/random-rollout", &[]);
    for _ in 0..rollouts {
        let mut state = sample_start(clean_corpus, &mut roll_rng);
        let len = roll_rng.gen_range(FAKE_LEN_MIN..=FAKE_LEN_MAX);
        while state.len() < len {
            state.push(roll_rng.gen_range(0..vocab));
        }
        total += episode_reward(surrogate, &state, &spec.target_companies)?;
    }
    Ok(total / rollouts as f64)
}
