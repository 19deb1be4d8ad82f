//! End-to-end poisoning protocol per seed: build corpus, filter, split,
//! train surrogate and victims, measure pre-attack hit ratios, craft
//! poison against the surrogate alone, retrain victims on the poisoned
//! corpus, and measure post-attack hit ratios, improvement rates, and
//! accuracy shifts.
//!
//! Poison generation is black-box by construction: the crafting function
//! receives the surrogate, the transition graph, and the clean training
//! corpus, and nothing else, so victim parameters cannot leak into it.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{
    dqn_attack, francis_generate, llm_attack, popular_attack, random_attack, AttackSpec,
    DqnParams, GeneratorParams, HttpChatClient, LlmAttackConfig, MockLlmClient, PoisonBatch,
    Scenario,
};
use crate::corpus::{
    filter_min_frequency, generate_corpus, holdout_split, load_corpus, Corpus, CorpusConfig,
    TestPair,
};
use crate::error::{Error, Result};
use crate::graph::{build_graph, TransitionGraph};
use crate::predict::{
    evaluate_accuracy, train_markov, train_recurrent, MarkovClassifier, MarkovClassifierConfig,
    RecurrentClassifier, RecurrentClassifierConfig, SequenceClassifier,
};
use crate::rng::derive_seed;

use super::report::{AccuracyRow, ExperimentReport, IrRow};
use super::{
    hit_ratio_from_sets, hit_ratio_users, improvement_rate, select_target_companies,
    select_target_users, topk_sets, IrOutcome, TargetKind, TargetSelection,
};

const FINE_TUNE_EPOCHS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Generate(CorpusConfig),
    Load(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelConfig {
    Recurrent(RecurrentClassifierConfig),
    Markov(MarkovClassifierConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VictimSpec {
    pub name: String,
    pub config: ModelConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrainMode {
    FromScratch,
    FineTune20,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompanyTargetKind {
    Small,
    Large,
    Random,
}

impl CompanyTargetKind {
    fn as_target_kind(self) -> TargetKind {
        match self {
            CompanyTargetKind::Small => TargetKind::SmallCompanies,
            CompanyTargetKind::Large => TargetKind::LargeCompanies,
            CompanyTargetKind::Random => TargetKind::RandomCompanies,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserTargetKind {
    Specific,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LlmProvider {
    Mock,
    Http {
        endpoint: String,
        model: String,
        auth_env: String,
        timeout_secs: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub corpus: CorpusSource,
    pub min_company_count: u64,
    pub test_fraction: f64,
    pub scenario: Scenario,
    pub attacks: Vec<String>,
    pub injection_ratio: f64,
    pub reality_steps: usize,
    pub target_kind: CompanyTargetKind,
    pub target_count: usize,
    pub user_target_kind: Option<UserTargetKind>,
    pub surrogate: RecurrentClassifierConfig,
    pub victims: Vec<VictimSpec>,
    pub generator: GeneratorParams,
    pub dqn: DqnParams,
    pub llm: LlmAttackConfig,
    pub llm_provider: LlmProvider,
    pub k: usize,
    pub shortlist_k: usize,
    pub retrain_mode: RetrainMode,
    pub seeds: Vec<u64>,
    /// Parallel seed cells; 0 means all available cores.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            corpus: CorpusSource::Generate(CorpusConfig::default()),
            min_company_count: 2,
            test_fraction: 0.2,
            scenario: Scenario::CompanyPromotion,
            attacks: vec!["francis".to_string()],
            injection_ratio: 0.05,
            reality_steps: 3,
            target_kind: CompanyTargetKind::Small,
            target_count: 100,
            user_target_kind: None,
            surrogate: RecurrentClassifierConfig::default(),
            victims: vec![VictimSpec {
                name: "recurrent-compact".to_string(),
                config: ModelConfig::Recurrent(RecurrentClassifierConfig::compact(0)),
            }],
            generator: GeneratorParams::default(),
            dqn: DqnParams::default(),
            llm: LlmAttackConfig::default(),
            llm_provider: LlmProvider::Mock,
            k: 10,
            shortlist_k: 10,
            retrain_mode: RetrainMode::FromScratch,
            // filled from the global seed at config resolution
            seeds: Vec::new(),
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if self.victims.is_empty() {
            return Err(Error::Config("at least one victim is required".into()));
        }
        if self.attacks.is_empty() {
            return Err(Error::Config("at least one attack is required".into()));
        }
        for attack in &self.attacks {
            if !matches!(
                attack.as_str(),
                "francis" | "random" | "popular" | "dqn" | "llm" | "none"
            ) {
                return Err(Error::Config(format!("unknown attack {attack:?}")));
            }
        }
        if self.scenario.is_user_scenario() && self.user_target_kind.is_none() {
            return Err(Error::Config(format!(
                "scenario {} requires user_target_kind",
                self.scenario
            )));
        }
        let mut names: Vec<&str> = self.victims.iter().map(|v| v.name.as_str()).collect();
        names.sort();
        names.dedup();
        if names.len() != self.victims.len() {
            return Err(Error::Config("victim names must be unique".into()));
        }
        self.surrogate.validate()?;
        self.generator.validate()?;
        Ok(())
    }
}

/// A fit victim of either family.
pub enum TrainedModel {
    Recurrent(RecurrentClassifier),
    Markov(MarkovClassifier),
}

impl TrainedModel {
    pub fn classifier(&self) -> &dyn SequenceClassifier {
        match self {
            TrainedModel::Recurrent(m) => m,
            TrainedModel::Markov(m) => m,
        }
    }

    fn train(config: &ModelConfig, seed: u64, corpus: &Corpus) -> Result<TrainedModel> {
        match config {
            ModelConfig::Recurrent(c) => {
                let mut c = c.clone();
                c.seed = seed;
                Ok(TrainedModel::Recurrent(train_recurrent(&c, corpus)?))
            }
            ModelConfig::Markov(c) => Ok(TrainedModel::Markov(train_markov(c, corpus)?)),
        }
    }

    fn retrain(
        &self,
        config: &ModelConfig,
        seed: u64,
        merged: &Corpus,
        mode: RetrainMode,
    ) -> Result<TrainedModel> {
        match (mode, self) {
            (RetrainMode::FromScratch, _) => TrainedModel::train(config, seed, merged),
            (RetrainMode::FineTune20, TrainedModel::Recurrent(m)) => Ok(TrainedModel::Recurrent(
                m.continue_training_seeded(merged, FINE_TUNE_EPOCHS, seed)?,
            )),
            // counting models have no gradient state; refit on merged data
            (RetrainMode::FineTune20, TrainedModel::Markov(_)) => {
                TrainedModel::train(config, seed, merged)
            }
        }
    }
}

/// Craft a poison batch. Takes the surrogate, graph, and clean training
/// corpus only — victims are structurally out of reach here.
fn craft_poison(
    attack: &str,
    surrogate: &RecurrentClassifier,
    graph: &TransitionGraph,
    train: &Corpus,
    spec: &AttackSpec,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<PoisonBatch> {
    match attack {
        "francis" => {
            let mut params = config.generator.clone();
            params.seed = derive_seed(seed, "generator", &[]);
            francis_generate(surrogate, graph, train, spec, &params)
        }
        "random" => random_attack(train, graph, spec),
        "popular" => popular_attack(train, graph, spec),
        "dqn" => {
            let mut params = config.dqn.clone();
            params.seed = derive_seed(seed, "dqn", &[]);
            dqn_attack(surrogate, graph, train, spec, &params)
        }
        "llm" => match &config.llm_provider {
            LlmProvider::Mock => {
                let names: Vec<String> =
                    train.companies.iter().map(|c| c.name.clone()).collect();
                let need = spec.batch_size(train.trajectories.len());
                let client = MockLlmClient::seeded(
                    &names,
                    derive_seed(seed, "mock-llm", &[]),
                    config.llm.rounds.max(1),
                    need * 2,
                );
                llm_attack(&client, train, spec, &config.llm)
            }
            LlmProvider::Http {
                endpoint,
                model,
                auth_env,
                timeout_secs,
            } => {
                let client = HttpChatClient {
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    auth_env: auth_env.clone(),
                    timeout_secs: *timeout_secs,
                };
                llm_attack(&client, train, spec, &config.llm)
            }
        },
        "none" => Ok(PoisonBatch {
            trajectories: Vec::new(),
            attack_name: "none".to_string(),
            spec: spec.clone(),
            shortfall: 0,
        }),
        other => Err(Error::Config(format!("unknown attack {other:?}"))),
    }
}

struct SeedOutput {
    rows: Vec<IrRow>,
    accuracy: Vec<AccuracyRow>,
}

/// Hit ratios for every target on one model.
fn company_hit_ratios(
    model: &dyn SequenceClassifier,
    prefixes: &[Vec<u32>],
    targets: &[u32],
    k: usize,
) -> Result<Vec<f64>> {
    let sets = topk_sets(model, prefixes, k)?;
    Ok(targets
        .iter()
        .map(|&t| hit_ratio_from_sets(&sets, t))
        .collect())
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    // corpus
    let corpus = match &config.corpus {
        CorpusSource::Generate(c) => {
            let mut c = c.clone();
            c.seed = derive_seed(seed, "corpus", &[c.seed]);
            generate_corpus(&c).map_err(|e| e.at_stage("corpus"))?
        }
        CorpusSource::Load(path) => load_corpus(path).map_err(|e| e.at_stage("corpus"))?,
    };
    let filtered = filter_min_frequency(&corpus, config.min_company_count)
        .map_err(|e| e.at_stage("filter"))?
        .corpus;
    let (train, test) = holdout_split(&filtered, config.test_fraction, derive_seed(seed, "split", &[]))
        .map_err(|e| e.at_stage("split"))?;
    let graph = build_graph(&train).map_err(|e| e.at_stage("graph"))?;

    // targets
    let company_sel = select_target_companies(
        &train,
        config.target_kind.as_target_kind(),
        config.target_count,
        derive_seed(seed, "targets", &[]),
    )
    .map_err(|e| e.at_stage("targets"))?;
    let user_sel: Option<TargetSelection> = match (config.scenario.is_user_scenario(), config.user_target_kind) {
        (true, Some(kind)) => Some(
            select_target_users(
                &train,
                match kind {
                    UserTargetKind::Specific => TargetKind::SpecificUsers,
                    UserTargetKind::Random => TargetKind::RandomUsers,
                },
                config.scenario.is_promotion(),
                derive_seed(seed, "target-users", &[]),
            )
            .map_err(|e| e.at_stage("targets"))?,
        ),
        _ => None,
    };
    let target_kind_label = match (config.scenario.is_user_scenario(), config.user_target_kind) {
        (true, Some(UserTargetKind::Specific)) => "specific_users".to_string(),
        (true, Some(UserTargetKind::Random)) => "random_users".to_string(),
        _ => format!("{:?}", config.target_kind).to_lowercase() + "_companies",
    };

    let spec = AttackSpec {
        scenario: config.scenario,
        target_companies: company_sel.company_ids.iter().copied().collect(),
        target_users: user_sel
            .as_ref()
            .map(|s| s.user_ids.iter().copied().collect())
            .unwrap_or_default(),
        injection_ratio: config.injection_ratio,
        reality_steps: config.reality_steps,
        seed: derive_seed(seed, "attack", &[]),
    };
    spec.validate().map_err(|e| e.at_stage("targets"))?;

    // surrogate (the only model the attacks may consult)
    let mut surrogate_config = config.surrogate.clone();
    surrogate_config.seed = derive_seed(seed, "surrogate", &[]);
    let surrogate =
        train_recurrent(&surrogate_config, &train).map_err(|e| e.at_stage("surrogate"))?;

    // victims on the clean training corpus
    let victim_seeds: Vec<u64> = (0..config.victims.len())
        .map(|i| derive_seed(seed, "victim", &[i as u64]))
        .collect();
    let victims_before: Vec<TrainedModel> = config
        .victims
        .iter()
        .zip(&victim_seeds)
        .map(|(v, &vs)| TrainedModel::train(&v.config, vs, &train))
        .collect::<Result<_>>()
        .map_err(|e| e.at_stage("victims"))?;

    // pre-attack measurements
    let test_prefixes: Vec<Vec<u32>> = test.iter().map(|p| p.prefix.clone()).collect();
    let all_users: Vec<(u64, Vec<u32>)> = train
        .trajectories
        .iter()
        .map(|t| (t.user_id, t.companies.clone()))
        .collect();
    let user_scenario = config.scenario.is_user_scenario();

    let mut hr_before: Vec<Vec<f64>> = Vec::with_capacity(victims_before.len());
    let mut acc_before: Vec<f64> = Vec::with_capacity(victims_before.len());
    for victim in &victims_before {
        let model = victim.classifier();
        let hrs = if user_scenario {
            vec![hit_ratio_users(
                model,
                &company_sel.company_ids,
                &all_users,
                &spec.target_users,
                config.shortlist_k,
            )
            .map_err(|e| e.at_stage("hr_before"))?]
        } else {
            company_hit_ratios(model, &test_prefixes, &company_sel.company_ids, config.k)
                .map_err(|e| e.at_stage("hr_before"))?
        };
        hr_before.push(hrs);
        acc_before.push(
            evaluate_accuracy(model, &test, config.k).map_err(|e| e.at_stage("hr_before"))?,
        );
    }

    let mut rows = Vec::new();
    let mut accuracy = Vec::new();

    for attack in &config.attacks {
        // black-box: poison sees the surrogate, graph, and train corpus only
        let batch = craft_poison(attack, &surrogate, &graph, &train, &spec, config, seed)
            .map_err(|e| e.at_stage("poison"))?;
        let merged = train
            .merged_with(&batch.trajectories)
            .map_err(|e| e.at_stage("poison"))?;

        for (vi, victim_spec) in config.victims.iter().enumerate() {
            let retrained = victims_before[vi]
                .retrain(&victim_spec.config, victim_seeds[vi], &merged, config.retrain_mode)
                .map_err(|e| e.at_stage("retrain"))?;
            let model = retrained.classifier();

            let hr_after: Vec<f64> = if user_scenario {
                vec![hit_ratio_users(
                    model,
                    &company_sel.company_ids,
                    &all_users,
                    &spec.target_users,
                    config.shortlist_k,
                )
                .map_err(|e| e.at_stage("hr_after"))?]
            } else {
                company_hit_ratios(model, &test_prefixes, &company_sel.company_ids, config.k)
                    .map_err(|e| e.at_stage("hr_after"))?
            };

            for (ti, &after) in hr_after.iter().enumerate() {
                let before = hr_before[vi][ti];
                let ir = improvement_rate(before, after).map_err(|e| e.at_stage("hr_after"))?;
                rows.push(IrRow {
                    victim: victim_spec.name.clone(),
                    attack: attack.clone(),
                    scenario: config.scenario.to_string(),
                    target_kind: target_kind_label.clone(),
                    injection_ratio: config.injection_ratio,
                    seed,
                    target: if user_scenario {
                        None
                    } else {
                        Some(company_sel.company_ids[ti])
                    },
                    hr_before: before,
                    hr_after: after,
                    ir: ir.value(),
                    excluded: ir == IrOutcome::Excluded,
                });
            }

            let acc_after = evaluate_accuracy(model, &test, config.k)
                .map_err(|e| e.at_stage("hr_after"))?;
            let before = acc_before[vi];
            accuracy.push(AccuracyRow {
                victim: victim_spec.name.clone(),
                attack: attack.clone(),
                seed,
                accuracy_before: before,
                accuracy_after: acc_after,
                relative_shift: if before > 0.0 {
                    (acc_after - before) / before
                } else {
                    0.0
                },
            });
        }
    }

    Ok(SeedOutput { rows, accuracy })
}

/// Run the full protocol over every configured seed and assemble the
/// report. Seed cells are independent; they may run in parallel without
/// changing any result.
pub fn run_attack_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();

    let outputs: Vec<Result<SeedOutput>> = if config.jobs == 1 {
        config.seeds.iter().map(|&s| run_seed(config, s)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            config
                .seeds
                .par_iter()
                .map(|&s| run_seed(config, s))
                .collect()
        })
    };

    let mut rows = Vec::new();
    let mut accuracy = Vec::new();
    for output in outputs {
        let output = output?;
        rows.extend(output.rows);
        accuracy.extend(output.accuracy);
    }

    let echo = serde_json::to_value(config)?;
    Ok(ExperimentReport::assemble(
        echo,
        rows,
        accuracy,
        started.elapsed().as_secs_f64(),
    ))
}

// ----------------------------------------------------------------------------
// Performance-shift protocol (fine-tuning stealth check)
// ----------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftReport {
    pub baseline_accuracy: f64,
    pub shift_attack_mean: f64,
    pub shift_none_mean: f64,
    pub sd_none: f64,
    /// (seed, shift with batch, shift without batch)
    pub per_seed: Vec<(u64, f64, f64)>,
}

/// Fine-tune a pretrained victim for 20 epochs on clean-plus-batch and,
/// separately, on clean data alone (the control), per seed. Shifts are
/// relative top-k accuracy changes against the pretrained baseline.
pub fn performance_shift(
    pretrained: &RecurrentClassifier,
    clean_corpus: &Corpus,
    batch: &PoisonBatch,
    test_pairs: &[TestPair],
    k: usize,
    seeds: &[u64],
) -> Result<ShiftReport> {
    if seeds.is_empty() {
        return Err(Error::Config("seeds must be non-empty".into()));
    }
    let baseline = evaluate_accuracy(pretrained, test_pairs, k)?;
    if baseline == 0.0 {
        return Err(Error::Config(
            "pretrained accuracy is zero; relative shift undefined".into(),
        ));
    }
    let merged = clean_corpus.merged_with(&batch.trajectories)?;

    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let tuned_attack =
            pretrained.continue_training_seeded(&merged, FINE_TUNE_EPOCHS, seed)?;
        let tuned_none =
            pretrained.continue_training_seeded(clean_corpus, FINE_TUNE_EPOCHS, seed)?;
        let shift_attack =
            (evaluate_accuracy(&tuned_attack, test_pairs, k)? - baseline) / baseline;
        let shift_none = (evaluate_accuracy(&tuned_none, test_pairs, k)? - baseline) / baseline;
        per_seed.push((seed, shift_attack, shift_none));
    }

    let attack_shifts: Vec<f64> = per_seed.iter().map(|&(_, a, _)| a).collect();
    let none_shifts: Vec<f64> = per_seed.iter().map(|&(_, _, n)| n).collect();
    Ok(ShiftReport {
        baseline_accuracy: baseline,
        shift_attack_mean: super::mean(&attack_shifts),
        shift_none_mean: super::mean(&none_shifts),
        sd_none: super::stddev(&none_shifts),
        per_seed,
    })
}
