//! Random and Popular baselines: unconstrained token soup with one
//! inserted target per trajectory (promotion) or a guaranteed target-free
//! batch (demotion).

use rand::Rng;

use crate::corpus::{Corpus, Trajectory};
use crate::error::{Error, Result};
use crate::graph::TransitionGraph;
use crate::rng;

use super::{AttackSpec, PoisonBatch, FAKE_LEN_MAX, FAKE_LEN_MIN};

/// Top decile of companies by occurrence count, ties broken by ascending
/// id.
pub fn popular_company_set(corpus: &Corpus) -> Vec<u32> {
    let counts = corpus.occurrence_counts();
    let mut ids: Vec<u32> = (0..corpus.vocab_size() as u32).collect();
    ids.sort_by(|&a, &b| {
        counts[b as usize]
            .cmp(&counts[a as usize])
            .then(a.cmp(&b))
    });
    let take = (corpus.vocab_size() / 10).max(1);
    ids.truncate(take);
    ids
}

fn build_unconstrained_batch(
    clean_corpus: &Corpus,
    spec: &AttackSpec,
    attack_name: &str,
    pool: &[u32],
) -> Result<PoisonBatch> {
    spec.validate()?;
    spec.check_vocabulary(clean_corpus)?;
    if spec.scenario.is_user_scenario() {
        return Err(Error::UnsupportedScenario {
            attack: attack_name.to_string(),
            scenario: spec.scenario.to_string(),
        });
    }
    let promotion = spec.scenario.is_promotion();
    let filler: Vec<u32> = if promotion {
        pool.to_vec()
    } else {
        // demotion batches must contain zero targets
        pool.iter()
            .copied()
            .filter(|c| !spec.target_companies.contains(c))
            .collect()
    };
    if filler.is_empty() {
        return Err(Error::Config(
            "no non-target companies available for batch tokens".into(),
        ));
    }

    let size = spec.batch_size(clean_corpus.trajectories.len());
    let user_base = PoisonBatch::fresh_user_base(clean_corpus);
    let mut trajectories = Vec::with_capacity(size);
    for idx in 0..size {
        let mut traj_rng = rng::stream(spec.seed, attack_name, &[idx as u64]);
        let len = traj_rng.gen_range(FAKE_LEN_MIN..=FAKE_LEN_MAX);
        let mut companies: Vec<u32> = if promotion {
            // leave room for the inserted target
            (0..len - 1)
                .map(|_| filler[traj_rng.gen_range(0..filler.len())])
                .collect()
        } else {
            (0..len)
                .map(|_| filler[traj_rng.gen_range(0..filler.len())])
                .collect()
        };
        if promotion {
            let target = spec.assigned_target(idx);
            let pos = traj_rng.gen_range(0..=companies.len());
            companies.insert(pos, target);
        }
        trajectories.push(Trajectory {
            user_id: user_base + idx as u64,
            companies,
        });
    }
    Ok(PoisonBatch {
        trajectories,
        attack_name: attack_name.to_string(),
        spec: spec.clone(),
        shortfall: 0,
    })
}

/// Uniformly random vocabulary tokens; no reality constraint.
pub fn random_attack(
    clean_corpus: &Corpus,
    _graph: &TransitionGraph,
    spec: &AttackSpec,
) -> Result<PoisonBatch> {
    let pool: Vec<u32> = (0..clean_corpus.vocab_size() as u32).collect();
    build_unconstrained_batch(clean_corpus, spec, "random", &pool)
}

/// Tokens drawn from the top-10%-by-occurrence company set.
pub fn popular_attack(
    clean_corpus: &Corpus,
    _graph: &TransitionGraph,
    spec: &AttackSpec,
) -> Result<PoisonBatch> {
    if clean_corpus.vocab_size() < 10 {
        return Err(Error::Config(
            "popular attack requires a vocabulary of at least 10 companies".into(),
        ));
    }
    let pool = popular_company_set(clean_corpus);
    build_unconstrained_batch(clean_corpus, spec, "popular", &pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::Scenario;
    use crate::corpus::{generate_corpus, CorpusConfig};
    use crate::graph::build_graph;
    use std::collections::BTreeSet;

    fn setup() -> (Corpus, TransitionGraph) {
        let corpus = generate_corpus(&CorpusConfig {
            n_resumes: 100,
            n_companies: 40,
            length_range: (5, 10),
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let graph = build_graph(&corpus).unwrap();
        (corpus, graph)
    }

    fn spec(scenario: Scenario, ratio: f64) -> AttackSpec {
        AttackSpec {
            scenario,
            target_companies: [2, 7].into_iter().collect(),
            target_users: BTreeSet::new(),
            injection_ratio: ratio,
            reality_steps: 3,
            seed: 99,
        }
    }

    #[test]
    fn promotion_inserts_target_in_every_trajectory() {
        let (corpus, graph) = setup();
        let spec = spec(Scenario::CompanyPromotion, 0.05);
        let batch = random_attack(&corpus, &graph, &spec).unwrap();
        assert_eq!(batch.trajectories.len(), 5);
        for t in &batch.trajectories {
            assert!(t.len() >= FAKE_LEN_MIN && t.len() <= FAKE_LEN_MAX);
            assert!(t
                .companies
                .iter()
                .any(|c| spec.target_companies.contains(c)));
        }
    }

    #[test]
    fn demotion_contains_zero_targets() {
        let (corpus, graph) = setup();
        let spec = spec(Scenario::CompanyDemotion, 0.1);
        let batch = random_attack(&corpus, &graph, &spec).unwrap();
        assert_eq!(batch.trajectories.len(), 10);
        for t in &batch.trajectories {
            assert!(t
                .companies
                .iter()
                .all(|c| !spec.target_companies.contains(c)));
        }
    }

    #[test]
    fn batch_size_arithmetic() {
        let corpus = generate_corpus(&CorpusConfig {
            n_resumes: 1000,
            n_companies: 50,
            length_range: (5, 10),
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let graph = build_graph(&corpus).unwrap();
        let spec = spec(Scenario::CompanyPromotion, 0.01);
        let batch = random_attack(&corpus, &graph, &spec).unwrap();
        assert_eq!(batch.trajectories.len(), 10);
    }

    #[test]
    fn popular_set_matches_brute_force_decile() {
        let (corpus, _) = setup();
        let popular = popular_company_set(&corpus);
        assert_eq!(popular.len(), 4); // 40 companies -> top 4

        // oracle: full sort of (count desc, id asc)
        let counts = corpus.occurrence_counts();
        let mut ranked: Vec<u32> = (0..40u32).collect();
        ranked.sort_by(|&a, &b| {
            counts[b as usize]
                .cmp(&counts[a as usize])
                .then(a.cmp(&b))
        });
        assert_eq!(popular, ranked[..4].to_vec());
    }

    #[test]
    fn popular_batch_tokens_come_from_popular_set() {
        let (corpus, graph) = setup();
        let spec = spec(Scenario::CompanyPromotion, 0.05);
        let batch = popular_attack(&corpus, &graph, &spec).unwrap();
        let popular: BTreeSet<u32> = popular_company_set(&corpus).into_iter().collect();
        for t in &batch.trajectories {
            for &c in &t.companies {
                assert!(popular.contains(&c) || spec.target_companies.contains(&c));
            }
        }
    }

    #[test]
    fn seeded_batches_are_identical() {
        let (corpus, graph) = setup();
        let spec = spec(Scenario::CompanyPromotion, 0.03);
        let a = random_attack(&corpus, &graph, &spec).unwrap();
        let b = random_attack(&corpus, &graph, &spec).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
        let c = popular_attack(&corpus, &graph, &spec).unwrap();
        let d = popular_attack(&corpus, &graph, &spec).unwrap();
        assert_eq!(c.trajectories, d.trajectories);
    }

    #[test]
    fn fresh_user_ids_do_not_collide() {
        let (corpus, graph) = setup();
        let spec = spec(Scenario::CompanyPromotion, 0.02);
        let batch = random_attack(&corpus, &graph, &spec).unwrap();
        let max_clean = corpus.trajectories.iter().map(|t| t.user_id).max().unwrap();
        for t in &batch.trajectories {
            assert!(t.user_id > max_clean);
        }
    }

    #[test]
    fn unknown_target_is_vocabulary_error() {
        let (corpus, graph) = setup();
        let mut bad = spec(Scenario::CompanyPromotion, 0.02);
        bad.target_companies.insert(999);
        assert!(matches!(
            random_attack(&corpus, &graph, &bad),
            Err(Error::Vocabulary(_))
        ));
    }
}
