//! The poisoning protocol: target selection, Hit Ratio / Improvement
//! Rate metrics, the end-to-end experiment runner, and report rendering.

mod report;
mod runner;

pub use report::{AccuracyRow, Aggregate, ExperimentReport, IrRow, REPORT_VERSION};
pub use runner::{
    performance_shift, run_attack_experiment, CompanyTargetKind, CorpusSource, ExperimentConfig,
    LlmProvider, ModelConfig, RetrainMode, ShiftReport, TrainedModel, UserTargetKind, VictimSpec,
};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SizeClass};
use crate::error::{Error, Result};
use crate::predict::SequenceClassifier;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    SmallCompanies,
    LargeCompanies,
    RandomCompanies,
    SpecificUsers,
    RandomUsers,
}

/// Chosen attack targets plus selection provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSelection {
    pub kind: TargetKind,
    pub company_ids: Vec<u32>,
    pub user_ids: Vec<u64>,
    /// Set when the class had fewer members than requested and the whole
    /// class was returned.
    pub truncated: bool,
    pub seed: u64,
}

/// Uniform sample without replacement from a company size class
/// (or from all companies for the random kind). Only companies that
/// participate in at least one observed transition are eligible: a
/// company invisible in the corpus cannot be attacked or measured.
pub fn select_target_companies(
    corpus: &Corpus,
    kind: TargetKind,
    count: usize,
    seed: u64,
) -> Result<TargetSelection> {
    let class = match kind {
        TargetKind::SmallCompanies => Some(SizeClass::Small),
        TargetKind::LargeCompanies => Some(SizeClass::Large),
        TargetKind::RandomCompanies => None,
        _ => {
            return Err(Error::Config(format!(
                "{kind:?} is not a company target kind"
            )))
        }
    };
    let mut in_transition = vec![false; corpus.vocab_size()];
    for t in &corpus.trajectories {
        for pair in t.companies.windows(2) {
            if pair[0] != pair[1] {
                in_transition[pair[0] as usize] = true;
                in_transition[pair[1] as usize] = true;
            }
        }
    }
    let mut candidates: Vec<u32> = corpus
        .companies
        .iter()
        .filter(|c| in_transition[c.id as usize])
        .filter(|c| class.map_or(true, |cl| c.size_class() == cl))
        .map(|c| c.id)
        .collect();
    if candidates.is_empty() {
        return Err(Error::Config(format!("no companies in class {class:?}")));
    }
    use rand::seq::SliceRandom;
    candidates.shuffle(&mut rng::stream(seed, "target-companies", &[]));
    let truncated = candidates.len() < count;
    candidates.truncate(count);
    candidates.sort_unstable();
    Ok(TargetSelection {
        kind,
        company_ids: candidates,
        user_ids: Vec::new(),
        truncated,
        seed,
    })
}

/// Select target users. Specific users are defined by Large-company
/// experience: promotion targets users who never worked at a Large
/// company, demotion targets users who did at least once. Random samples
/// 20% of all users.
pub fn select_target_users(
    corpus: &Corpus,
    kind: TargetKind,
    promotion: bool,
    seed: u64,
) -> Result<TargetSelection> {
    let large: Vec<bool> = corpus
        .companies
        .iter()
        .map(|c| c.size_class() == SizeClass::Large)
        .collect();
    let mut user_ids: Vec<u64> = match kind {
        TargetKind::SpecificUsers => corpus
            .trajectories
            .iter()
            .filter(|t| {
                let touched_large = t.companies.iter().any(|&c| large[c as usize]);
                if promotion {
                    !touched_large
                } else {
                    touched_large
                }
            })
            .map(|t| t.user_id)
            .collect(),
        TargetKind::RandomUsers => {
            let mut ids: Vec<u64> = corpus.trajectories.iter().map(|t| t.user_id).collect();
            use rand::seq::SliceRandom;
            ids.shuffle(&mut rng::stream(seed, "target-users", &[]));
            let take = ((ids.len() as f64) * 0.2).round() as usize;
            ids.truncate(take.max(1));
            ids
        }
        _ => {
            return Err(Error::Config(format!("{kind:?} is not a user target kind")));
        }
    };
    if user_ids.is_empty() {
        return Err(Error::Config(format!(
            "user predicate for {kind:?} (promotion={promotion}) matched no user"
        )));
    }
    user_ids.sort_unstable();
    Ok(TargetSelection {
        kind,
        company_ids: Vec::new(),
        user_ids,
        truncated: false,
        seed,
    })
}

// ----------------------------------------------------------------------------
// Metrics
// ----------------------------------------------------------------------------

/// Improvement rate of a single target, or the marker for rows whose
/// pre-attack hit ratio was zero (reported separately, never averaged).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IrOutcome {
    Value(f64),
    Excluded,
}

impl IrOutcome {
    pub fn value(self) -> Option<f64> {
        match self {
            IrOutcome::Value(v) => Some(v),
            IrOutcome::Excluded => None,
        }
    }
}

/// HR_after / HR_before; zero HR_before yields the Excluded marker.
pub fn improvement_rate(hr_before: f64, hr_after: f64) -> Result<IrOutcome> {
    for (label, v) in [("hr_before", hr_before), ("hr_after", hr_after)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!("{label} must lie in [0, 1], got {v}")));
        }
    }
    if hr_before == 0.0 {
        Ok(IrOutcome::Excluded)
    } else {
        Ok(IrOutcome::Value(hr_after / hr_before))
    }
}

/// Top-k company sets for a batch of prefixes (one ranked set per user).
pub fn topk_sets(
    model: &dyn SequenceClassifier,
    prefixes: &[Vec<u32>],
    k: usize,
) -> Result<Vec<Vec<u32>>> {
    let mut sets = Vec::with_capacity(prefixes.len());
    for chunk in prefixes.chunks(512) {
        let probas = model.predict_proba_batch(chunk)?;
        for proba in probas {
            sets.push(crate::predict::topk_indices(&proba, k));
        }
    }
    Ok(sets)
}

/// Fraction of users whose top-k prediction contains the target company.
pub fn hit_ratio_companies(
    model: &dyn SequenceClassifier,
    users: &[Vec<u32>],
    target: u32,
    k: usize,
) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::Config("user list must be non-empty".into()));
    }
    if target as usize >= model.vocab_size() {
        return Err(Error::Vocabulary(format!(
            "target {target} outside vocabulary {}",
            model.vocab_size()
        )));
    }
    let sets = topk_sets(model, users, k)?;
    Ok(hit_ratio_from_sets(&sets, target))
}

/// Membership count over precomputed top-k sets.
pub fn hit_ratio_from_sets(sets: &[Vec<u32>], target: u32) -> f64 {
    let hits = sets.iter().filter(|s| s.contains(&target)).count();
    hits as f64 / sets.len() as f64
}

/// Fraction of target companies whose top-K user shortlist contains at
/// least one target user. Users are ranked per company by predicted
/// probability for that company, ties broken by ascending user id.
pub fn hit_ratio_users(
    model: &dyn SequenceClassifier,
    companies: &[u32],
    all_users: &[(u64, Vec<u32>)],
    target_users: &std::collections::BTreeSet<u64>,
    shortlist_k: usize,
) -> Result<f64> {
    if companies.is_empty() || target_users.is_empty() {
        return Err(Error::Config(
            "companies and target_users must be non-empty".into(),
        ));
    }
    if shortlist_k >= all_users.len() {
        return Err(Error::Config(format!(
            "shortlist size {shortlist_k} must be smaller than the user population {}",
            all_users.len()
        )));
    }
    let prefixes: Vec<Vec<u32>> = all_users.iter().map(|(_, p)| p.clone()).collect();
    let mut probas = Vec::with_capacity(all_users.len());
    for chunk in prefixes.chunks(512) {
        probas.extend(model.predict_proba_batch(chunk)?);
    }

    let mut hit_companies = 0usize;
    for &company in companies {
        if company as usize >= model.vocab_size() {
            return Err(Error::Vocabulary(format!(
                "company {company} outside vocabulary {}",
                model.vocab_size()
            )));
        }
        let mut order: Vec<usize> = (0..all_users.len()).collect();
        order.sort_by(|&a, &b| {
            probas[b][company as usize]
                .partial_cmp(&probas[a][company as usize])
                .unwrap()
                .then(all_users[a].0.cmp(&all_users[b].0))
        });
        let hit = order[..shortlist_k]
            .iter()
            .any(|&i| target_users.contains(&all_users[i].0));
        if hit {
            hit_companies += 1;
        }
    }
    Ok(hit_companies as f64 / companies.len() as f64)
}

// ----------------------------------------------------------------------------
// Small statistics helpers
// ----------------------------------------------------------------------------

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn stddev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let mx = mean(&rx);
    let my = mean(&ry);
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..xs.len() {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    if dx == 0.0 || dy == 0.0 {
        return 0.0;
    }
    num / (dx * dy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Company, Provenance, Trajectory};
    use std::collections::BTreeSet;

    fn sized_corpus() -> Corpus {
        // 6 companies: 0,1,2 small; 3 mid; 4,5 large
        let sizes = [50u32, 100, 200, 5_000, 20_000, 90_000];
        Corpus {
            companies: sizes
                .iter()
                .enumerate()
                .map(|(id, &employee_count)| Company {
                    id: id as u32,
                    name: format!("Company-{id:05}"),
                    employee_count,
                })
                .collect(),
            trajectories: (0..10u64)
                .map(|i| Trajectory {
                    user_id: i,
                    companies: if i % 2 == 0 {
                        vec![0, 1, 2]
                    } else {
                        vec![3, 4, 5]
                    },
                })
                .collect(),
            provenance: Provenance::Derived { note: "test".into() },
        }
    }

    #[test]
    fn company_selection_respects_class_and_warns_on_shortage() {
        let corpus = sized_corpus();
        let sel =
            select_target_companies(&corpus, TargetKind::SmallCompanies, 100, 3).unwrap();
        assert_eq!(sel.company_ids, vec![0, 1, 2]);
        assert!(sel.truncated);

        let sel = select_target_companies(&corpus, TargetKind::LargeCompanies, 1, 3).unwrap();
        assert_eq!(sel.company_ids.len(), 1);
        assert!(corpus.companies[sel.company_ids[0] as usize].employee_count > 10_000);
        assert!(!sel.truncated);

        let a = select_target_companies(&corpus, TargetKind::RandomCompanies, 4, 9).unwrap();
        let b = select_target_companies(&corpus, TargetKind::RandomCompanies, 4, 9).unwrap();
        assert_eq!(a.company_ids, b.company_ids);
    }

    #[test]
    fn user_selection_predicates() {
        let corpus = sized_corpus();
        // promotion: users with zero Large experience (even ids)
        let sel = select_target_users(&corpus, TargetKind::SpecificUsers, true, 1).unwrap();
        assert_eq!(sel.user_ids, vec![0, 2, 4, 6, 8]);
        // demotion: users who touched Large at least once (odd ids)
        let sel = select_target_users(&corpus, TargetKind::SpecificUsers, false, 1).unwrap();
        assert_eq!(sel.user_ids, vec![1, 3, 5, 7, 9]);
        // random: 20% of 10 users = 2
        let sel = select_target_users(&corpus, TargetKind::RandomUsers, true, 1).unwrap();
        assert_eq!(sel.user_ids.len(), 2);
    }

    #[test]
    fn improvement_rate_cases() {
        assert_eq!(
            improvement_rate(0.05, 0.10).unwrap(),
            IrOutcome::Value(2.0)
        );
        assert_eq!(improvement_rate(0.3, 0.3).unwrap(), IrOutcome::Value(1.0));
        assert_eq!(improvement_rate(0.0, 0.1).unwrap(), IrOutcome::Excluded);
        assert!(improvement_rate(-0.1, 0.5).is_err());
        assert!(improvement_rate(0.5, 1.5).is_err());
    }

    struct TableModel {
        rows: Vec<Vec<f64>>,
    }

    impl SequenceClassifier for TableModel {
        fn name(&self) -> &str {
            "table"
        }
        fn vocab_size(&self) -> usize {
            self.rows[0].len()
        }
        fn predict_proba(&self, prefix: &[u32]) -> Result<Vec<f64>> {
            Ok(self.rows[*prefix.last().unwrap() as usize % self.rows.len()].clone())
        }
    }

    #[test]
    fn hit_ratio_companies_fraction() {
        // 4 users; target 2 is in top-1 only for users ending at 1
        let model = TableModel {
            rows: vec![vec![0.6, 0.3, 0.1], vec![0.1, 0.2, 0.7]],
        };
        let users = vec![vec![0u32], vec![0], vec![0], vec![1]];
        let hr = hit_ratio_companies(&model, &users, 2, 1).unwrap();
        assert!((hr - 0.25).abs() < 1e-12);
        let hr = hit_ratio_companies(&model, &users, 0, 1).unwrap();
        assert!((hr - 0.75).abs() < 1e-12);
    }

    #[test]
    fn hit_ratio_companies_matches_brute_force() {
        let corpus = crate::corpus::generate_corpus(&crate::corpus::CorpusConfig {
            n_resumes: 30,
            n_companies: 12,
            length_range: (3, 6),
            seed: 44,
            ..Default::default()
        })
        .unwrap();
        let model =
            crate::predict::train_markov(&crate::predict::MarkovClassifierConfig::default(), &corpus)
                .unwrap();
        let users: Vec<Vec<u32>> = corpus
            .trajectories
            .iter()
            .map(|t| t.companies.clone())
            .collect();
        for target in 0..12u32 {
            let hr = hit_ratio_companies(&model, &users, target, 3).unwrap();
            // oracle: full enumeration via predict_topk
            let mut hits = 0;
            for u in &users {
                let top = crate::predict::predict_topk(&model, u, 3).unwrap();
                if top.iter().any(|&(c, _)| c == target) {
                    hits += 1;
                }
            }
            assert_eq!(hr, hits as f64 / users.len() as f64, "target {target}");
        }
    }

    #[test]
    fn hit_ratio_users_ranking_and_ties() {
        // 1 company, K=2; target user ranked second -> hit
        let model = TableModel {
            rows: vec![
                vec![0.9, 0.1],
                vec![0.5, 0.5],
                vec![0.2, 0.8],
            ],
        };
        let users: Vec<(u64, Vec<u32>)> =
            vec![(10, vec![0]), (11, vec![1]), (12, vec![2])];
        let targets: BTreeSet<u64> = [11].into_iter().collect();
        let hr = hit_ratio_users(&model, &[0], &users, &targets, 2).unwrap();
        assert_eq!(hr, 1.0);
        // target below K for the company
        let targets: BTreeSet<u64> = [12].into_iter().collect();
        let hr = hit_ratio_users(&model, &[0], &users, &targets, 2).unwrap();
        assert_eq!(hr, 0.0);
        // degenerate K
        assert!(hit_ratio_users(&model, &[0], &users, &targets, 3).is_err());
    }

    #[test]
    fn hit_ratio_users_matches_full_sort_oracle() {
        let corpus = crate::corpus::generate_corpus(&crate::corpus::CorpusConfig {
            n_resumes: 20,
            n_companies: 10,
            length_range: (3, 6),
            seed: 31,
            ..Default::default()
        })
        .unwrap();
        let model =
            crate::predict::train_markov(&crate::predict::MarkovClassifierConfig::default(), &corpus)
                .unwrap();
        let users: Vec<(u64, Vec<u32>)> = corpus
            .trajectories
            .iter()
            .map(|t| (t.user_id, t.companies.clone()))
            .collect();
        let companies: Vec<u32> = (0..5).collect();
        let targets: BTreeSet<u64> = [2, 7, 13].into_iter().collect();
        let k = 4;
        let hr = hit_ratio_users(&model, &companies, &users, &targets, k).unwrap();

        // oracle: full sort per company
        let mut hits = 0;
        for &company in &companies {
            let mut scored: Vec<(f64, u64)> = users
                .iter()
                .map(|(id, prefix)| {
                    (
                        model.predict_proba(prefix).unwrap()[company as usize],
                        *id,
                    )
                })
                .collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            if scored[..k].iter().any(|&(_, id)| targets.contains(&id)) {
                hits += 1;
            }
        }
        assert_eq!(hr, hits as f64 / companies.len() as f64);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 4.0]) - 1.0).abs() < 1e-12);
        assert!((spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // one adjacent swap on four points -> 0.8
        assert!((spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn stddev_sample() {
        assert_eq!(stddev(&[1.0]), 0.0);
        let sd = stddev(&[1.0, 2.0, 3.0]);
        assert!((sd - 1.0).abs() < 1e-12);
    }
}
