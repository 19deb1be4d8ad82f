//! Career-trajectory corpora: domain types, a calibrated synthetic
//! generator, newline-delimited JSON persistence, frequency filtering,
//! and train/test splitting.
//!
//! A corpus is a dense company vocabulary (ids `0..M`) plus a set of
//! user trajectories over that vocabulary. Generated corpora are random
//! walks on a latent company graph wired by size-weighted preferential
//! attachment, so large employers accumulate systematically more
//! transition partners than small ones.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const MIN_TRAJECTORY_LEN: usize = 3;
pub const MAX_TRAJECTORY_LEN: usize = 15;

/// Employer size band; derived from the employee count, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeClass {
    Small,
    Mid,
    Large,
}

impl SizeClass {
    pub fn from_employee_count(employee_count: u32) -> SizeClass {
        if employee_count <= 200 {
            SizeClass::Small
        } else if employee_count > 10_000 {
            SizeClass::Large
        } else {
            SizeClass::Mid
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeClass::Small => write!(f, "Small"),
            SizeClass::Mid => write!(f, "Mid"),
            SizeClass::Large => write!(f, "Large"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Company {
    pub id: u32,
    pub name: String,
    pub employee_count: u32,
}

impl Company {
    pub fn size_class(&self) -> SizeClass {
        SizeClass::from_employee_count(self.employee_count)
    }
}

/// One user's ordered career history as company ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: u64,
    pub companies: Vec<u32>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.companies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.companies.is_empty()
    }
}

/// Where a corpus came from; in-memory metadata only, never persisted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    Generated { config: CorpusConfig },
    Loaded { path: String },
    Derived { note: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeMix {
    pub small: f64,
    pub mid: f64,
    pub large: f64,
}

impl Default for SizeMix {
    fn default() -> Self {
        SizeMix {
            small: 0.70,
            mid: 0.25,
            large: 0.05,
        }
    }
}

impl SizeMix {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.small, self.mid, self.large];
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("size_mix fractions must be non-negative".into()));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "size_mix must sum to 1 (got {sum})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub n_resumes: usize,
    pub n_companies: usize,
    pub size_mix: SizeMix,
    pub length_range: (usize, usize),
    /// Exponent on employee count when wiring the latent graph; larger
    /// values concentrate transitions on big employers.
    pub attachment_bias: f64,
    /// Latent partners drawn per company before walks begin.
    pub latent_edges_per_company: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    /// Calibration default: big enough that the transition-graph degree
    /// ordering Large > All > Small is stable across seeds.
    fn default() -> Self {
        CorpusConfig {
            n_resumes: 10_000,
            n_companies: 2_000,
            size_mix: SizeMix::default(),
            length_range: (5, 10),
            attachment_bias: 0.75,
            latent_edges_per_company: 3,
            seed: 42,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_resumes < 1 {
            return Err(Error::Config("n_resumes must be >= 1".into()));
        }
        if self.n_companies < 3 {
            return Err(Error::Config("n_companies must be >= 3".into()));
        }
        self.size_mix.validate()?;
        let (lo, hi) = self.length_range;
        if lo < MIN_TRAJECTORY_LEN || hi > MAX_TRAJECTORY_LEN || lo > hi {
            return Err(Error::Config(format!(
                "length_range must satisfy {MIN_TRAJECTORY_LEN} <= lo <= hi <= {MAX_TRAJECTORY_LEN}"
            )));
        }
        if !self.attachment_bias.is_finite() || self.attachment_bias <= 0.0 {
            return Err(Error::Config("attachment_bias must be positive".into()));
        }
        if self.latent_edges_per_company < 1 {
            return Err(Error::Config("latent_edges_per_company must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub companies: Vec<Company>,
    pub trajectories: Vec<Trajectory>,
    pub provenance: Provenance,
}

impl Corpus {
    pub fn vocab_size(&self) -> usize {
        self.companies.len()
    }

    /// Occurrences of each company over all trajectory positions.
    pub fn occurrence_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.companies.len()];
        for t in &self.trajectories {
            for &c in &t.companies {
                counts[c as usize] += 1;
            }
        }
        counts
    }

    pub fn size_class_counts(&self) -> BTreeMap<SizeClass, usize> {
        let mut counts = BTreeMap::new();
        for c in &self.companies {
            *counts.entry(c.size_class()).or_insert(0) += 1;
        }
        counts
    }

    /// Same companies and trajectories, ignoring provenance.
    pub fn same_data(&self, other: &Corpus) -> bool {
        self.companies == other.companies && self.trajectories == other.trajectories
    }

    /// New corpus with extra trajectories appended (used for poison
    /// injection). Caller guarantees the extras reference valid ids.
    pub fn merged_with(&self, extra: &[Trajectory]) -> Result<Corpus> {
        for t in extra {
            for &c in &t.companies {
                if c as usize >= self.companies.len() {
                    return Err(Error::Integrity(format!(
                        "injected trajectory references unknown company id {c}"
                    )));
                }
            }
        }
        let mut trajectories = self.trajectories.clone();
        trajectories.extend_from_slice(extra);
        Ok(Corpus {
            companies: self.companies.clone(),
            trajectories,
            provenance: Provenance::Derived {
                note: format!("merged with {} injected trajectories", extra.len()),
            },
        })
    }

    /// Check structural invariants: dense ids, valid references, length
    /// bounds.
    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.companies.iter().enumerate() {
            if c.id as usize != i {
                return Err(Error::Integrity(format!(
                    "company ids must be dense: index {i} holds id {}",
                    c.id
                )));
            }
            if c.employee_count == 0 {
                return Err(Error::Integrity(format!(
                    "company {} has zero employees",
                    c.id
                )));
            }
        }
        let m = self.companies.len();
        for t in &self.trajectories {
            if t.len() < MIN_TRAJECTORY_LEN || t.len() > MAX_TRAJECTORY_LEN {
                return Err(Error::Integrity(format!(
                    "trajectory for user {} has length {} outside [{MIN_TRAJECTORY_LEN}, {MAX_TRAJECTORY_LEN}]",
                    t.user_id,
                    t.len()
                )));
            }
            for &c in &t.companies {
                if c as usize >= m {
                    return Err(Error::Integrity(format!(
                        "trajectory for user {} references unknown company id {c}",
                        t.user_id
                    )));
                }
            }
        }
        Ok(())
    }
}

// ----------------------------------------------------------------------------
// Synthetic generation
// ----------------------------------------------------------------------------

fn sample_employee_count(class: SizeClass, rng: &mut impl Rng) -> u32 {
    // Log-uniform within the band, clamped to its boundaries.
    let (lo, hi): (f64, f64) = match class {
        SizeClass::Small => (1.0, 200.0),
        SizeClass::Mid => (201.0, 10_000.0),
        SizeClass::Large => (10_001.0, 200_000.0),
    };
    let u: f64 = rng.gen();
    let v = (lo.ln() + u * (hi.ln() - lo.ln())).exp();
    (v.round() as u32).clamp(lo as u32, hi as u32)
}

/// Largest-remainder apportionment of `total` across the mix fractions.
fn class_counts(mix: SizeMix, total: usize) -> [usize; 3] {
    let fracs = [mix.small, mix.mid, mix.large];
    let exact: Vec<f64> = fracs.iter().map(|f| f * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rem: usize = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if rem == 0 {
            break;
        }
        counts[i] += 1;
        rem -= 1;
    }
    [counts[0], counts[1], counts[2]]
}

/// Weighted index sampler over fixed weights (cumulative-sum bisection).
struct WeightedSampler {
    cumulative: Vec<f64>,
    total: f64,
}

impl WeightedSampler {
    fn new(weights: &[f64]) -> Self {
        let mut cumulative = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in weights {
            acc += w;
            cumulative.push(acc);
        }
        WeightedSampler {
            cumulative,
            total: acc,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let x: f64 = rng.gen::<f64>() * self.total;
        match self
            .cumulative
            .binary_search_by(|c| c.partial_cmp(&x).unwrap())
        {
            Ok(i) => (i + 1).min(self.cumulative.len() - 1),
            Err(i) => i.min(self.cumulative.len() - 1),
        }
    }
}

/// Generate a synthetic corpus: a latent company graph wired by
/// size-weighted preferential attachment, then one random walk per resume.
/// Deterministic in `config.seed`; per-trajectory RNG streams keep parallel
/// and serial generation identical.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Corpus> {
    config.validate()?;
    let m = config.n_companies;

    // Companies: shuffled class labels so id order carries no size signal.
    let mut company_rng = rng::stream(config.seed, "corpus/companies", &[]);
    let [n_small, n_mid, n_large] = class_counts(config.size_mix, m);
    let mut labels = Vec::with_capacity(m);
    labels.extend(std::iter::repeat(SizeClass::Small).take(n_small));
    labels.extend(std::iter::repeat(SizeClass::Mid).take(n_mid));
    labels.extend(std::iter::repeat(SizeClass::Large).take(n_large));
    labels.shuffle(&mut company_rng);
    let companies: Vec<Company> = labels
        .iter()
        .enumerate()
        .map(|(id, &class)| Company {
            id: id as u32,
            name: format!("Company-{id:05}"),
            employee_count: sample_employee_count(class, &mut company_rng),
        })
        .collect();

    // Latent graph: each company draws partners with probability
    // proportional to employee_count^attachment_bias.
    let weights: Vec<f64> = companies
        .iter()
        .map(|c| (c.employee_count as f64).powf(config.attachment_bias))
        .collect();
    let sampler = WeightedSampler::new(&weights);
    let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut wiring_rng = rng::stream(config.seed, "corpus/latent-graph", &[]);
    for i in 0..m {
        let mut drawn = 0;
        let mut attempts = 0;
        while drawn < config.latent_edges_per_company && attempts < 64 {
            attempts += 1;
            let j = sampler.sample(&mut wiring_rng);
            if j == i || neighbors[i].contains(&(j as u32)) {
                continue;
            }
            neighbors[i].push(j as u32);
            neighbors[j].push(i as u32);
            drawn += 1;
        }
    }
    for adj in neighbors.iter_mut() {
        adj.sort_unstable();
        adj.dedup();
    }

    // Walks: uniform starts and uniform neighbor steps. Degree asymmetry
    // comes entirely from the latent wiring, while visit mass follows the
    // walk's stationary distribution, keeping small employers common as
    // individual stops.
    let (lo, hi) = config.length_range;
    let trajectories: Vec<Trajectory> = (0..config.n_resumes)
        .map(|idx| {
            let mut walk_rng = rng::stream(config.seed, "corpus/trajectory", &[idx as u64]);
            let len = walk_rng.gen_range(lo..=hi);
            let mut seq = Vec::with_capacity(len);
            let mut current = walk_rng.gen_range(0..m);
            seq.push(current as u32);
            while seq.len() < len {
                let adj = &neighbors[current];
                if adj.is_empty() {
                    // isolated node; restart the walk from a fresh start
                    current = walk_rng.gen_range(0..m);
                    continue;
                }
                current = adj[walk_rng.gen_range(0..adj.len())] as usize;
                seq.push(current as u32);
            }
            Trajectory {
                user_id: idx as u64,
                companies: seq,
            }
        })
        .collect();

    let corpus = Corpus {
        companies,
        trajectories,
        provenance: Provenance::Generated {
            config: config.clone(),
        },
    };
    corpus.validate()?;
    Ok(corpus)
}

// ----------------------------------------------------------------------------
// File format: newline-delimited JSON, header line then one trajectory per line
// ----------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    version: u32,
    companies: Vec<Company>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryLine {
    user_id: u64,
    companies: Vec<u32>,
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = HeaderLine {
        version: 1,
        companies: corpus.companies.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for t in &corpus.trajectories {
        let line = TrajectoryLine {
            user_id: t.user_id,
            companies: t.companies.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let header: HeaderLine = match lines.next() {
        None => return Err(Error::EmptyCorpus(format!("{} is empty", path.display()))),
        Some((_, line)) => {
            let line = line?;
            if line.trim().is_empty() {
                return Err(Error::EmptyCorpus(format!("{} is empty", path.display())));
            }
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: 1,
                msg: format!("bad header: {e}"),
            })?
        }
    };
    if header.version != 1 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unsupported corpus version {}", header.version),
        });
    }

    let mut trajectories = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrajectoryLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        trajectories.push(Trajectory {
            user_id: record.user_id,
            companies: record.companies,
        });
    }

    let corpus = Corpus {
        companies: header.companies,
        trajectories,
        provenance: Provenance::Loaded {
            path: path.display().to_string(),
        },
    };
    corpus.validate()?;
    Ok(corpus)
}

// ----------------------------------------------------------------------------
// Frequency filtering
// ----------------------------------------------------------------------------

/// Result of [`filter_min_frequency`]: the filtered corpus plus the
/// old-id to new-id densification map.
#[derive(Debug, Clone)]
pub struct Filtered {
    pub corpus: Corpus,
    pub id_map: BTreeMap<u32, u32>,
}

/// Drop companies occurring fewer than `min_count` times, delete their
/// tokens, drop trajectories that fall under the minimum length, and
/// re-densify ids. Iterates to a fixed point, so re-filtering the result
/// changes nothing.
pub fn filter_min_frequency(corpus: &Corpus, min_count: u64) -> Result<Filtered> {
    if min_count < 1 {
        return Err(Error::Config("min_count must be >= 1".into()));
    }
    let mut keep_company = vec![true; corpus.companies.len()];
    let mut trajectories: Vec<Trajectory> = corpus.trajectories.clone();

    loop {
        let mut counts = vec![0u64; corpus.companies.len()];
        for t in &trajectories {
            for &c in &t.companies {
                counts[c as usize] += 1;
            }
        }
        let mut changed = false;
        for (i, keep) in keep_company.iter_mut().enumerate() {
            if *keep && counts[i] < min_count {
                *keep = false;
                changed = true;
            }
        }
        let before = trajectories.len();
        for t in trajectories.iter_mut() {
            t.companies.retain(|&c| keep_company[c as usize]);
        }
        trajectories.retain(|t| t.len() >= MIN_TRAJECTORY_LEN);
        if trajectories.len() != before {
            changed = true;
        }
        if !changed {
            break;
        }
    }

    if trajectories.is_empty() {
        return Err(Error::EmptyCorpus(
            "frequency filtering removed every trajectory".into(),
        ));
    }

    let mut id_map = BTreeMap::new();
    let mut companies = Vec::new();
    for (old_id, keep) in keep_company.iter().enumerate() {
        if *keep {
            let new_id = companies.len() as u32;
            id_map.insert(old_id as u32, new_id);
            let mut company = corpus.companies[old_id].clone();
            company.id = new_id;
            companies.push(company);
        }
    }
    if companies.is_empty() {
        return Err(Error::EmptyCorpus(
            "frequency filtering removed every company".into(),
        ));
    }
    for t in trajectories.iter_mut() {
        for c in t.companies.iter_mut() {
            *c = id_map[c];
        }
    }

    let filtered = Corpus {
        companies,
        trajectories,
        provenance: Provenance::Derived {
            note: format!("min-frequency filter (min_count={min_count})"),
        },
    };
    filtered.validate()?;
    Ok(Filtered {
        corpus: filtered,
        id_map,
    })
}

// ----------------------------------------------------------------------------
// Holdout split
// ----------------------------------------------------------------------------

/// One evaluation item: everything but the final company, plus that final
/// company as the label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPair {
    pub user_id: u64,
    pub prefix: Vec<u32>,
    pub label: u32,
}

/// Deterministically partition trajectories; test items become
/// (prefix, last company) pairs while train keeps full trajectories.
pub fn holdout_split(
    corpus: &Corpus,
    test_fraction: f64,
    seed: u64,
) -> Result<(Corpus, Vec<TestPair>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = corpus.trajectories.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::Config(format!(
            "test_fraction {test_fraction} yields an empty split side ({n} trajectories, {n_test} test)"
        )));
    }

    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng::stream(seed, "holdout", &[]));
    let mut is_test = vec![false; n];
    for &i in indices.iter().take(n_test) {
        is_test[i] = true;
    }

    let mut train = Vec::with_capacity(n - n_test);
    let mut test = Vec::with_capacity(n_test);
    for (i, t) in corpus.trajectories.iter().enumerate() {
        if is_test[i] {
            let last = *t.companies.last().expect("non-empty trajectory");
            test.push(TestPair {
                user_id: t.user_id,
                prefix: t.companies[..t.len() - 1].to_vec(),
                label: last,
            });
        } else {
            train.push(t.clone());
        }
    }

    let train_corpus = Corpus {
        companies: corpus.companies.clone(),
        trajectories: train,
        provenance: Provenance::Derived {
            note: format!("holdout split (test_fraction={test_fraction}, seed={seed})"),
        },
    };
    Ok((train_corpus, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> CorpusConfig {
        CorpusConfig {
            n_resumes: 100,
            n_companies: 50,
            length_range: (5, 10),
            seed: 7,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn generate_respects_shape() {
        let corpus = generate_corpus(&tiny_config()).unwrap();
        assert_eq!(corpus.trajectories.len(), 100);
        assert_eq!(corpus.companies.len(), 50);
        for t in &corpus.trajectories {
            assert!(t.len() >= 5 && t.len() <= 10);
            assert!(t.companies.iter().all(|&c| c < 50));
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let a = generate_corpus(&tiny_config()).unwrap();
        let b = generate_corpus(&tiny_config()).unwrap();
        assert!(a.same_data(&b));

        let dir = tempfile::tempdir().unwrap();
        let pa = dir.path().join("a.jsonl");
        let pb = dir.path().join("b.jsonl");
        save_corpus(&a, &pa).unwrap();
        save_corpus(&b, &pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    }

    #[test]
    fn generate_rejects_bad_config() {
        let mut cfg = tiny_config();
        cfg.n_companies = 2;
        assert!(matches!(generate_corpus(&cfg), Err(Error::Config(_))));

        let mut cfg = tiny_config();
        cfg.size_mix.small = 0.9;
        assert!(matches!(generate_corpus(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn size_class_thresholds() {
        assert_eq!(SizeClass::from_employee_count(1), SizeClass::Small);
        assert_eq!(SizeClass::from_employee_count(200), SizeClass::Small);
        assert_eq!(SizeClass::from_employee_count(201), SizeClass::Mid);
        assert_eq!(SizeClass::from_employee_count(10_000), SizeClass::Mid);
        assert_eq!(SizeClass::from_employee_count(10_001), SizeClass::Large);
    }

    #[test]
    fn save_load_round_trip() {
        let corpus = generate_corpus(&tiny_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        save_corpus(&corpus, &path).unwrap();
        let loaded = load_corpus(&path).unwrap();
        assert!(corpus.same_data(&loaded));
    }

    #[test]
    fn load_rejects_dangling_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"version\":1,\"companies\":[{\"id\":0,\"name\":\"A\",\"employee_count\":10},{\"id\":1,\"name\":\"B\",\"employee_count\":10}]}\n",
                "{\"user_id\":0,\"companies\":[0,1,999]}\n"
            ),
        )
        .unwrap();
        assert!(matches!(load_corpus(&path), Err(Error::Integrity(_))));
    }

    #[test]
    fn load_rejects_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(matches!(load_corpus(&path), Err(Error::EmptyCorpus(_))));
    }

    #[test]
    fn load_names_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"version\":1,\"companies\":[{\"id\":0,\"name\":\"A\",\"employee_count\":10}]}\n",
                "not json\n"
            ),
        )
        .unwrap();
        match load_corpus(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    fn corpus_from(trajs: &[&[u32]], m: u32) -> Corpus {
        Corpus {
            companies: (0..m)
                .map(|id| Company {
                    id,
                    name: format!("Company-{id:05}"),
                    employee_count: 100 + id,
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
            provenance: Provenance::Derived {
                note: "test".into(),
            },
        }
    }

    #[test]
    fn filter_removes_rare_company_and_short_trajectories() {
        // company 9 occurs once; deleting it shortens the second
        // trajectory below 3 tokens so the trajectory is dropped.
        let corpus = corpus_from(&[&[0, 1, 2, 0, 1, 2], &[9, 0, 1]], 10);
        let filtered = filter_min_frequency(&corpus, 2).unwrap();
        assert_eq!(filtered.corpus.companies.len(), 3);
        assert!(!filtered.id_map.contains_key(&9));
        for t in &filtered.corpus.trajectories {
            assert!(t.len() >= 3);
        }
    }

    #[test]
    fn filter_is_fixed_point_when_all_frequent() {
        let corpus = corpus_from(&[&[0, 1, 2], &[2, 1, 0]], 3);
        let filtered = filter_min_frequency(&corpus, 2).unwrap();
        assert!(filtered.corpus.same_data(&corpus) || filtered.corpus.trajectories == corpus.trajectories);
        // ids unchanged because every company stayed
        assert!(filtered.id_map.iter().all(|(old, new)| old == new));
    }

    #[test]
    fn filter_matches_brute_force_recount() {
        // independent oracle: recount-and-delete until stable, then compare
        let config = CorpusConfig {
            n_resumes: 50,
            n_companies: 30,
            length_range: (3, 8),
            seed: 99,
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&config).unwrap();
        let filtered = filter_min_frequency(&corpus, 2).unwrap();

        // brute force
        let mut trajs: Vec<Vec<u32>> = corpus
            .trajectories
            .iter()
            .map(|t| t.companies.clone())
            .collect();
        let mut alive: Vec<bool> = vec![true; 30];
        loop {
            let mut counts = vec![0u64; 30];
            for t in &trajs {
                for &c in t {
                    counts[c as usize] += 1;
                }
            }
            let mut changed = false;
            for i in 0..30 {
                if alive[i] && counts[i] < 2 {
                    alive[i] = false;
                    changed = true;
                }
            }
            let before = trajs.len();
            for t in trajs.iter_mut() {
                t.retain(|&c| alive[c as usize]);
            }
            trajs.retain(|t| t.len() >= 3);
            if trajs.len() != before {
                changed = true;
            }
            if !changed {
                break;
            }
        }
        let mut remap = BTreeMap::new();
        for i in 0..30u32 {
            if alive[i as usize] {
                let next = remap.len() as u32;
                remap.insert(i, next);
            }
        }
        let expected: Vec<Vec<u32>> = trajs
            .iter()
            .map(|t| t.iter().map(|c| remap[c]).collect())
            .collect();
        let got: Vec<Vec<u32>> = filtered
            .corpus
            .trajectories
            .iter()
            .map(|t| t.companies.clone())
            .collect();
        assert_eq!(expected, got);
        assert_eq!(remap, filtered.id_map);
    }

    #[test]
    fn filter_is_idempotent() {
        let config = CorpusConfig {
            n_resumes: 60,
            n_companies: 40,
            length_range: (3, 6),
            seed: 3,
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&config).unwrap();
        let once = filter_min_frequency(&corpus, 2).unwrap();
        let twice = filter_min_frequency(&once.corpus, 2).unwrap();
        assert!(once.corpus.same_data(&twice.corpus));
    }

    #[test]
    fn holdout_split_counts_and_pairs() {
        let corpus = corpus_from(
            &[
                &[0, 1, 2, 3, 4],
                &[1, 2, 3],
                &[2, 3, 4],
                &[3, 4, 0],
                &[4, 0, 1],
                &[0, 2, 4],
                &[1, 3, 0],
                &[2, 4, 1],
                &[3, 0, 2],
                &[4, 1, 3],
            ],
            5,
        );
        let (train, test) = holdout_split(&corpus, 0.2, 11).unwrap();
        assert_eq!(train.trajectories.len(), 8);
        assert_eq!(test.len(), 2);
        for pair in &test {
            let original = corpus
                .trajectories
                .iter()
                .find(|t| t.user_id == pair.user_id)
                .unwrap();
            assert_eq!(pair.prefix, original.companies[..original.len() - 1]);
            assert_eq!(pair.label, *original.companies.last().unwrap());
        }
        // same seed -> identical partition
        let (train2, test2) = holdout_split(&corpus, 0.2, 11).unwrap();
        assert_eq!(train.trajectories, train2.trajectories);
        assert_eq!(test, test2);
        // union covers every trajectory exactly once
        let mut all: Vec<u64> = train
            .trajectories
            .iter()
            .map(|t| t.user_id)
            .chain(test.iter().map(|p| p.user_id))
            .collect();
        all.sort_unstable();
        let mut expected: Vec<u64> = corpus.trajectories.iter().map(|t| t.user_id).collect();
        expected.sort_unstable();
        assert_eq!(all, expected);
    }

    #[test]
    fn holdout_split_rejects_degenerate_fraction() {
        let corpus = corpus_from(&[&[0, 1, 2], &[1, 2, 0]], 3);
        assert!(holdout_split(&corpus, 0.01, 1).is_err());
        assert!(holdout_split(&corpus, 0.99, 1).is_err());
    }
}
