//! Job-transition graph: built from consecutive job moves, it backs the
//! reality constraint (consecutive companies of a generated trajectory
//! must lie within `n` hops) and the degree statistics used for corpus
//! calibration.

use std::collections::BTreeMap;
use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::corpus::{Corpus, SizeClass, Trajectory};
use crate::error::{Error, Result};

/// Company-to-company transition graph.
///
/// Undirected simple adjacency (sorted, deduplicated, no self-loops) for
/// reachability queries, plus directed weighted edges counting observed
/// transitions. An undirected edge exists iff at least one direction was
/// observed.
#[derive(Debug, Clone)]
pub struct TransitionGraph {
    n_nodes: usize,
    adjacency: Vec<Vec<u32>>,
    directed: BTreeMap<(u32, u32), u64>,
}

impl TransitionGraph {
    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Distinct undirected neighbors of `node`.
    pub fn degree(&self, node: u32) -> Result<usize> {
        self.check_node(node)?;
        Ok(self.adjacency[node as usize].len())
    }

    pub fn neighbors(&self, node: u32) -> Result<&[u32]> {
        self.check_node(node)?;
        Ok(&self.adjacency[node as usize])
    }

    /// Observed transition count for the directed edge `src -> dst`.
    pub fn transition_weight(&self, src: u32, dst: u32) -> u64 {
        self.directed.get(&(src, dst)).copied().unwrap_or(0)
    }

    /// Directed successors of `src` with their weights, ascending dst id.
    pub fn successors(&self, src: u32) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.directed
            .range((src, 0)..=(src, u32::MAX))
            .map(|(&(_, dst), &w)| (dst, w))
    }

    fn check_node(&self, node: u32) -> Result<()> {
        if (node as usize) < self.n_nodes {
            Ok(())
        } else {
            Err(Error::UnknownNode(node))
        }
    }

    /// Edge list as "src dst weight" lines, ascending (src, dst).
    pub fn export_edge_list(&self) -> String {
        let mut out = String::new();
        for (&(src, dst), &w) in &self.directed {
            let _ = writeln!(out, "{src} {dst} {w}");
        }
        out
    }
}

/// Count every consecutive unequal company pair as a directed transition.
pub fn build_graph(corpus: &Corpus) -> Result<TransitionGraph> {
    if corpus.trajectories.is_empty() {
        return Err(Error::EmptyCorpus("cannot build graph from empty corpus".into()));
    }
    let n_nodes = corpus.vocab_size();
    let mut directed: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    for t in &corpus.trajectories {
        for pair in t.companies.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if a != b {
                *directed.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    if directed.is_empty() {
        return Err(Error::Integrity(
            "corpus has no company-to-company transitions".into(),
        ));
    }
    let mut adjacency: Vec<Vec<u32>> = vec![Vec::new(); n_nodes];
    for &(a, b) in directed.keys() {
        adjacency[a as usize].push(b);
        adjacency[b as usize].push(a);
    }
    for adj in adjacency.iter_mut() {
        adj.sort_unstable();
        adj.dedup();
    }
    Ok(TransitionGraph {
        n_nodes,
        adjacency,
        directed,
    })
}

/// Mean undirected degree over companies of `class_filter` (or all
/// companies when `None`). Companies without edges count as degree 0.
pub fn degree_stats(
    graph: &TransitionGraph,
    corpus: &Corpus,
    class_filter: Option<SizeClass>,
) -> Result<f64> {
    let mut sum = 0usize;
    let mut count = 0usize;
    for c in &corpus.companies {
        if class_filter.map_or(true, |f| c.size_class() == f) {
            sum += graph.degree(c.id)?;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Config(format!(
            "no companies in class {:?}",
            class_filter
        )));
    }
    Ok(sum as f64 / count as f64)
}

/// True iff the undirected shortest-path distance between the nodes is at
/// most `n`. Every node is within any distance of itself.
pub fn within_distance(graph: &TransitionGraph, c_i: u32, c_j: u32, n: usize) -> Result<bool> {
    graph.check_node(c_i)?;
    graph.check_node(c_j)?;
    if c_i == c_j {
        return Ok(true);
    }
    if n == 0 {
        return Ok(false);
    }
    // depth-truncated BFS with early exit
    let mut seen = vec![false; graph.n_nodes];
    let mut queue = VecDeque::new();
    seen[c_i as usize] = true;
    queue.push_back((c_i, 0usize));
    while let Some((node, depth)) = queue.pop_front() {
        for &next in &graph.adjacency[node as usize] {
            if next == c_j {
                return Ok(true);
            }
            if !seen[next as usize] && depth + 1 < n {
                seen[next as usize] = true;
                queue.push_back((next, depth + 1));
            }
        }
    }
    Ok(false)
}

/// All nodes within `n` hops of `c`, excluding `c` itself, ascending id.
pub fn reachable_set(graph: &TransitionGraph, c: u32, n: usize) -> Result<Vec<u32>> {
    graph.check_node(c)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut seen = vec![false; graph.n_nodes];
    let mut queue = VecDeque::new();
    seen[c as usize] = true;
    queue.push_back((c, 0usize));
    let mut found = Vec::new();
    while let Some((node, depth)) = queue.pop_front() {
        for &next in &graph.adjacency[node as usize] {
            if !seen[next as usize] {
                seen[next as usize] = true;
                found.push(next);
                if depth + 1 < n {
                    queue.push_back((next, depth + 1));
                }
            }
        }
    }
    found.sort_unstable();
    Ok(found)
}

/// True iff every consecutive pair of the trajectory is within `n` hops.
/// Ids that are not graph nodes make the trajectory invalid rather than
/// raising an error, so freshly invented companies simply fail.
pub fn validate_trajectory(graph: &TransitionGraph, trajectory: &Trajectory, n: usize) -> bool {
    explain_invalid(graph, trajectory, n).is_none()
}

/// Diagnostic companion to [`validate_trajectory`]: `None` when valid,
/// otherwise a description of the first violation.
pub fn explain_invalid(
    graph: &TransitionGraph,
    trajectory: &Trajectory,
    n: usize,
) -> Option<String> {
    for &c in &trajectory.companies {
        if c as usize >= graph.n_nodes {
            return Some(format!("company id {c} is not a graph node"));
        }
    }
    for pair in trajectory.companies.windows(2) {
        match within_distance(graph, pair[0], pair[1], n) {
            Ok(true) => {}
            Ok(false) => {
                return Some(format!(
                    "consecutive pair ({}, {}) exceeds distance {n}",
                    pair[0], pair[1]
                ))
            }
            Err(e) => return Some(e.to_string()),
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Company, Provenance};

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

    fn traj(companies: &[u32]) -> Trajectory {
        Trajectory {
            user_id: 0,
            companies: companies.to_vec(),
        }
    }

    #[test]
    fn path_graph_degrees() {
        let corpus = corpus_from(&[&[0, 1, 2]], 3);
        let g = build_graph(&corpus).unwrap();
        assert_eq!(g.degree(0).unwrap(), 1);
        assert_eq!(g.degree(1).unwrap(), 2);
        assert_eq!(g.degree(2).unwrap(), 1);
        assert_eq!(degree_stats(&g, &corpus, None).unwrap(), 4.0 / 3.0);
    }

    #[test]
    fn repeated_transition_accumulates_weight() {
        let corpus = corpus_from(&[&[0, 1, 0], &[0, 1, 1]], 2);
        let g = build_graph(&corpus).unwrap();
        assert_eq!(g.transition_weight(0, 1), 2);
        assert_eq!(g.transition_weight(1, 0), 1);
        assert_eq!(g.degree(0).unwrap(), 1);
        assert_eq!(g.degree(1).unwrap(), 1);
    }

    #[test]
    fn self_transitions_do_not_create_edges() {
        let corpus = corpus_from(&[&[0, 0, 0, 1]], 2);
        let g = build_graph(&corpus).unwrap();
        assert_eq!(g.transition_weight(0, 0), 0);
        assert_eq!(g.degree(0).unwrap(), 1);
    }

    #[test]
    fn zero_transition_corpus_is_an_error() {
        let corpus = corpus_from(&[&[0, 0, 0]], 2);
        assert!(build_graph(&corpus).is_err());
    }

    #[test]
    fn within_distance_on_path() {
        // path 0-1-2-3
        let corpus = corpus_from(&[&[0, 1, 2, 3]], 4);
        let g = build_graph(&corpus).unwrap();
        assert!(within_distance(&g, 0, 2, 3).unwrap());
        assert!(!within_distance(&g, 0, 3, 2).unwrap());
        assert!(within_distance(&g, 0, 3, 3).unwrap());
        assert!(within_distance(&g, 2, 2, 0).unwrap());
        assert!(matches!(
            within_distance(&g, 0, 99, 1),
            Err(Error::UnknownNode(99))
        ));
    }

    #[test]
    fn disconnected_components_unreachable() {
        let corpus = corpus_from(&[&[0, 1, 0], &[2, 3, 2]], 4);
        let g = build_graph(&corpus).unwrap();
        assert!(!within_distance(&g, 0, 3, 100).unwrap());
    }

    #[test]
    fn reachable_set_on_star() {
        // star: center 0, leaves 1,2,3
        let corpus = corpus_from(&[&[1, 0, 2], &[3, 0, 1]], 4);
        let g = build_graph(&corpus).unwrap();
        assert_eq!(reachable_set(&g, 0, 1).unwrap(), vec![1, 2, 3]);
        assert_eq!(reachable_set(&g, 1, 2).unwrap(), vec![0, 2, 3]);
    }

    #[test]
    fn validate_trajectory_cases() {
        // path 0-1-2-3
        let corpus = corpus_from(&[&[0, 1, 2, 3]], 4);
        let g = build_graph(&corpus).unwrap();
        assert!(validate_trajectory(&g, &traj(&[0, 1, 2]), 1));
        assert!(!validate_trajectory(&g, &traj(&[0, 3]), 2));
        assert!(validate_trajectory(&g, &traj(&[0, 3]), 3));
        assert!(validate_trajectory(&g, &traj(&[2]), 1));
        // invented company: invalid, not a panic
        assert!(!validate_trajectory(&g, &traj(&[0, 99]), 3));
        assert!(explain_invalid(&g, &traj(&[0, 99]), 3).is_some());
    }

    #[test]
    fn degree_sequence_matches_brute_force_pair_scan() {
        let config = crate::corpus::CorpusConfig {
            n_resumes: 50,
            n_companies: 25,
            length_range: (3, 8),
            seed: 13,
            ..Default::default()
        };
        let corpus = crate::corpus::generate_corpus(&config).unwrap();
        let g = build_graph(&corpus).unwrap();

        // oracle: enumerate unordered unequal pairs
        let mut pairs = std::collections::BTreeSet::new();
        for t in &corpus.trajectories {
            for w in t.companies.windows(2) {
                if w[0] != w[1] {
                    let (a, b) = (w[0].min(w[1]), w[0].max(w[1]));
                    pairs.insert((a, b));
                }
            }
        }
        let mut degrees = vec![0usize; 25];
        for &(a, b) in &pairs {
            degrees[a as usize] += 1;
            degrees[b as usize] += 1;
        }
        for id in 0..25u32 {
            assert_eq!(g.degree(id).unwrap(), degrees[id as usize], "node {id}");
        }
    }

    #[test]
    fn export_edge_list_is_sorted() {
        let corpus = corpus_from(&[&[2, 0, 1], &[0, 1, 2]], 3);
        let g = build_graph(&corpus).unwrap();
        let text = g.export_edge_list();
        let lines: Vec<&str> = text.lines().collect();
        let mut sorted = lines.clone();
        sorted.sort();
        assert_eq!(lines, sorted);
        for line in lines {
            assert_eq!(line.split_whitespace().count(), 3);
        }
    }
}
