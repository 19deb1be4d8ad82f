use poisonlab::corpus::{filter_min_frequency, generate_corpus, CorpusConfig, SizeClass};
use poisonlab::graph::{build_graph, degree_stats};
use std::time::Instant;

fn main() {
    for seed in [1u64, 2, 3] {
        let t = Instant::now();
        let config = CorpusConfig { seed, ..Default::default() };
        let corpus = generate_corpus(&config).unwrap();
        let filtered = filter_min_frequency(&corpus, 2).unwrap().corpus;
        let graph = build_graph(&filtered).unwrap();
        let all = degree_stats(&graph, &filtered, None).unwrap();
        let large = degree_stats(&graph, &filtered, Some(SizeClass::Large)).unwrap();
        let small = degree_stats(&graph, &filtered, Some(SizeClass::Small)).unwrap();
        let classes = filtered.size_class_counts();
        println!(
            "seed {seed}: companies {} (S/M/L {:?}) | degree all {all:.2} large {large:.2} small {small:.2} ratio {:.2} | {:.2}s",
            filtered.vocab_size(), classes.values().collect::<Vec<_>>(), large / small, t.elapsed().as_secs_f64()
        );
    }
}
