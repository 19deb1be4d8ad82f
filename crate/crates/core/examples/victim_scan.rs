use poisonlab::corpus::*;
use poisonlab::experiment::*;
use poisonlab::predict::*;
use std::time::Instant;

fn main() {
    let config = CorpusConfig { seed: 1, ..Default::default() };
    let corpus = generate_corpus(&config).unwrap();
    let filtered = filter_min_frequency(&corpus, 2).unwrap().corpus;
    let (train, test) = holdout_split(&filtered, 0.2, 7).unwrap();
    let sel = select_target_companies(&train, TargetKind::SmallCompanies, 20, 3).unwrap();
    let prefixes: Vec<Vec<u32>> = test.iter().map(|p| p.prefix.clone()).collect();

    let variants: Vec<(&str, RecurrentClassifierConfig)> = vec![
        ("compact e20 lr2e-3 b32", RecurrentClassifierConfig {
            epochs: 20, learning_rate: 2e-3, batch_size: 32,
            ..RecurrentClassifierConfig::compact(5)
        }),
        ("emb64 1x128 e15 lr2e-3 b32", RecurrentClassifierConfig {
            embedding_dim: 64, layer_units: vec![128], epochs: 15,
            learning_rate: 2e-3, batch_size: 32, seed: 5, ..Default::default()
        }),
        ("emb64 1x128 e25 lr2e-3 b32", RecurrentClassifierConfig {
            embedding_dim: 64, layer_units: vec![128], epochs: 25,
            learning_rate: 2e-3, batch_size: 32, seed: 5, ..Default::default()
        }),
    ];
    for (label, cfg) in variants {
        let t = Instant::now();
        let victim = train_recurrent(&cfg, &train).unwrap();
        let sets = topk_sets(&victim, &prefixes, 10).unwrap();
        let hrs: Vec<f64> = sel.company_ids.iter().map(|&tg| hit_ratio_from_sets(&sets, tg)).collect();
        println!(
            "{label}: {:.0}s, loss {:.3}, acc {:.3}, non-excluded {}/20, mean HR {:.5}",
            t.elapsed().as_secs_f64(),
            victim.loss_history().last().unwrap(),
            evaluate_accuracy(&victim, &test, 10).unwrap(),
            hrs.iter().filter(|&&h| h > 0.0).count(),
            hrs.iter().sum::<f64>() / 20.0
        );
    }
}
