use poisonlab::corpus::{filter_min_frequency, generate_corpus, holdout_split, CorpusConfig};
use poisonlab::predict::{train_recurrent, RecurrentClassifierConfig};
use std::time::Instant;

fn main() {
    let config = CorpusConfig { seed: 1, ..Default::default() };
    let corpus = generate_corpus(&config).unwrap();
    let filtered = filter_min_frequency(&corpus, 2).unwrap().corpus;
    let (train, test) = holdout_split(&filtered, 0.2, 7).unwrap();
    println!("train {} trajectories, vocab {}, test {}", train.trajectories.len(), train.vocab_size(), test.len());

    let t = Instant::now();
    let surrogate = train_recurrent(
        &RecurrentClassifierConfig { epochs: 2, seed: 5, ..Default::default() },
        &train,
    )
    .unwrap();
    println!(
        "surrogate 2 epochs: {:.1}s ({:.2}s/epoch), loss {:?}",
        t.elapsed().as_secs_f64(),
        t.elapsed().as_secs_f64() / 2.0,
        surrogate.loss_history()
    );

    let t = Instant::now();
    let victim = train_recurrent(
        &RecurrentClassifierConfig { epochs: 2, seed: 6, ..RecurrentClassifierConfig::compact(6) },
        &train,
    )
    .unwrap();
    println!(
        "compact victim 2 epochs: {:.1}s ({:.2}s/epoch), loss {:?}",
        t.elapsed().as_secs_f64(),
        t.elapsed().as_secs_f64() / 2.0,
        victim.loss_history()
    );
}
