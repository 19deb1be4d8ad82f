use poisonlab::corpus::*;
use poisonlab::experiment::*;
use poisonlab::graph::*;
use poisonlab::predict::*;

fn main() {
    let config = CorpusConfig { seed: 1, ..Default::default() };
    let corpus = generate_corpus(&config).unwrap();
    let filtered = filter_min_frequency(&corpus, 2).unwrap().corpus;
    let (train, test) = holdout_split(&filtered, 0.2, 7).unwrap();

    // occurrence share by class
    let counts = train.occurrence_counts();
    let mut share = [0u64; 3];
    for c in &train.companies {
        let idx = match c.size_class() { SizeClass::Small => 0, SizeClass::Mid => 1, SizeClass::Large => 2 };
        share[idx] += counts[c.id as usize];
    }
    let total: u64 = share.iter().sum();
    println!("occurrence share S/M/L: {:.2}/{:.2}/{:.2}", share[0] as f64/total as f64, share[1] as f64/total as f64, share[2] as f64/total as f64);

    let sel = select_target_companies(&train, TargetKind::SmallCompanies, 20, 3).unwrap();
    let prefixes: Vec<Vec<u32>> = test.iter().map(|p| p.prefix.clone()).collect();

    let markov = train_markov(&MarkovClassifierConfig::default(), &train).unwrap();
    let hrs = |model: &dyn SequenceClassifier| -> Vec<f64> {
        let sets = topk_sets(model, &prefixes, 10).unwrap();
        sel.company_ids.iter().map(|&t| hit_ratio_from_sets(&sets, t)).collect()
    };
    let m_hr = hrs(&markov);
    println!("markov: non-excluded {}/20, mean HR_before {:.5}", m_hr.iter().filter(|&&h| h > 0.0).count(), m_hr.iter().sum::<f64>()/20.0);

    let victim = train_recurrent(&RecurrentClassifierConfig { epochs: 20, ..RecurrentClassifierConfig::compact(5) }, &train).unwrap();
    let v_hr = hrs(&victim);
    println!("lstm-compact e20: non-excluded {}/20, mean HR_before {:.5}, final loss {:.3}", v_hr.iter().filter(|&&h| h > 0.0).count(), v_hr.iter().sum::<f64>()/20.0, victim.loss_history().last().unwrap());
}
