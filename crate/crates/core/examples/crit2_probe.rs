use poisonlab::corpus::CorpusConfig;
use poisonlab::experiment::*;
use poisonlab::predict::RecurrentClassifierConfig;
use std::time::Instant;

fn main() {
    let config = ExperimentConfig {
        corpus: CorpusSource::Generate(CorpusConfig::default()),
        attacks: vec!["francis".into(), "random".into(), "popular".into()],
        injection_ratio: 0.05,
        target_kind: CompanyTargetKind::Small,
        target_count: 20,
        surrogate: RecurrentClassifierConfig { epochs: 10, ..Default::default() },
        victims: vec![VictimSpec {
            name: "recurrent-compact".into(),
            config: ModelConfig::Recurrent(RecurrentClassifierConfig {
                epochs: 8,
                ..RecurrentClassifierConfig::compact(0)
            }),
        }],
        generator: poisonlab::attack::GeneratorParams {
            temperature: 0.0,
            ..Default::default()
        },
        seeds: vec![1],
        jobs: 1,
        ..Default::default()
    };
    let t = Instant::now();
    let report = run_attack_experiment(&config).unwrap();
    println!("wall: {:.0}s", t.elapsed().as_secs_f64());
    for agg in &report.aggregates {
        println!(
            "{} / {}: mean IR {:?} (sd {:.2}), excluded {}/{}, hr {:.5} -> {:.5}, ir-of-mean {:?}",
            agg.victim, agg.attack, agg.mean_ir, agg.sd_ir, agg.excluded_count, agg.row_count,
            agg.mean_hr_before, agg.mean_hr_after, agg.ir_of_mean_hr
        );
    }
    for acc in &report.accuracy {
        println!("accuracy {} / {}: {:.4} -> {:.4}", acc.victim, acc.attack, acc.accuracy_before, acc.accuracy_after);
    }
}
