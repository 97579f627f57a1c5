use criterion::{criterion_group, criterion_main, Criterion};
use smsb::synth::dictionary_problem;
use smsb::{train_subdictionary, DictLearnConfig};

fn training(c: &mut Criterion) {
    let p = dictionary_problem(20, 28, 10_000, 3, 30.0, 1).unwrap();
    let mut cfg = DictLearnConfig::new(28);
    cfg.epochs = 2;
    let mut g = c.benchmark_group("dictionary");
    g.sample_size(10);
    g.bench_function("s20_k28_n10000_2epochs", |b| {
        b.iter(|| train_subdictionary(&p.signals, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, training);
criterion_main!(benches);
