use criterion::{criterion_group, criterion_main, Criterion};
use erasot_core::oracle::{exact_analysis, lemma3_violation_rate, seed_family, ExactOptions, Lemma3Params};
use erasot_core::sim::run_trials;
use erasot_core::{plan, Backend, ChannelParams, Execution};
use std::hint::black_box;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn trial_farm(c: &mut Criterion) {
    let cfg = plan(1000, 0.03, ChannelParams::new(0.5, 0.8).unwrap()).unwrap();
    let mut g = c.benchmark_group("run_trials_n1000_x512");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| run_trials(black_box(&cfg), 512, 7, exec).unwrap()));
    }
    g.finish();
}

fn exact_oracle(c: &mut Criterion) {
    let cfg = plan(8, 0.01, ChannelParams::new(0.375, 0.9).unwrap())
        .unwrap()
        .with_backend(Backend::RandomTable);
    let seeds = seed_family(7, 1);
    let mut g = c.benchmark_group("exact_analysis_n8_one_seed");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| exact_analysis(black_box(&cfg), &seeds, ExactOptions::default(), exec).unwrap())
        });
    }
    g.finish();
}

fn random_map_scan(c: &mut Criterion) {
    let params = Lemma3Params { n_bits: 14, alpha: 0.25, beta: 0.25, delta_l: 0.25, index_set_cap: 16 };
    let mut g = c.benchmark_group("random_map_scan_n14_x32");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| lemma3_violation_rate(black_box(&params), 32, 7, exec).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, trial_farm, exact_oracle, random_map_scan);
criterion_main!(benches);
