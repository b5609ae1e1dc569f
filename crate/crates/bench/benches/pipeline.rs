use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mbidx_bench::{indexings, Fixture};
use mbidx_core::{
    closed_set_run, exhaustive_search, extract_patterns, search, BinaryTemplate, Embedding,
    Protector, Protocol, Scheme, SchemeConfig, Strategy,
};

fn patterns(c: &mut Criterion) {
    let bits = BinaryTemplate::from_bits((0..2048).map(|i| (i * 7919) % 13 < 6)).unwrap();
    let mut g = c.benchmark_group("extract_patterns");
    for k in [3u32, 5, 8] {
        g.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| extract_patterns(black_box(&bits), k).unwrap())
        });
    }
    g.finish();
}

fn protection(c: &mut Criterion) {
    let e = Embedding::new(
        (0..512)
            .map(|i| ((i * 37) % 101) as f32 / 50.0 - 1.0)
            .collect(),
    )
    .unwrap();
    let mut g = c.benchmark_group("protect");
    for scheme in Scheme::ALL {
        let p = Protector::new(&SchemeConfig::new(scheme, 0), "face", 512).unwrap();
        g.bench_function(scheme.to_string(), |b| {
            b.iter(|| p.protect(black_box(&e)).unwrap())
        });
    }
    g.finish();
}

fn retrieval(c: &mut Criterion) {
    let fx = Fixture::new(1000, Scheme::BioHashing);
    let calib = fx.calibration();
    let probes = fx.probes();
    let mut g = c.benchmark_group("search_1000");
    for strategy in Strategy::ALL {
        let table = fx.table(strategy, 5);
        g.bench_function(format!("{strategy}/t=8"), |b| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % probes.len();
                search(&probes[i], &table, 8, &calib).unwrap()
            })
        });
    }
    let table = fx.table(Strategy::FeatureConcat, 1);
    g.bench_function("exhaustive", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % probes.len();
            exhaustive_search(&probes[i], &table, &calib).unwrap()
        })
    });
    g.finish();

    c.bench_function("build_table_1000/feature-concat/k=5", |b| {
        b.iter(|| fx.table(Strategy::FeatureConcat, black_box(5)))
    });
}

fn evaluation(c: &mut Criterion) {
    let fx = Fixture::new(300, Scheme::BioHashing);
    let protocol = Protocol::default();
    let mut g = c.benchmark_group("closed_set_300");
    g.sample_size(10);
    for ix in indexings(5) {
        g.bench_function(ix.label(), |b| {
            b.iter(|| closed_set_run(&fx.data, &fx.characteristics, ix, &protocol).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, patterns, protection, retrieval, evaluation);
criterion_main!(benches);
