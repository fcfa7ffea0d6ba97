//! Rayon pool against a single worker on the hot paths. Without the
//! `parallel` feature both arms run the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use brlab::bilinear::{br_maximal_with, DilationGrid, Engine};
use brlab::fields::random_band_limited;
use brlab::grid::GridSpec;
use brlab::symbols::Order;
use brlab::weights::{ap_characteristic, CubeFamily, ExponentTriple, Shifts, WeightPair};

fn run<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .unwrap()
            .install(f),
        None => f(),
    }
}

fn maximal(c: &mut Criterion) {
    let spec = GridSpec::new(1, 256, 1.0).unwrap();
    let f = random_band_limited(spec, 60.0, 1);
    let g = random_band_limited(spec, 60.0, 2);
    let grid = DilationGrid::log_spaced(1.0, 64.0, 32).unwrap();
    let o = Order::real(0.5);
    let mut group = c.benchmark_group("maximal");
    group.sample_size(10);
    for (name, threads) in [("pool", None), ("one", Some(1))] {
        for engine in [Engine::Fft2n, Engine::Pairs] {
            group.bench_with_input(BenchmarkId::new(name, format!("{engine:?}")), &engine, |b, &e| {
                b.iter(|| run(threads, || br_maximal_with(e, o, &grid, &f, &g).unwrap()))
            });
        }
    }
    group.finish();
}

fn characteristic(c: &mut Criterion) {
    let spec = GridSpec::new(2, 128, 1.0).unwrap();
    let pair = WeightPair::powers(spec, vec![0.0, 0.0], 0.5, -0.5).unwrap();
    let e = ExponentTriple::new(2.0, 2.0).unwrap();
    let fam = CubeFamily {
        min_side: 2,
        shifts: Shifts::All,
    };
    let mut group = c.benchmark_group("ap_characteristic");
    group.sample_size(10);
    for (name, threads) in [("pool", None), ("one", Some(1))] {
        group.bench_function(name, |b| b.iter(|| run(threads, || ap_characteristic(&pair, &e, &fam).unwrap())));
    }
    group.finish();
}

criterion_group!(benches, maximal, characteristic);
criterion_main!(benches);
