//! Sequential against data-parallel execution of the replicate loops.
//! Without the `parallel` feature both arms run sequentially.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use lpball::samplers::{sample_projnorm_direct, sample_yn};
use lpball::{Executor, Mode, ModelSpec, PIndex, RngStream, WSpec};

fn executors() -> [(&'static str, Executor); 2] {
    [("sequential", Executor::sequential()), ("parallel", Executor::new(0))]
}

fn bench_yn(c: &mut Criterion) {
    let p = PIndex::new(1.5).unwrap();
    let m = 10_000;
    let mut group = c.benchmark_group("sample_yn");
    group.throughput(Throughput::Elements(m as u64));
    group.sample_size(10);
    for (label, mode) in [
        ("q_norm", Mode::QNorm { q: 3.0 }),
        ("fixed", Mode::GrassmannFixed { k: 256 }),
        ("random", Mode::GrassmannRandom { lambda: 0.5 }),
    ] {
        let spec = ModelSpec::new(p, 1024, mode, WSpec::uniform(p)).unwrap();
        for (name, exec) in executors() {
            let stream = RngStream::new(1, 0);
            group.bench_with_input(BenchmarkId::new(name, label), &spec, |b, spec| {
                b.iter(|| sample_yn(spec, m, &stream, &exec).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_direct(c: &mut Criterion) {
    let p = PIndex::new(1.0).unwrap();
    let spec = ModelSpec::new(p, 128, Mode::GrassmannFixed { k: 32 }, WSpec::cone()).unwrap();
    let m = 500;
    let mut group = c.benchmark_group("projection_direct");
    group.throughput(Throughput::Elements(m as u64));
    group.sample_size(10);
    for (name, exec) in executors() {
        let stream = RngStream::new(2, 0);
        group.bench_function(name, |b| {
            b.iter(|| {
                exec.try_map(m, |i| {
                    sample_projnorm_direct(&spec, &mut stream.substream(i as u64).rng())
                })
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_yn, bench_direct);
criterion_main!(benches);
