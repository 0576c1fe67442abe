//! Serial vs rayon-parallel batch and stream signature computation.
//!
//! With `--no-default-features` the parallel strategies silently fall
//! back to the serial path, so the comparison is only meaningful with
//! the default `parallel` feature enabled.

use criterion::{criterion_group, criterion_main, Criterion};
use pathsig::{batch_signature, Batch, Parallelism, SignatureOptions, Stream, TruncationSpec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_batch(b: usize, l: usize, d: usize, seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let streams = (0..b)
        .map(|_| {
            let data: Vec<f64> = (0..l * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Stream::new(d, data).unwrap()
        })
        .collect();
    Batch::new(streams).unwrap()
}

fn bench_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch_signature");
    group.sample_size(20);
    let spec = TruncationSpec::new(4, 6).unwrap();
    let batch = random_batch(32, 128, 4, 3);
    let opts = SignatureOptions::default();
    for (name, par) in [
        ("serial", Parallelism::Serial),
        ("batch_parallel", Parallelism::Batch),
        ("batch_and_stream_parallel", Parallelism::BatchAndStream),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| batch_signature(&batch, spec, &opts, par).unwrap())
        });
    }
    group.finish();
}

fn bench_long_stream(c: &mut Criterion) {
    let mut group = c.benchmark_group("long_stream");
    group.sample_size(10);
    let spec = TruncationSpec::new(3, 6).unwrap();
    let batch = random_batch(1, 20_000, 3, 4);
    let opts = SignatureOptions::default();
    for (name, par) in [
        ("serial", Parallelism::Serial),
        ("stream_parallel", Parallelism::BatchAndStream),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| batch_signature(&batch, spec, &opts, par).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_batch, bench_long_stream);
criterion_main!(benches);
