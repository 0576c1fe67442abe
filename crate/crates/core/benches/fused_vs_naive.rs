//! Fused multiply-exponentiate vs the conventional exp-then-multiply
//! strategy on single extension steps and whole-stream signatures.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pathsig::{
    fused_mul_exp, group_mul, signature, tensor_exp, FreeTensor, SignatureOptions, Stream,
    TruncationSpec,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_group_element(spec: TruncationSpec, rng: &mut ChaCha8Rng) -> FreeTensor {
    let data: Vec<f64> = (0..spec.sig_length())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    FreeTensor::from_data(spec, data).unwrap()
}

fn naive_extend(a: &FreeTensor, z: &[f64]) -> FreeTensor {
    group_mul(a, &tensor_exp(z, a.spec()))
}

fn naive_signature(stream: &Stream, spec: TruncationSpec) -> FreeTensor {
    let incs = pathsig::increments(stream).unwrap();
    let mut acc = tensor_exp(&incs[0], spec);
    for z in &incs[1..] {
        acc = naive_extend(&acc, z);
    }
    acc
}

fn bench_single_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("extension_step");
    for (d, n) in [(2usize, 7usize), (4, 7), (6, 5), (3, 9)] {
        let spec = TruncationSpec::new(d, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_group_element(spec, &mut rng);
        let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        group.bench_with_input(BenchmarkId::new("fused", format!("d{d}_N{n}")), &(), |b, _| {
            b.iter(|| fused_mul_exp(&a, &z))
        });
        group.bench_with_input(BenchmarkId::new("naive", format!("d{d}_N{n}")), &(), |b, _| {
            b.iter(|| naive_extend(&a, &z))
        });
    }
    group.finish();
}

fn bench_full_signature(c: &mut Criterion) {
    let mut group = c.benchmark_group("stream_signature");
    group.sample_size(20);
    let spec = TruncationSpec::new(4, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let data: Vec<f64> = (0..128 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let stream = Stream::new(4, data).unwrap();
    group.bench_function("fused_d4_N7_L128", |b| {
        b.iter(|| signature(&stream, spec, &SignatureOptions::default()).unwrap())
    });
    group.bench_function("naive_d4_N7_L128", |b| {
        b.iter(|| naive_signature(&stream, spec))
    });
    group.finish();
}

criterion_group!(benches, bench_single_step, bench_full_signature);
criterion_main!(benches);
