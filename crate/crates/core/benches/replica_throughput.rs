//! Replica-throughput benchmarks. Build once with the default (parallel)
//! features and once with `--no-default-features` for the sequential
//! fallback; the benchmark IDs carry the mode so the two reports can be
//! compared side by side:
//!
//! ```text
//! cargo bench -p hmm-limits
//! cargo bench -p hmm-limits --no-default-features
//! ```

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use hmm_limits::deriv::{estimate_l, normalized_loglik_values};
use hmm_limits::models;
use hmm_limits::stats::{autocov, ModelCtx};

const MODE: &str = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };

fn bench_entropy_estimate(c: &mut Criterion) {
    let fam = models::canonical_family();
    let ch = models::canonical_channel();
    let mut group = c.benchmark_group("entropy_estimate");
    for reps in [8usize, 64] {
        group.bench_with_input(BenchmarkId::new(MODE, reps), &reps, |b, &reps| {
            b.iter(|| estimate_l(&fam, &ch, 0.1, 0, 5_000, reps, 42).unwrap());
        });
    }
    group.finish();
}

fn bench_clt_samples(c: &mut Criterion) {
    let fam = models::canonical_family();
    let ch = models::canonical_channel();
    let mut group = c.benchmark_group("normalized_loglik_order2");
    for reps in [16usize, 128] {
        group.bench_with_input(BenchmarkId::new(MODE, reps), &reps, |b, &reps| {
            b.iter(|| normalized_loglik_values(&fam, &ch, 0.1, 2, 2_000, reps, 43).unwrap());
        });
    }
    group.finish();
}

fn bench_autocov(c: &mut Criterion) {
    let ctx = ModelCtx::new(models::canonical_family(), models::canonical_channel(), 0.1, 0).unwrap();
    let mut group = c.benchmark_group("autocov");
    group.sample_size(20);
    group.bench_function(BenchmarkId::new(MODE, "j50_n2000_r200"), |b| {
        b.iter(|| autocov(&ctx, 50, 2_000, 200, 44).unwrap());
    });
    group.finish();
}

criterion_group!(benches, bench_entropy_estimate, bench_clt_samples, bench_autocov);
criterion_main!(benches);
