//! Sequential vs rayon dispatch of the data-parallel helpers.
//!
//! Both strategies produce bit-identical output; this measures only the
//! scheduling cost and speed-up at training-sized shapes.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use numkit::par;
use std::hint::black_box;

fn row_kernel(i: usize, row: &mut [f64]) {
    for (j, x) in row.iter_mut().enumerate() {
        *x = ((i * 31 + j) as f64 * 1e-3).sin();
    }
}

fn rows(c: &mut Criterion) {
    let mut group = c.benchmark_group("for_each_row");
    for n in [1_000usize, 4_000, 16_000] {
        let width = 20;
        group.bench_with_input(BenchmarkId::new("seq", n), &n, |b, &n| {
            let mut out = vec![0.0; n * width];
            b.iter(|| par::for_each_row_seq(black_box(&mut out), width, row_kernel));
        });
        #[cfg(feature = "parallel")]
        group.bench_with_input(BenchmarkId::new("par", n), &n, |b, &n| {
            let mut out = vec![0.0; n * width];
            b.iter(|| par::for_each_row_par(black_box(&mut out), width, row_kernel));
        });
    }
    group.finish();
}

fn jobs(c: &mut Criterion) {
    // Independent coarse jobs, as in the per-seed benchmark runner.
    let job = |i: usize| (0..20_000).map(|k| ((i + k) as f64).sqrt()).sum::<f64>();
    let mut group = c.benchmark_group("map_indices");
    group.bench_function("seq", |b| b.iter(|| par::map_indices_seq(black_box(16), job)));
    #[cfg(feature = "parallel")]
    group.bench_function("par", |b| b.iter(|| par::map_indices_par(black_box(16), job)));
    group.finish();
}

fn matmul(c: &mut Criterion) {
    let x = numkit::Matrix::from_fn(4000, 10, |i, j| ((i * 7 + j) % 13) as f64 * 0.1);
    let w = numkit::Matrix::from_fn(20, 10, |i, j| (i as f64 - j as f64) * 0.05);
    c.bench_function(
        if par::is_parallel() { "matmul_nt/4000x10x20/par" } else { "matmul_nt/4000x10x20/seq" },
        |b| b.iter(|| black_box(&x).matmul_nt(black_box(&w)).unwrap()),
    );
}

criterion_group!(benches, rows, jobs, matmul);
criterion_main!(benches);
