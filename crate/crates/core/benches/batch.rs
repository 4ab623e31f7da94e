//! Compares the parallel and sequential batch equilibrium solvers on a
//! grid of economies of the kind the counterfactual runner produces.

use bribery_ge::calibration::SharedParams;
use bribery_ge::dist::QuadratureRule;
use bribery_ge::equilibrium::{solve_batch, solve_batch_sequential, EconomyParams};
use bribery_ge::firmdata::BriberyRegime;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn economy_grid(n: usize) -> Vec<EconomyParams> {
    let shared = SharedParams::benchmark();
    (0..n)
        .map(|i| {
            let t = i as f64 / n as f64;
            shared
                .economy(
                    0.4 + 0.5 * t,
                    1.5 + t,
                    0.02 + 0.06 * t,
                    BriberyRegime::new(0.1 + 0.2 * t, 0.01 + 0.01 * t, 0.1 + 0.2 * t, 0.01)
                        .unwrap(),
                )
                .unwrap()
        })
        .collect()
}

fn bench_batch(c: &mut Criterion) {
    let rule = QuadratureRule::gauss_legendre(200);
    let mut group = c.benchmark_group("solve_batch");
    group.sample_size(10);
    for &n in &[4usize, 16] {
        let grid = economy_grid(n);
        group.bench_with_input(BenchmarkId::new("parallel", n), &grid, |b, grid| {
            b.iter(|| {
                let out = solve_batch(grid, &rule);
                assert!(out.iter().all(|r| r.is_ok()));
            })
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &grid, |b, grid| {
            b.iter(|| {
                let out = solve_batch_sequential(grid, &rule);
                assert!(out.iter().all(|r| r.is_ok()));
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_batch);
criterion_main!(benches);
