//! Benchmarks of the hot paths, comparing the data-parallel row fan-out
//! against the forced-sequential fallback on the same inputs.
//!
//! `adjoint_generator_apply` measures one application of the adjoint
//! generator to a global observable, the kernel inside every integrator
//! step. `observable_propagation` measures a full adaptive integration
//! over a short window, which adds the step-size control and the
//! Runge-Kutta combine loops.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use conelab::models;
use conelab::par;
use conelab::propagation::{propagate_observable, IntegrationOptions};

fn adjoint_generator_apply(c: &mut Criterion) {
    let mut group = c.benchmark_group("adjoint_generator_apply");
    for &n in &[6usize, 8, 10] {
        let (graph, liou) = models::heisenberg_dephasing_chain(n, 1.0, 0.1).unwrap();
        let a = models::pauli_at(&graph, 'x', 1).unwrap();
        for (label, sequential) in [("parallel", false), ("sequential", true)] {
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, _| {
                par::force_sequential(sequential);
                b.iter(|| black_box(liou.adjoint_apply(0.0, &a).unwrap()));
            });
        }
    }
    par::force_sequential(false);
    group.finish();
}

fn observable_propagation(c: &mut Criterion) {
    let mut group = c.benchmark_group("observable_propagation");
    group.sample_size(10);
    for &n in &[6usize, 8] {
        let (graph, liou) = models::heisenberg_dephasing_chain(n, 1.0, 0.1).unwrap();
        let a = models::pauli_at(&graph, 'x', 1).unwrap();
        let opts = IntegrationOptions::default();
        for (label, sequential) in [("parallel", false), ("sequential", true)] {
            group.bench_with_input(BenchmarkId::new(label, n), &n, |b, _| {
                par::force_sequential(sequential);
                b.iter(|| {
                    let (evolved, _) =
                        propagate_observable(&liou, &a, 0.0, 0.02, opts).unwrap();
                    black_box(evolved)
                });
            });
        }
    }
    par::force_sequential(false);
    group.finish();
}

criterion_group!(benches, adjoint_generator_apply, observable_propagation);
criterion_main!(benches);
