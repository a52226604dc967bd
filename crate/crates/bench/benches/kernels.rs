use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ksh_bench::{chain, sphere_pair, unit_grid};
use ksh_core::comparison::{convexity_defect, scaling_study, DefectKind, Sampling, ScalingParams};
use ksh_core::energy::total_energy_in;
use ksh_core::solver::{solve, SolverConfig};
use ksh_core::{Neighborhoods, TargetSpace};

fn neighborhoods(c: &mut Criterion) {
    let space = unit_grid(64, 0.1);
    let mut group = c.benchmark_group("neighborhoods");
    for r in [0.05, 0.1, 0.2] {
        group.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, &r| {
            b.iter(|| Neighborhoods::new(&space, r).unwrap())
        });
    }
    group.finish();
}

fn energy(c: &mut Criterion) {
    let space = unit_grid(64, 0.1);
    let (u, _) = sphere_pair(&space, 1);
    let mut group = c.benchmark_group("total_energy");
    for r in [0.05, 0.1, 0.2] {
        let nb = Neighborhoods::new(&space, r).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(r), &nb, |b, nb| {
            b.iter(|| total_energy_in(&u, nb).unwrap().total)
        });
    }
    group.finish();
}

fn convexity(c: &mut Criterion) {
    let space = unit_grid(64, 0.1);
    let (u, v) = sphere_pair(&space, 2);
    let nb = Neighborhoods::new(&space, 0.1).unwrap();
    c.bench_function("convexity_defect/0.1", |b| b.iter(|| convexity_defect(&u, &v, &nb).unwrap().defect_total));
}

fn solver(c: &mut Criterion) {
    let u0 = chain(64);
    let config = SolverConfig::new(1.5);
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("chain64", |b| b.iter(|| solve(&u0, &config).unwrap().sweeps_used));
    group.finish();
}

fn scaling(c: &mut Criterion) {
    let params = ScalingParams {
        kind: DefectKind::EstimateI,
        target: TargetSpace::sphere(2).unwrap(),
        sampling: Sampling::Sharp,
        scales: vec![1e-1, 1e-2, 1e-3],
        samples: 100,
        seed: 7,
        percentile: 95.0,
    };
    c.bench_function("scaling_study/estimateI", |b| b.iter(|| scaling_study(&params).unwrap().slope));
}

criterion_group!(benches, neighborhoods, energy, convexity, solver, scaling);
criterion_main!(benches);
