use ballmag::ballsolver::{SectorSolver, SolverConfig};
use ballmag::degennes::DeGennesOnGrid;
use ballmag::numkit::{dense_lowest, tridiag_lowest};
use ballmag::Grid1D;
use ballmag_bench::{dense_sample, oscillator, shape};
use criterion::{black_box, criterion_group, criterion_main, Criterion};

fn eigensolvers(c: &mut Criterion) {
    let t = oscillator(2400);
    c.bench_function("tridiag_lowest n=2400", |b| {
        b.iter(|| tridiag_lowest(black_box(&t), 2, 1e-12).unwrap())
    });
    let a = dense_sample(150);
    c.bench_function("dense_lowest n=150", |b| b.iter(|| dense_lowest(black_box(&a), 3, 1e-12).unwrap()));
}

fn de_gennes(c: &mut Criterion) {
    let g = Grid1D::half_line(12.0, 1201).unwrap();
    c.bench_function("de Gennes minimizer n=1201", |b| {
        b.iter(|| DeGennesOnGrid::solve(black_box(&g), 1e-12).unwrap())
    });
}

fn sectors(c: &mut Criterion) {
    let mut group = c.benchmark_group("ball");
    group.sample_size(10);
    group.bench_function("sector solver setup B=1000", |b| {
        b.iter(|| SectorSolver::new(1000.0, SolverConfig::quick(), shape()).unwrap())
    });
    let solver = SectorSolver::new(1000.0, SolverConfig::quick(), shape()).unwrap();
    group.bench_function("sector solve B=1000", |b| b.iter(|| solver.solve(black_box(472)).unwrap()));
    group.finish();
}

criterion_group!(benches, eigensolvers, de_gennes, sectors);
criterion_main!(benches);
