use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use potlab_bench::{fixture, killed_ball};
use potlab_core::grid::Shape;
use potlab_core::linalg::KrylovMethod;
use potlab_core::*;

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble");
    for n in [16, 32] {
        let grid = TorusGrid::new(3, n, 1.0).unwrap();
        let field = CoefficientField::new(FieldSpec::RotationDrift { strength: 2.0 }, &grid).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| assemble_generator(&field, &grid, Scheme::Upwind).unwrap())
        });
    }
    group.finish();
}

fn matvec(c: &mut Criterion) {
    let f = fixture(FieldSpec::RotationDrift { strength: 2.0 }, 32);
    let x: Vec<f64> = (0..f.grid.cell_count()).map(|i| (i % 17) as f64).collect();
    c.bench_function("matvec/32", |b| b.iter(|| f.generator.apply(&x)));
}

fn exit_time_solve(c: &mut Criterion) {
    let f = fixture(FieldSpec::ShearDrift { strength: 2.0 }, 32);
    let killed = killed_ball(&f, 0.25);
    let mut group = c.benchmark_group("exit-time/32");
    group.sample_size(10);
    for (name, method) in [("bicgstab", KrylovMethod::Bicgstab), ("gmres", KrylovMethod::Gmres)] {
        let opts = SolverOptions { method, ..Default::default() };
        group.bench_function(name, |b| b.iter(|| potential::exit_time(&killed, &opts).unwrap()));
    }
    group.finish();
}

fn stationary(c: &mut Criterion) {
    let f = fixture(FieldSpec::GradientDrift { amplitude: 0.25 }, 16);
    let mut group = c.benchmark_group("invariant-density");
    group.sample_size(10);
    group.bench_function("16", |b| b.iter(|| invariant_density(&f.generator, &StationaryOptions::default()).unwrap()));
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let f = fixture(FieldSpec::Laplace, 32);
    let ball = BallSpec::new(&[0.5; 3], 0.1);
    let cfg = SdeConfig { trajectories: 1000, ..SdeConfig::for_spacing(f.grid.spacing()) };
    let mut group = c.benchmark_group("monte-carlo");
    group.sample_size(10);
    group.bench_function("exit-time/1000-paths", |b| {
        b.iter(|| simulate_exit_time(&f.field, &f.grid, &Shape::Ball(ball.clone()), &ball.center, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, assembly, matvec, exit_time_solve, stationary, monte_carlo);
criterion_main!(benches);
