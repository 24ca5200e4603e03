use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spinphase::general_field::{transport_axis, RotatingWaveform, TimeGrid};
use spinphase::neutral_rotating::{evolution_operator, RotatingSystem};
use spinphase::oracle::timestep_propagate;
use spinphase::spin_algebra::eigenbasis_along;
use spinphase::sweep::sweep;
use spinphase::{SpinQuantum, UnitVector3};
use spinphase_bench::{double_ratio_sweep, pythagorean};

fn closed_form(c: &mut Criterion) {
    let mut group = c.benchmark_group("closed_form_propagator");
    for two_s in [1, 4, 10] {
        let p = pythagorean(SpinQuantum::from_two_s(two_s));
        group.bench_with_input(BenchmarkId::from_parameter(two_s), &p, |b, p| {
            b.iter(|| evolution_operator(p, std::hint::black_box(0.7), 0.0))
        });
    }
    group.finish();
}

fn stepping(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle_stepping");
    group.sample_size(10);
    for two_s in [1, 4] {
        let p = pythagorean(SpinQuantum::from_two_s(two_s));
        let sys = RotatingSystem::new(p);
        let psi0 = eigenbasis_along(&sys.ops, &sys.frame.n_s).state(p.spin.value()).unwrap();
        let h = p.hamiltonian(&sys.ops);
        group.bench_function(BenchmarkId::from_parameter(two_s), |b| {
            b.iter(|| timestep_propagate(&h, &psi0, 1e-3 * p.tau(), p.tau()).unwrap())
        });
    }
    group.finish();
}

fn transport(c: &mut Criterion) {
    let field = RotatingWaveform { rate: 3.0, omega: 4.0, theta_b: std::f64::consts::FRAC_PI_2 };
    let grid = TimeGrid { horizon: 2.0 * std::f64::consts::PI, steps: 10_000 };
    let e0 = UnitVector3::new(0.6, 0.0, 0.8).unwrap();
    c.bench_function("axis_transport_10k_steps", |b| b.iter(|| transport_axis(&field, &e0, &grid)));
}

fn sweeps(c: &mut Criterion) {
    let mut group = c.benchmark_group("charged_sweep");
    group.sample_size(10);
    for cells in [50, 200] {
        let cfg = double_ratio_sweep(cells);
        group.bench_with_input(BenchmarkId::from_parameter(cells), &cfg, |b, cfg| b.iter(|| sweep(cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, closed_form, stepping, transport, sweeps);
criterion_main!(benches);
