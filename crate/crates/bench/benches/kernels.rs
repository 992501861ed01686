use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use wgqd_bench::{desk_grid, hbt_channels};
use wgqd_core::correlation::{correlate, fit_g2, normalize, FitOptions};
use wgqd_core::fdtd::cpml::Cpml;
use wgqd_core::fdtd::{cfl_timestep, Boundary, PmlParams, Solver, YeeState};
use wgqd_core::placement::{simulate_protocol, ProtocolParams};

fn fdtd_step(c: &mut Criterion) {
    let grid = desk_grid(40.0);
    let h = grid.cell_size * 1e-9;
    let dt = cfl_timestep(h, 3, 0.99).unwrap();
    let b = [Boundary::Pml; 3];
    let cpml = Cpml::new(grid.dims, b, &PmlParams::default(), 0.99 / 3f64.sqrt(), 0.1);
    let solver = Solver::new(&grid, h, dt, b, cpml).unwrap();
    let mut st = YeeState::zeros(&solver);
    for v in st.e[1].iter_mut() {
        *v = 1e-3;
    }
    c.bench_function("fdtd_step_desk_40nm", |bch| {
        bch.iter(|| solver.step(black_box(&mut st), None).unwrap())
    });
}

fn correlation(c: &mut Criterion) {
    let (a, b) = hbt_channels(0.5);
    c.bench_function("correlate_0.5s_300ns", |bch| {
        bch.iter(|| correlate(black_box(&a), black_box(&b), 300e-9, 1e-9).unwrap())
    });
    let curve = normalize(&correlate(&a, &b, 300e-9, 1e-9).unwrap()).unwrap();
    c.bench_function("fit_g2", |bch| {
        bch.iter(|| fit_g2(black_box(&curve), &FitOptions::default()).unwrap())
    });
}

fn placement(c: &mut Criterion) {
    let p = ProtocolParams::from_fill_probability(0.55, true).unwrap();
    c.bench_function("placement_1000_trials", |bch| {
        bch.iter_batched(
            || p.clone(),
            |p| simulate_protocol(&p, 25, 10, 1000, 1).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, fdtd_step, correlation, placement);
criterion_main!(benches);
