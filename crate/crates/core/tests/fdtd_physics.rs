use std::f64::consts::PI;

use wgqd_core::fdtd::cpml::Cpml;
use wgqd_core::fdtd::{
    cfl_timestep, run_simulation, run_simulation_2d, Boundary, CouplingResult, SimulationConfig,
    SlicePlane, Solver, YeeState,
};
use wgqd_core::geometry::{DeviceGeometry, Materials, PermittivityGrid};
use wgqd_core::sweeps::desk_geometry;
use wgqd_core::{Error, SPEED_OF_LIGHT};

fn vacuum(extent: f64) -> DeviceGeometry {
    DeviceGeometry {
        materials: Materials::uniform(1.0),
        domain_extent: [extent; 3],
        substrate_depth: extent / 2.0,
        ..DeviceGeometry::default()
    }
}

fn small_vacuum_config() -> SimulationConfig {
    let mut c = SimulationConfig::default();
    c.monitors.waveguide_offset = 150.0;
    c.monitors.top_standoff = 50.0;
    c.monitors.bottom_depth = 150.0;
    c
}

fn monitor(r: &CouplingResult, name: &str) -> f64 {
    r.monitors
        .iter()
        .find(|m| m.name == name)
        .unwrap_or_else(|| panic!("no monitor {name}"))
        .flux
}

#[test]
fn standing_wave_oscillates_at_discrete_dispersion_frequency() {
    let n = 200;
    let h = 20e-9;
    let s = 0.5;
    let dt = s * h / SPEED_OF_LIGHT;
    let grid = PermittivityGrid::uniform([n, 1, 1], 20.0, 1.0);
    let solver = Solver::new(&grid, h, dt, [Boundary::Periodic; 3], Cpml::none()).unwrap();
    let mut st = YeeState::zeros(&solver);
    let cells_per_wavelength = 20.0;
    let k = 2.0 * PI / (cells_per_wavelength * h);
    for i in 0..n {
        let idx = st.index(i, 0, 0);
        st.e[2][idx] = (k * i as f64 * h).cos() as f32;
    }
    let mut prev = st.e[2][0] as f64;
    let mut crossings = Vec::new();
    for step in 1..=4000 {
        solver.step(&mut st, None).unwrap();
        let v = st.e[2][0] as f64;
        if prev < 0.0 && v >= 0.0 {
            crossings.push(step as f64 - 1.0 + prev / (prev - v));
        }
        prev = v;
    }
    assert!(crossings.len() > 20);
    let period_steps = (crossings.last().unwrap() - crossings[0]) / (crossings.len() - 1) as f64;
    let omega = 2.0 * PI / (period_steps * dt);
    let v_phase = omega / k;
    assert!((v_phase / SPEED_OF_LIGHT - 1.0).abs() < 0.01, "v/c = {}", v_phase / SPEED_OF_LIGHT);
    let omega_discrete = 2.0 / dt * (s * (k * h / 2.0).sin()).asin();
    assert!((omega / omega_discrete - 1.0).abs() < 1e-4);
}

#[test]
fn courant_above_limit_diverges_quickly() {
    let grid = PermittivityGrid::uniform([16, 16, 16], 20.0, 1.0);
    let h = 20e-9;
    let dt = 1.02 * cfl_timestep(h, 3, 1.0).unwrap();
    let solver = Solver::new(&grid, h, dt, [Boundary::Periodic; 3], Cpml::none()).unwrap();
    let mut st = YeeState::zeros(&solver);
    for (idx, v) in st.e[0].iter_mut().enumerate() {
        *v = ((idx * 7919) % 13) as f32 / 13.0 - 0.5;
    }
    let mut outcome = None;
    for _ in 0..1000 {
        if let Err(e) = solver.step(&mut st, None) {
            outcome = Some(e);
            break;
        }
    }
    match outcome {
        Some(Error::Unstable { step }) => assert!(step <= 1000),
        other => panic!("expected instability, got {other:?}"),
    }
}

#[test]
fn zero_fields_stay_zero() {
    let grid = PermittivityGrid::uniform([12, 10, 8], 20.0, 2.25);
    let h = 20e-9;
    let dt = cfl_timestep(h, 3, 0.99).unwrap();
    let b = [Boundary::Pml; 3];
    let cpml = Cpml::new(grid.dims, b, &Default::default(), 0.99 / 3f64.sqrt(), 0.1);
    let solver = Solver::new(&grid, h, dt, b, cpml).unwrap();
    let mut st = YeeState::zeros(&solver);
    for _ in 0..50 {
        solver.step(&mut st, None).unwrap();
    }
    assert!(st.e.iter().chain(&st.h).all(|c| c.iter().all(|&v| v == 0.0)));
    assert_eq!(solver.energy(&st), 0.0);
}

#[test]
fn vacuum_power_scales_with_amplitude_squared() {
    let g = vacuum(800.0);
    let base = small_vacuum_config();
    let mut loud = base.clone();
    loud.pulse.amplitude = 3.0;
    let a = run_simulation(&g, &base).unwrap();
    let b = run_simulation(&g, &loud).unwrap();
    assert!((b.p_total / a.p_total / 9.0 - 1.0).abs() < 1e-3);
    for (ma, mb) in a.monitors.iter().zip(&b.monitors) {
        if ma.flux.abs() > 1e-6 * a.p_total {
            assert!((mb.flux / ma.flux / 9.0 - 1.0).abs() < 1e-3, "{}", ma.name);
        }
    }
}

#[test]
fn vacuum_run_is_symmetric_and_decays() {
    let g = vacuum(800.0);
    let r = run_simulation(&g, &small_vacuum_config()).unwrap();
    assert!((r.p_left - r.p_right).abs() <= 0.01 * r.p_left.abs());
    let ratio = r.p_total / r.vacuum_dipole_power;
    assert!((ratio - 1.0).abs() < 0.05, "P_total / analytic = {ratio}");
    for w in r.energy_history.windows(2) {
        if w[0].0 > r.source_off_step {
            assert!(w[1].1 <= w[0].1 * 1.005, "energy rose at step {}", w[1].0);
        }
    }
    for m in &r.monitors {
        assert!(m.flux <= 1.01 * r.p_total, "{} exceeds P_total", m.name);
    }
    // Truncating the plane leaks some propagating power past k0.
    assert!(r.p_top_propagating <= 1.01 * r.p_top);
    assert!(r.p_top_propagating > 0.0);
}

#[test]
fn full_aperture_equals_propagating_flux() {
    let g = vacuum(800.0);
    let mut c = small_vacuum_config();
    c.numerical_aperture = 1.0;
    let r = run_simulation(&g, &c).unwrap();
    assert!((r.eta_na * r.p_total / r.p_top_propagating - 1.0).abs() < 1e-12);
}

#[test]
fn closed_aperture_collects_nothing() {
    let g = vacuum(800.0);
    let mut c = small_vacuum_config();
    c.numerical_aperture = 0.0;
    let r = run_simulation(&g, &c).unwrap();
    assert_eq!(r.eta_na, 0.0);
    assert!(r.p_top > 0.0);
}

#[test]
fn xy_slice_confines_y_dipole_emission_to_the_guide() {
    let g = desk_geometry();
    let (r, frames) =
        run_simulation_2d(&g, SlicePlane::Xy, &SimulationConfig::default(), Some(200)).unwrap();
    let front = monitor(&r, "front");
    let back = monitor(&r, "back");
    for other in [front, back] {
        assert!(r.p_left > other && r.p_right > other, "{r:?}");
    }
    assert!((r.p_left - r.p_right).abs() <= 0.01 * r.p_left);
    assert!(!frames.is_empty());
    let f = &frames[0];
    assert_eq!(f.values.len(), f.coords[0].len() * f.coords[1].len());
}

#[test]
fn xz_slice_sends_light_into_the_substrate() {
    let g = desk_geometry();
    let (r, _) = run_simulation_2d(&g, SlicePlane::Xz, &SimulationConfig::default(), None).unwrap();
    assert!(r.p_bottom / r.p_total > 0.05, "{r:?}");
}

#[test]
fn vacuum_slice_is_mirror_symmetric() {
    let g = vacuum(1600.0);
    let mut c = SimulationConfig::default();
    c.monitors.waveguide_offset = 400.0;
    c.monitors.top_standoff = 200.0;
    c.monitors.bottom_depth = 300.0;
    for plane in [SlicePlane::Xy, SlicePlane::Xz] {
        let (r, _) = run_simulation_2d(&g, plane, &c, None).unwrap();
        assert!(r.p_left > 0.0);
        assert!((r.p_left - r.p_right).abs() <= 0.01 * r.p_left, "{plane:?}: {r:?}");
    }
}
