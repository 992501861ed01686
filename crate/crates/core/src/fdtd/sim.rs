use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::cfl_timestep;
use super::cpml::{Cpml, PmlParams};
use super::monitor::{source_box, MonitorFlux, PlaneMonitor};
use super::na::na_filtered_flux;
use super::source::{DipoleSource, PulseParams};
use super::yee::{Boundary, Solver, YeeState};
use crate::error::{Error, Result};
use crate::geometry::{
    build_permittivity_grid, build_slice_grid, DeviceGeometry, PermittivityGrid, RasterOptions,
};
use crate::SPEED_OF_LIGHT;

/// Positions of the analysis planes, nm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorLayout {
    /// Distance of the two collection-waveguide planes from the crossing.
    pub waveguide_offset: f64,
    /// Extra extent beyond the waveguide cross-section on every side.
    pub margin: f64,
    /// Height of the top plane above the waveguide top surface.
    pub top_standoff: f64,
    /// Depth of the bottom plane below the substrate surface.
    pub bottom_depth: f64,
    /// Half-width of the source box, cells.
    pub box_half_cells: usize,
}

impl Default for MonitorLayout {
    fn default() -> Self {
        Self {
            waveguide_offset: 1200.0,
            margin: 300.0,
            top_standoff: 400.0,
            bottom_depth: 300.0,
            box_half_cells: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Termination {
    /// Run exactly this many steps instead of waiting for decay.
    pub fixed_steps: Option<usize>,
    /// Stop once field energy falls below this fraction of its peak.
    pub decay_threshold: f64,
    pub max_steps: usize,
}

impl Default for Termination {
    fn default() -> Self {
        Self {
            fixed_steps: None,
            decay_threshold: 1e-5,
            max_steps: 40_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Cell edge, nm.
    pub cell_size: f64,
    /// Fraction of the CFL limit.
    pub courant: f64,
    pub pml: PmlParams,
    pub monitors: MonitorLayout,
    pub pulse: PulseParams,
    pub termination: Termination,
    pub raster: RasterOptions,
    pub numerical_aperture: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            cell_size: 20.0,
            courant: 0.99,
            pml: PmlParams::default(),
            monitors: MonitorLayout::default(),
            pulse: PulseParams::default(),
            termination: Termination::default(),
            raster: RasterOptions::default(),
            numerical_aperture: 0.9,
        }
    }
}

impl SimulationConfig {
    /// Production resolution.
    pub fn paper() -> Self {
        Self {
            cell_size: 10.0,
            ..Self::default()
        }
    }
}

/// Outcome of one run. Powers share an arbitrary but common scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingResult {
    pub p_left: f64,
    pub p_right: f64,
    pub p_top: f64,
    pub p_bottom: f64,
    pub p_total: f64,
    pub eta_wg: f64,
    pub eta_left: f64,
    pub eta_right: f64,
    pub eta_na: f64,
    /// Flux through the top plane restricted to propagating waves.
    pub p_top_propagating: f64,
    /// `(P_left + P_right + P_top + P_bottom) / P_total`.
    pub monitor_sum_fraction: f64,
    /// Free-space power of the injected current on this grid,
    /// `k²·h⁴·|A(ω)|²/(12π)` in the units of the monitor fluxes.
    pub vacuum_dipole_power: f64,
    pub monitors: Vec<MonitorFlux>,
    pub steps: usize,
    pub dt: f64,
    /// `(step, energy)` at every stability check.
    pub energy_history: Vec<(usize, f64)>,
    /// Step after which the source current is identically zero.
    pub source_off_step: usize,
    pub warnings: Vec<String>,
}

/// Plane of a two-dimensional run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlicePlane {
    Xy,
    Xz,
}

impl SlicePlane {
    pub fn normal_axis(self) -> usize {
        match self {
            SlicePlane::Xy => 2,
            SlicePlane::Xz => 1,
        }
    }

    /// In-plane axes, in CSV column order.
    pub fn axes(self) -> [usize; 2] {
        match self {
            SlicePlane::Xy => [0, 1],
            SlicePlane::Xz => [0, 2],
        }
    }
}

/// Snapshot of the field component along the dipole orientation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldFrame {
    pub step: usize,
    pub time: f64,
    /// Sample coordinates (nm) along the two in-plane axes.
    pub coords: [Vec<f64>; 2],
    /// Row-major over `coords[0]` × `coords[1]`.
    pub values: Vec<f32>,
}

impl FieldFrame {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W, labels: [&str; 2]) -> std::io::Result<()> {
        writeln!(w, "{},{},value", labels[0], labels[1])?;
        let n2 = self.coords[1].len();
        for (a, x) in self.coords[0].iter().enumerate() {
            for (b, y) in self.coords[1].iter().enumerate() {
                writeln!(w, "{x},{y},{:e}", self.values[a * n2 + b])?;
            }
        }
        Ok(())
    }
}

/// Sum of outward fluxes through a closed box of planes.
pub fn total_emitted_power(faces: &[PlaneMonitor]) -> Result<f64> {
    let fluxes: Vec<f64> = faces.iter().map(|m| m.flux()).collect();
    let total: f64 = fluxes.iter().sum();
    let scale: f64 = fluxes.iter().map(|f| f.abs()).sum();
    if total < -0.01 * scale {
        return Err(Error::Monitor(format!(
            "source box reports net inward flux {total:e}"
        )));
    }
    Ok(total)
}

/// Centre index of the cell nearest to coordinate `p` (nm).
fn centre_index(grid: &PermittivityGrid, axis: usize, p: f64) -> isize {
    ((p - grid.origin[axis]) / grid.cell_size - 0.5).round() as isize
}

struct Layout {
    left: PlaneMonitor,
    right: PlaneMonitor,
    /// Top and bottom in 3-D and xz; the y-facing pair in xy.
    others: Vec<PlaneMonitor>,
    top: Option<usize>,
    bottom: Option<usize>,
}

fn interior(grid: &PermittivityGrid, axis: usize, pml: usize, i: isize) -> Result<usize> {
    let n = grid.dims[axis] as isize;
    let margin = pml as isize + 1;
    if i < margin || i > n - 1 - margin {
        return Err(Error::Monitor(format!(
            "plane index {i} along axis {axis} falls inside the absorbing layer"
        )));
    }
    Ok(i as usize)
}

fn clamp_interior(grid: &PermittivityGrid, axis: usize, pml: usize, i: isize) -> usize {
    let n = grid.dims[axis] as isize;
    let margin = pml as isize + 1;
    i.clamp(margin, n - 1 - margin) as usize
}

fn build_layout(
    geom: &DeviceGeometry,
    grid: &PermittivityGrid,
    layout: &MonitorLayout,
    pml: usize,
    omega: f64,
    slice: Option<SlicePlane>,
) -> Result<Layout> {
    let dims = grid.dims;
    let h_m = grid.cell_size * 1e-9;
    let mirror = |axis: usize, i: usize| dims[axis] - 1 - i;
    let half_w = geom.waveguide_width / 2.0 + layout.margin;
    let z_lo = -layout.margin;
    let z_hi = geom.waveguide_height + layout.margin;

    let right_x = interior(grid, 0, pml, centre_index(grid, 0, layout.waveguide_offset))?;
    let left_x = mirror(0, right_x);
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    if dims[1] > 1 {
        hi[1] = clamp_interior(grid, 1, pml, centre_index(grid, 1, half_w));
        lo[1] = mirror(1, hi[1]);
    }
    if dims[2] > 1 {
        lo[2] = clamp_interior(grid, 2, pml, centre_index(grid, 2, z_lo));
        hi[2] = clamp_interior(grid, 2, pml, centre_index(grid, 2, z_hi));
    }
    let left = PlaneMonitor::new("left", dims, 0, left_x, lo, hi, -1.0, omega, h_m)?;
    let right = PlaneMonitor::new("right", dims, 0, right_x, lo, hi, 1.0, omega, h_m)?;

    // Horizontal planes span the square between the waveguide planes.
    let mut span_lo = [0usize; 3];
    let mut span_hi = [0usize; 3];
    span_lo[0] = left_x;
    span_hi[0] = right_x;
    if dims[1] > 1 {
        span_hi[1] = clamp_interior(grid, 1, pml, centre_index(grid, 1, layout.waveguide_offset));
        span_lo[1] = mirror(1, span_hi[1]);
    }
    let mut others = Vec::new();
    let (mut top, mut bottom) = (None, None);
    if slice != Some(SlicePlane::Xy) {
        let zt = interior(
            grid,
            2,
            pml,
            centre_index(grid, 2, geom.waveguide_height + layout.top_standoff),
        )?;
        let zb = interior(grid, 2, pml, centre_index(grid, 2, -layout.bottom_depth))?;
        top = Some(others.len());
        others.push(PlaneMonitor::new(
            "top", dims, 2, zt, span_lo, span_hi, 1.0, omega, h_m,
        )?);
        bottom = Some(others.len());
        others.push(PlaneMonitor::new(
            "bottom", dims, 2, zb, span_lo, span_hi, -1.0, omega, h_m,
        )?);
    } else {
        let yb = interior(grid, 1, pml, centre_index(grid, 1, layout.waveguide_offset))?;
        let mut l = [0usize; 3];
        let mut u = [0usize; 3];
        l[0] = left_x;
        u[0] = right_x;
        others.push(PlaneMonitor::new(
            "front",
            dims,
            1,
            mirror(1, yb),
            l,
            u,
            -1.0,
            omega,
            h_m,
        )?);
        others.push(PlaneMonitor::new("back", dims, 1, yb, l, u, 1.0, omega, h_m)?);
    }
    Ok(Layout {
        left,
        right,
        others,
        top,
        bottom,
    })
}

struct RunSetup<'a> {
    geom: &'a DeviceGeometry,
    config: &'a SimulationConfig,
    grid: PermittivityGrid,
    boundaries: [Boundary; 3],
    dimension: usize,
    slice: Option<SlicePlane>,
    frame_interval: Option<usize>,
}

/// Run the full 3-D problem described by `geometry`: a dipole at the
/// emitter centre with the geometry's orientation and wavelength.
pub fn run_simulation(
    geometry: &DeviceGeometry,
    config: &SimulationConfig,
) -> Result<CouplingResult> {
    let grid = build_permittivity_grid(geometry, config.cell_size, &config.raster)?;
    let setup = RunSetup {
        geom: geometry,
        config,
        grid,
        boundaries: [Boundary::Pml; 3],
        dimension: 3,
        slice: None,
        frame_interval: None,
    };
    execute(setup).map(|(r, _)| r)
}

/// Run on the slice through the emitter. Monitors mirror the 3-D layout
/// restricted to the plane; in `xy` the top and bottom planes are replaced
/// by a pair facing ±y, reported in `monitors` as `front` and `back`.
/// A frame is recorded every `frame_interval` steps when given.
pub fn run_simulation_2d(
    geometry: &DeviceGeometry,
    plane: SlicePlane,
    config: &SimulationConfig,
    frame_interval: Option<usize>,
) -> Result<(CouplingResult, Vec<FieldFrame>)> {
    let normal = plane.normal_axis();
    let grid = build_slice_grid(geometry, config.cell_size, normal, &config.raster)?;
    let mut boundaries = [Boundary::Pml; 3];
    boundaries[normal] = Boundary::Periodic;
    let setup = RunSetup {
        geom: geometry,
        config,
        grid,
        boundaries,
        dimension: 2,
        slice: Some(plane),
        frame_interval,
    };
    execute(setup)
}

fn execute(setup: RunSetup<'_>) -> Result<(CouplingResult, Vec<FieldFrame>)> {
    let RunSetup {
        geom,
        config,
        grid,
        boundaries,
        dimension,
        slice,
        frame_interval,
    } = setup;
    let h_m = config.cell_size * 1e-9;
    let dt = cfl_timestep(h_m, dimension, config.courant)?;
    let mut source = DipoleSource::new(
        geom.emitter_center(),
        geom.dipole_orientation,
        geom.emission_wavelength,
    );
    source.pulse = config.pulse.clone();
    let omega = source.omega();
    let courant = SPEED_OF_LIGHT * dt / h_m;
    let cpml = Cpml::new(grid.dims, boundaries, &config.pml, courant, omega * dt);
    let pml = (0..3).map(|a| cpml.thickness(a)).max().unwrap_or(0);
    let injection = source.injection(grid.dims, grid.origin, grid.cell_size, boundaries)?;
    let solver = Solver::new(&grid, h_m, dt, boundaries, cpml)?;

    let mut layout = build_layout(geom, &grid, &config.monitors, pml, omega, slice)?;
    let mut centre = [0usize; 3];
    for a in 0..3 {
        centre[a] = if grid.dims[a] == 1 {
            0
        } else {
            ((source.position[a] - grid.origin[a]) / grid.cell_size).floor() as usize
        };
    }
    let mut sbox = source_box(
        grid.dims,
        centre,
        config.monitors.box_half_cells,
        omega,
        h_m,
    )?;

    let mut warnings = Vec::new();
    if slice != Some(SlicePlane::Xy) && config.monitors.top_standoff < geom.emission_wavelength / 2.0
    {
        warnings.push(format!(
            "top plane {} nm above the waveguide is inside the near field (< {} nm)",
            config.monitors.top_standoff,
            geom.emission_wavelength / 2.0
        ));
    }

    let mut state = YeeState::zeros(&solver);
    let off_step = (source.end_time() / dt).ceil() as usize + 1;
    let mut spectrum = Complex64::new(0.0, 0.0);
    let mut history = Vec::new();
    let mut frames = Vec::new();
    let mut peak = 0.0f64;
    let term = &config.termination;
    let limit = term.fixed_steps.unwrap_or(term.max_steps);
    let frame_comp = dominant_axis(geom.dipole_orientation);

    loop {
        let t_src = (state.step_index as f64 + 0.5) * dt;
        spectrum += Complex64::from_polar(dt * source.waveform(t_src), -omega * t_src);
        solver.step(&mut state, Some(&injection))?;
        for m in [&mut layout.left, &mut layout.right]
            .into_iter()
            .chain(layout.others.iter_mut())
            .chain(sbox.iter_mut())
        {
            m.accumulate(&state);
        }
        let n = state.step_index;
        if let (Some(every), Some(plane)) = (frame_interval, slice) {
            if n % every == 0 {
                frames.push(frame(&grid, &state, plane, frame_comp, dt));
            }
        }
        if n % solver.check_interval == 0 {
            let e = state.last_energy.unwrap_or(0.0);
            history.push((n, e));
            peak = peak.max(e);
            if term.fixed_steps.is_none()
                && n > off_step
                && peak > 0.0
                && e <= term.decay_threshold * peak
            {
                break;
            }
        }
        if n >= limit {
            if term.fixed_steps.is_some() {
                break;
            }
            let ratio = history.last().map(|h| h.1 / peak).unwrap_or(f64::NAN);
            return Err(Error::NotConverged {
                steps: n,
                threshold: term.decay_threshold,
                ratio,
            });
        }
    }

    let p_total = total_emitted_power(&sbox)?;
    let p_left = layout.left.flux();
    let p_right = layout.right.flux();
    let p_top = layout.top.map(|i| layout.others[i].flux()).unwrap_or(0.0);
    let p_bottom = layout.bottom.map(|i| layout.others[i].flux()).unwrap_or(0.0);
    let (eta_na, p_top_propagating) = match layout.top {
        Some(i) => (
            na_filtered_flux(&layout.others[i], config.numerical_aperture)? / p_total,
            na_filtered_flux(&layout.others[i], 1.0)?,
        ),
        None => (0.0, 0.0),
    };
    let k = omega / SPEED_OF_LIGHT;
    let vacuum_dipole_power = k * k * h_m.powi(4) * spectrum.norm_sqr() / (12.0 * PI);
    let mut monitors = Vec::new();
    for m in [&layout.left, &layout.right]
        .into_iter()
        .chain(layout.others.iter())
    {
        monitors.push(MonitorFlux {
            name: m.name.clone(),
            axis: m.axis,
            flux: m.flux(),
        });
    }
    monitors.push(MonitorFlux {
        name: "source_box".into(),
        axis: 0,
        flux: p_total,
    });
    for (name, p) in [("left", p_left), ("right", p_right), ("top", p_top)] {
        if p > 1.01 * p_total {
            warnings.push(format!("{name} flux exceeds the total emitted power"));
        }
    }
    let result = CouplingResult {
        p_left,
        p_right,
        p_top,
        p_bottom,
        p_total,
        eta_wg: (p_left + p_right) / p_total,
        eta_left: p_left / p_total,
        eta_right: p_right / p_total,
        eta_na,
        p_top_propagating,
        monitor_sum_fraction: (p_left + p_right + p_top + p_bottom) / p_total,
        vacuum_dipole_power,
        monitors,
        steps: state.step_index,
        dt,
        energy_history: history,
        source_off_step: off_step,
        warnings,
    };
    Ok((result, frames))
}

fn dominant_axis(o: [f64; 3]) -> usize {
    (0..3)
        .max_by(|&a, &b| o[a].abs().total_cmp(&o[b].abs()))
        .unwrap_or(1)
}

fn frame(
    grid: &PermittivityGrid,
    state: &YeeState,
    plane: SlicePlane,
    comp: usize,
    dt: f64,
) -> FieldFrame {
    let axes = plane.axes();
    let coords = axes.map(|a| {
        (0..grid.dims[a])
            .map(|i| grid.origin[a] + (i as f64 + 0.5) * grid.cell_size)
            .collect::<Vec<f64>>()
    });
    let mut values = Vec::with_capacity(coords[0].len() * coords[1].len());
    for u in 0..grid.dims[axes[0]] {
        for v in 0..grid.dims[axes[1]] {
            let mut idx = [0usize; 3];
            idx[axes[0]] = u;
            idx[axes[1]] = v;
            values.push(state.e[comp][state.index(idx[0], idx[1], idx[2])]);
        }
    }
    FieldFrame {
        step: state.step_index,
        time: state.step_index as f64 * dt,
        coords,
        values,
    }
}
