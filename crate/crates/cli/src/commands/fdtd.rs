use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use wgqd_core::fdtd::{run_simulation, run_simulation_2d, CouplingResult, SimulationConfig, SlicePlane};
use wgqd_core::geometry::DeviceGeometry;
use wgqd_core::sweeps::{desk_geometry, run_sweep, Orientation, ResultCache, SweepSpec};

use super::load_config;
use crate::manifest::Outputs;
use crate::GlobalArgs;

#[derive(Subcommand, Debug)]
pub enum FdtdCommand {
    /// One dipole in one geometry.
    Run(RunArgs),
    /// A parameter sweep over geometries and dipole orientations.
    Sweep(SweepArgs),
}

impl FdtdCommand {
    pub fn name(&self) -> &'static str {
        match self {
            FdtdCommand::Run(_) => "run",
            FdtdCommand::Sweep(_) => "sweep",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Plane {
    Xy,
    Xz,
}

impl From<Plane> for SlicePlane {
    fn from(p: Plane) -> Self {
        match p {
            Plane::Xy => SlicePlane::Xy,
            Plane::Xz => SlicePlane::Xz,
        }
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Dipole axis; replaces the geometry's orientation.
    #[arg(long)]
    pub orientation: Option<Orientation>,
    /// Two-dimensional run on this plane through the emitter.
    #[arg(long, value_enum)]
    pub slice: Option<Plane>,
    /// Steps between field frames of a two-dimensional run.
    #[arg(long)]
    pub frame_interval: Option<usize>,
}

/// Preset sweeps: hole radius, hole depth, emitter position.
#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Figure {
    #[value(name = "1b", alias = "radius")]
    Radius,
    #[value(name = "1c", alias = "depth")]
    Depth,
    #[value(name = "1d", alias = "position")]
    Position,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Preset used when no `--config` is given.
    #[arg(long, value_enum)]
    pub figure: Option<Figure>,
    /// Directory of cached per-point results.
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdtdRunConfig {
    pub geometry: DeviceGeometry,
    pub simulation: SimulationConfig,
    pub slice: Option<SlicePlane>,
    pub frame_interval: Option<usize>,
}

impl Default for FdtdRunConfig {
    fn default() -> Self {
        Self {
            geometry: desk_geometry(),
            simulation: SimulationConfig::default(),
            slice: None,
            frame_interval: None,
        }
    }
}

impl FdtdRunConfig {
    fn paper() -> Self {
        Self {
            geometry: DeviceGeometry::default(),
            simulation: SimulationConfig::paper(),
            ..Self::default()
        }
    }
}

pub fn run(cmd: FdtdCommand, global: &GlobalArgs, out: &mut Outputs) -> Result<()> {
    match cmd {
        FdtdCommand::Run(a) => run_one(a, global, out),
        FdtdCommand::Sweep(a) => sweep(a, global, out),
    }
}

fn write_result(r: &CouplingResult, out: &mut Outputs) -> Result<()> {
    out.write_json("coupling.json", r)?;
    out.write_with("monitors.csv", |w| {
        writeln!(w, "name,axis,flux,fraction")?;
        for m in &r.monitors {
            writeln!(w, "{},{},{:e},{:.9}", m.name, m.axis, m.flux, m.flux / r.p_total)?;
        }
        Ok(())
    })?;
    out.write_with("energy.csv", |w| {
        writeln!(w, "step,time_s,energy")?;
        for &(step, e) in &r.energy_history {
            writeln!(w, "{step},{:e},{e:e}", step as f64 * r.dt)?;
        }
        Ok(())
    })
}

fn run_one(a: RunArgs, global: &GlobalArgs, out: &mut Outputs) -> Result<()> {
    let mut cfg: FdtdRunConfig = if global.paper_mode {
        load_config(global, FdtdRunConfig::paper)?
    } else {
        load_config(global, FdtdRunConfig::default)?
    };
    if let Some(o) = a.orientation {
        cfg.geometry = cfg.geometry.with_orientation(o.vector());
    }
    if let Some(p) = a.slice {
        cfg.slice = Some(p.into());
    }
    if a.frame_interval.is_some() {
        cfg.frame_interval = a.frame_interval;
    }
    if cfg.frame_interval.is_some() && cfg.slice.is_none() {
        bail!("frame_interval requires a two-dimensional slice");
    }
    out.write_config(&cfg)?;
    let r = match cfg.slice {
        None => run_simulation(&cfg.geometry, &cfg.simulation)?,
        Some(plane) => {
            let (r, frames) =
                run_simulation_2d(&cfg.geometry, plane, &cfg.simulation, cfg.frame_interval)?;
            let names = ["x_nm", "y_nm", "z_nm"];
            let [a0, a1] = plane.axes();
            for f in &frames {
                out.write_with(&format!("frames/frame_{:06}.csv", f.step), |w| {
                    f.write_csv(w, [names[a0], names[a1]])
                })?;
            }
            r
        }
    };
    write_result(&r, out)?;
    println!(
        "eta_wg {:.4} eta_na {:.4} monitor_sum {:.4}",
        r.eta_wg, r.eta_na, r.monitor_sum_fraction
    );
    Ok(())
}

fn preset(figure: Figure, paper: bool) -> SweepSpec {
    let mut spec = match figure {
        Figure::Radius => SweepSpec::desk_radius(),
        Figure::Depth => SweepSpec::desk_depth(),
        Figure::Position => SweepSpec::desk_position(),
    };
    if paper {
        spec.base_geometry = DeviceGeometry::default();
        spec.config = SimulationConfig::paper();
    }
    spec
}

fn sweep(a: SweepArgs, global: &GlobalArgs, out: &mut Outputs) -> Result<()> {
    let spec: SweepSpec = match (&global.config, a.figure) {
        (Some(_), _) => load_config(global, || unreachable!())?,
        (None, Some(f)) => preset(f, global.paper_mode),
        (None, None) => bail!("fdtd sweep needs --config or --figure"),
    };
    out.write_config(&spec)?;
    let cache = a.cache.map(ResultCache::new).transpose()?;
    let result = run_sweep(&spec, cache.as_ref())?;
    out.write_with("sweep.csv", |w| result.write_csv(w))?;
    out.write_json("sweep.json", &result)?;
    for o in &spec.orientations {
        for (x, eta) in result.curve(*o) {
            println!("{} {x} {eta:.4}", o.label());
        }
    }
    Ok(())
}
