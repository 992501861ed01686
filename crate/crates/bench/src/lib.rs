//! Benchmark inputs shared by the criterion targets in `benches/`.

use wgqd_core::emitter::{hbt_split, simulate_emission, EmitterParams};
use wgqd_core::geometry::{build_permittivity_grid, PermittivityGrid, RasterOptions};
use wgqd_core::sweeps::desk_geometry;
use wgqd_core::TimestampStream;

/// Two detector channels of a blinking-free emitter over `duration` s.
pub fn hbt_channels(duration: f64) -> (TimestampStream, TimestampStream) {
    let e = simulate_emission(&EmitterParams::paper_fig3().without_blinking(), duration, 1)
        .expect("valid emitter");
    hbt_split(&e, 1)
}

/// Desk device rasterised at `cell` nm.
pub fn desk_grid(cell: f64) -> PermittivityGrid {
    build_permittivity_grid(&desk_geometry(), cell, &RasterOptions::default()).expect("valid geometry")
}
