//! Finite-difference time-domain solver for the dipole coupling problem.
//!
//! Fields live on a staggered Yee lattice ([`yee`]) terminated by
//! convolutional PML layers ([`cpml`]). A pulsed point current
//! ([`source`]) excites the structure and flux planes ([`monitor`])
//! accumulate the running DFT of the tangential fields at the emission
//! wavelength. [`sim`] wires these into complete runs.

pub mod cpml;
pub mod monitor;
pub mod na;
pub mod sim;
pub mod source;
pub mod yee;

pub use cpml::PmlParams;
pub use monitor::{MonitorFlux, PlaneMonitor};
pub use na::na_filtered_flux;
pub use sim::{
    run_simulation, run_simulation_2d, total_emitted_power, CouplingResult, FieldFrame,
    MonitorLayout, SimulationConfig, SlicePlane, Termination,
};
pub use source::{DipoleSource, PulseParams};
pub use yee::{Boundary, Field, Solver, YeeState};

use crate::error::{Error, Result};

/// Largest stable time step scaled by `courant`: `courant·h/(c·√d)`.
/// `cell_size` in metres.
pub fn cfl_timestep(cell_size: f64, dimension: usize, courant: f64) -> Result<f64> {
    if !(courant > 0.0 && courant <= 1.0) {
        return Err(Error::param("courant", "must lie in (0, 1]"));
    }
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(Error::param("cell_size", "must be > 0"));
    }
    if !(1..=3).contains(&dimension) {
        return Err(Error::param("dimension", "must be 1, 2 or 3"));
    }
    Ok(courant * cell_size / (crate::SPEED_OF_LIGHT * (dimension as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cfl_examples() {
        let dt = cfl_timestep(10e-9, 3, 0.5).unwrap();
        assert!((dt - 9.6291e-18).abs() < 1e-21, "{dt:e}");
        assert!(cfl_timestep(10e-9, 3, 0.0).is_err());
        assert!(cfl_timestep(10e-9, 3, 1.0001).is_err());
        let magic = cfl_timestep(20e-9, 1, 1.0).unwrap();
        assert_eq!(magic, 20e-9 / crate::SPEED_OF_LIGHT);
    }
}
