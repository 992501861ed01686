//! Simulation toolkit for a waveguide-integrated colloidal quantum dot
//! single-photon source.
//!
//! The crate covers four loosely coupled problems:
//!
//! * electromagnetic coupling of a point dipole sitting in a hole at a
//!   waveguide crossing ([`geometry`], [`fdtd`], [`sweeps`]),
//! * photon statistics of a blinking two-level emitter and the
//!   Hanbury Brown–Twiss analysis of its output ([`emitter`],
//!   [`stream`], [`correlation`], [`hbt`]),
//! * the iterative site filling protocol used to raise placement yield
//!   ([`placement`]),
//! * decibel loss chains used to infer the source rate from detected
//!   counts ([`budget`]).
//!
//! All lengths in public configuration types are nanometres, all times
//! are seconds, and all rates are per second unless stated otherwise.

pub mod budget;
pub mod correlation;
pub mod emitter;
pub mod error;
pub mod fdtd;
pub mod geometry;
pub mod hbt;
pub mod placement;
pub mod rng;
pub mod stream;
pub mod sweeps;

pub use budget::{LossChain, LossStage};
pub use correlation::{G2Curve, G2Fit, G2Histogram};
pub use emitter::{BlinkingModel, BlinkingParams, DetectorParams, EmitterParams};
pub use error::{Error, Result};
pub use fdtd::{CouplingResult, DipoleSource, SimulationConfig};
pub use geometry::{DeviceGeometry, Material, Materials, PermittivityGrid};
pub use placement::{ProtocolParams, SiteArray, SiteState};
pub use stream::TimestampStream;
pub use sweeps::{SweepResult, SweepSpec};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
