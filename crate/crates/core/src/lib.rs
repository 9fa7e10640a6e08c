//! Simulation and analysis of laser solitons in a wide-aperture laser with a
//! saturable absorber and weak holding radiation.

pub mod error;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod matter;
pub mod noise;
pub mod params;
pub mod soliton;
pub mod steady;

pub use error::{Error, Result};
pub use grid::{ComplexField, Frame, GridSpec};
pub use params::{DimensionalParams, DimensionlessParams};
