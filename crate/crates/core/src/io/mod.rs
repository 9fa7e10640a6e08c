//! Persistence: LSOL1 field files, CSV tables, run manifests and layered
//! JSON configuration.

pub mod config;
pub mod gridfile;
pub mod manifest;
pub mod table;

pub use config::{layer, resolve};
pub use gridfile::{read_grid, read_header, read_records, write_grid, write_records, GridHeader, GridRecord};
pub use manifest::Manifest;
pub use table::write_csv;
