//! Rydberg atoms above a superconducting chip: Stark maps, surface-adsorbate
//! fields, atom–cavity dynamics, field ionization and data fitting.

pub mod angular;
pub mod atom;
pub mod cavity;
pub mod error;
pub mod fitting;
pub mod linalg;
pub mod sfi;
pub mod surface;
pub mod units;

pub use error::{Error, Result};
