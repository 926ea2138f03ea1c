//! Numerical laboratory for the bilayer shallow-water system with thickness
//! diffusivity and for the continuously stratified hydrostatic Euler
//! equations written in isopycnal coordinates.

pub mod bilayer;
pub mod error;
pub mod field;
pub mod grid;
pub mod harness;
pub mod hyperbolicity;
pub mod io;
pub mod refined;
pub mod spectral;
pub mod stratified;

pub use error::{Error, Result};
pub use field::{Field1D, Field2D};
pub use grid::{LevelGrid, SpatialGrid};
