//! Vectorial focusing of a radially polarized donut beam by a deep parabolic
//! mirror onto a single trapped ion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aberrations;
pub mod beams;
pub mod config;
pub mod constants;
pub mod error;
pub mod exec;
pub mod focal;
pub mod geometry;
pub mod psf;
pub mod quadrature;
pub mod report;
pub mod saturation;
pub mod thermal;

pub use error::{Error, Result};
pub use exec::Execution;
pub use quadrature::QuadratureSpec;
