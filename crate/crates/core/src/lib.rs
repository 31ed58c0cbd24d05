//! Position-correlated biphoton Shack-Hartmann wavefront sensing.
//!
//! The crate covers the forward model (`simulate`), streaming coincidence
//! statistics (`jpd`), peak extraction and modal reconstruction (`shws`,
//! `legendre`), and the file formats shared with the command-line tool.

pub mod config;
pub mod error;
pub mod frame;
pub mod geometry;
pub mod grid;
pub mod jpd;
pub mod legendre;
pub mod pipeline;
pub mod shws;
pub mod simulate;

pub use error::{Error, Result};
