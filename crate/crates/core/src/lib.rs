//! Design and simulation of a dual-periodically poled lithium niobate
//! waveguide source that emits orthogonally or parallel polarized photon
//! pairs depending on an applied electric field.

pub mod biphoton;
pub mod eo;
pub mod error;
pub mod grating;
pub mod material;
pub mod numeric;
pub mod qpm;
pub mod waveguide;

pub use error::{Error, Result};
