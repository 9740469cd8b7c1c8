//! Small numerical kernels shared by the physics modules.

pub mod ode;
pub mod optimize;
pub mod quad;
