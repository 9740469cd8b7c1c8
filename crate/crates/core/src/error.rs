use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the design and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{quantity} = {value} is outside the validity window [{min}, {max}]")]
    OutOfValidityRange {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("no guided mode ({pol} at {wavelength_um} um, {temperature_c} C)")]
    NoGuidedMode {
        pol: crate::material::Polarization,
        wavelength_um: f64,
        temperature_c: f64,
    },
    #[error("{0} did not converge")]
    NonConvergence(&'static str),
    #[error("modes come from different waveguide geometries")]
    GeometryMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("Fourier order ({m}, {n}) has a zero index; the DC term is not defined at duty 0.5")]
    ZeroOrderUnsupported { m: i64, n: i64 },
    #[error("non-physical wavelengths: signal {signal_um} um must be longer than pump {pump_um} um")]
    NonPhysical { pump_um: f64, signal_um: f64 },
    #[error("order matrix is singular")]
    SingularOrders,
    #[error("period solve produced a non-positive period ({0} um)")]
    NegativePeriod(f64),
    #[error("no sign change in the mismatch grid")]
    EmptyLocus,
    #[error("integrator failure: {0}")]
    IntegratorFailure(String),
    #[error("total power is zero")]
    ZeroPower,
    #[error("target efficiency {target} unreachable (first maximum {ceiling})")]
    Unreachable { target: f64, ceiling: f64 },
    #[error("detuning grid too narrow: {0}")]
    GridTooNarrow(String),
    #[error("both branch weights are zero")]
    DegenerateState,
}
