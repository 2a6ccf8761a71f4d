//! Risk-sensitive asset allocation in a regime-switching market whose asset prices jump
//! when the regime changes: HJB value functions, Kelly and hedge portfolios, and Monte
//! Carlo checks of the underlying measure changes.
//!
//! Every numerical routine is generic over [`Scalar`] (`f32` or `f64`).

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod hjb;
pub mod io;
pub mod jumps;
pub mod linalg;
pub mod market;
pub mod optim;
pub mod policy;
pub mod quadrature;
pub mod scalar;
pub mod simulate;
pub mod strategies;

pub use scalar::Scalar;

/// Double-precision aliases for the common entry points.
pub type Model = market::ValidModel<f64>;
pub type RawModel = market::MarketModel<f64>;
pub type Law = jumps::JumpLaw<f64>;
pub type Surface = hjb::ValueSurface<f64>;
pub type SurfaceStrategy = policy::GridStrategy<f64>;
pub type Allocation = strategies::AllocationReport<f64>;
pub type SimulatedPath = simulate::PathRecord<f64>;
