//! Surrogates of the flow and volume relations: global affine, piecewise bilinear, local first order.

pub mod global;
pub mod local;
pub mod report;
pub mod sos2;

pub(crate) use global::linspace;
pub use global::{admissible_heads, fit_global, GlobalLinearModel, GlobalSampling, ModeAffine};
pub use local::{local_linearize, LocalLinearization};
pub use report::{approx_error_report, upc_error, vol_error, write_error_report, Approximation, ErrorMetrics, ErrorRow, OperatingPoint};
pub use sos2::{build_sos2_grid, sos2_interpolate, KnotWeight, ModeTable, Sos2Grid};
