//! Non-local Q-tensor energies, their Oseen–Frank limits and the numerics
//! needed to compare the two.

pub mod basis;
pub mod energy;
pub mod fft;
pub mod io;
pub mod field;
pub mod kernel;
pub mod maxent;
pub mod minimize;
pub mod quadrature;
pub mod special;

pub use basis::{Multiplier, QTensor};
pub use kernel::{ElasticCoefficients, KernelSpec, MomentTable, QuadratureSpec, RadialProfile};
