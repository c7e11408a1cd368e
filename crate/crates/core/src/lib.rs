//! Schedule search, cost models, kernel emission and a work-group simulator
//! for matrix-free finite element action kernels on GPUs.
//!
//! A [`FormSignature`] describes the shapes of one variational form. From it
//! [`search`] enumerates and ranks multi-level tilings, [`perf`] models their
//! time on a [`DeviceSpec`], [`sim`] executes them on a CPU emulation of a
//! work-group and [`codegen`] writes the matching kernel source.

pub mod cli;
pub mod codegen;
pub mod form;
pub mod perf;
pub mod qoi;
pub mod search;
pub mod sim;

pub use form::{FormSignature, ProblemInstance};
pub use perf::DeviceSpec;
pub use qoi::{QoIReport, Schedule, TilingParams};
