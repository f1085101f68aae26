//! Record the runtime inputs and outputs of C functions and publish them as
//! API documentation examples.
//!
//! The pipeline has three stages. [`tracer`] runs a target program under
//! `ptrace`, stopping at the entry and return of each watched function to
//! snapshot parameter and return values. [`selector`] picks one completed call
//! per function. [`docgen`] renders HTML pages that pair each function's
//! declaration and doc-comment summary with the chosen call as a
//! before/after table. [`aggregator`] builds the per-variable histograms
//! behind the interactive value explorer.

pub mod abi;
pub mod aggregator;
pub mod cli;
pub mod debuginfo;
pub mod docgen;
pub mod fixtures;
pub mod model;
pub mod par;
pub mod selector;
pub mod tracer;

pub const TOOL_VERSION: &str = concat!("iotrace ", env!("CARGO_PKG_VERSION"));
