//! Data placement, command-trace generation and timing for GEMV on
//! bank-level processing-in-memory DRAM.

pub mod acceptance;
pub mod codec;
pub mod config;
pub mod e2e;
pub mod error;
pub mod experiments;
pub mod planner;
pub mod problem;
pub mod repro;
pub mod sim;
pub mod suite;
pub mod timing;
pub mod trace;

pub use error::{Error, Result};
