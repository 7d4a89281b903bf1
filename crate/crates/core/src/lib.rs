//! Domain models for two-stage stationary/mobile battery planning in AC/DC
//! hybrid distribution networks.
//!
//! The crate is deliberately free of solver code: everything here is a pure
//! function over immutable inputs, so the dispatch model, the outer search and
//! the reporting layer can all share it.

pub mod degradation;
pub mod economics;
pub mod error;
pub mod net;
pub mod storage;
pub mod thermal;

pub use error::{CoreError, Result};

/// Number of dispatch intervals in one representative day.
pub const HOURS: usize = 24;

/// Length of one dispatch interval in hours.
pub const DT_HOURS: f64 = 1.0;

/// Length of one dispatch interval in seconds.
pub const DT_SECONDS: f64 = 3600.0;

/// Joules per kWh.
pub const J_PER_KWH: f64 = 3.6e6;
