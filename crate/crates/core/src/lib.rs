//! Skill-demand analytics pipeline.
//!
//! Turns job-posting skill records into monthly demand series for a
//! green-skill taxonomy, benchmarks forecasters under rolling-origin
//! evaluation and classifies skills into growth quadrants.
//!
//! Stage order mirrors the module layout:
//! [`ingest`] → [`taxonomy`] / [`embed`] → [`matching`] → [`series`] →
//! [`forecast`] → [`classify`] → [`report`].

pub mod classify;
pub mod embed;
pub mod error;
pub mod forecast;
pub mod http;
pub mod ingest;
pub mod matching;
pub mod report;
pub mod series;
pub mod taxonomy;
pub mod text;

#[cfg(test)]
mod test_http;

pub use error::{Error, Result};
