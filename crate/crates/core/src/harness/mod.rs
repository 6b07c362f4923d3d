//! Experiment harness: scenario presets, run classification, aggregation
//! and parameter sweeps.

pub mod acceptance;
pub mod aggregate;
pub mod aging;
pub mod loopback;
pub mod outcome;
pub mod presets;
pub mod scenarios;
pub mod sweep;

pub use aggregate::{aggregate, Accumulator, SummaryTable};
pub use outcome::{classify_run, Classification, HarnessError, RunOutcome};
