//! Command-line reports and simulations.
//!
//! [`reports`] builds the comparison tables, the ECMO reanalysis, asymptotic
//! grids and custom simulations as [`Report`]s, which [`report`] writes as CSV
//! or JSON. [`cli`] is the `erade` command.

pub mod cli;
pub mod error;
pub mod report;
pub mod reports;

pub use error::CliError;
pub use report::{Cell, Format, Report, ReportError};
pub use reports::{ReportSpec, RunOptions};
