//! Library side of the `plg` harness: run configuration, chart rendering
//! and the CSV formats the CLI owns.

pub mod config;
pub mod output;
pub mod plot;
