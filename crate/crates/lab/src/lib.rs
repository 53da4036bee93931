//! Experiment harness for the `adp-core` solvers: presets, method runs,
//! metrics and the CSV / SVG artifacts written by the `adp-lab` binary.

pub mod checks;
pub mod config;
pub mod metrics;
pub mod output;
pub mod plot;
pub mod presets;
pub mod runs;
