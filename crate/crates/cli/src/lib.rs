//! Scenario files, reports, CSV and SVG output for the `cavobs` binary.

pub mod app;
pub mod config;
pub mod svg;

pub use app::run;
