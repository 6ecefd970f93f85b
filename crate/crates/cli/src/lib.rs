//! Reproducible experiments over the `fractal_degree` library, driven by a
//! JSON config and writing CSV, JSON and SVG artifacts plus a manifest.

pub mod config;
pub mod error;
pub mod output;
pub mod run;
pub mod svg;

pub use config::{Command, ExperimentConfig};
pub use error::{CliError, CliResult};
pub use output::{fmt_f, Manifest};
pub use run::run;
