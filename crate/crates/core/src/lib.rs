//! Brouwer degree of Hölder boundary maps on self-similar fractal domains.
//!
//! The crate builds planar domains whose boundaries have a prescribed box
//! dimension, evaluates degrees of boundary maps exactly through winding
//! numbers, and provides the supporting machinery (Whitney decompositions,
//! Hölder seminorms and extensions, Whitney-cube Stokes sums) used to study
//! when the degree is `L^p`-integrable.

pub mod analytic;
pub mod corpus;
pub mod counterexample;
pub mod degree;
pub mod error;
pub mod fractal_gen;
pub mod geom;
pub mod holder;
pub mod motion;
pub mod quadrature;
pub mod spatial;
pub mod stokes;
pub mod whitney;

pub use error::{Error, Result};
pub use geom::{Point, Rect};
pub use motion::EuclideanMotion;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
