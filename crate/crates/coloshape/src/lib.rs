//! Estimation of a deformed colon shape from a colonoscope shape.
//!
//! The pipeline: a synthetic phantom simulator produces paired
//! (scope, colon) insertion sequences; one regression forest per colon
//! marker is trained on the pooled frames; at estimation time a scope
//! shape is ICP-registered into the reference frame, each marker forest
//! predicts its marker position, and a causal moving average smooths the
//! result over time.
//!
//! Everything numeric is generic over the [`scalar::Real`] scalar
//! (`f32` or `f64`); the file formats and CLI use `f64` (see the aliases
//! below). All lengths are millimeters.

pub mod dataio;
pub mod error;
pub mod estimator;
pub mod forest;
pub mod geometry;
#[cfg(feature = "test-oracles")]
pub mod oracles;
pub mod registration;
pub mod rng;
pub mod scalar;
pub mod shapes;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` geometry aliases; the file formats and CLI run at double precision.
pub type Point3d = geometry::Point3<f64>;
pub type Point3f = geometry::Point3<f32>;
pub type Mat3d = geometry::Mat3<f64>;
pub type RigidTransformd = geometry::RigidTransform<f64>;
