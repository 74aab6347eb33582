//! Data-driven synthesis of quadratic augmented control barrier certificates
//! and dynamic safety controllers for discrete-time nonlinear systems, from a
//! single simulated input-state trajectory, with independent model-based
//! verification of the resulting finite-horizon guarantee.

// linked for Clarabel's PSD cone backend
use openblas_src as _;

pub mod data;
pub mod error;
pub mod expr;
pub mod model;
pub mod scenario;
pub mod sdp;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
