//! Trajectory planning for a sensor-carrying submarine against acoustic
//! targets.
//!
//! The pipeline: [`acoustics`] provides a parametric signal-loss field;
//! [`dynamics`] the target/carrier motion models; [`quantize`] approximates
//! the target chain by per-step grids with estimated transition matrices;
//! [`dp`] solves the finite-horizon control problem over the product state
//! space; [`tma`] runs bearings-only tracking with an unscented Kalman
//! filter; [`control`] closes the loop over the four scenario kinds.

pub mod acoustics;
pub mod control;
pub mod dp;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod quantize;
pub mod tma;
pub mod util;

pub use error::{Error, Result};
