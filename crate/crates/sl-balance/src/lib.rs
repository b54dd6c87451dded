//! Balance augmentation for wearable supernumerary robotic limbs (SLs).
//!
//! The crate implements a three-layer control stack around a simulated
//! human wearing a backpack with two 4-DOF robot arms:
//!
//! - [`estimator`]: linear-quadratic estimation of a 48-dimensional
//!   human–SLs state from noisy 100 Hz position observations, with
//!   open-loop forward prediction for proactive control.
//! - [`planner`]: horizontal CoM-shift planning that drives the system
//!   CoM towards the support center, converted into task-space
//!   references for the SL elbows and wrists.
//! - [`mpc`]: receding-horizon tracking of those references under joint
//!   position/velocity/acceleration bounds, with weights scheduled by
//!   the Kalman gain norm, solved through the in-crate [`qp`] solver.
//!
//! [`model`] provides the shared kinematic and mass model, [`sim`] the
//! plant and trial harness, [`metrics`] the post-hoc analysis, and
//! [`config`] the flat key-value configuration that ties everything
//! together. See the crate examples for runnable entry points into each
//! capability, and the `slbal` binary for the trial/comparison CLI.

pub mod config;
pub mod estimator;
pub mod metrics;
pub mod model;
pub mod mpc;
pub mod planner;
pub mod plot;
pub mod qp;
pub mod sim;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("estimator has no measurement update yet")]
    NoUpdateYet,
    #[error("degenerate model: {0}")]
    DegenerateModel(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
