#![allow(non_snake_case)]
//! Interpretative and adaptive model predictive control.
//!
//! The pipeline linearizes a first-principles plant once, converts the
//! resulting state-space model into an equivalent ARX model with a
//! deadbeat-style observer gain, adapts the ARX coefficients online with a
//! per-output decoupled EKF and solves the resulting tracking MPC problem
//! with an augmented Lagrangian coordinate descent method. A successive
//! linearization MPC with a joint state/disturbance EKF is provided as the
//! comparison baseline, together with the four benchmark plants and a
//! closed-loop harness.

pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linearization;
pub mod mpc;
pub mod ss2arx;

pub use error::{Error, Result};
