//! Nonlinear functional principal component analysis.
//!
//! Curves are smoothed onto a B-spline basis and fed, as coefficient vectors,
//! to an autoassociative network whose decoder weights are themselves
//! B-spline functions. The bottleneck activations are the nonlinear
//! component scores. Linear functional PCA is included as a baseline, along
//! with synthetic curve generators and the experiment commands.

pub mod bspline;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod linear_fpca;
pub mod methods;
pub mod network;
pub mod quadrature;
pub mod simulation;
pub mod trainer;

pub use error::{Error, Result};
