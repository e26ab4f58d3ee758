//! Simulation and calibration toolkit for semilinear stochastic
//! reaction-diffusion equations
//!
//! ```text
//! dX_t = (theta * X_t'' + f(X_t)) dt + sigma dW_t   on (0, 1), Dirichlet boundary
//! ```
//!
//! driven by space-time white noise. The crate generates discretely observed
//! solution fields and estimates the volatility `sigma^2`, the diffusivity
//! `theta` and the reaction function `f` from grid data.
//!
//! Modules:
//! - [`spectral`]: sine eigenbasis, discrete sine transform with aliasing,
//!   and the scalar normalizing functions used by the estimators.
//! - [`simulator`]: exact Ornstein-Uhlenbeck mode updates plus exponential
//!   Euler for the reaction term.
//! - [`grid`]: the observation grid and its CSV / JSON formats.
//! - [`variation`]: realized quadratic variations and the joint
//!   `(sigma^2, theta)` estimator.
//! - [`basis`]: trigonometric and dyadic piecewise-polynomial approximation
//!   spaces.
//! - [`nonparametric`]: semigroup-corrected least squares for `f`, model
//!   selection and plug-in fitting.
//! - [`harness`]: Monte Carlo studies driven by a JSON config.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` deliberately rejects NaN

pub mod basis;
pub mod error;
pub mod grid;
pub mod harness;
pub mod nonparametric;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod spectral;
pub mod variation;

pub use basis::{BasisFamily, BasisSpec};
pub use error::{Error, Result};
pub use grid::{GridShape, ObservationGrid};
pub use nonparametric::{ReactionFit, RegressionData};
pub use simulator::{InitialCondition, ModelSpec, Polynomial, SimConfig};
pub use spectral::{DiscreteSpectrum, EigenSystem, ModeCoefficients};
pub use variation::{ParamEstimate, QVResult, Statistic};
