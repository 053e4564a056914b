//! Estimation of linear-regression coefficients from a finite mixture with
//! varying, known concentrations, and confidence ellipsoids for them.
//!
//! Two estimators are provided for the coefficients `b^k` of component `k`:
//!
//! * a nonparametric weighted least squares estimate using minimax weights
//!   ([`lsfit`]), with a plug-in sandwich covariance;
//! * a Gaussian-mixture EM estimate ([`emfit`]) started from the LS pilot,
//!   with the empirical Fisher information from [`likelihood`].
//!
//! [`ellipsoid`] turns either into a χ²-calibrated confidence ellipsoid, and
//! [`simlab`] runs the coverage simulations.

// `!(x > 0.0)` style checks are kept because they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ellipsoid;
pub mod emfit;
pub mod error;
pub mod likelihood;
pub mod linalg;
pub mod lsfit;
pub mod mixweights;
pub mod model;
pub mod simlab;
pub mod special;

pub use error::{MixregError, Result};
pub use model::{ComponentParams, MixtureSample, ModelDims, TauLayout, TauVector};
