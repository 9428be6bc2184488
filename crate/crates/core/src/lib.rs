//! Variational Gaussian copula inference.

pub mod baselines;
pub mod copula;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod models;
pub mod optimizer;
pub mod quadrature;
pub mod specfun;
pub mod support;
pub mod transform;

pub use copula::{GaussianFactor, LowerTriangular, VgcState};
pub use error::{Result, VgcError};
pub use models::TargetModel;
pub use specfun::ReferenceCdf;
pub use support::Support;
pub use transform::{BernsteinTransform, MarginalTransform};
