//! Quasi-Monte Carlo toolkit.
//!
//! Lattice rules and interlaced polynomial lattice rules built by
//! component-by-component search, worst-case error bounds and weight
//! calibration, and estimation harnesses for option pricing, Poisson GLMM
//! likelihoods and elliptic PDEs with random coefficients. The `savers`
//! module holds the multilevel estimator, the multivariate decomposition
//! method and fast QMC matrix-vector products.

pub mod cbc;
pub mod error;
pub mod estimate;
pub mod glmm;
pub mod numtheory;
pub mod option;
pub mod pde;
pub mod points;
pub mod savers;
pub mod transforms;
pub mod weights;

pub use error::{Error, Result};
pub use estimate::Estimate;
pub use points::{GeneratingVector, PointSet, PolynomialLatticeRule, RandomShift};
pub use weights::{Subset, WeightModel};
