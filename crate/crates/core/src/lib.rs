//! Reduced-dimensional stochastic modeling of coupled problems: polynomial
//! chaos bases and quadrature for arbitrary probability measures, weighted
//! Karhunen-Loeve reduction of exchanged random fields, embedded quadrature
//! by L1 minimization, and a partitioned Gauss-Seidel stochastic solver
//! demonstrated on a 1D coupled heat/neutronics reactor problem.

pub mod basis;
pub mod config;
pub mod driver;
pub mod embedded;
pub mod error;
pub mod indices;
pub mod kl;
pub mod measure;
pub mod parallel;
pub mod pce;
pub mod quad;
pub mod reactor;
pub mod rng;
pub mod simplex;
pub mod tableio;

pub use basis::{Basis, LegendreBasis, OrthonormalBasis, PolyFamily};
pub use error::{Error, Result};
pub use indices::{enumerate_multiindices, GradedIndexSet, MultiIndex};
pub use kl::{choose_reduced_dim, kl_reconstruct, weighted_kl, KLDecomposition, WeightMatrix};
pub use measure::DiscreteMeasure;
pub use pce::{project, PCExpansion};
pub use quad::{
    gauss_legendre_1d, moment_vector, smolyak_sparse_grid, tensor_rule, transform_rule,
    QuadratureRule,
};
