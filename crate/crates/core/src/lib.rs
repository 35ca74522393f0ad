//! Additive Gaussian-process regression with hierarchical ANOVA kernels.
//!
//! Models are built from per-dimension base kernels on a Cartesian grid of
//! inputs. Every kernel entering a model term is empirically centred, which
//! lets the covariance of any hierarchical term set share one Kronecker
//! eigenbasis. Fitting, model comparison and the per-term posterior
//! decomposition then run in `O(n * sum(n_l))` time without approximation.
//!
//! Module map:
//!
//! * [`kernels`]: base kernels, Gram matrices, centring and squaring.
//! * [`anova`]: term collections, hyperparameters and dense Gram assembly.
//! * [`kron`]: centred eigenbases, model diagonals, structured solves.
//! * [`gp`]: marginal likelihood, fitting, posterior decomposition, sampling.
//! * [`oracle`]: dense reference computations for small problems.
//! * [`data`] and [`pipeline`]: panel CSV ingestion, cleaning, comparison,
//!   effect export and benchmarking.

pub mod anova;
pub mod config;
pub mod data;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod kron;
pub mod optim;
pub mod oracle;
pub mod pipeline;

pub use anova::{HyperParams, Term, TermCollection, TermMode};
pub use error::{Error, Result};
pub use gp::{FitConfig, FittedModel, ModelState};
pub use kernels::{KernelFamily, KernelSpec};

/// A single input point. Scalars are one-element points.
pub type Point = Vec<f64>;
