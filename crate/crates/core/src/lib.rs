//! Numerical laboratory for free-boundary curve shortening flow.
//!
//! Curves in `R^d` evolve by `d/dt gamma = kappa N` with their endpoints on a
//! smooth barrier hypersurface, meeting it orthogonally. The crate provides
//! the discrete geometry, barrier oracles, an explicit flow stepper, the
//! reflected Gaussian kernels used for monotonicity and entropy, closed-form
//! model solutions and residual checks for the evolution identities.

pub mod acceptance;
pub mod analysis;
pub mod barrier;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod kernels;
pub mod models;
pub mod stencil;
pub mod vecmath;

pub use analysis::{EndpointReport, ResidualOptions, ResidualReport};
pub use barrier::{Barrier, BarrierKind, ImplicitSurface};
pub use error::{Error, Result};
pub use flow::{FlowConfig, FlowRun, FlowState, SingularityRecord, SingularityType, Termination};
pub use geometry::{best_fit_plane_deviation, compute_frenet, resample_arclength, DiscreteCurve, FrenetData};
pub use kernels::{EntropyReport, KernelParams, ScanSpec};
pub use models::{EntropyModel, ModelCurve};
