//! Continuous max-flow/min-cut segmentation with learned capacity maps.
//!
//! The pipeline: a capacity network (or hand-crafted features) produces
//! per-pixel source/sink/edge capacities, an ADMM primal-dual solver computes
//! the relaxed segmentation field λ, and thresholding λ at any level yields a
//! binary mask. Training minimizes the binary energy of the ground-truth label
//! plus a flow-regularization term that closes the primal-dual gap at the
//! label, with gradients propagated through the capacity maps only (never
//! through the solver iterates).

pub mod capnet;
pub mod cli;
pub mod error;
pub mod evalmetrics;
pub mod field;
pub mod io;
pub mod levelset;
pub mod losses;
pub mod solver;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
pub use field::{GridDomain, ScalarField, TvMode, VectorField};
pub use levelset::Mask;
pub use solver::{CapacityMaps, FlowState, SolverConfig, SolverResult};
