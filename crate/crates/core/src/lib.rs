//! Reaction-rate estimation for metastable stochastic dynamics.
//!
//! Four routes to the same rate constant:
//! exact spectral rates of a fine discretization ([`spectral`]),
//! coarse Markov state models with error analysis ([`msm`]),
//! weighted-ensemble trajectory sampling ([`rts`]),
//! and milestoning on committor level sets ([`milestoning`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops read better than zipped iterators in the matrix kernels.
#![allow(clippy::needless_range_loop)]

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod milestoning;
pub mod msm;
pub mod potential;
pub mod rng;
pub mod rts;
pub mod series;
pub mod spectral;
pub mod stats;
pub mod transition;

pub use dynamics::{Brownian, BrownianParams, ChainDynamics, Dynamics, GridWalker, GridWalkerParams};
pub use error::{ErrorCategory, RateError, Result};
pub use geometry::{Lattice, Point, Region};
pub use milestoning::{CrossingStats, MilestoneSet};
pub use msm::{CellPartition, CoarseMatrix, SensitivityMatrix, SiteMap};
pub use potential::{Benchmark, FnPotential, Potential};
pub use rng::RngStream;
pub use rts::{ColorSpec, Ensemble, RtsParams};
pub use series::{RatePoint, RateSeries};
pub use spectral::{BasinSpec, RateEstimate, SpectralDecomposition};
pub use transition::TransitionMatrix;
