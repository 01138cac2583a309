//! Topology-guided sampling of one-dimensional Gaussian random fields.
//!
//! A field `u = Σ g_k φ_k` is described by a [`FieldModel`]. The [`density`]
//! module evaluates the sampling density `C(x)` built from the correlation
//! jet, [`planner`] turns it into sample grids and failure bounds, and
//! [`topology`] compares the components of the true nodal domains with their
//! cubical approximations. [`orthant`] holds the local crossover analysis and
//! [`harness`] the Monte Carlo experiments driven by the CLI.

pub mod density;
pub mod error;
pub mod field_model;
pub mod harness;
pub mod orthant;
pub mod planner;
pub mod quadrature;
pub mod rng;
pub mod table;
pub mod topology;

pub use error::{Error, Result};
pub use field_model::{CorrelationJet, Covariance, CustomBasis, Family, FieldModel, Jet, SamplePath, Threshold};
pub use planner::{SamplingPlan, Strategy};
