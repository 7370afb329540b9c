//! Exact simulation and certification of locality structure in
//! time-dependent local Lindblad dynamics on interaction hypergraphs.
//!
//! The crate builds finite spin or fermionic lattice models from local
//! terms, propagates states and observables to controlled accuracy, and
//! measures how well the dynamics respects the graph geometry: effective
//! light cones of commutators, quasi-locality of evolved observables,
//! covariance decay between separated regions, product-formula errors,
//! and the spin picture of fermionic hopping models.
//!
//! Layers, bottom up:
//!
//! - [`graph`]: interaction hypergraphs with the edge-overlap metric;
//! - [`operator`]: dense operators embedded from local factors, states;
//! - [`schedule`]: piecewise-polynomial time dependence of coefficients;
//! - [`liouvillian`]: local Lindblad terms compiled into a fast generator;
//! - [`propagation`]: adaptive Runge-Kutta evolution in both pictures,
//!   dense propagator matrices, CPTP diagnostics;
//! - [`locality`]: cone, truncation, covariance, and product-formula
//!   experiments with fitted decay rates;
//! - [`fermion`]: fermionic operators mapped to spin chains;
//! - [`models`]: ready-made graphs, terms, and states;
//! - [`io`]: deterministic CSV, JSON, and binary matrix output.

pub mod error;
pub mod fermion;
pub mod graph;
pub mod io;
mod kernel;
pub mod linalg;
pub mod liouvillian;
pub mod locality;
pub mod models;
pub mod operator;
pub mod par;
pub mod propagation;
pub mod schedule;

/// Default numerical tolerance for validation checks (Hermiticity, trace
/// normalization, positivity slack).
pub const DEFAULT_TOL: f64 = 1e-10;

pub use error::{Error, Result};
pub use fermion::{FermionFactor, FermionMonomial, FermionPolynomial, Parity};
pub use graph::{Distance, InteractionGraph, LocalDims};
pub use kernel::Picture;
pub use liouvillian::{LindbladTerm, LocalLiouvillian};
pub use locality::{
    commutator_cone, covariance_series, trotter_error_series, truncation_error_series,
    BoundParameters, ConeReport, CovariancePoint, TrotterPoint, TruncationReport,
};
pub use operator::{GlobalOperator, StateOperator};
pub use propagation::{
    cptp_check, generator_matrix, propagate_observable, propagate_state, propagator_matrix,
    CptpReport, IntegrationOptions, PropagationReport, SuperoperatorMatrix,
};
pub use schedule::{SchedulePiece, TimeSchedule};
