//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Error`]. Variants are
//! grouped by the subsystem that raises them first, but several (for example
//! [`Error::UnknownVertex`]) are shared across modules.

use thiserror::Error;

/// Errors raised by graph construction, operator algebra, generator
/// assembly, propagation, and the fermionic layer.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A hyperedge with no vertices was supplied to the graph builder.
    #[error("hyperedge {index} is empty")]
    EmptyEdge { index: usize },

    /// A vertex id does not belong to the graph.
    #[error("unknown vertex {vertex}")]
    UnknownVertex { vertex: usize },

    /// A local dimension smaller than 2 was declared for a vertex.
    #[error("vertex {vertex} declares local dimension {dim}, need at least 2")]
    BadDimension { vertex: usize, dim: usize },

    /// An operation that needs a non-empty vertex set received an empty one.
    #[error("vertex set argument is empty")]
    EmptySet,

    /// A set that must be a hyperedge of the graph is not one.
    #[error("set {set:?} is not a hyperedge of the graph")]
    NotAnEdge { set: Vec<usize> },

    /// The graph has no hyperedges at all.
    #[error("graph has no hyperedges")]
    NoEdges,

    /// The hyperedge intersection graph is not connected.
    #[error("graph is disconnected")]
    Disconnected,

    /// Two objects that must share a Hilbert-space dimension do not.
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    /// A matrix that must be Hermitian is not, within tolerance.
    #[error("operator is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    /// A matrix fails a density-operator invariant.
    #[error("matrix is not a valid state: {reason}")]
    NotAState { reason: String },

    /// A coefficient schedule was queried outside its domain.
    #[error("time {t} is outside the coefficient schedule")]
    TimeOutsideSchedule { t: f64 },

    /// Strict assembly rejected a term whose support is not a hyperedge.
    #[error("term support {support:?} is not a hyperedge of the graph")]
    SupportNotInGraph { support: Vec<usize> },

    /// A propagation interval with t < s was requested.
    #[error("interval end {t} precedes start {s}")]
    BadInterval { s: f64, t: f64 },

    /// The step-doubling ladder hit the step-size floor without meeting
    /// the requested tolerance.
    #[error("integration tolerance not met: step size underflow at h = {h:.3e}")]
    ToleranceNotMet { h: f64 },

    /// A dense materialization was requested above the safety cap.
    #[error("Hilbert dimension {dim} exceeds the materialization cap {cap}")]
    TooLarge { dim: usize, cap: usize },

    /// A fermionic mode index lies outside 1..=n_modes.
    #[error("mode index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    /// A fermionic polynomial has odd or mixed parity where even parity
    /// is required.
    #[error("fermionic polynomial is not of even parity")]
    OddParity,

    /// An argument violates a structural precondition that has no more
    /// specific variant (duplicate support vertices, ill-formed grids,
    /// non-nested region lists, and similar).
    #[error("invalid input: {reason}")]
    InvalidInput { reason: String },

    /// An internal numerical consistency check failed. This indicates a
    /// bug or catastrophic loss of precision, not bad user input.
    #[error("numerical check `{check}` failed with value {value:.3e}")]
    NumericalCheck { check: &'static str, value: f64 },

    /// A filesystem read or write failed. The originating error is
    /// flattened to a message so that [`Error`] stays cloneable.
    #[error("i/o failure on {path}: {message}")]
    Io { path: String, message: String },

    /// A file exists and was read, but its contents do not match the
    /// expected format.
    #[error("malformed file {path}: {reason}")]
    FileFormat { path: String, reason: String },
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
