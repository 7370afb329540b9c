//! Global operators over an interaction graph, embedding, norms, support
//! detection, and density operators.
//!
//! A [`GlobalOperator`] is a dense matrix on the full tensor product space
//! of a shared [`InteractionGraph`]. The first declared vertex is the most
//! significant tensor factor. Local operators enter through [`GlobalOperator::embed`],
//! which places a small matrix on an ordered list of support vertices and
//! pads the rest with identity.

use std::collections::BTreeSet;
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::InteractionGraph;
use crate::linalg::{self, C64};
use crate::DEFAULT_TOL;

/// Largest Hilbert-space dimension for which dense global operators are
/// materialized (12 qubits).
pub const MAX_HILBERT_DIM: usize = 4096;

/// Per-vertex index bookkeeping for composing global indices out of a
/// subset index and its complement.
#[derive(Debug, Clone)]
struct IndexLayout {
    /// (global stride, local dimension) for each chosen position.
    places: Vec<(usize, usize)>,
}

impl IndexLayout {
    /// Layout for the given tensor positions, most significant first.
    fn new(graph: &InteractionGraph, positions: &[usize]) -> Self {
        let dims = graph.local_dims();
        let mut strides = vec![0usize; dims.len()];
        let mut acc = 1usize;
        for p in (0..dims.len()).rev() {
            strides[p] = acc;
            acc *= dims[p];
        }
        let places = positions.iter().map(|&p| (strides[p], dims[p])).collect();
        Self { places }
    }

    /// Product of the chosen local dimensions.
    fn dim(&self) -> usize {
        self.places.iter().map(|&(_, d)| d).product()
    }

    /// Global index contribution of a packed sub-index, where the first
    /// chosen position is the most significant digit.
    fn compose(&self, mut packed: usize) -> usize {
        let mut global = 0;
        for &(stride, dim) in self.places.iter().rev() {
            global += (packed % dim) * stride;
            packed /= dim;
        }
        global
    }

    /// Table of global contributions for every packed sub-index.
    fn table(&self) -> Vec<usize> {
        (0..self.dim()).map(|i| self.compose(i)).collect()
    }
}

/// Dense operator on the full Hilbert space of a graph.
#[derive(Debug, Clone)]
pub struct GlobalOperator {
    graph: Arc<InteractionGraph>,
    matrix: Array2<C64>,
    declared_support: Option<BTreeSet<usize>>,
}

impl GlobalOperator {
    fn check_cap(graph: &InteractionGraph) -> Result<()> {
        let dim = graph.hilbert_dim();
        if dim > MAX_HILBERT_DIM {
            return Err(Error::TooLarge { dim, cap: MAX_HILBERT_DIM });
        }
        Ok(())
    }

    /// The identity operator.
    pub fn identity(graph: &Arc<InteractionGraph>) -> Result<Self> {
        Self::check_cap(graph)?;
        Ok(Self {
            graph: Arc::clone(graph),
            matrix: Array2::eye(graph.hilbert_dim()),
            declared_support: Some(BTreeSet::new()),
        })
    }

    /// The zero operator.
    pub fn zero(graph: &Arc<InteractionGraph>) -> Result<Self> {
        Self::check_cap(graph)?;
        Ok(Self {
            graph: Arc::clone(graph),
            matrix: Array2::zeros((graph.hilbert_dim(), graph.hilbert_dim())),
            declared_support: Some(BTreeSet::new()),
        })
    }

    /// Wraps a full-dimension matrix, optionally tagging the support it is
    /// known to act on.
    pub fn from_matrix(
        graph: &Arc<InteractionGraph>,
        matrix: Array2<C64>,
        declared_support: Option<BTreeSet<usize>>,
    ) -> Result<Self> {
        Self::check_cap(graph)?;
        let dim = graph.hilbert_dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { left: matrix.nrows(), right: dim });
        }
        if let Some(s) = &declared_support {
            for &v in s {
                graph.position(v)?;
            }
        }
        Ok(Self { graph: Arc::clone(graph), matrix, declared_support })
    }

    /// Embeds a local operator on an ordered vertex list, identity
    /// elsewhere. The list order matches the tensor factor order of
    /// `local`; an empty list embeds a 1x1 scalar as a multiple of the
    /// identity.
    pub fn embed(
        graph: &Arc<InteractionGraph>,
        local: &Array2<C64>,
        support: &[usize],
    ) -> Result<Self> {
        Self::check_cap(graph)?;
        let mut seen = BTreeSet::new();
        let mut positions = Vec::with_capacity(support.len());
        for &v in support {
            if !seen.insert(v) {
                return Err(Error::InvalidInput {
                    reason: format!("vertex {v} appears twice in the support list"),
                });
            }
            positions.push(graph.position(v)?);
        }
        let sup_layout = IndexLayout::new(graph, &positions);
        let m = sup_layout.dim();
        if local.nrows() != m || local.ncols() != m {
            return Err(Error::DimensionMismatch { left: local.nrows(), right: m });
        }

        let rest_positions: Vec<usize> =
            (0..graph.vertices().len()).filter(|p| !positions.contains(p)).collect();
        let rest_layout = IndexLayout::new(graph, &rest_positions);
        let sup_table = sup_layout.table();
        let rest_table = rest_layout.table();

        let dim = graph.hilbert_dim();
        let mut matrix = Array2::zeros((dim, dim));
        for &rest in &rest_table {
            for lr in 0..m {
                let row = rest + sup_table[lr];
                for lc in 0..m {
                    matrix[[row, rest + sup_table[lc]]] = local[[lr, lc]];
                }
            }
        }
        Ok(Self {
            graph: Arc::clone(graph),
            matrix,
            declared_support: Some(seen),
        })
    }

    /// The underlying graph.
    pub fn graph(&self) -> &Arc<InteractionGraph> {
        &self.graph
    }

    /// The dense matrix.
    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    /// Mutable access to the dense matrix. The declared support is cleared
    /// because arbitrary writes may enlarge it.
    pub fn matrix_mut(&mut self) -> &mut Array2<C64> {
        self.declared_support = None;
        &mut self.matrix
    }

    /// Consumes the operator and returns its matrix.
    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    /// Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// The support this operator was declared with, if any.
    pub fn declared_support(&self) -> Option<&BTreeSet<usize>> {
        self.declared_support.as_ref()
    }

    /// Declared support when present, otherwise the detected support at the
    /// default tolerance.
    pub fn support_hint(&self) -> BTreeSet<usize> {
        match &self.declared_support {
            Some(s) => s.clone(),
            None => self.support_of(DEFAULT_TOL),
        }
    }

    /// Operator (spectral) norm.
    pub fn op_norm(&self) -> f64 {
        linalg::op_norm(&self.matrix)
    }

    /// Frobenius norm.
    pub fn frobenius_norm(&self) -> f64 {
        linalg::frobenius_norm(&self.matrix)
    }

    /// Conjugate transpose.
    pub fn dagger(&self) -> Self {
        Self {
            graph: Arc::clone(&self.graph),
            matrix: linalg::dagger(&self.matrix),
            declared_support: self.declared_support.clone(),
        }
    }

    /// Largest deviation from Hermiticity.
    pub fn hermiticity_deviation(&self) -> f64 {
        linalg::hermiticity_deviation(&self.matrix)
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { left: self.dim(), right: other.dim() });
        }
        Ok(())
    }

    fn combined_support(&self, other: &Self) -> Option<BTreeSet<usize>> {
        match (&self.declared_support, &other.declared_support) {
            (Some(a), Some(b)) => Some(a.union(b).copied().collect()),
            _ => None,
        }
    }

    /// Sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            graph: Arc::clone(&self.graph),
            matrix: &self.matrix + &other.matrix,
            declared_support: self.combined_support(other),
        })
    }

    /// Difference.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            graph: Arc::clone(&self.graph),
            matrix: &self.matrix - &other.matrix,
            declared_support: self.combined_support(other),
        })
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            graph: Arc::clone(&self.graph),
            matrix: self.matrix.dot(&other.matrix),
            declared_support: self.combined_support(other),
        })
    }

    /// Commutator `[self, other]`.
    pub fn commutator_with(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            graph: Arc::clone(&self.graph),
            matrix: linalg::commutator(&self.matrix, &other.matrix),
            declared_support: self.combined_support(other),
        })
    }

    /// Anticommutator `{self, other}`.
    pub fn anticommutator_with(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self {
            graph: Arc::clone(&self.graph),
            matrix: linalg::anticommutator(&self.matrix, &other.matrix),
            declared_support: self.combined_support(other),
        })
    }

    /// Scalar multiple.
    pub fn scaled(&self, z: C64) -> Self {
        Self {
            graph: Arc::clone(&self.graph),
            matrix: self.matrix.mapv(|w| w * z),
            declared_support: self.declared_support.clone(),
        }
    }

    /// Hilbert-Schmidt inner product `Tr(self† other)`.
    pub fn hs_inner(&self, other: &Self) -> Result<C64> {
        self.check_same_dim(other)?;
        Ok(linalg::hs_dot(&self.matrix, &other.matrix))
    }

    /// Trace.
    pub fn trace(&self) -> C64 {
        linalg::trace(&self.matrix)
    }

    /// Partial trace onto the subspace of `keep`, in declared vertex order.
    pub fn partial_trace(&self, keep: &BTreeSet<usize>) -> Result<Array2<C64>> {
        let mut keep_positions = Vec::with_capacity(keep.len());
        for &v in keep {
            keep_positions.push(self.graph.position(v)?);
        }
        keep_positions.sort_unstable();
        let trace_positions: Vec<usize> = (0..self.graph.vertices().len())
            .filter(|p| !keep_positions.contains(p))
            .collect();
        let keep_layout = IndexLayout::new(&self.graph, &keep_positions);
        let trace_layout = IndexLayout::new(&self.graph, &trace_positions);
        let keep_table = keep_layout.table();
        let trace_table = trace_layout.table();

        let dk = keep_layout.dim();
        let mut out = Array2::zeros((dk, dk));
        for kr in 0..dk {
            for kc in 0..dk {
                let mut acc = C64::new(0.0, 0.0);
                for &t in &trace_table {
                    acc += self.matrix[[keep_table[kr] + t, keep_table[kc] + t]];
                }
                out[[kr, kc]] = acc;
            }
        }
        Ok(out)
    }

    /// Restriction to `keep`: the partial trace over the complement,
    /// normalized by the complement dimension. The restriction of `A`
    /// embedded back on `keep` is the best identity-padded approximation
    /// used by support detection.
    pub fn restriction(&self, keep: &BTreeSet<usize>) -> Result<Array2<C64>> {
        let keep_dim: usize = {
            let mut d = 1usize;
            for &v in keep {
                d *= self.graph.local_dim(v)?;
            }
            d
        };
        let complement_dim = self.dim() / keep_dim;
        let traced = self.partial_trace(keep)?;
        Ok(traced.mapv(|z| z / complement_dim as f64))
    }

    /// The detected support: starting from all vertices, greedily drops
    /// each vertex (in declared order) whose removal keeps
    /// `norm(A - embed(restriction(A, kept), kept)) <= tol * norm(A)`.
    /// Returns the empty set for multiples of the identity and for zero.
    pub fn support_of(&self, tol: f64) -> BTreeSet<usize> {
        let norm = self.op_norm();
        if norm == 0.0 {
            return BTreeSet::new();
        }
        let mut kept: BTreeSet<usize> = self.graph.vertices().iter().copied().collect();
        for &v in self.graph.vertices() {
            let mut trial = kept.clone();
            trial.remove(&v);
            let restricted = match self.restriction(&trial) {
                Ok(r) => r,
                Err(_) => continue,
            };
            let order: Vec<usize> = trial.iter().copied().collect();
            let approx = match Self::embed(&self.graph, &restricted, &order) {
                Ok(a) => a,
                Err(_) => continue,
            };
            let deviation = linalg::op_norm(&(&self.matrix - approx.matrix()));
            if deviation <= tol * norm {
                kept = trial;
            }
        }
        kept
    }
}

/// A density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone)]
pub struct StateOperator {
    op: GlobalOperator,
}

impl StateOperator {
    /// Validates the density-operator invariants at tolerance `tol`:
    /// Hermiticity deviation, |trace - 1|, and the most negative
    /// eigenvalue must all stay within `tol`.
    pub fn new(op: GlobalOperator, tol: f64) -> Result<Self> {
        let dev = op.hermiticity_deviation();
        if dev > tol {
            return Err(Error::NotAState { reason: format!("Hermiticity deviation {dev:.3e}") });
        }
        let tr = op.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > tol {
            return Err(Error::NotAState {
                reason: format!("trace {:.6} + {:.3e}i is not 1", tr.re, tr.im),
            });
        }
        let eigs = linalg::eigvalsh(op.matrix())?;
        let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(Error::NotAState {
                reason: format!("negative eigenvalue {min:.3e}"),
            });
        }
        Ok(Self { op })
    }

    /// Wraps an operator already known to satisfy the invariants (used by
    /// constructors that validate factor-wise).
    pub(crate) fn trusted(op: GlobalOperator) -> Self {
        Self { op }
    }

    /// The wrapped operator.
    pub fn operator(&self) -> &GlobalOperator {
        &self.op
    }

    /// The dense matrix.
    pub fn matrix(&self) -> &Array2<C64> {
        self.op.matrix()
    }

    /// Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// The underlying graph.
    pub fn graph(&self) -> &Arc<InteractionGraph> {
        self.op.graph()
    }

    /// Expectation value `Tr(rho A)` of a Hermitian observable.
    ///
    /// Fails with [`Error::NotHermitian`] when `A` deviates from
    /// Hermiticity by more than `DEFAULT_TOL` relative to its norm, and
    /// checks that the residual imaginary part of the trace is negligible
    /// before discarding it.
    pub fn expectation(&self, a: &GlobalOperator) -> Result<f64> {
        if self.dim() != a.dim() {
            return Err(Error::DimensionMismatch { left: self.dim(), right: a.dim() });
        }
        let scale = linalg::max_abs(a.matrix()).max(1.0);
        let dev = a.hermiticity_deviation();
        if dev > DEFAULT_TOL * scale {
            return Err(Error::NotHermitian { deviation: dev });
        }
        // Tr(rho A) without forming the product matrix.
        let mut val = C64::new(0.0, 0.0);
        let rho = self.matrix();
        let m = a.matrix();
        for r in 0..self.dim() {
            for c in 0..self.dim() {
                val += rho[[r, c]] * m[[c, r]];
            }
        }
        let imag_scale = scale * self.dim() as f64;
        if val.im.abs() > 1e-8 * imag_scale.max(1.0) {
            return Err(Error::NumericalCheck { check: "expectation imaginary residue", value: val.im });
        }
        Ok(val.re)
    }
}
