//! Fermionic operators on ordered modes, realized as spin operators.
//!
//! Modes are the vertices of a qubit graph, ordered as the graph declares
//! them. The occupied mode is the spin state |0> (so the number operator
//! is (1 + Z)/2), and the string convention is
//!
//! - f_j  = Z_1 ... Z_{j-1} (X_j - i Y_j)/2,
//! - f_j† = Z_1 ... Z_{j-1} (X_j + i Y_j)/2,
//!
//! equivalently Majorana operators w_{2j-1} = Z ... Z X_j and
//! w_{2j} = Z ... Z Y_j with f_j = (w_{2j-1} - i w_{2j})/2. Under this
//! map the nearest-neighbor hopping f_j† f_{j+1} + f_{j+1}† f_j becomes
//! -(X_j X_{j+1} + Y_j Y_{j+1})/2: the strings cancel between adjacent
//! modes.
//!
//! Physical observables carry even fermion parity; their spin images obey
//! the same commutation relations as the fermionic originals, so locality
//! experiments run unchanged on the spin side. What changes is the notion
//! of support: an even polynomial like f_1† f_3 + h.c. touches the modes
//! {1, 3} as a fermion operator but the sites {1, 2, 3} as a spin
//! operator because of the string. Distances in fermionic experiments use
//! the mode support.

use std::collections::BTreeSet;
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{Distance, InteractionGraph};
use crate::linalg::{kron, C64, C_ONE};
use crate::liouvillian::LocalLiouvillian;
use crate::locality::{BoundParameters, ConePoint, ConeReport};
use crate::models;
use crate::operator::GlobalOperator;
use crate::propagation::{propagate_observable, IntegrationOptions};

/// Fermion parity of a monomial or polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    /// Even number of creation and annihilation factors.
    Even,
    /// Odd number of factors.
    Odd,
}

/// A single creation or annihilation operator on a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FermionFactor {
    /// f† on the given mode.
    Create(usize),
    /// f on the given mode.
    Annihilate(usize),
}

impl FermionFactor {
    /// The mode this factor acts on.
    pub fn mode(&self) -> usize {
        match *self {
            FermionFactor::Create(v) | FermionFactor::Annihilate(v) => v,
        }
    }
}

/// A scalar multiple of an ordered product of fermionic factors.
#[derive(Debug, Clone)]
pub struct FermionMonomial {
    /// Scalar coefficient.
    pub coefficient: C64,
    /// Factors in product order, leftmost first.
    pub factors: Vec<FermionFactor>,
}

impl FermionMonomial {
    /// Monomial from explicit factors.
    pub fn new(coefficient: C64, factors: Vec<FermionFactor>) -> Self {
        Self { coefficient, factors }
    }

    /// Monomial from signed modes: a positive entry +v is f† on mode v, a
    /// negative entry -v is f on mode v. Zero is rejected because it
    /// cannot carry a sign.
    pub fn from_signed_modes(coefficient: C64, signed: &[i64]) -> Result<Self> {
        let mut factors = Vec::with_capacity(signed.len());
        for &s in signed {
            if s == 0 {
                return Err(Error::InvalidInput {
                    reason: "mode 0 cannot be written in signed form".into(),
                });
            }
            if s > 0 {
                factors.push(FermionFactor::Create(s as usize));
            } else {
                factors.push(FermionFactor::Annihilate((-s) as usize));
            }
        }
        Ok(Self { coefficient, factors })
    }

    /// Parity of the factor count.
    pub fn parity(&self) -> Parity {
        if self.factors.len() % 2 == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// Modes touched by the factors.
    pub fn support(&self) -> BTreeSet<usize> {
        self.factors.iter().map(|f| f.mode()).collect()
    }
}

/// A sum of fermionic monomials.
#[derive(Debug, Clone)]
pub struct FermionPolynomial {
    monomials: Vec<FermionMonomial>,
}

impl FermionPolynomial {
    /// A polynomial from its monomials; at least one is required.
    pub fn new(monomials: Vec<FermionMonomial>) -> Result<Self> {
        if monomials.is_empty() {
            return Err(Error::InvalidInput {
                reason: "a fermion polynomial needs at least one monomial".into(),
            });
        }
        Ok(Self { monomials })
    }

    /// The monomials.
    pub fn monomials(&self) -> &[FermionMonomial] {
        &self.monomials
    }

    /// The common parity, or None when monomials mix parities.
    pub fn parity(&self) -> Option<Parity> {
        let first = self.monomials[0].parity();
        self.monomials
            .iter()
            .all(|m| m.parity() == first)
            .then_some(first)
    }

    /// Union of the monomial supports: the modes the polynomial touches.
    pub fn support(&self) -> BTreeSet<usize> {
        self.monomials.iter().flat_map(|m| m.support()).collect()
    }

    /// Spin image of an even polynomial. Odd or mixed parity is rejected:
    /// such operators are not physical observables and their spin images
    /// carry strings that break the support bookkeeping.
    pub fn to_spin_operator(&self, graph: &Arc<InteractionGraph>) -> Result<GlobalOperator> {
        if self.parity() != Some(Parity::Even) {
            return Err(Error::OddParity);
        }
        self.to_spin_operator_unchecked(graph)
    }

    /// Spin image regardless of parity.
    pub fn to_spin_operator_unchecked(
        &self,
        graph: &Arc<InteractionGraph>,
    ) -> Result<GlobalOperator> {
        let mut sum = GlobalOperator::zero(graph)?;
        for mono in &self.monomials {
            let mut prod = GlobalOperator::identity(graph)?;
            for factor in &mono.factors {
                let op = match *factor {
                    FermionFactor::Create(v) => creation_operator(graph, v)?,
                    FermionFactor::Annihilate(v) => annihilation_operator(graph, v)?,
                };
                prod = prod.compose(&op)?;
            }
            sum = sum.add(&prod.scaled(mono.coefficient))?;
        }
        Ok(sum)
    }
}

fn require_qubits(graph: &InteractionGraph) -> Result<()> {
    for &v in graph.vertices() {
        if graph.local_dim(v)? != 2 {
            return Err(Error::BadDimension { vertex: v, dim: graph.local_dim(v)? });
        }
    }
    Ok(())
}

/// Builds the full-system operator whose tensor factor at vertex position
/// p is `factors[p]`, in graph vertex order.
fn kron_chain(graph: &Arc<InteractionGraph>, factors: &[Array2<C64>]) -> Result<GlobalOperator> {
    let mut m: Array2<C64> = Array2::eye(1);
    for f in factors {
        m = kron(&m, f);
    }
    GlobalOperator::from_matrix(graph, m, None)
}

fn string_and_site(
    graph: &Arc<InteractionGraph>,
    mode: usize,
    site_op: Array2<C64>,
) -> Result<GlobalOperator> {
    require_qubits(graph)?;
    let pos = graph.position(mode)?;
    let n = graph.vertices().len();
    let mut factors: Vec<Array2<C64>> = Vec::with_capacity(n);
    for p in 0..n {
        factors.push(if p < pos {
            models::sigma_z()
        } else if p == pos {
            site_op.clone()
        } else {
            Array2::eye(2)
        });
    }
    kron_chain(graph, &factors)
}

/// The annihilation operator f on a mode: the Z string through all
/// earlier modes, then (X - i Y)/2.
pub fn annihilation_operator(
    graph: &Arc<InteractionGraph>,
    mode: usize,
) -> Result<GlobalOperator> {
    // (X - i Y)/2 sends occupied |0> to empty |1>.
    let lower = (models::sigma_x() - models::sigma_y().mapv(|z| z * C64::new(0.0, 1.0)))
        .mapv(|z| z * 0.5);
    string_and_site(graph, mode, lower)
}

/// The creation operator f† on a mode.
pub fn creation_operator(graph: &Arc<InteractionGraph>, mode: usize) -> Result<GlobalOperator> {
    let raise = (models::sigma_x() + models::sigma_y().mapv(|z| z * C64::new(0.0, 1.0)))
        .mapv(|z| z * 0.5);
    string_and_site(graph, mode, raise)
}

/// The k-th Majorana operator, k counted from 1: odd indices give
/// Z ... Z X on mode (k+1)/2, even indices give Z ... Z Y.
pub fn majorana_operator(graph: &Arc<InteractionGraph>, k: usize) -> Result<GlobalOperator> {
    let n = graph.vertices().len();
    if k == 0 || k > 2 * n {
        return Err(Error::IndexOutOfRange { index: k, max: 2 * n });
    }
    let mode = graph.vertices()[(k - 1) / 2];
    let site_op = if k % 2 == 1 { models::sigma_x() } else { models::sigma_y() };
    string_and_site(graph, mode, site_op)
}

/// The number operator f† f on a mode: (1 + Z)/2, no string.
pub fn number_operator(graph: &Arc<InteractionGraph>, mode: usize) -> Result<GlobalOperator> {
    require_qubits(graph)?;
    let local = (Array2::<C64>::eye(2) + models::sigma_z()).mapv(|z| z * 0.5);
    GlobalOperator::embed(graph, &local, &[mode])
}

/// The hopping polynomial w (f_j† f_k + f_k† f_j).
pub fn hopping_polynomial(j: usize, k: usize, amplitude: f64) -> Result<FermionPolynomial> {
    let w = C64::new(amplitude, 0.0);
    FermionPolynomial::new(vec![
        FermionMonomial::from_signed_modes(w, &[j as i64, -(k as i64)])?,
        FermionMonomial::from_signed_modes(w, &[k as i64, -(j as i64)])?,
    ])
}

/// The density polynomial f† f on one mode.
pub fn number_polynomial(mode: usize) -> Result<FermionPolynomial> {
    FermionPolynomial::new(vec![FermionMonomial::from_signed_modes(
        C_ONE,
        &[mode as i64, -(mode as i64)],
    )?])
}

/// Commutator cone experiment for fermionic observables. The observable
/// and probes are given as fermion polynomials; parity-even inputs are
/// required unless `allow_odd` is set for the probes (the observable must
/// always be even, which keeps the plain commutator the right bracket).
/// Distances are measured between mode supports, not between the spin
/// supports of the string-carrying images.
pub fn fermionic_commutator_cone(
    liou: &LocalLiouvillian,
    a: &FermionPolynomial,
    probes: &[FermionPolynomial],
    s: f64,
    t: f64,
    params: BoundParameters,
    opts: IntegrationOptions,
    allow_odd: bool,
) -> Result<ConeReport> {
    let graph = liou.graph();
    let a_spin = a.to_spin_operator(graph)?;
    let support_a = a.support();
    if support_a.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut spins = Vec::with_capacity(probes.len());
    let mut distances = Vec::with_capacity(probes.len());
    for probe in probes {
        let spin = if allow_odd {
            probe.to_spin_operator_unchecked(graph)?
        } else {
            probe.to_spin_operator(graph)?
        };
        let support_b = probe.support();
        if support_b.is_empty() {
            return Err(Error::EmptySet);
        }
        distances.push(graph.distance(&support_a, &support_b)?);
        spins.push(spin);
    }
    let (evolved, _) = propagate_observable(liou, &a_spin, s, t, opts)?;
    let dt = t - s;
    let norm_a = a_spin.op_norm();
    let mut points = Vec::with_capacity(probes.len());
    for (spin, &distance) in spins.iter().zip(&distances) {
        let comm = evolved.commutator_with(spin)?;
        let leakage = comm.op_norm();
        let envelope = norm_a * spin.op_norm() * params.cone_envelope(dt, distance);
        points.push(ConePoint { distance, leakage, envelope });
    }
    Ok(ConeReport { elapsed: dt, params, points })
}

/// Distance between the mode supports of two polynomials.
pub fn mode_distance(
    graph: &InteractionGraph,
    a: &FermionPolynomial,
    b: &FermionPolynomial,
) -> Result<Distance> {
    graph.distance(&a.support(), &b.support())
}
