//! Ready-made graphs, local operators, model terms, and states.
//!
//! Everything here is a convenience wrapper over the core types: chains
//! and a small irregular hypergraph as interaction graphs, Pauli matrices
//! and their embeddings, standard Hamiltonian and dissipative terms, and
//! product states. Experiments and tests build their systems from these
//! pieces.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{InteractionGraph, LocalDims};
use crate::linalg::{dagger, eigvalsh, hermiticity_deviation, kron, max_abs, C64, C_ONE, C_ZERO};
use crate::liouvillian::{LindbladTerm, LocalLiouvillian};
use crate::operator::{GlobalOperator, StateOperator};
use crate::schedule::TimeSchedule;

/// Pauli X.
pub fn sigma_x() -> Array2<C64> {
    ndarray::array![[C_ZERO, C_ONE], [C_ONE, C_ZERO]]
}

/// Pauli Y.
pub fn sigma_y() -> Array2<C64> {
    ndarray::array![
        [C_ZERO, C64::new(0.0, -1.0)],
        [C64::new(0.0, 1.0), C_ZERO]
    ]
}

/// Pauli Z.
pub fn sigma_z() -> Array2<C64> {
    ndarray::array![[C_ONE, C_ZERO], [C_ZERO, -C_ONE]]
}

/// Raising operator |0><1| in the computational basis.
pub fn sigma_minus() -> Array2<C64> {
    ndarray::array![[C_ZERO, C_ONE], [C_ZERO, C_ZERO]]
}

/// Lowering operator |1><0| in the computational basis.
pub fn sigma_plus() -> Array2<C64> {
    ndarray::array![[C_ZERO, C_ZERO], [C_ONE, C_ZERO]]
}

/// A single Pauli embedded at one vertex of a qubit graph.
pub fn pauli_at(graph: &Arc<InteractionGraph>, axis: char, vertex: usize) -> Result<GlobalOperator> {
    let local = match axis.to_ascii_lowercase() {
        'x' => sigma_x(),
        'y' => sigma_y(),
        'z' => sigma_z(),
        other => {
            return Err(Error::InvalidInput {
                reason: format!("unknown Pauli axis '{other}'"),
            })
        }
    };
    GlobalOperator::embed(graph, &local, &[vertex])
}

/// Nearest-neighbor chain on qubit vertices 1..=n with edges {j, j+1}.
pub fn chain_graph(n: usize) -> Result<Arc<InteractionGraph>> {
    if n == 0 {
        return Err(Error::InvalidInput {
            reason: "chain length must be positive".into(),
        });
    }
    let vertices: Vec<usize> = (1..=n).collect();
    let edges: Vec<BTreeSet<usize>> = (1..n)
        .map(|j| [j, j + 1].into_iter().collect())
        .collect();
    Ok(Arc::new(InteractionGraph::build(
        &vertices,
        &edges,
        &LocalDims::Uniform(2),
    )?))
}

/// A 20-vertex irregular hypergraph with hyperedges of mixed arity, one
/// isolated vertex, and one disconnected component. Useful for exercising
/// metric structure away from regular lattices.
pub fn irregular_hypergraph() -> Result<Arc<InteractionGraph>> {
    let vertices: Vec<usize> = (0..20).collect();
    let edge_list: Vec<Vec<usize>> = vec![
        vec![5, 10],
        vec![6, 9],
        vec![14, 15, 19],
        vec![12, 13, 17],
        vec![1, 4, 5],
        vec![2, 3, 7],
        vec![11, 15],
        vec![4, 8],
        vec![10, 13],
        vec![14, 18],
        vec![8, 12],
        vec![17, 18],
        vec![10, 11],
        vec![16],
    ];
    let edges: Vec<BTreeSet<usize>> = edge_list
        .into_iter()
        .map(|e| e.into_iter().collect())
        .collect();
    Ok(Arc::new(InteractionGraph::build(
        &vertices,
        &edges,
        &LocalDims::Uniform(2),
    )?))
}

/// Heisenberg exchange on an edge: H = J (XX + YY + ZZ).
pub fn heisenberg_edge(j: usize, k: usize, coupling: f64) -> Result<LindbladTerm> {
    let h = (kron(&sigma_x(), &sigma_x())
        + kron(&sigma_y(), &sigma_y())
        + kron(&sigma_z(), &sigma_z()))
    .mapv(|z| z * coupling);
    LindbladTerm::new(vec![j, k], Some(h), vec![], TimeSchedule::constant(1.0))
}

/// Fermionic nearest-neighbor hopping written in spin variables:
/// w (f_j† f_k + f_k† f_j) maps to -w/2 (XX + YY) on adjacent sites.
pub fn hopping_edge(j: usize, k: usize, amplitude: f64) -> Result<LindbladTerm> {
    let h = (kron(&sigma_x(), &sigma_x()) + kron(&sigma_y(), &sigma_y()))
        .mapv(|z| z * (-amplitude / 2.0));
    LindbladTerm::new(vec![j, k], Some(h), vec![], TimeSchedule::constant(1.0))
}

/// Transverse field h X on one site.
pub fn transverse_field_site(j: usize, strength: f64) -> Result<LindbladTerm> {
    let h = sigma_x().mapv(|z| z * strength);
    LindbladTerm::new(vec![j], Some(h), vec![], TimeSchedule::constant(1.0))
}

/// Dephasing with rate gamma: jump operator sqrt(gamma) Z.
pub fn dephasing_site(j: usize, gamma: f64) -> Result<LindbladTerm> {
    if gamma < 0.0 {
        return Err(Error::InvalidInput {
            reason: format!("dephasing rate must be non-negative, got {gamma}"),
        });
    }
    let l = sigma_z().mapv(|z| z * gamma.sqrt());
    LindbladTerm::new(vec![j], None, vec![l], TimeSchedule::constant(1.0))
}

/// Amplitude damping with rate gamma: jump operator sqrt(gamma) |0><1|.
pub fn amplitude_damping_site(j: usize, gamma: f64) -> Result<LindbladTerm> {
    if gamma < 0.0 {
        return Err(Error::InvalidInput {
            reason: format!("damping rate must be non-negative, got {gamma}"),
        });
    }
    let l = sigma_minus().mapv(|z| z * gamma.sqrt());
    LindbladTerm::new(vec![j], None, vec![l], TimeSchedule::constant(1.0))
}

/// Heisenberg chain with uniform exchange J and on-site dephasing gamma.
pub fn heisenberg_dephasing_chain(
    n: usize,
    coupling: f64,
    gamma: f64,
) -> Result<(Arc<InteractionGraph>, LocalLiouvillian)> {
    let graph = chain_graph(n)?;
    let mut terms = Vec::new();
    for j in 1..n {
        terms.push(heisenberg_edge(j, j + 1, coupling)?);
    }
    if gamma > 0.0 {
        for j in 1..=n {
            terms.push(dephasing_site(j, gamma)?);
        }
    }
    let liou = LocalLiouvillian::assemble(&graph, terms)?;
    Ok((graph, liou))
}

/// Free-fermion hopping chain with on-site dephasing, in spin variables.
pub fn hopping_dephasing_chain(
    n: usize,
    amplitude: f64,
    gamma: f64,
) -> Result<(Arc<InteractionGraph>, LocalLiouvillian)> {
    let graph = chain_graph(n)?;
    let mut terms = Vec::new();
    for j in 1..n {
        terms.push(hopping_edge(j, j + 1, amplitude)?);
    }
    if gamma > 0.0 {
        for j in 1..=n {
            terms.push(dephasing_site(j, gamma)?);
        }
    }
    let liou = LocalLiouvillian::assemble(&graph, terms)?;
    Ok((graph, liou))
}

fn validate_density_factor(m: &Array2<C64>, vertex: usize, dim: usize) -> Result<()> {
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::BadDimension { vertex, dim: m.nrows() });
    }
    let scale = max_abs(m).max(1.0);
    let dev = hermiticity_deviation(m);
    if dev > 1e-10 * scale {
        return Err(Error::NotAState {
            reason: format!("factor at vertex {vertex} is not Hermitian (deviation {dev:.3e})"),
        });
    }
    let tr = crate::linalg::trace(m);
    if (tr - C_ONE).norm() > 1e-10 * scale {
        return Err(Error::NotAState {
            reason: format!("factor at vertex {vertex} has trace {tr}"),
        });
    }
    let eigs = eigvalsh(m)?;
    if eigs[0] < -1e-10 {
        return Err(Error::NotAState {
            reason: format!(
                "factor at vertex {vertex} has negative eigenvalue {:.3e}",
                eigs[0]
            ),
        });
    }
    Ok(())
}

/// Product density operator from one factor per vertex, in the graph's
/// vertex order. Each factor is validated on its own, so the global
/// positivity check (exponential in system size) is never needed.
pub fn product_state(
    graph: &Arc<InteractionGraph>,
    factors: &[Array2<C64>],
) -> Result<StateOperator> {
    let vertices = graph.vertices();
    if factors.len() != vertices.len() {
        return Err(Error::InvalidInput {
            reason: format!(
                "expected {} state factors, got {}",
                vertices.len(),
                factors.len()
            ),
        });
    }
    let mut full: Array2<C64> = Array2::eye(1);
    for (&v, f) in vertices.iter().zip(factors) {
        validate_density_factor(f, v, graph.local_dim(v)?)?;
        full = kron(&full, f);
    }
    let op = GlobalOperator::from_matrix(graph, full, None)?;
    Ok(StateOperator::trusted(op))
}

/// Pure product state from one normalized ket per vertex.
pub fn pure_product_state(
    graph: &Arc<InteractionGraph>,
    kets: &[Array1<C64>],
) -> Result<StateOperator> {
    let factors: Vec<Array2<C64>> = kets
        .iter()
        .map(|k| {
            let norm: f64 = k.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::NotAState {
                    reason: "zero ket in product state".into(),
                });
            }
            let mut m = Array2::zeros((k.len(), k.len()));
            for r in 0..k.len() {
                for c in 0..k.len() {
                    m[[r, c]] = k[r] * k[c].conj() / (norm * norm);
                }
            }
            Ok(m)
        })
        .collect::<Result<_>>()?;
    product_state(graph, &factors)
}

/// Basis product state |b_1 b_2 ...> with one digit per vertex in graph
/// order.
pub fn computational_basis_state(
    graph: &Arc<InteractionGraph>,
    digits: &[usize],
) -> Result<StateOperator> {
    let vertices = graph.vertices();
    if digits.len() != vertices.len() {
        return Err(Error::InvalidInput {
            reason: format!("expected {} digits, got {}", vertices.len(), digits.len()),
        });
    }
    let kets: Vec<Array1<C64>> = vertices
        .iter()
        .zip(digits)
        .map(|(&v, &b)| {
            let d = graph.local_dim(v)?;
            if b >= d {
                return Err(Error::IndexOutOfRange { index: b, max: d - 1 });
            }
            let mut k = Array1::zeros(d);
            k[b] = C_ONE;
            Ok(k)
        })
        .collect::<Result<_>>()?;
    pure_product_state(graph, &kets)
}

/// The |+> = (|0> + |1>)/sqrt(2) product state on a qubit graph.
pub fn plus_product_state(graph: &Arc<InteractionGraph>) -> Result<StateOperator> {
    let kets: Vec<Array1<C64>> = graph
        .vertices()
        .iter()
        .map(|&v| {
            let d = graph.local_dim(v)?;
            Ok(Array1::from_elem(d, C64::new(1.0, 0.0)))
        })
        .collect::<Result<_>>()?;
    pure_product_state(graph, &kets)
}

/// Seeded random Hermitian matrix with entries of order one.
pub fn random_hermitian(dim: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a: Array2<C64> = Array2::zeros((dim, dim));
    for v in a.iter_mut() {
        *v = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    }
    let ad = dagger(&a);
    (a + ad).mapv(|z| z * 0.5)
}

/// Seeded random complex matrix with entries of order one.
pub fn random_matrix(dim: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a: Array2<C64> = Array2::zeros((dim, dim));
    for v in a.iter_mut() {
        *v = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
    }
    a
}

/// Seeded random full-rank density operator, G G† normalized to unit
/// trace.
pub fn random_state(graph: &Arc<InteractionGraph>, seed: u64) -> Result<StateOperator> {
    let d = graph.hilbert_dim();
    let g = random_matrix(d, seed);
    let mut rho = g.dot(&dagger(&g));
    let tr = crate::linalg::trace(&rho);
    rho.mapv_inplace(|z| z / tr);
    let op = GlobalOperator::from_matrix(graph, rho, None)?;
    StateOperator::new(op, 1e-9)
}

/// Seeded random generator with one Hamiltonian and one jump operator per
/// hyperedge, all with constant schedules and order-one strength.
pub fn random_liouvillian(graph: &Arc<InteractionGraph>, seed: u64) -> Result<LocalLiouvillian> {
    let mut terms = Vec::new();
    for (i, edge) in graph.hyperedges().iter().enumerate() {
        let support: Vec<usize> = edge.iter().copied().collect();
        let mut m = 1usize;
        for &v in &support {
            m *= graph.local_dim(v)?;
        }
        let h = random_hermitian(m, seed ^ (i as u64).wrapping_mul(0x9e3779b97f4a7c15));
        let l = random_matrix(m, seed ^ (i as u64).wrapping_mul(0xdeadbeefcafef00d))
            .mapv(|z| z * 0.5);
        terms.push(LindbladTerm::new(
            support,
            Some(h),
            vec![l],
            TimeSchedule::constant(1.0),
        )?);
    }
    LocalLiouvillian::assemble(graph, terms)
}

/// Local dimensions of a vertex list as a map, convenient for building
/// sub-graphs.
pub fn dims_of(graph: &InteractionGraph, vertices: &[usize]) -> Result<BTreeMap<usize, usize>> {
    vertices.iter().map(|&v| Ok((v, graph.local_dim(v)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn pauli_algebra_holds() {
        let xy = sigma_x().dot(&sigma_y());
        let expected = sigma_z().mapv(|z| z * C64::new(0.0, 1.0));
        assert!(max_abs(&(xy - expected)) < 1e-15);
        assert!(max_abs(&(sigma_plus().dot(&sigma_minus()) - array![[C_ZERO, C_ZERO], [C_ZERO, C_ONE]])) < 1e-15);
    }

    #[test]
    fn chain_graph_has_expected_shape() {
        let g = chain_graph(5).unwrap();
        assert_eq!(g.vertices(), &[1, 2, 3, 4, 5]);
        assert_eq!(g.hyperedges().len(), 4);
        assert_eq!(g.hilbert_dim(), 32);
        assert!(chain_graph(0).is_err());
    }

    #[test]
    fn benchmark_chain_constants() {
        let (_, liou) = heisenberg_dephasing_chain(10, 1.0, 0.1).unwrap();
        assert_eq!(liou.terms().len(), 19);
        // {j, j+1} intersects both neighboring edges, both endpoint
        // dephasing supports, and itself.
        assert_eq!(liou.branching_number().unwrap(), 5);
        assert_abs_diff_eq!(liou.interaction_strength(0.0, 1.0).unwrap(), 4.0, epsilon = 1e-9);
    }

    #[test]
    fn product_state_validates_factors() {
        let g = chain_graph(2).unwrap();
        let good = array![[C_ONE, C_ZERO], [C_ZERO, C_ZERO]];
        let mixed = array![
            [C64::new(0.5, 0.0), C_ZERO],
            [C_ZERO, C64::new(0.5, 0.0)]
        ];
        let state = product_state(&g, &[good.clone(), mixed]).unwrap();
        assert_abs_diff_eq!(state.operator().trace().re, 1.0, epsilon = 1e-12);

        let traceless = sigma_x();
        assert!(matches!(
            product_state(&g, &[good.clone(), traceless]),
            Err(Error::NotAState { .. })
        ));
        let negative = array![
            [C64::new(1.5, 0.0), C_ZERO],
            [C_ZERO, C64::new(-0.5, 0.0)]
        ];
        assert!(matches!(
            product_state(&g, &[good, negative]),
            Err(Error::NotAState { .. })
        ));
    }

    #[test]
    fn basis_state_expectations() {
        let g = chain_graph(3).unwrap();
        let rho = computational_basis_state(&g, &[0, 1, 0]).unwrap();
        let z2 = pauli_at(&g, 'z', 2).unwrap();
        assert_abs_diff_eq!(rho.expectation(&z2).unwrap(), -1.0, epsilon = 1e-12);
        let z1 = pauli_at(&g, 'z', 1).unwrap();
        assert_abs_diff_eq!(rho.expectation(&z1).unwrap(), 1.0, epsilon = 1e-12);
        assert!(computational_basis_state(&g, &[0, 2, 0]).is_err());
        assert!(computational_basis_state(&g, &[0, 1]).is_err());
    }

    #[test]
    fn plus_state_polarizes_x() {
        let g = chain_graph(2).unwrap();
        let rho = plus_product_state(&g).unwrap();
        let x1 = pauli_at(&g, 'x', 1).unwrap();
        assert_abs_diff_eq!(rho.expectation(&x1).unwrap(), 1.0, epsilon = 1e-12);
        let z1 = pauli_at(&g, 'z', 1).unwrap();
        assert_abs_diff_eq!(rho.expectation(&z1).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn random_state_is_accepted_by_validation() {
        let g = chain_graph(3).unwrap();
        let rho = random_state(&g, 7).unwrap();
        assert_abs_diff_eq!(rho.operator().trace().re, 1.0, epsilon = 1e-10);
        // Same seed reproduces, different seed differs.
        let again = random_state(&g, 7).unwrap();
        assert!(max_abs(&(rho.matrix() - again.matrix())) == 0.0);
        let other = random_state(&g, 8).unwrap();
        assert!(max_abs(&(rho.matrix() - other.matrix())) > 1e-3);
    }

    #[test]
    fn random_liouvillian_covers_every_edge() {
        let g = chain_graph(4).unwrap();
        let liou = random_liouvillian(&g, 3).unwrap();
        assert_eq!(liou.terms().len(), 3);
        assert!(liou.terms().iter().all(|t| t.is_dissipative()));
    }

    #[test]
    fn hopping_term_matches_spin_formula() {
        let hop = hopping_edge(1, 2, 1.0).unwrap();
        let h = hop.hamiltonian().unwrap();
        let expected = (kron(&sigma_x(), &sigma_x()) + kron(&sigma_y(), &sigma_y()))
            .mapv(|z| z * (-0.5));
        assert!(max_abs(&(h - &expected)) < 1e-15);
        let eigs = eigvalsh(h).unwrap();
        assert_abs_diff_eq!(eigs[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eigs[3], 1.0, epsilon = 1e-12);
    }
}
