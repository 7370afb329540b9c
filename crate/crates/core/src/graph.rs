//! Interaction hypergraphs and the hyperedge path metric.
//!
//! A system is a finite vertex set with a local Hilbert-space dimension per
//! vertex and a collection of hyperedges (the supports on which interaction
//! terms may act). The distance between two vertex sets X and Y is 0 when
//! they intersect and otherwise the length of the shortest chain of
//! hyperedges e_1, .., e_k with e_1 meeting X, e_k meeting Y, and
//! consecutive edges sharing a vertex. Sets not joined by any chain are at
//! infinite distance.
//!
//! Spheres S_X(n) collect the hyperedges at distance exactly n from a
//! hyperedge X, and the growth of |S_X(n)| against n^(mu-1) defines the
//! spatial dimension constant used by quasi-locality envelopes.

use std::collections::{BTreeSet, HashMap, VecDeque};

use crate::error::{Error, Result};

/// Local dimension declaration for [`InteractionGraph::build`].
#[derive(Debug, Clone)]
pub enum LocalDims {
    /// Every vertex carries the same local dimension.
    Uniform(usize),
    /// Explicit dimension per vertex id; every vertex must appear.
    PerVertex(std::collections::BTreeMap<usize, usize>),
}

/// Distance in the hyperedge path metric. `Finite(0)` means the sets
/// intersect; `Infinite` means no hyperedge chain joins them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Distance {
    Finite(usize),
    Infinite,
}

impl Distance {
    /// The distance as a float, with `Infinite` mapped to `f64::INFINITY`.
    pub fn as_f64(&self) -> f64 {
        match self {
            Distance::Finite(n) => *n as f64,
            Distance::Infinite => f64::INFINITY,
        }
    }

    /// True for `Finite`.
    pub fn is_finite(&self) -> bool {
        matches!(self, Distance::Finite(_))
    }
}

/// A vertex set with local dimensions and interaction hyperedges.
///
/// Vertices keep their declared order; that order fixes the tensor-factor
/// layout of every operator built over the graph (first declared vertex is
/// the most significant factor). Duplicate hyperedges are collapsed.
#[derive(Debug, Clone)]
pub struct InteractionGraph {
    vertices: Vec<usize>,
    position: HashMap<usize, usize>,
    local_dims: Vec<usize>,
    hyperedges: Vec<BTreeSet<usize>>,
    incident: Vec<Vec<usize>>,
    edge_adjacency: Vec<Vec<usize>>,
}

impl InteractionGraph {
    /// Validates and builds a graph.
    ///
    /// Fails with [`Error::EmptyEdge`] for an empty hyperedge,
    /// [`Error::UnknownVertex`] when an edge or the dimension map mentions a
    /// vertex not in `vertices`, and [`Error::BadDimension`] for a local
    /// dimension below 2.
    pub fn build(
        vertices: &[usize],
        hyperedges: &[BTreeSet<usize>],
        dims: &LocalDims,
    ) -> Result<Self> {
        let mut position = HashMap::new();
        let mut ordered = Vec::new();
        for &v in vertices {
            if position.insert(v, ordered.len()).is_none() {
                ordered.push(v);
            }
        }

        let mut local_dims = Vec::with_capacity(ordered.len());
        match dims {
            LocalDims::Uniform(d) => {
                if *d < 2 {
                    return Err(Error::BadDimension {
                        vertex: *ordered.first().unwrap_or(&0),
                        dim: *d,
                    });
                }
                local_dims.resize(ordered.len(), *d);
            }
            LocalDims::PerVertex(map) => {
                for &v in map.keys() {
                    if !position.contains_key(&v) {
                        return Err(Error::UnknownVertex { vertex: v });
                    }
                }
                for &v in &ordered {
                    let d = *map.get(&v).ok_or(Error::UnknownVertex { vertex: v })?;
                    if d < 2 {
                        return Err(Error::BadDimension { vertex: v, dim: d });
                    }
                    local_dims.push(d);
                }
            }
        }

        let mut edges: Vec<BTreeSet<usize>> = Vec::new();
        for (index, edge) in hyperedges.iter().enumerate() {
            if edge.is_empty() {
                return Err(Error::EmptyEdge { index });
            }
            for &v in edge {
                if !position.contains_key(&v) {
                    return Err(Error::UnknownVertex { vertex: v });
                }
            }
            if !edges.contains(edge) {
                edges.push(edge.clone());
            }
        }

        let mut incident = vec![Vec::new(); ordered.len()];
        for (e, edge) in edges.iter().enumerate() {
            for &v in edge {
                incident[position[&v]].push(e);
            }
        }

        let mut edge_adjacency = vec![Vec::new(); edges.len()];
        for (e, edge) in edges.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for &v in edge {
                for &f in &incident[position[&v]] {
                    if f != e {
                        seen.insert(f);
                    }
                }
            }
            edge_adjacency[e] = seen.into_iter().collect();
        }

        Ok(Self { vertices: ordered, position, local_dims, hyperedges: edges, incident, edge_adjacency })
    }

    /// Vertices in declared order.
    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    /// Tensor-factor position of a vertex.
    pub fn position(&self, vertex: usize) -> Result<usize> {
        self.position.get(&vertex).copied().ok_or(Error::UnknownVertex { vertex })
    }

    /// Local dimension of a vertex.
    pub fn local_dim(&self, vertex: usize) -> Result<usize> {
        Ok(self.local_dims[self.position(vertex)?])
    }

    /// Local dimensions in declared vertex order.
    pub fn local_dims(&self) -> &[usize] {
        &self.local_dims
    }

    /// Total Hilbert-space dimension (product of local dimensions).
    pub fn hilbert_dim(&self) -> usize {
        self.local_dims.iter().product()
    }

    /// Deduplicated hyperedges in declared order.
    pub fn hyperedges(&self) -> &[BTreeSet<usize>] {
        &self.hyperedges
    }

    /// Whether `set` is one of the hyperedges.
    pub fn contains_edge(&self, set: &BTreeSet<usize>) -> bool {
        self.hyperedges.iter().any(|e| e == set)
    }

    fn check_vertex_set(&self, x: &BTreeSet<usize>) -> Result<()> {
        if x.is_empty() {
            return Err(Error::EmptySet);
        }
        for &v in x {
            if !self.position.contains_key(&v) {
                return Err(Error::UnknownVertex { vertex: v });
            }
        }
        Ok(())
    }

    /// Indices of hyperedges intersecting `x`.
    fn edges_meeting(&self, x: &BTreeSet<usize>) -> Vec<usize> {
        let mut seen = BTreeSet::new();
        for &v in x {
            for &e in &self.incident[self.position[&v]] {
                seen.insert(e);
            }
        }
        seen.into_iter().collect()
    }

    /// Breadth-first levels in the edge-intersection graph from a seed set
    /// of edge indices. Seeds are level 0; unreachable edges are `None`.
    fn bfs_edge_levels(&self, seeds: &[usize]) -> Vec<Option<usize>> {
        let mut level = vec![None; self.hyperedges.len()];
        let mut queue = VecDeque::new();
        for &s in seeds {
            if level[s].is_none() {
                level[s] = Some(0);
                queue.push_back(s);
            }
        }
        while let Some(e) = queue.pop_front() {
            let next = level[e].unwrap() + 1;
            for &f in &self.edge_adjacency[e] {
                if level[f].is_none() {
                    level[f] = Some(next);
                    queue.push_back(f);
                }
            }
        }
        level
    }

    /// Distance between two non-empty vertex sets in the hyperedge path
    /// metric.
    pub fn distance(&self, x: &BTreeSet<usize>, y: &BTreeSet<usize>) -> Result<Distance> {
        self.check_vertex_set(x)?;
        self.check_vertex_set(y)?;
        if x.intersection(y).next().is_some() {
            return Ok(Distance::Finite(0));
        }
        let seeds = self.edges_meeting(x);
        if seeds.is_empty() {
            return Ok(Distance::Infinite);
        }
        let levels = self.bfs_edge_levels(&seeds);
        let mut best: Option<usize> = None;
        for &e in &self.edges_meeting(y) {
            if let Some(l) = levels[e] {
                best = Some(best.map_or(l, |b| b.min(l)));
            }
        }
        Ok(match best {
            Some(l) => Distance::Finite(l + 1),
            None => Distance::Infinite,
        })
    }

    /// Hyperedges at distance exactly `n` from the hyperedge `x`, in a
    /// deterministic order (sorted by vertex content).
    ///
    /// Fails with [`Error::NotAnEdge`] when `x` is not a hyperedge of the
    /// graph.
    pub fn sphere(&self, x: &BTreeSet<usize>, n: usize) -> Result<Vec<BTreeSet<usize>>> {
        self.check_vertex_set(x)?;
        if !self.contains_edge(x) {
            return Err(Error::NotAnEdge { set: x.iter().copied().collect() });
        }
        let seeds = self.edges_meeting(x);
        let levels = self.bfs_edge_levels(&seeds);
        let mut out: Vec<BTreeSet<usize>> = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(n))
            .map(|(e, _)| self.hyperedges[e].clone())
            .collect();
        out.sort();
        Ok(out)
    }

    /// The branching number Z: the largest count of hyperedges intersecting
    /// a single hyperedge, counting the edge itself.
    pub fn max_neighbors(&self) -> Result<usize> {
        if self.hyperedges.is_empty() {
            return Err(Error::NoEdges);
        }
        Ok(self
            .edge_adjacency
            .iter()
            .map(|adj| adj.len() + 1)
            .max()
            .unwrap())
    }

    fn require_edge_connected(&self) -> Result<()> {
        if self.hyperedges.is_empty() {
            return Err(Error::NoEdges);
        }
        let levels = self.bfs_edge_levels(&[0]);
        if levels.iter().any(|l| l.is_none()) {
            return Err(Error::Disconnected);
        }
        Ok(())
    }

    /// Largest finite hyperedge distance between edges of a connected graph.
    pub fn edge_diameter(&self) -> Result<usize> {
        self.require_edge_connected()?;
        let mut diam = 0;
        for e in 0..self.hyperedges.len() {
            let levels = self.bfs_edge_levels(&[e]);
            for l in levels.iter().flatten() {
                diam = diam.max(*l);
            }
        }
        Ok(diam)
    }

    /// The smallest M with |S_X(n)| <= M n^(mu-1) over all hyperedges X and
    /// all n from 1 to the edge diameter. Returns 0 when the diameter is 0
    /// (no sphere is non-empty, so any M works).
    ///
    /// Requires mu >= 1 and an edge-connected graph.
    pub fn spatial_dimension_constant(&self, mu: usize) -> Result<f64> {
        if mu < 1 {
            return Err(Error::InvalidInput { reason: "mu must be at least 1".into() });
        }
        self.require_edge_connected()?;
        let diam = self.edge_diameter()?;
        let mut m: f64 = 0.0;
        for e in 0..self.hyperedges.len() {
            let levels = self.bfs_edge_levels(&[e]);
            let mut counts = vec![0usize; diam + 1];
            for l in levels.iter().flatten() {
                counts[*l] += 1;
            }
            for (n, &count) in counts.iter().enumerate().skip(1) {
                let ratio = count as f64 / (n as f64).powi(mu as i32 - 1);
                m = m.max(ratio);
            }
        }
        Ok(m)
    }

    /// Heuristic (mu, M) estimate: the smallest mu in 1..=4 whose maximal
    /// sphere-growth ratio is already attained at small n, so that the
    /// power law and not the constant absorbs the growth.
    pub fn estimate_spatial_dimension(&self) -> Result<(usize, f64)> {
        self.require_edge_connected()?;
        let diam = self.edge_diameter()?;
        if diam == 0 {
            return Ok((1, 0.0));
        }
        let cutoff = 2.max(diam / 3);
        for mu in 1..=4usize {
            let m = self.spatial_dimension_constant(mu)?;
            let mut attained_at = diam;
            'outer: for n in 1..=diam {
                for e in 0..self.hyperedges.len() {
                    let levels = self.bfs_edge_levels(&[e]);
                    let count = levels.iter().flatten().filter(|l| **l == n).count();
                    let ratio = count as f64 / (n as f64).powi(mu as i32 - 1);
                    if ratio >= m * (1.0 - 1e-9) {
                        attained_at = n;
                        break 'outer;
                    }
                }
            }
            if attained_at <= cutoff || mu == 4 {
                return Ok((mu, m));
            }
        }
        unreachable!("loop returns at mu = 4");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn set(vs: &[usize]) -> BTreeSet<usize> {
        vs.iter().copied().collect()
    }

    /// Chain of n qubit vertices 1..=n with nearest-neighbour edges.
    fn chain(n: usize) -> InteractionGraph {
        let vertices: Vec<usize> = (1..=n).collect();
        let edges: Vec<BTreeSet<usize>> = (1..n).map(|j| set(&[j, j + 1])).collect();
        InteractionGraph::build(&vertices, &edges, &LocalDims::Uniform(2)).unwrap()
    }

    /// Irregular 20-vertex hypergraph with mixed edge sizes, an isolated
    /// vertex (0), and a disconnected singleton edge ({16}).
    fn irregular() -> InteractionGraph {
        let vertices: Vec<usize> = (0..20).collect();
        let edges = vec![
            set(&[5, 10]),
            set(&[6, 9]),
            set(&[14, 15, 19]),
            set(&[12, 13, 17]),
            set(&[1, 4, 5]),
            set(&[2, 3, 7]),
            set(&[11, 15]),
            set(&[4, 8]),
            set(&[10, 13]),
            set(&[14, 18]),
            set(&[8, 12]),
            set(&[17, 18]),
            set(&[10, 11]),
            set(&[16]),
        ];
        InteractionGraph::build(&vertices, &edges, &LocalDims::Uniform(2)).unwrap()
    }

    #[test]
    fn chain_distance_is_vertex_separation() {
        let g = chain(12);
        for j in 1..=12 {
            for k in 1..=12 {
                let d = g.distance(&set(&[j]), &set(&[k])).unwrap();
                let expected = (j as i64 - k as i64).unsigned_abs() as usize;
                assert_eq!(d, Distance::Finite(expected), "d({j},{k})");
            }
        }
    }

    #[test]
    fn intersecting_sets_are_at_distance_zero() {
        let g = chain(6);
        assert_eq!(g.distance(&set(&[2, 3]), &set(&[3, 5])).unwrap(), Distance::Finite(0));
    }

    #[test]
    fn chain_sphere_matches_hand_count() {
        let g = chain(12);
        let s2 = g.sphere(&set(&[5, 6]), 2).unwrap();
        assert_eq!(s2, vec![set(&[2, 3]), set(&[8, 9])]);
        let s0 = g.sphere(&set(&[5, 6]), 0).unwrap();
        assert_eq!(s0, vec![set(&[4, 5]), set(&[5, 6]), set(&[6, 7])]);
        let far = g.sphere(&set(&[5, 6]), 40).unwrap();
        assert!(far.is_empty());
    }

    #[test]
    fn sphere_requires_a_hyperedge() {
        let g = chain(6);
        assert!(matches!(
            g.sphere(&set(&[1, 3]), 1),
            Err(Error::NotAnEdge { .. })
        ));
    }

    #[test]
    fn chain_branching_and_dimension_constant() {
        let g = chain(12);
        assert_eq!(g.max_neighbors().unwrap(), 3);
        assert_eq!(g.spatial_dimension_constant(1).unwrap(), 2.0);
        assert_eq!(g.edge_diameter().unwrap(), 10);
        let (mu, m) = g.estimate_spatial_dimension().unwrap();
        assert_eq!(mu, 1);
        assert_eq!(m, 2.0);
    }

    #[test]
    fn irregular_hypergraph_metrics() {
        let g = irregular();
        assert_eq!(g.max_neighbors().unwrap(), 4);
        // {12,13,17} reaches {5,10} through the single edge {10,13}.
        assert_eq!(
            g.distance(&set(&[12, 13, 17]), &set(&[5, 10])).unwrap(),
            Distance::Finite(1)
        );
        // Shortest chain from 1 to 18 runs through five edges.
        assert_eq!(g.distance(&set(&[1]), &set(&[18])).unwrap(), Distance::Finite(5));
        // Vertex 0 sits in no edge, {16} is a disconnected singleton edge.
        assert_eq!(g.distance(&set(&[0]), &set(&[5])).unwrap(), Distance::Infinite);
        assert_eq!(g.distance(&set(&[16]), &set(&[10])).unwrap(), Distance::Infinite);
        assert!(matches!(g.spatial_dimension_constant(1), Err(Error::Disconnected)));
    }

    #[test]
    fn builder_rejects_bad_input() {
        let vs = [1usize, 2, 3];
        assert!(matches!(
            InteractionGraph::build(&vs, &[BTreeSet::new()], &LocalDims::Uniform(2)),
            Err(Error::EmptyEdge { index: 0 })
        ));
        assert!(matches!(
            InteractionGraph::build(&vs, &[set(&[1, 9])], &LocalDims::Uniform(2)),
            Err(Error::UnknownVertex { vertex: 9 })
        ));
        assert!(matches!(
            InteractionGraph::build(&vs, &[set(&[1, 2])], &LocalDims::Uniform(1)),
            Err(Error::BadDimension { dim: 1, .. })
        ));
        let mut dims = BTreeMap::new();
        dims.insert(1, 2);
        dims.insert(2, 3);
        assert!(matches!(
            InteractionGraph::build(&vs, &[set(&[1, 2])], &LocalDims::PerVertex(dims)),
            Err(Error::UnknownVertex { vertex: 3 })
        ));
    }

    #[test]
    fn duplicate_edges_collapse() {
        let vs = [1usize, 2, 3];
        let edges = [set(&[1, 2]), set(&[1, 2]), set(&[2, 3])];
        let g = InteractionGraph::build(&vs, &edges, &LocalDims::Uniform(2)).unwrap();
        assert_eq!(g.hyperedges().len(), 2);
    }

    #[test]
    fn empty_set_and_no_edges_are_rejected() {
        let g = chain(4);
        assert!(matches!(g.distance(&BTreeSet::new(), &set(&[1])), Err(Error::EmptySet)));
        let bare = InteractionGraph::build(&[1, 2], &[], &LocalDims::Uniform(2)).unwrap();
        assert!(matches!(bare.max_neighbors(), Err(Error::NoEdges)));
        assert_eq!(bare.distance(&set(&[1]), &set(&[2])).unwrap(), Distance::Infinite);
    }

    #[test]
    fn mixed_local_dims_round_trip() {
        let mut dims = BTreeMap::new();
        dims.insert(7, 2);
        dims.insert(8, 3);
        let g = InteractionGraph::build(&[7, 8], &[set(&[7, 8])], &LocalDims::PerVertex(dims))
            .unwrap();
        assert_eq!(g.local_dim(7).unwrap(), 2);
        assert_eq!(g.local_dim(8).unwrap(), 3);
        assert_eq!(g.hilbert_dim(), 6);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_hypergraph() -> impl Strategy<Value = (usize, Vec<BTreeSet<usize>>)> {
            (2usize..=8).prop_flat_map(|n| {
                let edge = proptest::collection::btree_set(0..n, 1..=3.min(n));
                (Just(n), proptest::collection::vec(edge, 1..=10))
            })
        }

        /// Hop distances between single vertices via Floyd-Warshall on the
        /// share-an-edge adjacency, as an independent witness.
        fn floyd_warshall(n: usize, edges: &[BTreeSet<usize>]) -> Vec<Vec<Option<usize>>> {
            let mut d = vec![vec![None; n]; n];
            for (u, row) in d.iter_mut().enumerate() {
                row[u] = Some(0);
            }
            for e in edges {
                for &u in e {
                    for &v in e {
                        if u != v {
                            d[u][v] = Some(1);
                        }
                    }
                }
            }
            for k in 0..n {
                for i in 0..n {
                    for j in 0..n {
                        if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                            if d[i][j].map_or(true, |c| a + b < c) {
                                d[i][j] = Some(a + b);
                            }
                        }
                    }
                }
            }
            d
        }

        proptest! {
            #[test]
            fn singleton_distance_matches_floyd_warshall((n, edges) in arb_hypergraph()) {
                let vertices: Vec<usize> = (0..n).collect();
                let g = InteractionGraph::build(&vertices, &edges, &LocalDims::Uniform(2)).unwrap();
                let witness = floyd_warshall(n, &edges);
                for u in 0..n {
                    for v in 0..n {
                        let d = g.distance(&set(&[u]), &set(&[v])).unwrap();
                        let expected = match witness[u][v] {
                            Some(k) => Distance::Finite(k),
                            None => Distance::Infinite,
                        };
                        prop_assert_eq!(d, expected);
                    }
                }
            }

            #[test]
            fn distance_is_symmetric((n, edges) in arb_hypergraph()) {
                let vertices: Vec<usize> = (0..n).collect();
                let g = InteractionGraph::build(&vertices, &edges, &LocalDims::Uniform(2)).unwrap();
                for u in 0..n {
                    for v in 0..n {
                        prop_assert_eq!(
                            g.distance(&set(&[u]), &set(&[v])).unwrap(),
                            g.distance(&set(&[v]), &set(&[u])).unwrap()
                        );
                    }
                }
            }

            #[test]
            fn enlarging_a_set_never_increases_distance((n, edges) in arb_hypergraph()) {
                let vertices: Vec<usize> = (0..n).collect();
                let g = InteractionGraph::build(&vertices, &edges, &LocalDims::Uniform(2)).unwrap();
                let x = set(&[0]);
                let bigger = set(&[0, n - 1]);
                for v in 0..n {
                    let y = set(&[v]);
                    prop_assert!(g.distance(&bigger, &y).unwrap() <= g.distance(&x, &y).unwrap());
                }
            }

            #[test]
            fn spheres_partition_reachable_edges((n, edges) in arb_hypergraph()) {
                let vertices: Vec<usize> = (0..n).collect();
                let g = InteractionGraph::build(&vertices, &edges, &LocalDims::Uniform(2)).unwrap();
                let x = g.hyperedges()[0].clone();
                let mut collected = Vec::new();
                for r in 0..=g.hyperedges().len() {
                    collected.extend(g.sphere(&x, r).unwrap());
                }
                collected.sort();
                let mut reachable: Vec<BTreeSet<usize>> = g
                    .hyperedges()
                    .iter()
                    .filter(|e| g.distance(&x, e).unwrap() != Distance::Infinite)
                    .cloned()
                    .collect();
                reachable.sort();
                prop_assert_eq!(collected, reachable);
            }
        }
    }
}
