//! Fused application kernels for local Lindblad generators.
//!
//! The generator is compiled at assembly time into a small set of global
//! sparse structures, grouped by identical coefficient schedule so that one
//! scalar evaluation per group covers many terms:
//!
//! - a commutator bundle (the summed embedded Hamiltonians, stored as CSR
//!   for the left product and CSR of the transpose for the right product),
//! - an anticommutator bundle (summed non-diagonal L†L matrices),
//! - a diagonal dissipator bundle (real elementwise factor table covering
//!   diagonal jumps and diagonal L†L parts),
//! - sandwich kernels (2 L† A L, needing one scratch matrix each).
//!
//! Application is a single row-parallel pass over the output matrix after
//! short pre-passes for the sandwich scratches. Every output element is
//! accumulated in a fixed order, so results are identical in parallel and
//! sequential execution.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::InteractionGraph;
use crate::linalg::{dagger, C64};
use crate::par::for_each_row_mut;
use crate::schedule::TimeSchedule;

/// Which side of the propagator duality is being applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Picture {
    /// State picture: -i[H, rho] + sum 2 L rho L† - L†L rho - rho L†L.
    Schrodinger,
    /// Observable picture: +i[H, A] + sum 2 L† A L - L†L A - A L†L.
    Adjoint,
}

/// Global sparse matrix in CSR form with pre-conjugated values.
#[derive(Debug, Clone)]
struct Csr {
    row_ptr: Vec<u32>,
    col: Vec<u32>,
    val: Vec<C64>,
    val_conj: Vec<C64>,
}

impl Csr {
    fn from_triplets(dim: usize, mut triplets: Vec<(u32, u32, C64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(u32, u32, C64)> = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            if let Some(last) = merged.last_mut() {
                if last.0 == r && last.1 == c {
                    last.2 += v;
                    continue;
                }
            }
            merged.push((r, c, v));
        }
        merged.retain(|&(_, _, v)| v.norm_sqr() != 0.0);
        let mut row_ptr = vec![0u32; dim + 1];
        for &(r, _, _) in &merged {
            row_ptr[r as usize + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col = merged.iter().map(|&(_, c, _)| c).collect();
        let val: Vec<C64> = merged.iter().map(|&(_, _, v)| v).collect();
        let val_conj = val.iter().map(|z| z.conj()).collect();
        Self { row_ptr, col, val, val_conj }
    }

    fn transpose(&self, dim: usize) -> Self {
        let mut triplets = Vec::with_capacity(self.val.len());
        for r in 0..dim {
            for i in self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize {
                triplets.push((self.col[i], r as u32, self.val[i]));
            }
        }
        Self::from_triplets(dim, triplets)
    }

    fn row(&self, r: usize, conj: bool) -> impl Iterator<Item = (usize, C64)> + '_ {
        let lo = self.row_ptr[r] as usize;
        let hi = self.row_ptr[r + 1] as usize;
        let vals = if conj { &self.val_conj } else { &self.val };
        self.col[lo..hi]
            .iter()
            .zip(&vals[lo..hi])
            .map(|(&c, &v)| (c as usize, v))
    }
}

/// `out += a * src`, with fast paths for purely real or purely imaginary
/// scalars (the common cases for Hamiltonian and dissipative parts).
#[inline]
fn axpy(out: &mut [C64], src: &[C64], a: C64) {
    if a.im == 0.0 {
        let ar = a.re;
        if ar == 0.0 {
            return;
        }
        for (o, s) in out.iter_mut().zip(src) {
            o.re += ar * s.re;
            o.im += ar * s.im;
        }
    } else if a.re == 0.0 {
        let ai = a.im;
        for (o, s) in out.iter_mut().zip(src) {
            o.re -= ai * s.im;
            o.im += ai * s.re;
        }
    } else {
        for (o, s) in out.iter_mut().zip(src) {
            let v = a * s;
            o.re += v.re;
            o.im += v.im;
        }
    }
}

/// Left-product accumulation: `out_row += a * (M src)_row`, reading the
/// CSR row of M at `r` and whole rows of `src`.
#[inline]
fn csr_left(out: &mut [C64], csr: &Csr, r: usize, conj: bool, src: &[C64], dim: usize, a: C64) {
    for (k, w) in csr.row(r, conj) {
        axpy(out, &src[k * dim..(k + 1) * dim], a * w);
    }
}

/// Right-product accumulation: `out_row += a * (src M)_row`, using the CSR
/// of the transpose of M (each transpose row is one output column).
#[inline]
fn csr_right(out: &mut [C64], csr_t: &Csr, conj: bool, src_row: &[C64], a: C64) {
    for c in 0..out.len() {
        let lo = csr_t.row_ptr[c] as usize;
        let hi = csr_t.row_ptr[c + 1] as usize;
        if lo == hi {
            continue;
        }
        let mut acc = C64::new(0.0, 0.0);
        for (k, w) in csr_t.row(c, conj) {
            acc += src_row[k] * w;
        }
        out[c] += a * acc;
    }
}

/// A bundle of embedded matrices sharing a schedule, applied as a
/// commutator (i c (M A - A M), sign flipped in the state picture) or an
/// anticommutator (-c (M A + A M), identical in both pictures).
#[derive(Debug, Clone)]
struct CsrBundle {
    left: Csr,
    right: Csr,
}

impl CsrBundle {
    fn from_triplets(dim: usize, triplets: Vec<(u32, u32, C64)>) -> Self {
        let left = Csr::from_triplets(dim, triplets);
        let right = left.transpose(dim);
        Self { left, right }
    }
}

/// Elementwise dissipator factors for diagonal jumps and diagonal L†L
/// parts. The factor table is real and identical in both pictures.
#[derive(Debug, Clone)]
enum DiagPart {
    /// Full precomputed factor table, row-major, `dim * dim` entries.
    Table(Vec<f64>),
    /// Per-term virtual evaluation for dimensions where the table would be
    /// too large.
    Virtual(Vec<VirtualDiag>),
}

/// One diagonal contribution evaluated on the fly: a local factor table
/// indexed through a global-index to local-index map.
#[derive(Debug, Clone)]
struct VirtualDiag {
    index_map: Vec<u32>,
    table: Vec<f64>,
    local_dim: usize,
}

/// Sandwich kernel 2 L† A L (observable picture) or 2 L A L† (state
/// picture), built from global CSRs of L and of transpose(L).
#[derive(Debug, Clone)]
struct Sandwich {
    l: Csr,
    lt: Csr,
}

/// All structures sharing one coefficient schedule.
#[derive(Debug)]
struct ScheduleGroup {
    schedule: TimeSchedule,
    commutator: Option<CsrBundle>,
    anticommutator: Option<CsrBundle>,
    diag: Option<DiagPart>,
    sandwiches: Vec<Sandwich>,
    scratch_offset: usize,
}

/// Scratch matrices for sandwich pre-passes; sized once per generator.
#[derive(Debug)]
pub struct Workspace {
    scratch: Vec<Array2<C64>>,
}

/// Compiled generator ready for fused application.
#[derive(Debug)]
pub(crate) struct ApplyEngine {
    dim: usize,
    groups: Vec<ScheduleGroup>,
}

/// Largest dimension for which the diagonal factor table is materialized
/// (8 MB at 2048); beyond it the per-term virtual path is used.
const DIAG_TABLE_CAP: usize = 2048;

/// Index layout of a term support inside the global space.
#[derive(Debug, Clone)]
pub(crate) struct SupportLayout {
    /// Packed local index for each global basis index.
    pub index_map: Vec<u32>,
    /// Global contribution of each packed local index.
    pub sup_table: Vec<usize>,
    /// Global contribution of each packed complement index.
    pub rest_table: Vec<usize>,
    /// Local dimension (product over the support).
    pub local_dim: usize,
}

impl SupportLayout {
    pub(crate) fn new(graph: &InteractionGraph, support: &[usize]) -> Result<Self> {
        let dims = graph.local_dims();
        let mut strides = vec![0usize; dims.len()];
        let mut acc = 1usize;
        for p in (0..dims.len()).rev() {
            strides[p] = acc;
            acc *= dims[p];
        }
        let mut positions = Vec::with_capacity(support.len());
        for &v in support {
            positions.push(graph.position(v)?);
        }
        let places: Vec<(usize, usize)> = positions.iter().map(|&p| (strides[p], dims[p])).collect();
        let local_dim: usize = places.iter().map(|&(_, d)| d).product();

        let compose = |packed: usize, places: &[(usize, usize)]| -> usize {
            let mut rem = packed;
            let mut global = 0;
            for &(stride, dim) in places.iter().rev() {
                global += (rem % dim) * stride;
                rem /= dim;
            }
            global
        };
        let sup_table: Vec<usize> = (0..local_dim).map(|i| compose(i, &places)).collect();

        let rest_places: Vec<(usize, usize)> = (0..dims.len())
            .filter(|p| !positions.contains(p))
            .map(|p| (strides[p], dims[p]))
            .collect();
        let rest_dim: usize = rest_places.iter().map(|&(_, d)| d).product();
        let rest_table: Vec<usize> = (0..rest_dim).map(|i| compose(i, &rest_places)).collect();

        let dim = graph.hilbert_dim();
        let mut index_map = vec![0u32; dim];
        for (li, &sup) in sup_table.iter().enumerate() {
            for &rest in &rest_table {
                index_map[rest + sup] = li as u32;
            }
        }
        Ok(Self { index_map, sup_table, rest_table, local_dim })
    }

    /// Triplets of the identity-padded embedding of a local matrix.
    fn embed_triplets(&self, local: &Array2<C64>, out: &mut Vec<(u32, u32, C64)>) {
        let m = self.local_dim;
        for lr in 0..m {
            for lc in 0..m {
                let v = local[[lr, lc]];
                if v.norm_sqr() == 0.0 {
                    continue;
                }
                for &rest in &self.rest_table {
                    out.push((
                        (rest + self.sup_table[lr]) as u32,
                        (rest + self.sup_table[lc]) as u32,
                        v,
                    ));
                }
            }
        }
    }
}

/// True when `m` is diagonal with purely real entries (within exact zero
/// off-diagonals; generator compilation is structural, not tolerance
/// based).
fn real_diagonal(m: &Array2<C64>) -> Option<Vec<f64>> {
    let n = m.nrows();
    let mut diag = Vec::with_capacity(n);
    for r in 0..n {
        for c in 0..n {
            let v = m[[r, c]];
            if r == c {
                if v.im != 0.0 {
                    return None;
                }
                diag.push(v.re);
            } else if v.norm_sqr() != 0.0 {
                return None;
            }
        }
    }
    Some(diag)
}

/// Raw pieces of one term handed to the engine builder.
pub(crate) struct TermPieces<'a> {
    pub support: &'a [usize],
    pub hamiltonian: Option<&'a Array2<C64>>,
    pub jumps: &'a [Array2<C64>],
    pub schedule: &'a TimeSchedule,
}

impl ApplyEngine {
    pub(crate) fn build(graph: &InteractionGraph, terms: &[TermPieces<'_>]) -> Result<Self> {
        let dim = graph.hilbert_dim();
        struct GroupAcc {
            schedule: TimeSchedule,
            comm: Vec<(u32, u32, C64)>,
            anti: Vec<(u32, u32, C64)>,
            diag_terms: Vec<VirtualDiag>,
            sandwiches: Vec<Sandwich>,
        }
        let mut accs: Vec<GroupAcc> = Vec::new();

        for term in terms {
            let layout = SupportLayout::new(graph, term.support)?;
            let gi = match accs.iter().position(|g| &g.schedule == term.schedule) {
                Some(i) => i,
                None => {
                    accs.push(GroupAcc {
                        schedule: term.schedule.clone(),
                        comm: Vec::new(),
                        anti: Vec::new(),
                        diag_terms: Vec::new(),
                        sandwiches: Vec::new(),
                    });
                    accs.len() - 1
                }
            };
            let acc = &mut accs[gi];

            if let Some(h) = term.hamiltonian {
                layout.embed_triplets(h, &mut acc.comm);
            }
            for l in term.jumps {
                let g = dagger(l).dot(l);
                if let Some(lvec) = real_diagonal(l) {
                    // 2 L A L - L^2 A - A L^2 elementwise: -(l_r - l_c)^2.
                    let m = layout.local_dim;
                    let mut table = vec![0.0; m * m];
                    for r in 0..m {
                        for c in 0..m {
                            let d = lvec[r] - lvec[c];
                            table[r * m + c] = -d * d;
                        }
                    }
                    acc.diag_terms.push(VirtualDiag {
                        index_map: layout.index_map.clone(),
                        table,
                        local_dim: m,
                    });
                    continue;
                }
                // Sandwich part.
                let mut l_trip = Vec::new();
                layout.embed_triplets(l, &mut l_trip);
                let l_csr = Csr::from_triplets(dim, l_trip);
                let lt_csr = l_csr.transpose(dim);
                acc.sandwiches.push(Sandwich { l: l_csr, lt: lt_csr });
                // L†L part: diagonal real folds into the factor table,
                // anything else into the anticommutator bundle.
                if let Some(gvec) = real_diagonal(&g) {
                    let m = layout.local_dim;
                    let mut table = vec![0.0; m * m];
                    for r in 0..m {
                        for c in 0..m {
                            table[r * m + c] = -(gvec[r] + gvec[c]);
                        }
                    }
                    acc.diag_terms.push(VirtualDiag {
                        index_map: layout.index_map.clone(),
                        table,
                        local_dim: m,
                    });
                } else {
                    layout.embed_triplets(&g, &mut acc.anti);
                }
            }
        }

        let mut groups = Vec::with_capacity(accs.len());
        let mut scratch_offset = 0;
        for acc in accs {
            let commutator =
                (!acc.comm.is_empty()).then(|| CsrBundle::from_triplets(dim, acc.comm));
            let anticommutator =
                (!acc.anti.is_empty()).then(|| CsrBundle::from_triplets(dim, acc.anti));
            let diag = if acc.diag_terms.is_empty() {
                None
            } else if dim <= DIAG_TABLE_CAP {
                let mut table = vec![0.0; dim * dim];
                for vd in &acc.diag_terms {
                    for r in 0..dim {
                        let lr = vd.index_map[r] as usize;
                        let trow = &vd.table[lr * vd.local_dim..(lr + 1) * vd.local_dim];
                        let out = &mut table[r * dim..(r + 1) * dim];
                        for (c, o) in out.iter_mut().enumerate() {
                            *o += trow[vd.index_map[c] as usize];
                        }
                    }
                }
                Some(DiagPart::Table(table))
            } else {
                Some(DiagPart::Virtual(acc.diag_terms))
            };
            let offset = scratch_offset;
            scratch_offset += acc.sandwiches.len();
            groups.push(ScheduleGroup {
                schedule: acc.schedule,
                commutator,
                anticommutator,
                diag,
                sandwiches: acc.sandwiches,
                scratch_offset: offset,
            });
        }
        Ok(Self { dim, groups })
    }

    /// Allocates the scratch matrices needed by [`ApplyEngine::apply_into`].
    pub(crate) fn workspace(&self) -> Workspace {
        let count: usize = self.groups.iter().map(|g| g.sandwiches.len()).sum();
        Workspace {
            scratch: (0..count).map(|_| Array2::zeros((self.dim, self.dim))).collect(),
        }
    }

    /// Whether every schedule covers the closed interval [a, b].
    pub(crate) fn covers(&self, a: f64, b: f64) -> bool {
        self.groups.iter().all(|g| g.schedule.covers(a, b))
    }

    /// Evaluates the generator action at time `t` on `src`, writing into
    /// `dst` (overwritten). `src` and `dst` must be distinct. A `hint`
    /// selects the schedule piece when `t` sits exactly on a breakpoint;
    /// see [`TimeSchedule::evaluate_near`].
    pub(crate) fn apply_into(
        &self,
        t: f64,
        hint: Option<f64>,
        src: &Array2<C64>,
        dst: &mut Array2<C64>,
        picture: Picture,
        ws: &mut Workspace,
    ) -> Result<()> {
        let dim = self.dim;
        if src.nrows() != dim || src.ncols() != dim {
            return Err(Error::DimensionMismatch { left: src.nrows(), right: dim });
        }
        let mut coeffs = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            coeffs.push(match hint {
                Some(h) => g.schedule.evaluate_near(h, t)?,
                None => g.schedule.evaluate(t)?,
            });
        }

        // Sandwich pre-passes: scratch = src L (observable picture) or
        // src L† (state picture).
        for (g, group) in self.groups.iter().enumerate() {
            if coeffs[g] == 0.0 {
                continue;
            }
            for (j, sw) in group.sandwiches.iter().enumerate() {
                let scratch = &mut ws.scratch[group.scratch_offset + j];
                let (csr_t, conj) = match picture {
                    Picture::Adjoint => (&sw.lt, false),
                    Picture::Schrodinger => (&sw.l, true),
                };
                let src_slice = src.as_slice().expect("standard layout");
                for_each_row_mut(scratch, |r, out| {
                    out.fill(C64::new(0.0, 0.0));
                    let src_row = &src_slice[r * dim..(r + 1) * dim];
                    csr_right(out, csr_t, conj, src_row, C64::new(1.0, 0.0));
                });
            }
        }

        let src_slice = src.as_slice().expect("standard layout");
        let scratch_slices: Vec<&[C64]> = ws
            .scratch
            .iter()
            .map(|m| m.as_slice().expect("standard layout"))
            .collect();
        let groups = &self.groups;
        let coeffs_ref = &coeffs;

        for_each_row_mut(dst, |r, out| {
            out.fill(C64::new(0.0, 0.0));
            let src_row = &src_slice[r * dim..(r + 1) * dim];
            for (g, group) in groups.iter().enumerate() {
                let c = coeffs_ref[g];
                if c == 0.0 {
                    continue;
                }
                if let Some(h) = &group.commutator {
                    // i c (H A - A H) in the observable picture, sign
                    // flipped in the state picture.
                    let sign = match picture {
                        Picture::Adjoint => 1.0,
                        Picture::Schrodinger => -1.0,
                    };
                    let a = C64::new(0.0, sign * c);
                    csr_left(out, &h.left, r, false, src_slice, dim, a);
                    csr_right(out, &h.right, false, src_row, -a);
                }
                if let Some(gm) = &group.anticommutator {
                    let a = C64::new(-c, 0.0);
                    csr_left(out, &gm.left, r, false, src_slice, dim, a);
                    csr_right(out, &gm.right, false, src_row, a);
                }
                match &group.diag {
                    Some(DiagPart::Table(table)) => {
                        let frow = &table[r * dim..(r + 1) * dim];
                        for (o, (&f, s)) in out.iter_mut().zip(frow.iter().zip(src_row)) {
                            let w = c * f;
                            o.re += w * s.re;
                            o.im += w * s.im;
                        }
                    }
                    Some(DiagPart::Virtual(terms)) => {
                        for vd in terms {
                            let lr = vd.index_map[r] as usize;
                            let trow = &vd.table[lr * vd.local_dim..(lr + 1) * vd.local_dim];
                            for (cc, (o, s)) in out.iter_mut().zip(src_row).enumerate() {
                                let w = c * trow[vd.index_map[cc] as usize];
                                o.re += w * s.re;
                                o.im += w * s.im;
                            }
                        }
                    }
                    None => {}
                }
                for (j, sw) in group.sandwiches.iter().enumerate() {
                    let scratch = scratch_slices[group.scratch_offset + j];
                    // Left factor: L† (rows are conjugated transpose rows)
                    // in the observable picture, L in the state picture.
                    let (csr, conj) = match picture {
                        Picture::Adjoint => (&sw.lt, true),
                        Picture::Schrodinger => (&sw.l, false),
                    };
                    let a = C64::new(2.0 * c, 0.0);
                    for (k, w) in csr.row(r, conj) {
                        axpy(out, &scratch[k * dim..(k + 1) * dim], a * w);
                    }
                }
            }
        });
        Ok(())
    }
}
