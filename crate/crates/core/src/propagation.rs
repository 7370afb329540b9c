//! Numerical propagation of states and observables.
//!
//! The generator is piecewise smooth in time, so integration proceeds
//! window by window between schedule breakpoints with a classical
//! fourth-order Runge-Kutta scheme. Step counts are verified inside each
//! window by Richardson pairing: the window is solved with n/2 and with n
//! steps, the Frobenius distance between the results (divided by 15, the
//! fourth-order extrapolation factor) estimates the error of the finer
//! run, and the step count doubles until the estimate fits the window's
//! share of the error budget. The already-computed fine solution becomes
//! the coarse half of the next pair, so a failed level costs nothing
//! extra.
//!
//! States evolve forward: d rho / dt = L_t(rho). Observables evolve
//! through the substitution sigma = t - u: with B(0) = A,
//! dB/dsigma = +L*_{t-sigma}(B), the value B(t - s) is the Heisenberg
//! observable whose expectation in the time-s state equals the
//! expectation of A in the time-t state.
//!
//! Error bookkeeping is in the Frobenius norm: the budget for [s, t] is
//! tolerance times (t - s) times the Frobenius norm of the initial
//! condition, distributed over windows proportionally to their length.

use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::InteractionGraph;
use crate::kernel::{Picture, Workspace};
use crate::linalg::{self, dagger, eigvalsh, frobenius_norm, vectorize, C64};
use crate::liouvillian::LocalLiouvillian;
use crate::operator::{GlobalOperator, StateOperator};
use crate::par;

/// Largest Hilbert space dimension for which dense superoperator matrices
/// (dimension squared on a side) are built.
pub const SUPEROP_DIM_CAP: usize = 64;

/// Controls for the adaptive integrator.
#[derive(Debug, Clone, Copy)]
pub struct IntegrationOptions {
    /// Relative accuracy per unit time, measured in the Frobenius norm of
    /// the initial condition.
    pub tolerance: f64,
    /// How many times a window's step count may double before giving up.
    pub max_doublings: u32,
    /// Lower bound on steps per window, independent of window length.
    pub min_steps: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_doublings: 16, min_steps: 4 }
    }
}

impl IntegrationOptions {
    /// Same options with a different tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }
}

/// What the integrator actually did.
#[derive(Debug, Clone, Copy, Default)]
pub struct PropagationReport {
    /// Breakpoint windows traversed.
    pub windows: usize,
    /// Accepted fine steps, summed over windows.
    pub steps: usize,
    /// Accumulated Richardson error estimate (Frobenius norm).
    pub error_estimate: f64,
}

impl PropagationReport {
    fn absorb(&mut self, other: PropagationReport) {
        self.windows += other.windows;
        self.steps += other.steps;
        self.error_estimate += other.error_estimate;
    }
}

/// dst = y + c k, row-parallel.
fn set_axpy(dst: &mut Array2<C64>, y: &Array2<C64>, c: f64, k: &Array2<C64>) {
    let n = dst.ncols();
    let ys = y.as_slice().expect("contiguous");
    let ks = k.as_slice().expect("contiguous");
    par::for_each_row_mut(dst, |r, row| {
        let yr = &ys[r * n..(r + 1) * n];
        let kr = &ks[r * n..(r + 1) * n];
        for i in 0..n {
            row[i] = yr[i] + kr[i] * c;
        }
    });
}

/// y += h/6 (k1 + 2 k2 + 2 k3 + k4), row-parallel.
fn rk4_combine(
    y: &mut Array2<C64>,
    h: f64,
    k1: &Array2<C64>,
    k2: &Array2<C64>,
    k3: &Array2<C64>,
    k4: &Array2<C64>,
) {
    let n = y.ncols();
    let s1 = k1.as_slice().expect("contiguous");
    let s2 = k2.as_slice().expect("contiguous");
    let s3 = k3.as_slice().expect("contiguous");
    let s4 = k4.as_slice().expect("contiguous");
    let w = h / 6.0;
    par::for_each_row_mut(y, |r, row| {
        let o = r * n;
        for i in 0..n {
            let sum = s1[o + i] + (s2[o + i] + s3[o + i]) * 2.0 + s4[o + i];
            row[i] += sum * w;
        }
    });
}

fn frobenius_distance(a: &Array2<C64>, b: &Array2<C64>) -> f64 {
    let bs = b.as_slice().expect("contiguous");
    a.as_slice()
        .expect("contiguous")
        .iter()
        .zip(bs)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// One linear ODE y' = K(u) y on a fixed set of breakpoint windows, with
/// reusable stage buffers.
struct Integrator<'a> {
    liou: &'a LocalLiouvillian,
    picture: Picture,
    /// Physical time of integration variable u is origin + sign u.
    origin: f64,
    sign: f64,
    /// Windows in the integration variable, ascending and contiguous.
    windows: Vec<(f64, f64)>,
    total_span: f64,
    rate: f64,
    opts: IntegrationOptions,
    k1: Array2<C64>,
    k2: Array2<C64>,
    k3: Array2<C64>,
    k4: Array2<C64>,
    stage: Array2<C64>,
    coarse: Array2<C64>,
    start: Array2<C64>,
    ws: Workspace,
}

impl<'a> Integrator<'a> {
    /// Prepares windows for physical interval [s, t]. `backward` selects
    /// the observable substitution u = sigma, physical time t - sigma.
    fn new(
        liou: &'a LocalLiouvillian,
        picture: Picture,
        s: f64,
        t: f64,
        backward: bool,
        opts: IntegrationOptions,
    ) -> Result<Self> {
        if !(s.is_finite() && t.is_finite()) || t < s {
            return Err(Error::BadInterval { s, t });
        }
        if !liou.engine().covers(s, t) {
            return Err(Error::TimeOutsideSchedule { t });
        }
        let span = t - s;
        let mut cuts: Vec<f64> = liou
            .breakpoints()
            .into_iter()
            .filter(|&p| p > s && p < t)
            .map(|p| if backward { t - p } else { p })
            .collect();
        cuts.sort_by(f64::total_cmp);
        let (lo, hi) = if backward { (0.0, span) } else { (s, t) };
        let mut windows = Vec::with_capacity(cuts.len() + 1);
        let mut prev = lo;
        for c in cuts {
            if c > prev {
                windows.push((prev, c));
                prev = c;
            }
        }
        if hi > prev || windows.is_empty() {
            windows.push((prev, hi));
        }
        let rate = liou.strength_sum(s, t)?;
        let d = liou.graph().hilbert_dim();
        let zeros = || Array2::zeros((d, d));
        Ok(Self {
            liou,
            picture,
            origin: if backward { t } else { 0.0 },
            sign: if backward { -1.0 } else { 1.0 },
            windows,
            total_span: span,
            rate,
            opts,
            k1: zeros(),
            k2: zeros(),
            k3: zeros(),
            k4: zeros(),
            stage: zeros(),
            coarse: zeros(),
            start: zeros(),
            ws: liou.workspace(),
        })
    }

    fn rhs(&mut self, u: f64, hint: f64, which: u8) -> Result<()> {
        let t = self.origin + self.sign * u;
        let h = self.origin + self.sign * hint;
        let (src, dst) = match which {
            1 => (&self.stage, &mut self.k1),
            2 => (&self.stage, &mut self.k2),
            3 => (&self.stage, &mut self.k3),
            _ => (&self.stage, &mut self.k4),
        };
        self.liou.apply_matrix(t, Some(h), src, dst, self.picture, &mut self.ws)
    }

    /// Fixed-step RK4 across one window, y updated in place. In both
    /// directions the equation in the integration variable has a plus
    /// sign; the substitution only remaps the physical time argument.
    fn run_fixed(&mut self, y: &mut Array2<C64>, u0: f64, u1: f64, n: usize) -> Result<()> {
        let hint = 0.5 * (u0 + u1);
        let h = (u1 - u0) / n as f64;
        for i in 0..n {
            let u = u0 + h * i as f64;
            self.stage.assign(y);
            self.rhs(u, hint, 1)?;
            set_axpy(&mut self.stage, y, h / 2.0, &self.k1);
            self.rhs(u + h / 2.0, hint, 2)?;
            set_axpy(&mut self.stage, y, h / 2.0, &self.k2);
            self.rhs(u + h / 2.0, hint, 3)?;
            set_axpy(&mut self.stage, y, h, &self.k3);
            self.rhs(u + h, hint, 4)?;
            rk4_combine(y, h, &self.k1, &self.k2, &self.k3, &self.k4);
        }
        Ok(())
    }

    /// Solves the whole interval, y updated in place.
    fn solve(&mut self, y: &mut Array2<C64>) -> Result<PropagationReport> {
        let mut report = PropagationReport::default();
        let y_scale = frobenius_norm(y);
        if y_scale == 0.0 || self.total_span == 0.0 {
            report.windows = if self.total_span == 0.0 { 0 } else { self.windows.len() };
            return Ok(report);
        }
        let budget = self.opts.tolerance * self.total_span * y_scale;
        let windows = self.windows.clone();
        for &(u0, u1) in &windows {
            let delta = u1 - u0;
            let eps = budget * (delta / self.total_span);
            // Start from a stability-motivated step count; accuracy is
            // enforced by the pairing below.
            let mut n = ((delta * self.rate / 1.5).ceil() as usize)
                .max(self.opts.min_steps)
                .max(2);
            if n % 2 == 1 {
                n += 1;
            }
            self.start.assign(y);
            self.coarse.assign(y);
            self.run_fixed_into_coarse(u0, u1, n / 2)?;
            self.run_fixed(y, u0, u1, n)?;
            let mut accepted = false;
            for _ in 0..=self.opts.max_doublings {
                let err = frobenius_distance(&self.coarse, y) / 15.0;
                if err <= eps {
                    report.steps += n;
                    report.error_estimate += err;
                    accepted = true;
                    break;
                }
                n *= 2;
                // The fine run becomes the next coarse run.
                self.coarse.assign(y);
                y.assign(&self.start);
                self.run_fixed(y, u0, u1, n)?;
            }
            if !accepted {
                return Err(Error::ToleranceNotMet { h: delta / n as f64 });
            }
            report.windows += 1;
        }
        Ok(report)
    }

    /// run_fixed writing into the internal coarse buffer.
    fn run_fixed_into_coarse(&mut self, u0: f64, u1: f64, n: usize) -> Result<()> {
        let mut c = std::mem::take(&mut self.coarse);
        let r = self.run_fixed(&mut c, u0, u1, n);
        self.coarse = c;
        r
    }
}

/// Evolves a state forward from time `s` to time `t`. The result is a
/// density operator up to the integration tolerance; it is returned
/// without re-validation.
pub fn propagate_state(
    liou: &LocalLiouvillian,
    state: &StateOperator,
    s: f64,
    t: f64,
    opts: IntegrationOptions,
) -> Result<(StateOperator, PropagationReport)> {
    let mut integ = Integrator::new(liou, Picture::Schrodinger, s, t, false, opts)?;
    let mut y = state.matrix().clone();
    let report = integ.solve(&mut y)?;
    let op = GlobalOperator::from_matrix(liou.graph(), y, None)?;
    Ok((StateOperator::trusted(op), report))
}

/// Evolves an observable from the later time `t` back to the earlier time
/// `s`: the returned operator B satisfies Tr(B rho_s) = Tr(A rho_t) for
/// every solution rho of the state equation.
pub fn propagate_observable(
    liou: &LocalLiouvillian,
    observable: &GlobalOperator,
    s: f64,
    t: f64,
    opts: IntegrationOptions,
) -> Result<(GlobalOperator, PropagationReport)> {
    let mut integ = Integrator::new(liou, Picture::Adjoint, s, t, true, opts)?;
    let mut y = observable.matrix().clone();
    let report = integ.solve(&mut y)?;
    let op = GlobalOperator::from_matrix(liou.graph(), y, None)?;
    Ok((op, report))
}

/// A dense superoperator in the column-stacking convention: column
/// c D + r of the matrix is the vectorized image of the matrix unit
/// E_{r c}.
#[derive(Debug, Clone)]
pub struct SuperoperatorMatrix {
    graph: Arc<InteractionGraph>,
    matrix: Array2<C64>,
}

impl SuperoperatorMatrix {
    /// Wraps an explicit transfer matrix, which must be D^2 by D^2 for
    /// the graph's Hilbert dimension D.
    pub fn from_matrix(
        graph: &Arc<InteractionGraph>,
        matrix: Array2<C64>,
    ) -> Result<SuperoperatorMatrix> {
        let d = graph.hilbert_dim();
        if matrix.dim() != (d * d, d * d) {
            return Err(Error::DimensionMismatch { left: matrix.nrows(), right: d * d });
        }
        Ok(SuperoperatorMatrix { graph: Arc::clone(graph), matrix })
    }

    /// Hilbert space dimension D (the matrix is D^2 by D^2).
    pub fn hilbert_dim(&self) -> usize {
        self.graph.hilbert_dim()
    }

    /// The underlying graph.
    pub fn graph(&self) -> &Arc<InteractionGraph> {
        &self.graph
    }

    /// The dense matrix.
    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    /// Applies the map to an operator.
    pub fn apply(&self, op: &GlobalOperator) -> Result<GlobalOperator> {
        let d = self.hilbert_dim();
        if op.dim() != d {
            return Err(Error::DimensionMismatch { left: op.dim(), right: d });
        }
        let v = self.matrix.dot(&vectorize(op.matrix()));
        GlobalOperator::from_matrix(&self.graph, linalg::unvectorize(&v, d), None)
    }

    /// Composition: self after `first`.
    pub fn compose(&self, first: &SuperoperatorMatrix) -> Result<SuperoperatorMatrix> {
        if self.matrix.nrows() != first.matrix.nrows() {
            return Err(Error::DimensionMismatch {
                left: self.matrix.nrows(),
                right: first.matrix.nrows(),
            });
        }
        Ok(SuperoperatorMatrix {
            graph: Arc::clone(&self.graph),
            matrix: self.matrix.dot(&first.matrix),
        })
    }

    /// The Hilbert-Schmidt adjoint map (conjugate transpose in this
    /// representation).
    pub fn hs_adjoint(&self) -> SuperoperatorMatrix {
        SuperoperatorMatrix {
            graph: Arc::clone(&self.graph),
            matrix: dagger(&self.matrix),
        }
    }

    /// Maximum absolute entrywise difference to another superoperator.
    pub fn max_abs_diff(&self, other: &SuperoperatorMatrix) -> f64 {
        linalg::max_abs(&(&self.matrix - &other.matrix))
    }

    /// The Choi matrix of the map: C = sum_{i j} E_{i j} (x) T(E_{i j})
    /// reindexed from the transfer matrix.
    pub fn choi_matrix(&self) -> Array2<C64> {
        let d = self.hilbert_dim();
        let t = &self.matrix;
        let mut c = Array2::zeros((d * d, d * d));
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        c[[i * d + k, j * d + l]] = t[[l * d + k, j * d + i]];
                    }
                }
            }
        }
        c
    }
}

/// Complete-positivity and trace-preservation diagnostics of a map given
/// as a superoperator matrix.
#[derive(Debug, Clone, Copy)]
pub struct CptpReport {
    /// Smallest eigenvalue of the Hermitian part of the Choi matrix;
    /// non-negative (up to tolerance) for completely positive maps.
    pub choi_min_eigenvalue: f64,
    /// Largest deviation of the Choi matrix from Hermiticity.
    pub choi_hermiticity_deviation: f64,
    /// Max-norm deviation of vec(1)† T from vec(1)†; zero for
    /// trace-preserving maps.
    pub trace_preservation_deviation: f64,
    /// Max-norm deviation of T vec(1) from vec(1); zero for unital maps.
    pub unitality_deviation: f64,
}

/// Computes the CPTP diagnostics of a superoperator.
pub fn cptp_check(superop: &SuperoperatorMatrix) -> Result<CptpReport> {
    let d = superop.hilbert_dim();
    let t = superop.matrix();
    let choi = superop.choi_matrix();
    let herm_dev = linalg::hermiticity_deviation(&choi);
    let sym = (&choi + &dagger(&choi)).mapv(|z| z * 0.5);
    let eigs = eigvalsh(&sym)?;
    let vec_id = {
        let mut v = ndarray::Array1::zeros(d * d);
        for i in 0..d {
            v[i * d + i] = C64::new(1.0, 0.0);
        }
        v
    };
    let tp_row = vec_id.mapv(|z: C64| z.conj()).dot(t);
    let tp_dev = tp_row
        .iter()
        .zip(vec_id.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    let un_col = t.dot(&vec_id);
    let un_dev = un_col
        .iter()
        .zip(vec_id.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    Ok(CptpReport {
        choi_min_eigenvalue: eigs[0],
        choi_hermiticity_deviation: herm_dev,
        trace_preservation_deviation: tp_dev,
        unitality_deviation: un_dev,
    })
}

fn check_superop_cap(d: usize) -> Result<()> {
    if d > SUPEROP_DIM_CAP {
        return Err(Error::TooLarge { dim: d, cap: SUPEROP_DIM_CAP });
    }
    Ok(())
}

fn basis_matrix(d: usize, col: usize) -> Array2<C64> {
    let mut m = Array2::zeros((d, d));
    m[[col % d, col / d]] = C64::new(1.0, 0.0);
    m
}

/// The generator at a fixed time as a dense superoperator matrix. Guarded
/// by [`SUPEROP_DIM_CAP`].
pub fn generator_matrix(
    liou: &LocalLiouvillian,
    t: f64,
    picture: Picture,
) -> Result<SuperoperatorMatrix> {
    let d = liou.graph().hilbert_dim();
    check_superop_cap(d)?;
    let mut ws = liou.workspace();
    let mut m = Array2::zeros((d * d, d * d));
    let mut dst = Array2::zeros((d, d));
    for col in 0..d * d {
        let src = basis_matrix(d, col);
        liou.apply_matrix(t, None, &src, &mut dst, picture, &mut ws)?;
        let v = vectorize(&dst);
        m.column_mut(col).assign(&v);
    }
    Ok(SuperoperatorMatrix { graph: Arc::clone(liou.graph()), matrix: m })
}

/// The propagator over [s, t] as a dense superoperator matrix, built by
/// integrating every matrix unit. `Picture::Schrodinger` gives the state
/// propagator (forward in time), `Picture::Adjoint` the observable
/// propagator (the substitution form). Guarded by [`SUPEROP_DIM_CAP`].
pub fn propagator_matrix(
    liou: &LocalLiouvillian,
    s: f64,
    t: f64,
    picture: Picture,
    opts: IntegrationOptions,
) -> Result<(SuperoperatorMatrix, PropagationReport)> {
    let d = liou.graph().hilbert_dim();
    check_superop_cap(d)?;
    let backward = matches!(picture, Picture::Adjoint);
    let mut integ = Integrator::new(liou, picture, s, t, backward, opts)?;
    let mut m = Array2::zeros((d * d, d * d));
    let mut report = PropagationReport::default();
    for col in 0..d * d {
        let mut y = basis_matrix(d, col);
        report.absorb(integ.solve(&mut y)?);
        m.column_mut(col).assign(&vectorize(&y));
    }
    Ok((SuperoperatorMatrix { graph: Arc::clone(liou.graph()), matrix: m }, report))
}
