//! Locality experiments: commutator cones, truncation errors, covariance
//! decay, and product-formula convergence.
//!
//! Each experiment measures how strongly evolved observables act outside
//! the graph neighborhood of their initial support, and compares the
//! measurements against exponential envelopes of the form
//! C exp(v (t - s) - d) built from the interaction structure: v is the
//! product of e, the branching number of the term supports, and the
//! largest induced term norm. The envelopes are deliberately loose upper
//! bounds; the fitted decay rates of the measurements themselves are the
//! sharp quantity.
//!
//! All fits are least squares on the logarithm of the measured values, so
//! callers should drop exact zeros (reported as such) before fitting.

use std::collections::BTreeSet;
use std::f64::consts::E;
use std::sync::Arc;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{Distance, InteractionGraph};
use crate::kernel::SupportLayout;
use crate::linalg::{self, expm, kron, max_abs, trace_of_product, C64};
use crate::liouvillian::LocalLiouvillian;
use crate::operator::{GlobalOperator, StateOperator};
use crate::propagation::{propagate_observable, propagate_state, IntegrationOptions};

/// Velocity and prefactor of an exponential locality envelope.
#[derive(Debug, Clone, Copy)]
pub struct BoundParameters {
    /// Cone velocity in graph distance per unit time.
    pub velocity: f64,
    /// Dimensionless prefactor.
    pub prefactor: f64,
}

impl BoundParameters {
    /// Derives the velocity from the interaction structure over the window
    /// [s, t]: e times the branching number times the largest induced term
    /// norm. The prefactor defaults to 8.
    pub fn from_structure(liou: &LocalLiouvillian, s: f64, t: f64) -> Result<Self> {
        let z = liou.branching_number()? as f64;
        let b = liou.interaction_strength(s, t)?;
        Ok(Self { velocity: E * z * b, prefactor: 8.0 })
    }

    /// Same parameters with a different prefactor.
    pub fn with_prefactor(mut self, prefactor: f64) -> Self {
        self.prefactor = prefactor;
        self
    }

    /// Envelope for commutators of unit-norm operators separated by `d`
    /// after elapsed time `dt`: 2 C exp(v dt - d). Zero at infinite
    /// distance.
    pub fn cone_envelope(&self, dt: f64, d: Distance) -> f64 {
        match d {
            Distance::Infinite => 0.0,
            Distance::Finite(n) => {
                2.0 * self.prefactor * (self.velocity * dt - n as f64).exp()
            }
        }
    }

    /// Envelope for covariances of unit-norm operators separated by `d`
    /// after elapsed time `dt`: C exp(v dt - d/2). Zero at infinite
    /// distance.
    pub fn covariance_envelope(&self, dt: f64, d: Distance) -> f64 {
        match d {
            Distance::Infinite => 0.0,
            Distance::Finite(n) => {
                self.prefactor * (self.velocity * dt - n as f64 / 2.0).exp()
            }
        }
    }
}

/// Least-squares fit of ln(value) against an abscissa.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    /// Slope of ln(value) per unit abscissa (negative for decay).
    pub rate: f64,
    /// Intercept of ln(value) at zero abscissa.
    pub intercept: f64,
    /// Coefficient of determination of the fit.
    pub r_squared: f64,
}

/// Fits ln(values) = intercept + rate * abscissa by least squares.
/// Requires at least two points and strictly positive values.
pub fn fit_exponential_decay(abscissas: &[f64], values: &[f64]) -> Result<DecayFit> {
    if abscissas.len() != values.len() {
        return Err(Error::DimensionMismatch { left: abscissas.len(), right: values.len() });
    }
    if abscissas.len() < 2 {
        return Err(Error::InvalidInput {
            reason: format!("need at least two points to fit, got {}", abscissas.len()),
        });
    }
    if let Some(&bad) = values.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidInput {
            reason: format!("log fit needs positive values, got {bad}"),
        });
    }
    let n = abscissas.len() as f64;
    let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let mean_x = abscissas.iter().sum::<f64>() / n;
    let mean_y = logs.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in abscissas.iter().zip(&logs) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidInput {
            reason: "all abscissas coincide, slope is undefined".into(),
        });
    }
    let rate = sxy / sxx;
    let intercept = mean_y - rate * mean_x;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (&x, &y) in abscissas.iter().zip(&logs) {
        let fitted = intercept + rate * x;
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(DecayFit { rate, intercept, r_squared })
}

/// Fits ln(values) = intercept + rate * ln(abscissa): a power law, with
/// `rate` the exponent.
pub fn fit_power_law(abscissas: &[f64], values: &[f64]) -> Result<DecayFit> {
    if let Some(&bad) = abscissas.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::InvalidInput {
            reason: format!("power-law fit needs positive abscissas, got {bad}"),
        });
    }
    let logs: Vec<f64> = abscissas.iter().map(|x| x.ln()).collect();
    fit_exponential_decay(&logs, values)
}

/// Graph distance between the supports of two operators. Declared
/// supports are used when available; otherwise supports are detected
/// numerically.
pub fn operator_distance(
    graph: &InteractionGraph,
    a: &GlobalOperator,
    b: &GlobalOperator,
) -> Result<Distance> {
    let sa = a.support_hint();
    let sb = b.support_hint();
    if sa.is_empty() || sb.is_empty() {
        return Err(Error::EmptySet);
    }
    graph.distance(&sa, &sb)
}

/// One probe of a commutator cone.
#[derive(Debug, Clone)]
pub struct ConePoint {
    /// Graph distance between the initial supports.
    pub distance: Distance,
    /// Operator norm of the commutator of the evolved observable with the
    /// probe.
    pub leakage: f64,
    /// Envelope value at this distance.
    pub envelope: f64,
}

/// Result of a commutator cone experiment.
#[derive(Debug, Clone)]
pub struct ConeReport {
    /// Elapsed time t - s.
    pub elapsed: f64,
    /// Envelope parameters used.
    pub params: BoundParameters,
    /// One entry per probe, in input order.
    pub points: Vec<ConePoint>,
}

impl ConeReport {
    /// Whether every measured leakage sits below its envelope.
    pub fn all_within_envelope(&self) -> bool {
        self.points.iter().all(|p| p.leakage <= p.envelope || p.envelope == 0.0 && p.leakage == 0.0)
    }

    /// Fit of ln(leakage) against finite distance, dropping points with
    /// zero leakage or infinite distance.
    pub fn fit(&self) -> Result<DecayFit> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for p in &self.points {
            if let Distance::Finite(d) = p.distance {
                if p.leakage > 0.0 {
                    xs.push(d as f64);
                    ys.push(p.leakage);
                }
            }
        }
        fit_exponential_decay(&xs, &ys)
    }
}

/// Evolves `a` from time `t` back to time `s` once, then measures the
/// operator norm of its commutator with every probe, together with the
/// envelope at the probe's distance. Probes further from the initial
/// support of `a` should commute better: the effective cone.
pub fn commutator_cone(
    liou: &LocalLiouvillian,
    a: &GlobalOperator,
    probes: &[GlobalOperator],
    s: f64,
    t: f64,
    params: BoundParameters,
    opts: IntegrationOptions,
) -> Result<ConeReport> {
    let graph = liou.graph();
    let norm_a = a.op_norm();
    let mut distances = Vec::with_capacity(probes.len());
    for probe in probes {
        distances.push(operator_distance(graph, a, probe)?);
    }
    let (evolved, _) = propagate_observable(liou, a, s, t, opts)?;
    let dt = t - s;
    let mut points = Vec::with_capacity(probes.len());
    for (probe, &distance) in probes.iter().zip(&distances) {
        let comm = evolved.commutator_with(probe)?;
        let leakage = comm.op_norm();
        let envelope = norm_a * probe.op_norm() * params.cone_envelope(dt, distance);
        points.push(ConePoint { distance, leakage, envelope });
    }
    Ok(ConeReport { elapsed: dt, params, points })
}

/// Operator-norm difference between evolving `a` under two generators
/// over the same interval: the response to a perturbation of the
/// dynamics.
pub fn perturbation_response(
    reference: &LocalLiouvillian,
    perturbed: &LocalLiouvillian,
    a: &GlobalOperator,
    s: f64,
    t: f64,
    opts: IntegrationOptions,
) -> Result<f64> {
    let (b_ref, _) = propagate_observable(reference, a, s, t, opts)?;
    let (b_per, _) = propagate_observable(perturbed, a, s, t, opts)?;
    Ok(b_ref.sub(&b_per)?.op_norm())
}

/// One region of a truncation experiment.
#[derive(Debug, Clone)]
pub struct TruncationPoint {
    /// Number of vertices kept.
    pub region_size: usize,
    /// Graph distance from the observable's support to the discarded
    /// complement.
    pub buffer_distance: Distance,
    /// Operator norm of the difference to the full evolution.
    pub error: f64,
}

/// Result of a truncation experiment.
#[derive(Debug, Clone)]
pub struct TruncationReport {
    /// One entry per proper sub-region, in input order.
    pub points: Vec<TruncationPoint>,
    /// Error of the run whose region is the whole vertex set, when one was
    /// requested: the truncation is then no truncation at all and the
    /// error is zero by construction.
    pub full_region_error: Option<f64>,
}

impl TruncationReport {
    /// Fit of ln(error) against finite buffer distance, dropping zero
    /// errors.
    pub fn fit(&self) -> Result<DecayFit> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for p in &self.points {
            if let Distance::Finite(d) = p.buffer_distance {
                if p.error > 0.0 {
                    xs.push(d as f64);
                    ys.push(p.error);
                }
            }
        }
        fit_exponential_decay(&xs, &ys)
    }
}

/// Compares the full evolution of a local observable with evolutions
/// truncated to nested regions. The observable is given as a local matrix
/// on `support` so it can be embedded both in the full system and in each
/// region's sub-system. Every region must contain the support; regions
/// equal to the whole vertex set are reported separately.
pub fn truncation_error_series(
    liou: &LocalLiouvillian,
    a_local: &Array2<C64>,
    support: &[usize],
    regions: &[BTreeSet<usize>],
    s: f64,
    t: f64,
    opts: IntegrationOptions,
) -> Result<TruncationReport> {
    let graph = liou.graph();
    let support_set: BTreeSet<usize> = support.iter().copied().collect();
    let all: BTreeSet<usize> = graph.vertices().iter().copied().collect();
    let a_full = GlobalOperator::embed(graph, a_local, support)?;
    let (b_full, _) = propagate_observable(liou, &a_full, s, t, opts)?;

    let mut points = Vec::new();
    let mut full_region_error = None;
    for region in regions {
        if !support_set.is_subset(region) {
            return Err(Error::InvalidInput {
                reason: "every truncation region must contain the observable support".into(),
            });
        }
        let (sub, liou_r) = liou.restricted_to_subgraph(region)?;
        let a_region = GlobalOperator::embed(&sub, a_local, support)?;
        let (b_region, _) = propagate_observable(&liou_r, &a_region, s, t, opts)?;
        let lifted = GlobalOperator::embed(graph, b_region.matrix(), sub.vertices())?;
        let error = b_full.sub(&lifted)?.op_norm();
        let complement: BTreeSet<usize> = all.difference(region).copied().collect();
        if complement.is_empty() {
            full_region_error = Some(error);
        } else {
            points.push(TruncationPoint {
                region_size: region.len(),
                buffer_distance: graph.distance(&support_set, &complement)?,
                error,
            });
        }
    }
    Ok(TruncationReport { points, full_region_error })
}

/// Checks that a state is a product over the graph's vertices: the tensor
/// product of its single-site reductions must reproduce it entrywise
/// within `tol`.
pub fn verify_product_state(state: &StateOperator, tol: f64) -> Result<()> {
    let graph = state.graph();
    let mut rebuilt: Array2<C64> = Array2::eye(1);
    for &v in graph.vertices() {
        let keep: BTreeSet<usize> = [v].into_iter().collect();
        let reduction = state.operator().partial_trace(&keep)?;
        rebuilt = kron(&rebuilt, &reduction);
    }
    let dev = max_abs(&(state.matrix() - &rebuilt));
    if dev > tol {
        return Err(Error::NotAState {
            reason: format!("state is not a product over sites (deviation {dev:.3e})"),
        });
    }
    Ok(())
}

/// Covariance <A B> - <A><B> in a state, using a precomputed product
/// A B. All traces are entrywise sums, no matrix products.
pub fn covariance_with_product(
    state: &StateOperator,
    a: &GlobalOperator,
    b: &GlobalOperator,
    ab: &GlobalOperator,
) -> Result<C64> {
    let rho = state.matrix();
    let mean_ab = trace_of_product(rho, ab.matrix());
    let mean_a = trace_of_product(rho, a.matrix());
    let mean_b = trace_of_product(rho, b.matrix());
    Ok(mean_ab - mean_a * mean_b)
}

/// Covariance <A B> - <A><B> in a state. Generally complex for
/// non-commuting observables.
pub fn covariance(state: &StateOperator, a: &GlobalOperator, b: &GlobalOperator) -> Result<C64> {
    let ab = a.compose(b)?;
    covariance_with_product(state, a, b, &ab)
}

/// One time of a covariance decay experiment.
#[derive(Debug, Clone)]
pub struct CovariancePoint {
    /// Absolute time of the measurement.
    pub time: f64,
    /// Covariance of the two observables in the evolved state.
    pub covariance: C64,
    /// Envelope value at this elapsed time.
    pub envelope: f64,
}

/// Evolves a product state forward and records the covariance of two
/// separated observables at each requested time. Inside the cone (v dt
/// below the separation) covariances stay suppressed; the envelope makes
/// that quantitative. Times must be ascending and start at or after `s`;
/// the state is evolved incrementally between them.
pub fn covariance_series(
    liou: &LocalLiouvillian,
    initial: &StateOperator,
    a: &GlobalOperator,
    b: &GlobalOperator,
    s: f64,
    times: &[f64],
    params: BoundParameters,
    opts: IntegrationOptions,
) -> Result<Vec<CovariancePoint>> {
    verify_product_state(initial, 1e-10)?;
    let graph = liou.graph();
    let distance = operator_distance(graph, a, b)?;
    let ab = a.compose(b)?;
    let scale = a.op_norm() * b.op_norm();
    let mut points = Vec::with_capacity(times.len());
    let mut current = initial.clone();
    let mut now = s;
    for &t in times {
        if t < now {
            return Err(Error::BadInterval { s: now, t });
        }
        let (next, _) = propagate_state(liou, &current, now, t, opts)?;
        current = next;
        now = t;
        let cov = covariance_with_product(&current, a, b, &ab)?;
        let envelope = scale * params.covariance_envelope(t - s, distance);
        points.push(CovariancePoint { time: t, covariance: cov, envelope });
    }
    Ok(points)
}

/// A term's compiled propagator machinery for product formulas.
struct TrotterTerm {
    layout: SupportLayout,
    transfer: Array2<C64>,
    schedule: crate::schedule::TimeSchedule,
    /// Propagator cached when the schedule is constant (every step sees
    /// the same coefficient integral).
    cached: Option<Array2<C64>>,
}

/// First-order product-formula evolution of an observable: the interval
/// splits into `steps` equal windows, and within each window every term's
/// exact propagator (matrix exponential of the term's superoperator times
/// the window integral of its coefficient) applies in a fixed order,
/// lexicographic in the sorted term supports. Later windows act first, so
/// composition runs from time t down to time s as the exact backward
/// evolution does.
pub fn trotter_evolve_observable(
    liou: &LocalLiouvillian,
    a: &GlobalOperator,
    s: f64,
    t: f64,
    steps: usize,
) -> Result<GlobalOperator> {
    if steps == 0 {
        return Err(Error::InvalidInput { reason: "need at least one step".into() });
    }
    if t < s {
        return Err(Error::BadInterval { s, t });
    }
    let graph = liou.graph();
    if !Arc::ptr_eq(a.graph(), graph) && a.dim() != graph.hilbert_dim() {
        return Err(Error::DimensionMismatch { left: a.dim(), right: graph.hilbert_dim() });
    }

    let mut order: Vec<usize> = (0..liou.terms().len()).collect();
    order.sort_by(|&i, &j| {
        let mut si: Vec<usize> = liou.terms()[i].support().to_vec();
        let mut sj: Vec<usize> = liou.terms()[j].support().to_vec();
        si.sort_unstable();
        sj.sort_unstable();
        si.cmp(&sj).then(i.cmp(&j))
    });
    let mut compiled = Vec::with_capacity(order.len());
    for &i in &order {
        let term = &liou.terms()[i];
        let layout = SupportLayout::new(graph, term.support())?;
        let transfer = term.local_transfer();
        let schedule = term.schedule().clone();
        let cached = match schedule.as_constant() {
            Some(c) => {
                let w = c * (t - s) / steps as f64;
                Some(expm(&transfer.mapv(|z| z * w))?)
            }
            None => None,
        };
        compiled.push(TrotterTerm { layout, transfer, schedule, cached });
    }

    let mut y = a.matrix().clone();
    let h = (t - s) / steps as f64;
    // The backward evolution composes window propagators with the latest
    // window applied first.
    for w in (0..steps).rev() {
        let w0 = s + h * w as f64;
        let w1 = s + h * (w + 1) as f64;
        for term in &compiled {
            let prop = match &term.cached {
                Some(p) => p.clone(),
                None => {
                    let weight = term.schedule.integral(w0, w1)?;
                    expm(&term.transfer.mapv(|z| z * weight))?
                }
            };
            apply_local_superop(&mut y, &prop, &term.layout);
        }
    }
    GlobalOperator::from_matrix(graph, y, None)
}

/// Applies an m^2 by m^2 superoperator on the tensor factors selected by
/// `layout`, in place, by gathering each local block into a vectorized
/// column, multiplying, and scattering back.
fn apply_local_superop(y: &mut Array2<C64>, prop: &Array2<C64>, layout: &SupportLayout) {
    let m = layout.local_dim;
    let mm = m * m;
    let mut v = vec![linalg::C_ZERO; mm];
    let mut w = vec![linalg::C_ZERO; mm];
    for &rest_r in &layout.rest_table {
        for &rest_c in &layout.rest_table {
            for sc in 0..m {
                let col = rest_c + layout.sup_table[sc];
                for sr in 0..m {
                    v[sc * m + sr] = y[[rest_r + layout.sup_table[sr], col]];
                }
            }
            for (i, wi) in w.iter_mut().enumerate() {
                let mut acc = linalg::C_ZERO;
                for (j, &vj) in v.iter().enumerate() {
                    acc += prop[[i, j]] * vj;
                }
                *wi = acc;
            }
            for sc in 0..m {
                let col = rest_c + layout.sup_table[sc];
                for sr in 0..m {
                    y[[rest_r + layout.sup_table[sr], col]] = w[sc * m + sr];
                }
            }
        }
    }
}

/// One step count of a product-formula convergence experiment.
#[derive(Debug, Clone, Copy)]
pub struct TrotterPoint {
    /// Number of product-formula windows.
    pub steps: usize,
    /// Operator norm of the difference to the reference evolution.
    pub error: f64,
}

/// Measures product-formula errors against an accurately integrated
/// reference for a list of step counts. Returns the points and the
/// reference observable.
pub fn trotter_error_series(
    liou: &LocalLiouvillian,
    a: &GlobalOperator,
    s: f64,
    t: f64,
    step_counts: &[usize],
    opts: IntegrationOptions,
) -> Result<(Vec<TrotterPoint>, GlobalOperator)> {
    let (reference, _) = propagate_observable(liou, a, s, t, opts)?;
    let mut points = Vec::with_capacity(step_counts.len());
    for &steps in step_counts {
        let approx = trotter_evolve_observable(liou, a, s, t, steps)?;
        let error = approx.sub(&reference)?.op_norm();
        points.push(TrotterPoint { steps, error });
    }
    Ok((points, reference))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models;
    use crate::schedule::{SchedulePiece, TimeSchedule};
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponential_fit_recovers_planted_decay() {
        let xs: Vec<f64> = (1..=6).map(|d| d as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-1.7 * x).exp()).collect();
        let fit = fit_exponential_decay(&xs, &ys).unwrap();
        assert_abs_diff_eq!(fit.rate, -1.7, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 3.0f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn power_law_fit_recovers_planted_exponent() {
        let ns: Vec<f64> = vec![4.0, 8.0, 16.0, 32.0];
        let ys: Vec<f64> = ns.iter().map(|n| 0.9 / n).collect();
        let fit = fit_power_law(&ns, &ys).unwrap();
        assert_abs_diff_eq!(fit.rate, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn fits_reject_degenerate_input() {
        assert!(fit_exponential_decay(&[1.0], &[0.5]).is_err());
        assert!(fit_exponential_decay(&[1.0, 2.0], &[0.5, 0.0]).is_err());
        assert!(fit_exponential_decay(&[1.0, 1.0], &[0.5, 0.4]).is_err());
        assert!(fit_power_law(&[0.0, 2.0], &[0.5, 0.4]).is_err());
    }

    #[test]
    fn zero_elapsed_time_gives_exactly_commuting_probes() {
        let (g, liou) = models::heisenberg_dephasing_chain(5, 1.0, 0.1).unwrap();
        let a = models::pauli_at(&g, 'x', 1).unwrap();
        let probes = vec![
            models::pauli_at(&g, 'z', 3).unwrap(),
            models::pauli_at(&g, 'z', 5).unwrap(),
        ];
        let params = BoundParameters::from_structure(&liou, 0.0, 0.0).unwrap();
        let report = commutator_cone(
            &liou,
            &a,
            &probes,
            0.0,
            0.0,
            params,
            IntegrationOptions::default(),
        )
        .unwrap();
        assert_eq!(report.points.len(), 2);
        for p in &report.points {
            assert_eq!(p.leakage, 0.0);
        }
        assert_eq!(report.points[0].distance, Distance::Finite(2));
        assert_eq!(report.points[1].distance, Distance::Finite(4));
        assert!(report.all_within_envelope());
    }

    #[test]
    fn leakage_decays_along_a_short_chain() {
        let (g, liou) = models::heisenberg_dephasing_chain(5, 1.0, 0.1).unwrap();
        let a = models::pauli_at(&g, 'x', 1).unwrap();
        let probes: Vec<GlobalOperator> = (3..=5)
            .map(|j| models::pauli_at(&g, 'z', j).unwrap())
            .collect();
        let params = BoundParameters::from_structure(&liou, 0.0, 0.25).unwrap();
        let report = commutator_cone(
            &liou,
            &a,
            &probes,
            0.0,
            0.25,
            params,
            IntegrationOptions::default(),
        )
        .unwrap();
        let leak: Vec<f64> = report.points.iter().map(|p| p.leakage).collect();
        assert!(leak[0] > leak[1] && leak[1] > leak[2], "leakages {leak:?}");
        let fit = report.fit().unwrap();
        assert!(fit.rate < -0.5, "rate {}", fit.rate);
        assert!(report.all_within_envelope());
    }

    #[test]
    fn truncation_error_vanishes_for_the_full_region() {
        let (g, liou) = models::heisenberg_dephasing_chain(4, 1.0, 0.2).unwrap();
        let all: BTreeSet<usize> = g.vertices().iter().copied().collect();
        let inner: BTreeSet<usize> = [1, 2, 3].into_iter().collect();
        let report = truncation_error_series(
            &liou,
            &models::sigma_x(),
            &[1],
            &[inner, all],
            0.0,
            0.3,
            IntegrationOptions::default(),
        )
        .unwrap();
        assert_eq!(report.points.len(), 1);
        // Identical code path, identical arithmetic: the full region is
        // not a truncation at all.
        assert_eq!(report.full_region_error, Some(0.0));
        let p = &report.points[0];
        assert_eq!(p.buffer_distance, Distance::Finite(3));
        assert!(p.error > 1e-9, "a real truncation leaves a real error");
    }

    #[test]
    fn truncation_errors_shrink_with_buffer() {
        let (g, liou) = models::heisenberg_dephasing_chain(6, 1.0, 0.1).unwrap();
        let regions: Vec<BTreeSet<usize>> = vec![
            [1, 2].into_iter().collect(),
            [1, 2, 3, 4].into_iter().collect(),
            [1, 2, 3, 4, 5].into_iter().collect(),
        ];
        let report = truncation_error_series(
            &liou,
            &models::sigma_x(),
            &[1],
            &regions,
            0.0,
            0.25,
            IntegrationOptions::default(),
        )
        .unwrap();
        let errs: Vec<f64> = report.points.iter().map(|p| p.error).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "errors {errs:?}");
        drop(g);
    }

    #[test]
    fn region_must_contain_the_support() {
        let (_, liou) = models::heisenberg_dephasing_chain(4, 1.0, 0.0).unwrap();
        let bad: BTreeSet<usize> = [2, 3].into_iter().collect();
        assert!(matches!(
            truncation_error_series(
                &liou,
                &models::sigma_x(),
                &[1],
                &[bad],
                0.0,
                0.1,
                IntegrationOptions::default(),
            ),
            Err(Error::InvalidInput { .. })
        ));
    }

    #[test]
    fn covariance_of_disjoint_observables_in_a_product_state_vanishes() {
        let g = models::chain_graph(4).unwrap();
        let rho = models::plus_product_state(&g).unwrap();
        let a = models::pauli_at(&g, 'z', 1).unwrap();
        let b = models::pauli_at(&g, 'z', 4).unwrap();
        let cov = covariance(&rho, &a, &b).unwrap();
        assert!(cov.norm() < 1e-13);
        verify_product_state(&rho, 1e-12).unwrap();
    }

    #[test]
    fn covariance_detects_classical_correlation() {
        let g = models::chain_graph(2).unwrap();
        // Equal mixture of |00> and |11>: Z1 and Z2 are perfectly
        // correlated.
        let up = models::computational_basis_state(&g, &[0, 0]).unwrap();
        let dn = models::computational_basis_state(&g, &[1, 1]).unwrap();
        let mixed = (up.matrix() + dn.matrix()).mapv(|z| z * 0.5);
        let op = GlobalOperator::from_matrix(&g, mixed, None).unwrap();
        let rho = StateOperator::new(op, 1e-12).unwrap();
        let z1 = models::pauli_at(&g, 'z', 1).unwrap();
        let z2 = models::pauli_at(&g, 'z', 2).unwrap();
        let cov = covariance(&rho, &z1, &z2).unwrap();
        assert_abs_diff_eq!(cov.re, 1.0, epsilon = 1e-12);
        assert!(verify_product_state(&rho, 1e-10).is_err());
    }

    #[test]
    fn covariance_series_starts_at_zero_and_stays_under_the_envelope() {
        let (g, liou) = models::heisenberg_dephasing_chain(5, 1.0, 0.1).unwrap();
        let rho0 = models::plus_product_state(&g).unwrap();
        let a = models::pauli_at(&g, 'z', 1).unwrap();
        let b = models::pauli_at(&g, 'z', 5).unwrap();
        let params = BoundParameters::from_structure(&liou, 0.0, 0.2).unwrap();
        let points = covariance_series(
            &liou,
            &rho0,
            &a,
            &b,
            0.0,
            &[0.0, 0.1, 0.2],
            params,
            IntegrationOptions::default(),
        )
        .unwrap();
        assert_eq!(points.len(), 3);
        assert!(points[0].covariance.norm() < 1e-13);
        for p in &points {
            assert!(p.covariance.norm() <= p.envelope);
        }
        // Unordered times are rejected.
        assert!(covariance_series(
            &liou,
            &rho0,
            &a,
            &b,
            0.0,
            &[0.2, 0.1],
            params,
            IntegrationOptions::default(),
        )
        .is_err());
    }

    #[test]
    fn covariance_series_requires_a_product_state() {
        let (g, liou) = models::heisenberg_dephasing_chain(2, 1.0, 0.0).unwrap();
        let rho = models::random_state(&g, 5).unwrap();
        let a = models::pauli_at(&g, 'z', 1).unwrap();
        let b = models::pauli_at(&g, 'z', 2).unwrap();
        let params = BoundParameters::from_structure(&liou, 0.0, 0.1).unwrap();
        assert!(matches!(
            covariance_series(
                &liou,
                &rho,
                &a,
                &b,
                0.0,
                &[0.1],
                params,
                IntegrationOptions::default()
            ),
            Err(Error::NotAState { .. })
        ));
    }

    #[test]
    fn product_formula_converges_at_first_order() {
        let (g, liou) = models::heisenberg_dephasing_chain(4, 1.0, 0.15).unwrap();
        let a = models::pauli_at(&g, 'x', 2).unwrap();
        let opts = IntegrationOptions::default().with_tolerance(1e-12);
        let counts = [4usize, 8, 16, 32];
        let (points, _) = trotter_error_series(&liou, &a, 0.0, 0.6, &counts, opts).unwrap();
        let ns: Vec<f64> = points.iter().map(|p| p.steps as f64).collect();
        let errs: Vec<f64> = points.iter().map(|p| p.error).collect();
        let fit = fit_power_law(&ns, &errs).unwrap();
        assert!((-1.3..=-0.7).contains(&fit.rate), "order {}", fit.rate);
        assert!(fit.r_squared > 0.99);
    }

    #[test]
    fn product_formula_is_exact_for_commuting_terms() {
        // ZZ edges and Z dephasing all commute, so a single window
        // already gives the exact evolution.
        let g = models::chain_graph(4).unwrap();
        let mut terms = Vec::new();
        for j in 1..4 {
            let zz = kron(&models::sigma_z(), &models::sigma_z());
            terms.push(
                crate::liouvillian::LindbladTerm::new(
                    vec![j, j + 1],
                    Some(zz),
                    vec![],
                    TimeSchedule::constant(0.7),
                )
                .unwrap(),
            );
        }
        for j in 1..=4 {
            terms.push(models::dephasing_site(j, 0.2).unwrap());
        }
        let liou = LocalLiouvillian::assemble(&g, terms).unwrap();
        let a = models::pauli_at(&g, 'x', 2).unwrap();
        let opts = IntegrationOptions::default().with_tolerance(1e-12);
        let (points, _) = trotter_error_series(&liou, &a, 0.0, 0.8, &[1, 4], opts).unwrap();
        for p in &points {
            assert!(p.error < 5e-10, "steps {} error {}", p.steps, p.error);
        }
    }

    #[test]
    fn product_formula_respects_time_dependent_coefficients() {
        // A single-term generator is exactly reproduced at one step
        // because the window propagator integrates the schedule exactly.
        let g = models::chain_graph(1).unwrap();
        let ramp = TimeSchedule::piecewise(vec![SchedulePiece {
            start: 0.0,
            end: 1.0,
            coefficients: vec![0.3, 2.0],
        }])
        .unwrap();
        let h = models::sigma_z().mapv(|z| z * 0.5);
        let term =
            crate::liouvillian::LindbladTerm::new(vec![1], Some(h), vec![], ramp).unwrap();
        let liou = LocalLiouvillian::assemble(&g, vec![term]).unwrap();
        let a = models::pauli_at(&g, 'x', 1).unwrap();
        let approx = trotter_evolve_observable(&liou, &a, 0.0, 1.0, 1).unwrap();
        let (exact, _) = propagate_observable(
            &liou,
            &a,
            0.0,
            1.0,
            IntegrationOptions::default().with_tolerance(1e-12),
        )
        .unwrap();
        assert!(max_abs(&(approx.matrix() - exact.matrix())) < 1e-9);
    }

    #[test]
    fn perturbation_response_is_zero_for_identical_generators() {
        let (g, liou) = models::heisenberg_dephasing_chain(3, 1.0, 0.1).unwrap();
        let a = models::pauli_at(&g, 'x', 1).unwrap();
        let r = perturbation_response(&liou, &liou, &a, 0.0, 0.4, IntegrationOptions::default())
            .unwrap();
        assert!(r < 1e-12);
        let (_, stronger) = models::heisenberg_dephasing_chain(3, 1.2, 0.1).unwrap();
        let r2 =
            perturbation_response(&liou, &stronger, &a, 0.0, 0.4, IntegrationOptions::default())
                .unwrap();
        assert!(r2 > 1e-3);
    }

    #[test]
    fn envelope_values_behave() {
        let params = BoundParameters { velocity: 2.0, prefactor: 8.0 };
        let near = params.cone_envelope(0.5, Distance::Finite(1));
        let far = params.cone_envelope(0.5, Distance::Finite(6));
        assert!(near > far);
        assert_eq!(params.cone_envelope(0.5, Distance::Infinite), 0.0);
        assert_abs_diff_eq!(
            params.covariance_envelope(0.25, Distance::Finite(4)),
            8.0 * (2.0 * 0.25 - 2.0f64).exp(),
            epsilon = 1e-12
        );
    }
}
