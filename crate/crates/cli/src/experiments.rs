//! Experiment runners: build the model, measure, verdict, write reports.
//!
//! Every runner writes two files into the output directory, both named
//! after the configuration: a CSV with the measured points and a JSON
//! summary with the checks and their verdicts. File contents depend only
//! on the configuration and seed, never on wall-clock time, so repeated
//! runs are byte-identical.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ndarray::Array2;
use serde::Serialize;
use serde_json::json;

use conelab::fermion::{self, FermionPolynomial};
use conelab::graph::Distance;
use conelab::io;
use conelab::linalg::{self, C64};
use conelab::locality::{
    commutator_cone, covariance_series, fit_power_law, trotter_error_series,
    truncation_error_series, BoundParameters,
};
use conelab::models;
use conelab::operator::GlobalOperator;
use conelab::propagation::{
    cptp_check, propagate_observable, propagate_state, propagator_matrix, IntegrationOptions,
    SuperoperatorMatrix,
};
use conelab::Picture;

use crate::config::{self, Axis, ExperimentConfig, ExperimentSpec, ModelSpec, SpatialDimensionSpec};

/// Command-line overrides applied on top of the configuration.
#[derive(Debug, Clone, Copy)]
pub struct Overrides {
    /// Replaces the seed of seeded models and seeded experiments.
    pub seed: Option<u64>,
    /// Multiplies the integrator tolerance.
    pub tolerance_scale: f64,
}

impl Default for Overrides {
    fn default() -> Self {
        Overrides { seed: None, tolerance_scale: 1.0 }
    }
}

/// One verdict with the observed figure and the requirement it was held
/// against, both preformatted for the report.
#[derive(Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub observed: String,
    pub requirement: String,
    pub passed: bool,
}

impl Check {
    fn le(name: &'static str, value: f64, limit: f64) -> Self {
        Check {
            name,
            observed: format!("{value:.6e}"),
            requirement: format!("<= {limit:.6e}"),
            passed: value <= limit,
        }
    }

    fn ge(name: &'static str, value: f64, limit: f64) -> Self {
        Check {
            name,
            observed: format!("{value:.6e}"),
            requirement: format!(">= {limit:.6e}"),
            passed: value >= limit,
        }
    }

    fn flag(name: &'static str, ok: bool, observed: impl Into<String>) -> Self {
        Check { name, observed: observed.into(), requirement: "true".into(), passed: ok }
    }
}

/// The written report of one run.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub name: String,
    pub description: String,
    pub experiment: &'static str,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub details: serde_json::Value,
}

/// Where a run left its files.
#[derive(Debug)]
pub struct RunOutcome {
    pub passed: bool,
    pub checks_passed: usize,
    pub checks_total: usize,
    pub data_path: PathBuf,
    pub summary_path: PathBuf,
}

fn pauli(graph: &std::sync::Arc<conelab::graph::InteractionGraph>, axis: Axis, site: usize) -> anyhow::Result<GlobalOperator> {
    Ok(models::pauli_at(graph, axis.letter(), site)?)
}

fn local_pauli(axis: Axis) -> Array2<C64> {
    match axis {
        Axis::X => models::sigma_x(),
        Axis::Y => models::sigma_y(),
        Axis::Z => models::sigma_z(),
    }
}

fn finite(d: Distance) -> anyhow::Result<usize> {
    match d {
        Distance::Finite(n) => Ok(n),
        Distance::Infinite => bail!("disconnected supports have no finite distance"),
    }
}

/// Validates, runs, and reports one configured experiment.
pub fn run(
    config: &ExperimentConfig,
    out_dir: &Path,
    overrides: Overrides,
) -> anyhow::Result<RunOutcome> {
    config::validate(config)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let opts = IntegrationOptions::default()
        .with_tolerance(config.run.tolerance * overrides.tolerance_scale);

    let (checks, details, rows, header) = match &config.experiment {
        ExperimentSpec::LeakageVsDistance { .. } => run_leakage(config, overrides, opts)?,
        ExperimentSpec::TruncationVsBuffer { .. } => run_truncation(config, overrides, opts)?,
        ExperimentSpec::CovarianceCone { .. } => run_covariance(config, overrides, opts)?,
        ExperimentSpec::TrotterOrder { .. } => run_trotter(config, overrides, opts)?,
        ExperimentSpec::PictureDuality { .. } => run_duality(config, overrides, opts)?,
        ExperimentSpec::CptpAudit { .. } => run_cptp(config, overrides, opts)?,
        ExperimentSpec::JwIdentitySuite { .. } => run_jw(config)?,
    };

    let passed = checks.iter().all(|c| c.passed);
    let checks_passed = checks.iter().filter(|c| c.passed).count();
    let checks_total = checks.len();

    let data_path = out_dir.join(format!("{}.csv", config.name));
    io::write_series_csv(&data_path, &header, &rows)?;
    let summary = Summary {
        name: config.name.clone(),
        description: config.description.clone(),
        experiment: config.experiment.kind_name(),
        passed,
        checks,
        details,
    };
    let summary_path = out_dir.join(format!("{}.json", config.name));
    io::write_json(&summary_path, &summary)?;

    Ok(RunOutcome { passed, checks_passed, checks_total, data_path, summary_path })
}

type RunnerOutput =
    (Vec<Check>, serde_json::Value, Vec<Vec<f64>>, Vec<&'static str>);

fn run_leakage(
    config: &ExperimentConfig,
    overrides: Overrides,
    opts: IntegrationOptions,
) -> anyhow::Result<RunnerOutput> {
    let ExperimentSpec::LeakageVsDistance {
        observable_site,
        observable_axis,
        probe_sites,
        probe_axis,
        fermionic,
        max_slope,
        min_r_squared,
        spatial_dimension,
    } = &config.experiment
    else {
        unreachable!()
    };
    let (graph, liou) = config.model.build(overrides.seed)?;
    let (s, t) = (config.run.start, config.run.stop);
    let params = BoundParameters::from_structure(&liou, s, t)?
        .with_prefactor(config.run.envelope_prefactor);

    let report = if *fermionic {
        let a = fermion::number_polynomial(*observable_site)?;
        let probes: Vec<FermionPolynomial> = probe_sites
            .iter()
            .map(|&m| fermion::number_polynomial(m))
            .collect::<Result<_, _>>()?;
        fermion::fermionic_commutator_cone(&liou, &a, &probes, s, t, params, opts, false)?
    } else {
        let a = pauli(&graph, *observable_axis, *observable_site)?;
        let probes: Vec<GlobalOperator> = probe_sites
            .iter()
            .map(|&p| pauli(&graph, *probe_axis, p))
            .collect::<Result<_, _>>()?;
        commutator_cone(&liou, &a, &probes, s, t, params, opts)?
    };

    let mut rows = Vec::new();
    for p in &report.points {
        rows.push(vec![finite(p.distance)? as f64, p.leakage, p.envelope]);
    }
    let fit = report.fit()?;
    let worst_ratio = report
        .points
        .iter()
        .filter(|p| p.envelope > 0.0)
        .map(|p| p.leakage / p.envelope)
        .fold(0.0, f64::max);

    let (mu, sphere_constant) = match spatial_dimension {
        SpatialDimensionSpec::Auto(_) => graph.estimate_spatial_dimension()?,
        SpatialDimensionSpec::Fixed(mu) => (*mu, graph.spatial_dimension_constant(*mu)?),
    };

    let checks = vec![
        Check::le("decay_slope", fit.rate, *max_slope),
        Check::ge("fit_r_squared", fit.r_squared, *min_r_squared),
        Check::le("envelope_ratio", worst_ratio, 1.0),
    ];
    let details = json!({
        "velocity": params.velocity,
        "prefactor": params.prefactor,
        "slope": fit.rate,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "spatial_dimension_mu": mu,
        "sphere_growth_constant": sphere_constant,
        "fermionic": *fermionic,
    });
    Ok((checks, details, rows, vec!["distance", "leakage", "envelope"]))
}

fn run_truncation(
    config: &ExperimentConfig,
    overrides: Overrides,
    opts: IntegrationOptions,
) -> anyhow::Result<RunnerOutput> {
    let ExperimentSpec::TruncationVsBuffer {
        support_site,
        observable_axis,
        buffers,
        max_slope,
        full_region_tolerance,
    } = &config.experiment
    else {
        unreachable!()
    };
    let (graph, liou) = config.model.build(overrides.seed)?;
    let regions: Vec<BTreeSet<usize>> = buffers
        .iter()
        .map(|&radius| config::ball(&graph, *support_site, radius))
        .collect::<Result<_, _>>()?;
    let report = truncation_error_series(
        &liou,
        &local_pauli(*observable_axis),
        &[*support_site],
        &regions,
        config.run.start,
        config.run.stop,
        opts,
    )?;

    let mut rows = Vec::new();
    for p in &report.points {
        rows.push(vec![finite(p.buffer_distance)? as f64, p.error, p.region_size as f64]);
    }
    let errs: Vec<f64> = report.points.iter().map(|p| p.error).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let fit = report.fit()?;

    let mut checks = vec![
        Check::flag(
            "errors_strictly_decreasing",
            decreasing,
            format!("{errs:?}"),
        ),
        Check::le("decay_slope", fit.rate, *max_slope),
    ];
    if let Some(full) = report.full_region_error {
        checks.push(Check::le("full_region_error", full, *full_region_tolerance));
    }
    let details = json!({
        "errors": errs,
        "full_region_error": report.full_region_error,
        "slope": fit.rate,
        "r_squared": fit.r_squared,
    });
    Ok((checks, details, rows, vec!["buffer", "error", "region_size"]))
}

fn run_covariance(
    config: &ExperimentConfig,
    overrides: Overrides,
    opts: IntegrationOptions,
) -> anyhow::Result<RunnerOutput> {
    let ExperimentSpec::CovarianceCone {
        site_a,
        axis_a,
        site_b,
        axis_b,
        samples,
        max_covariance,
        start_covariance,
    } = &config.experiment
    else {
        unreachable!()
    };
    let (graph, liou) = config.model.build(overrides.seed)?;
    let state = models::plus_product_state(&graph)?;
    let a = pauli(&graph, *axis_a, *site_a)?;
    let b = pauli(&graph, *axis_b, *site_b)?;
    let distance =
        finite(graph.distance(&BTreeSet::from([*site_a]), &BTreeSet::from([*site_b]))?)?;
    let (s, t) = (config.run.start, config.run.stop);
    let params = BoundParameters::from_structure(&liou, s, t)?
        .with_prefactor(config.run.envelope_prefactor);
    let times: Vec<f64> = (0..*samples)
        .map(|k| s + (t - s) * k as f64 / (*samples as f64 - 1.0))
        .collect();
    let series = covariance_series(&liou, &state, &a, &b, s, &times, params, opts)?;

    let rows: Vec<Vec<f64>> = series
        .iter()
        .map(|p| vec![p.time, p.covariance.norm(), p.envelope])
        .collect();
    let at_start = series[0].covariance.norm();
    let worst = series.iter().map(|p| p.covariance.norm()).fold(0.0, f64::max);
    let worst_ratio = series
        .iter()
        .filter(|p| p.envelope > 0.0)
        .map(|p| p.covariance.norm() / p.envelope)
        .fold(0.0, f64::max);

    let checks = vec![
        Check::le("covariance_at_start", at_start, *start_covariance),
        Check::le("max_covariance", worst, *max_covariance),
        Check::le("envelope_ratio", worst_ratio, 1.0),
    ];
    let details = json!({
        "distance": distance,
        "velocity": params.velocity,
        "cone_exit_time": s + distance as f64 / params.velocity,
        "samples": *samples,
    });
    Ok((checks, details, rows, vec!["time", "covariance", "envelope"]))
}

fn run_trotter(
    config: &ExperimentConfig,
    overrides: Overrides,
    opts: IntegrationOptions,
) -> anyhow::Result<RunnerOutput> {
    let ExperimentSpec::TrotterOrder { observable_site, observable_axis, steps, order_band } =
        &config.experiment
    else {
        unreachable!()
    };
    let (graph, liou) = config.model.build(overrides.seed)?;
    let a = pauli(&graph, *observable_axis, *observable_site)?;
    let (points, _) =
        trotter_error_series(&liou, &a, config.run.start, config.run.stop, steps, opts)?;
    let xs: Vec<f64> = points.iter().map(|p| p.steps as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.error).collect();
    let fit = fit_power_law(&xs, &ys)?;

    let rows: Vec<Vec<f64>> =
        points.iter().map(|p| vec![p.steps as f64, p.error]).collect();
    let checks = vec![
        Check::ge("order_lower_band", fit.rate, order_band.0),
        Check::le("order_upper_band", fit.rate, order_band.1),
    ];
    let details = json!({
        "order": fit.rate,
        "r_squared": fit.r_squared,
        "errors": ys,
    });
    Ok((checks, details, rows, vec!["steps", "error"]))
}

fn run_duality(
    config: &ExperimentConfig,
    overrides: Overrides,
    opts: IntegrationOptions,
) -> anyhow::Result<RunnerOutput> {
    let ExperimentSpec::PictureDuality { pairs, seed, max_gap } = &config.experiment else {
        unreachable!()
    };
    let (graph, liou) = config.model.build(overrides.seed)?;
    let base = overrides.seed.unwrap_or(*seed);
    let (s, t) = (config.run.start, config.run.stop);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for pair in 0..*pairs {
        let rho = models::random_state(&graph, base.wrapping_add(2 * pair as u64))?;
        let a_matrix =
            models::random_hermitian(graph.hilbert_dim(), base.wrapping_add(2 * pair as u64 + 1));
        let a = GlobalOperator::from_matrix(&graph, a_matrix, None)?;
        let (evolved_a, _) = propagate_observable(&liou, &a, s, t, opts)?;
        let (evolved_rho, _) = propagate_state(&liou, &rho, s, t, opts)?;
        let heisenberg = linalg::trace_of_product(rho.matrix(), evolved_a.matrix());
        let schrodinger = linalg::trace_of_product(evolved_rho.matrix(), a.matrix());
        let gap = (heisenberg - schrodinger).norm();
        worst = worst.max(gap);
        rows.push(vec![pair as f64, gap]);
    }
    let checks = vec![Check::le("max_duality_gap", worst, *max_gap)];
    let details = json!({ "pairs": *pairs, "seed": base, "max_gap": worst });
    Ok((checks, details, rows, vec!["pair", "gap"]))
}

fn run_cptp(
    config: &ExperimentConfig,
    overrides: Overrides,
    opts: IntegrationOptions,
) -> anyhow::Result<RunnerOutput> {
    let ExperimentSpec::CptpAudit {
        generators,
        min_choi_eigenvalue,
        max_trace_defect,
        negative_control,
    } = &config.experiment
    else {
        unreachable!()
    };
    let ModelSpec::RandomChain { sites, seed } = &config.model else {
        bail!("the audit needs the random chain model");
    };
    let graph = models::chain_graph(*sites)?;
    let base = overrides.seed.unwrap_or(*seed);
    let (s, t) = (config.run.start, config.run.stop);
    let mut rows = Vec::new();
    let mut min_eig = f64::INFINITY;
    let mut worst_tp: f64 = 0.0;
    for i in 0..*generators {
        let liou = models::random_liouvillian(&graph, base.wrapping_add(i as u64))?;
        let (prop, _) = propagator_matrix(&liou, s, t, Picture::Schrodinger, opts)?;
        let report = cptp_check(&prop)?;
        min_eig = min_eig.min(report.choi_min_eigenvalue);
        worst_tp = worst_tp.max(report.trace_preservation_deviation);
        rows.push(vec![
            i as f64,
            report.choi_min_eigenvalue,
            report.trace_preservation_deviation,
            report.unitality_deviation,
        ]);
    }
    let mut checks = vec![
        Check::ge("min_choi_eigenvalue", min_eig, *min_choi_eigenvalue),
        Check::le("max_trace_defect", worst_tp, *max_trace_defect),
    ];
    if *negative_control {
        let d = graph.hilbert_dim();
        let mut swap = Array2::zeros((d * d, d * d));
        for r in 0..d {
            for c in 0..d {
                swap[[c * d + r, r * d + c]] = C64::new(1.0, 0.0);
            }
        }
        let transpose_map = SuperoperatorMatrix::from_matrix(&graph, swap)?;
        let control = cptp_check(&transpose_map)?;
        checks.push(Check::flag(
            "transpose_control_flagged",
            control.choi_min_eigenvalue < -0.5,
            format!("{:.3e}", control.choi_min_eigenvalue),
        ));
    }
    let details = json!({
        "generators": *generators,
        "seed": base,
        "min_choi_eigenvalue": min_eig,
        "max_trace_defect": worst_tp,
    });
    Ok((
        checks,
        details,
        rows,
        vec!["generator", "choi_min_eigenvalue", "trace_defect", "unitality_defect"],
    ))
}

fn run_jw(config: &ExperimentConfig) -> anyhow::Result<RunnerOutput> {
    let ExperimentSpec::JwIdentitySuite { modes, tolerance } = &config.experiment else {
        unreachable!()
    };
    let n = *modes;
    let graph = models::chain_graph(n)?;
    let d = graph.hilbert_dim();

    // Canonical anticommutation relations over all mode pairs.
    let id: Array2<C64> = Array2::eye(d);
    let mut car_defect: f64 = 0.0;
    for j in 1..=n {
        for k in 1..=n {
            let fj = fermion::annihilation_operator(&graph, j)?;
            let fkd = fermion::creation_operator(&graph, k)?;
            let mixed = linalg::anticommutator(fj.matrix(), fkd.matrix());
            let expect = if j == k { id.clone() } else { Array2::zeros((d, d)) };
            car_defect = car_defect.max(linalg::max_abs(&(&mixed - &expect)));
            let fk = fermion::annihilation_operator(&graph, k)?;
            let same = linalg::anticommutator(fj.matrix(), fk.matrix());
            car_defect = car_defect.max(linalg::max_abs(&same));
        }
    }

    // Number operator and nearest-neighbor hopping identities.
    let mut mapping_defect: f64 = 0.0;
    for v in 1..=n {
        let n_op = fermion::number_operator(&graph, v)?;
        let product = fermion::creation_operator(&graph, v)?
            .compose(&fermion::annihilation_operator(&graph, v)?)?;
        mapping_defect =
            mapping_defect.max(linalg::max_abs(&n_op.sub(&product)?.into_matrix()));
    }
    for j in 1..n {
        let hop = fermion::hopping_polynomial(j, j + 1, 1.0)?.to_spin_operator(&graph)?;
        let term = models::hopping_edge(j, j + 1, 1.0)?;
        let direct = GlobalOperator::embed(&graph, term.hamiltonian().unwrap(), term.support())?;
        mapping_defect =
            mapping_defect.max(linalg::max_abs(&hop.sub(&direct)?.into_matrix()));
    }

    // Majorana pairs.
    let ws: Vec<GlobalOperator> =
        (1..=2 * n).map(|k| fermion::majorana_operator(&graph, k)).collect::<Result<_, _>>()?;
    let mut majorana_defect: f64 = 0.0;
    for (i, wi) in ws.iter().enumerate() {
        for (j, wj) in ws.iter().enumerate() {
            let acr = linalg::anticommutator(wi.matrix(), wj.matrix());
            let expect = if i == j { id.mapv(|z| z * 2.0) } else { Array2::zeros((d, d)) };
            majorana_defect = majorana_defect.max(linalg::max_abs(&(&acr - &expect)));
        }
    }

    // Hopping-chain spectrum in the one-particle sector against the
    // explicit tridiagonal matrix.
    let mut h_spin = GlobalOperator::zero(&graph)?;
    for j in 1..n {
        let term = models::hopping_edge(j, j + 1, 1.0)?;
        let embedded = GlobalOperator::embed(&graph, term.hamiltonian().unwrap(), term.support())?;
        h_spin = h_spin.add(&embedded)?;
    }
    let mut sector = Vec::new();
    for basis in 0..d {
        if (0..n).filter(|p| (basis >> (n - 1 - p)) & 1 == 0).count() == 1 {
            sector.push(basis);
        }
    }
    let mut block: Array2<C64> = Array2::zeros((n, n));
    for (r, &br) in sector.iter().enumerate() {
        for (c, &bc) in sector.iter().enumerate() {
            block[[r, c]] = h_spin.matrix()[[br, bc]];
        }
    }
    let mut one_particle: Array2<C64> = Array2::zeros((n, n));
    for j in 0..n - 1 {
        one_particle[[j, j + 1]] = C64::new(1.0, 0.0);
        one_particle[[j + 1, j]] = C64::new(1.0, 0.0);
    }
    let mut sector_eigs = linalg::eigvalsh(&block)?.to_vec();
    let mut oracle_eigs = linalg::eigvalsh(&one_particle)?.to_vec();
    sector_eigs.sort_by(f64::total_cmp);
    oracle_eigs.sort_by(f64::total_cmp);
    let spectrum_defect = sector_eigs
        .iter()
        .zip(&oracle_eigs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let rows = vec![
        vec![0.0, car_defect],
        vec![1.0, mapping_defect],
        vec![2.0, majorana_defect],
        vec![3.0, spectrum_defect],
    ];
    let checks = vec![
        Check::le("anticommutation_defect", car_defect, *tolerance),
        Check::le("mapping_defect", mapping_defect, *tolerance),
        Check::le("majorana_defect", majorana_defect, *tolerance),
        Check::le("spectrum_defect", spectrum_defect, 1e-9),
    ];
    let details = json!({
        "modes": n,
        "identity_groups": ["anticommutation", "mapping", "majorana", "spectrum"],
    });
    Ok((checks, details, rows, vec!["identity_group", "defect"]))
}
