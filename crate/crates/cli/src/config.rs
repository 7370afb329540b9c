//! TOML experiment configuration: schema, parsing, and validation.
//!
//! A configuration names the run, picks a model, sets evolution controls,
//! and selects one experiment with its thresholds. Unknown keys are
//! rejected so typos fail loudly instead of silently using defaults.

use std::collections::BTreeSet;
use std::sync::Arc;

use anyhow::{bail, Context};
use serde::Deserialize;

use conelab::graph::InteractionGraph;
use conelab::liouvillian::LocalLiouvillian;
use conelab::models;
use conelab::schedule::{SchedulePiece, TimeSchedule};

/// A parsed experiment configuration.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Short identifier; output files are named after it.
    pub name: String,
    /// One-line human description.
    #[serde(default)]
    pub description: String,
    /// The lattice model to evolve.
    pub model: ModelSpec,
    /// Evolution interval and integrator controls.
    #[serde(default)]
    pub run: RunSpec,
    /// The experiment to perform and its verdict thresholds.
    pub experiment: ExperimentSpec,
}

/// Model selection.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Heisenberg exchange on a chain with on-site dephasing.
    HeisenbergDephasingChain {
        sites: usize,
        coupling: f64,
        dephasing: f64,
        /// Optional schedule multiplying the two-site terms.
        #[serde(default)]
        schedule: Vec<PieceSpec>,
    },
    /// Fermionic nearest-neighbor hopping in spin form, with dephasing.
    HoppingDephasingChain {
        sites: usize,
        amplitude: f64,
        dephasing: f64,
        #[serde(default)]
        schedule: Vec<PieceSpec>,
    },
    /// Random Hermitian couplings and jump operators on every chain edge
    /// and site, drawn from a seeded generator.
    RandomChain { sites: usize, seed: u64 },
}

/// One polynomial schedule piece, coefficients in powers of (t - start).
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub start: f64,
    pub end: f64,
    pub coefficients: Vec<f64>,
}

/// Evolution interval and integrator controls.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Start time of the evolution.
    #[serde(default)]
    pub start: f64,
    /// End time of the evolution.
    #[serde(default = "default_stop")]
    pub stop: f64,
    /// Integrator accuracy per unit time.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Prefactor of the locality envelopes.
    #[serde(default = "default_prefactor")]
    pub envelope_prefactor: f64,
}

fn default_stop() -> f64 {
    0.1
}

fn default_tolerance() -> f64 {
    1e-10
}

fn default_prefactor() -> f64 {
    8.0
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            start: 0.0,
            stop: default_stop(),
            tolerance: default_tolerance(),
            envelope_prefactor: default_prefactor(),
        }
    }
}

/// Pauli axis named in configuration files.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    /// The axis letter used by the operator constructors.
    pub fn letter(self) -> char {
        match self {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        }
    }
}

fn default_axis_x() -> Axis {
    Axis::X
}

fn default_axis_z() -> Axis {
    Axis::Z
}

/// Spatial-dimension reporting: estimate both exponent and constant, or
/// fix the exponent and report the constant.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum SpatialDimensionSpec {
    /// Fixed growth exponent.
    Fixed(usize),
    /// The literal string `auto`.
    Auto(String),
}

impl Default for SpatialDimensionSpec {
    fn default() -> Self {
        SpatialDimensionSpec::Auto("auto".into())
    }
}

fn default_max_slope() -> f64 {
    -0.8
}

fn default_min_r_squared() -> f64 {
    0.98
}

fn default_max_covariance() -> f64 {
    1e-3
}

fn default_start_covariance() -> f64 {
    1e-12
}

fn default_order_band() -> (f64, f64) {
    (-1.3, -0.7)
}

fn default_pairs() -> usize {
    20
}

fn default_seed() -> u64 {
    7
}

fn default_max_gap() -> f64 {
    1e-8
}

fn default_generators() -> usize {
    5
}

fn default_min_choi() -> f64 {
    -1e-9
}

fn default_max_trace_defect() -> f64 {
    1e-9
}

fn default_true() -> bool {
    true
}

fn default_modes() -> usize {
    5
}

fn default_identity_tolerance() -> f64 {
    1e-12
}

fn default_full_region_tolerance() -> f64 {
    1e-9
}

fn default_samples() -> usize {
    5
}

/// Experiment selection with verdict thresholds.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentSpec {
    /// Evolve one observable backward and record commutator norms against
    /// probes at increasing distance.
    LeakageVsDistance {
        observable_site: usize,
        #[serde(default = "default_axis_x")]
        observable_axis: Axis,
        probe_sites: Vec<usize>,
        #[serde(default = "default_axis_z")]
        probe_axis: Axis,
        /// Use fermionic density observables instead of Pauli matrices;
        /// distances are then measured between mode supports.
        #[serde(default)]
        fermionic: bool,
        #[serde(default = "default_max_slope")]
        max_slope: f64,
        #[serde(default = "default_min_r_squared")]
        min_r_squared: f64,
        #[serde(default)]
        spatial_dimension: SpatialDimensionSpec,
    },
    /// Evolve an observable on the full graph and on nested regions and
    /// record the restriction error per buffer distance.
    TruncationVsBuffer {
        support_site: usize,
        #[serde(default = "default_axis_x")]
        observable_axis: Axis,
        /// Ball radii around the support site, ascending.
        buffers: Vec<usize>,
        #[serde(default = "default_max_slope")]
        max_slope: f64,
        #[serde(default = "default_full_region_tolerance")]
        full_region_tolerance: f64,
    },
    /// Evolve a product state and record the covariance of two separated
    /// observables over time.
    CovarianceCone {
        site_a: usize,
        #[serde(default = "default_axis_x")]
        axis_a: Axis,
        site_b: usize,
        #[serde(default = "default_axis_z")]
        axis_b: Axis,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_max_covariance")]
        max_covariance: f64,
        #[serde(default = "default_start_covariance")]
        start_covariance: f64,
    },
    /// Compare the term-by-term splitting against the integrated
    /// reference over a range of step counts and fit the order.
    TrotterOrder {
        observable_site: usize,
        #[serde(default = "default_axis_z")]
        observable_axis: Axis,
        steps: Vec<usize>,
        #[serde(default = "default_order_band")]
        order_band: (f64, f64),
    },
    /// Check that state-picture and observable-picture expectations agree
    /// on random pairs.
    PictureDuality {
        #[serde(default = "default_pairs")]
        pairs: usize,
        #[serde(default = "default_seed")]
        seed: u64,
        #[serde(default = "default_max_gap")]
        max_gap: f64,
    },
    /// Verify complete positivity and trace preservation of propagators
    /// of random generators, with a transpose-map negative control.
    CptpAudit {
        #[serde(default = "default_generators")]
        generators: usize,
        #[serde(default = "default_min_choi")]
        min_choi_eigenvalue: f64,
        #[serde(default = "default_max_trace_defect")]
        max_trace_defect: f64,
        #[serde(default = "default_true")]
        negative_control: bool,
    },
    /// Exact identities of the spin image of the fermionic algebra.
    JwIdentitySuite {
        #[serde(default = "default_modes")]
        modes: usize,
        #[serde(default = "default_identity_tolerance")]
        tolerance: f64,
    },
}

impl ExperimentSpec {
    /// Stable lowercase name of the experiment kind.
    pub fn kind_name(&self) -> &'static str {
        match self {
            ExperimentSpec::LeakageVsDistance { .. } => "leakage_vs_distance",
            ExperimentSpec::TruncationVsBuffer { .. } => "truncation_vs_buffer",
            ExperimentSpec::CovarianceCone { .. } => "covariance_cone",
            ExperimentSpec::TrotterOrder { .. } => "trotter_order",
            ExperimentSpec::PictureDuality { .. } => "picture_duality",
            ExperimentSpec::CptpAudit { .. } => "cptp_audit",
            ExperimentSpec::JwIdentitySuite { .. } => "jw_identity_suite",
        }
    }
}

/// Parses a configuration from TOML text.
pub fn parse(text: &str) -> anyhow::Result<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(text).context("parsing configuration")?;
    Ok(config)
}

fn schedule_from_pieces(pieces: &[PieceSpec]) -> anyhow::Result<Option<TimeSchedule>> {
    if pieces.is_empty() {
        return Ok(None);
    }
    let pieces = pieces
        .iter()
        .map(|p| SchedulePiece {
            start: p.start,
            end: p.end,
            coefficients: p.coefficients.clone(),
        })
        .collect();
    Ok(Some(TimeSchedule::piecewise(pieces).context("building schedule")?))
}

impl ModelSpec {
    /// Number of chain sites.
    pub fn sites(&self) -> usize {
        match *self {
            ModelSpec::HeisenbergDephasingChain { sites, .. }
            | ModelSpec::HoppingDephasingChain { sites, .. }
            | ModelSpec::RandomChain { sites, .. } => sites,
        }
    }

    /// Builds the interaction graph and generator, with an optional seed
    /// override for the random model.
    pub fn build(
        &self,
        seed_override: Option<u64>,
    ) -> anyhow::Result<(Arc<InteractionGraph>, LocalLiouvillian)> {
        match self {
            ModelSpec::HeisenbergDephasingChain { sites, coupling, dephasing, schedule } => {
                let graph = models::chain_graph(*sites)?;
                let sched = schedule_from_pieces(schedule)?;
                let mut terms = Vec::new();
                for j in 1..*sites {
                    let mut term = models::heisenberg_edge(j, j + 1, *coupling)?;
                    if let Some(s) = &sched {
                        term = term.with_schedule(s.clone());
                    }
                    terms.push(term);
                }
                for j in 1..=*sites {
                    terms.push(models::dephasing_site(j, *dephasing)?);
                }
                let liou = LocalLiouvillian::assemble(&graph, terms)?;
                Ok((graph, liou))
            }
            ModelSpec::HoppingDephasingChain { sites, amplitude, dephasing, schedule } => {
                let graph = models::chain_graph(*sites)?;
                let sched = schedule_from_pieces(schedule)?;
                let mut terms = Vec::new();
                for j in 1..*sites {
                    let mut term = models::hopping_edge(j, j + 1, *amplitude)?;
                    if let Some(s) = &sched {
                        term = term.with_schedule(s.clone());
                    }
                    terms.push(term);
                }
                for j in 1..=*sites {
                    terms.push(models::dephasing_site(j, *dephasing)?);
                }
                let liou = LocalLiouvillian::assemble(&graph, terms)?;
                Ok((graph, liou))
            }
            ModelSpec::RandomChain { sites, seed } => {
                let graph = models::chain_graph(*sites)?;
                let liou =
                    models::random_liouvillian(&graph, seed_override.unwrap_or(*seed))?;
                Ok((graph, liou))
            }
        }
    }
}

/// Structural validation beyond what the type system enforces: site
/// references, interval ordering, list shapes, threshold sanity. Builds
/// the model once to surface assembly errors.
pub fn validate(config: &ExperimentConfig) -> anyhow::Result<()> {
    if config.name.is_empty()
        || !config
            .name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
    {
        bail!("name must be non-empty and use only [A-Za-z0-9_-]");
    }
    let run = &config.run;
    if !(run.stop > run.start) {
        bail!("run.stop must exceed run.start");
    }
    if !(run.tolerance > 0.0 && run.tolerance.is_finite()) {
        bail!("run.tolerance must be positive and finite");
    }
    if !(run.envelope_prefactor > 0.0) {
        bail!("run.envelope_prefactor must be positive");
    }
    let (graph, _) = config.model.build(None).context("building the model")?;
    let sites = config.model.sites();
    let in_graph = |v: usize| graph.vertices().contains(&v);

    match &config.experiment {
        ExperimentSpec::LeakageVsDistance {
            observable_site,
            probe_sites,
            fermionic,
            min_r_squared,
            spatial_dimension,
            ..
        } => {
            if !in_graph(*observable_site) {
                bail!("observable_site {observable_site} is not a chain site");
            }
            for &p in probe_sites {
                if !in_graph(p) {
                    bail!("probe site {p} is not a chain site");
                }
                if p == *observable_site {
                    bail!("probe site {p} coincides with the observable site");
                }
            }
            if probe_sites.len() < 2 {
                bail!("need at least two probes to fit a decay");
            }
            if *fermionic && !matches!(config.model, ModelSpec::HoppingDephasingChain { .. })
            {
                bail!("fermionic observables require the hopping model");
            }
            if !(0.0..=1.0).contains(min_r_squared) {
                bail!("min_r_squared must lie in [0, 1]");
            }
            if let SpatialDimensionSpec::Auto(word) = spatial_dimension {
                if word != "auto" {
                    bail!("spatial_dimension must be an integer or the string \"auto\"");
                }
            }
        }
        ExperimentSpec::TruncationVsBuffer { support_site, buffers, .. } => {
            if !in_graph(*support_site) {
                bail!("support_site {support_site} is not a chain site");
            }
            if buffers.len() < 2 {
                bail!("need at least two buffers");
            }
            if buffers.windows(2).any(|w| w[1] <= w[0]) {
                bail!("buffers must be strictly ascending");
            }
            if buffers[0] == 0 {
                bail!("buffers must be positive");
            }
        }
        ExperimentSpec::CovarianceCone { site_a, site_b, samples, .. } => {
            if !in_graph(*site_a) || !in_graph(*site_b) {
                bail!("covariance sites must be chain sites");
            }
            if site_a == site_b {
                bail!("covariance sites must differ");
            }
            if *samples < 2 {
                bail!("need at least two samples");
            }
        }
        ExperimentSpec::TrotterOrder { observable_site, steps, order_band, .. } => {
            if !in_graph(*observable_site) {
                bail!("observable_site {observable_site} is not a chain site");
            }
            if steps.len() < 2 {
                bail!("need at least two step counts");
            }
            if steps.windows(2).any(|w| w[1] <= w[0]) || steps[0] == 0 {
                bail!("steps must be positive and strictly ascending");
            }
            if order_band.0 >= order_band.1 {
                bail!("order_band must be (low, high) with low < high");
            }
        }
        ExperimentSpec::PictureDuality { pairs, max_gap, .. } => {
            if *pairs == 0 {
                bail!("pairs must be positive");
            }
            if sites > 6 {
                bail!("picture duality materializes random operators; use at most 6 sites");
            }
            if *max_gap <= 0.0 {
                bail!("max_gap must be positive");
            }
        }
        ExperimentSpec::CptpAudit { generators, .. } => {
            if !matches!(config.model, ModelSpec::RandomChain { .. }) {
                bail!("the audit draws its generators from the random chain model");
            }
            if *generators == 0 {
                bail!("generators must be positive");
            }
            if sites > 4 {
                bail!("the audit materializes propagator matrices; use at most 4 sites");
            }
        }
        ExperimentSpec::JwIdentitySuite { modes, tolerance } => {
            if !(2..=8).contains(modes) {
                bail!("modes must lie in 2..=8");
            }
            if *tolerance <= 0.0 {
                bail!("tolerance must be positive");
            }
        }
    }
    Ok(())
}

/// Vertices within the given hyperedge-path distance of a site.
pub fn ball(
    graph: &InteractionGraph,
    center: usize,
    radius: usize,
) -> anyhow::Result<BTreeSet<usize>> {
    let center_set = BTreeSet::from([center]);
    let mut out = BTreeSet::new();
    for &v in graph.vertices() {
        match graph.distance(&center_set, &BTreeSet::from([v]))? {
            conelab::graph::Distance::Finite(d) if d <= radius => {
                out.insert(v);
            }
            _ => {}
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "demo"

[model]
kind = "heisenberg_dephasing_chain"
sites = 4
coupling = 1.0
dephasing = 0.1

[experiment]
kind = "leakage_vs_distance"
observable_site = 1
probe_sites = [3, 4]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.name, "demo");
        assert_eq!(cfg.run.stop, 0.1);
        assert_eq!(cfg.run.tolerance, 1e-10);
        assert_eq!(cfg.experiment.kind_name(), "leakage_vs_distance");
        validate(&cfg).unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("name = \"demo\"", "name = \"demo\"\nbogus = 3");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn bad_site_references_fail_validation() {
        let text = MINIMAL.replace("probe_sites = [3, 4]", "probe_sites = [3, 9]");
        let cfg = parse(&text).unwrap();
        let err = validate(&cfg).unwrap_err().to_string();
        assert!(err.contains("probe site 9"), "{err}");
    }

    #[test]
    fn schedule_pieces_build_a_piecewise_schedule() {
        let text = r#"
name = "scheduled"

[model]
kind = "hopping_dephasing_chain"
sites = 3
amplitude = 1.0
dephasing = 0.2
schedule = [
  { start = 0.0, end = 0.1, coefficients = [1.0, 2.0] },
  { start = 0.1, end = 0.5, coefficients = [0.6, -1.5] },
]

[run]
stop = 0.2

[experiment]
kind = "picture_duality"
pairs = 3
"#;
        let cfg = parse(text).unwrap();
        validate(&cfg).unwrap();
        let (_, liou) = cfg.model.build(None).unwrap();
        assert_eq!(liou.breakpoints(), vec![0.0, 0.1, 0.5]);
    }

    #[test]
    fn interval_and_threshold_sanity_is_enforced() {
        let text = r#"
name = "demo"

[model]
kind = "heisenberg_dephasing_chain"
sites = 4
coupling = 1.0
dephasing = 0.1

[run]
start = 0.3
stop = 0.1

[experiment]
kind = "leakage_vs_distance"
observable_site = 1
probe_sites = [3, 4]
"#;
        let cfg = parse(text).unwrap();
        assert!(validate(&cfg).is_err());
    }

    #[test]
    fn fermionic_flag_requires_the_hopping_model() {
        let text = MINIMAL.replace(
            "probe_sites = [3, 4]",
            "probe_sites = [3, 4]\nfermionic = true",
        );
        let cfg = parse(&text).unwrap();
        let err = validate(&cfg).unwrap_err().to_string();
        assert!(err.contains("hopping"), "{err}");
    }

    #[test]
    fn ball_collects_vertices_within_radius() {
        let graph = models::chain_graph(7).unwrap();
        let b = ball(&graph, 4, 2).unwrap();
        assert_eq!(b, (2..=6).collect());
    }
}
