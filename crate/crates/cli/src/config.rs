//! JSON experiment configuration: schema, validation and conversion into
//! core types. Unknown keys are rejected everywhere so a config that
//! parses is a config that ran.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use holstein_core::basis::{BasisState, OscillatorConfig, TruncationPolicy};
use holstein_core::disorder::DensityKind;
use holstein_core::fit::DistanceKind;
use holstein_core::lattice::LatticeRegion;
use holstein_core::params::ModelParams;
use holstein_core::SubspaceSelector;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub region: RegionSection,
    pub truncation: TruncationSection,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub workers: usize,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "D")]
    pub dimension: usize,
    pub gamma: f64,
    pub omega: f64,
    pub beta_re: f64,
    pub beta_im: f64,
    pub v_plus: f64,
    pub density: DensityKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSection {
    /// Box extents per axis; mutually exclusive with `sites`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec<usize>>,
    /// Explicit site list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<Vec<i64>>>,
    /// Sites removed from the box.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude: Vec<Vec<i64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSection {
    pub k_max: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_site_cap: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_states: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
        }
    }
}

fn default_out_dir() -> String {
    "holstein-out".to_string()
}

/// One basis state in config form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub site: Vec<i64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub excitations: Vec<ExcitationSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationSpec {
    pub site: Vec<i64>,
    pub count: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub row: StateSpec,
    pub col: StateSpec,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexSpec {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl From<ComplexSpec> for Complex64 {
    fn from(z: ComplexSpec) -> Self {
        Complex64::new(z.re, z.im)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentKind {
    /// Exact-identity suite.
    Verify {
        /// Multiplies every tolerance; < 1 tightens.
        #[serde(default = "one")]
        tolerance_scale: f64,
        /// Fault-injection hook: flips the hopping sign so the
        /// band-containment check must fail.
        #[serde(default)]
        inject_sign_flip: bool,
    },
    /// Dump the ordered basis enumeration.
    BasisInfo {},
    /// Green's-function probe records for explicit pairs.
    Greens {
        pairs: Vec<PairSpec>,
        z: ComplexSpec,
        #[serde(default)]
        shell_k: u32,
        #[serde(default)]
        selector: SelectorSpec,
        #[serde(default)]
        export_matrix: bool,
    },
    /// Disorder-averaged fractional moments.
    Sweep {
        pairs: Vec<PairSpec>,
        energies: Vec<ComplexSpec>,
        s: f64,
        realizations: u32,
    },
    /// Sweep plus exponential decay fit.
    Fit {
        pairs: Vec<PairSpec>,
        energies: Vec<ComplexSpec>,
        s: f64,
        realizations: u32,
        distance: DistanceSpec,
        #[serde(default)]
        shell_k: u32,
    },
    /// Disorder-averaged eigenfunction correlators with the envelope check.
    Correlator {
        pairs: Vec<PairSpec>,
        band_k: u32,
        realizations: u32,
        #[serde(default = "default_t_max")]
        t_max: f64,
        #[serde(default = "default_time_samples")]
        time_samples: usize,
    },
    /// Gap-decay probe at an energy inside an excluded band.
    CtProbe {
        exclude_shell: u32,
        energy: f64,
        #[serde(default)]
        epsilon: f64,
        pairs: Vec<PairSpec>,
    },
}

fn one() -> f64 {
    1.0
}

fn default_t_max() -> f64 {
    200.0
}

fn default_time_samples() -> usize {
    64
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Verify { .. } => "verify",
            ExperimentKind::BasisInfo {} => "basis-info",
            ExperimentKind::Greens { .. } => "greens",
            ExperimentKind::Sweep { .. } => "sweep",
            ExperimentKind::Fit { .. } => "fit",
            ExperimentKind::Correlator { .. } => "correlator",
            ExperimentKind::CtProbe { .. } => "ct-probe",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SelectorSpec {
    #[default]
    Full,
    BandIn {
        k: u32,
    },
    BandOut {
        k: u32,
    },
    Position {
        sites: Vec<Vec<i64>>,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceSpec {
    Hop,
    Upsilon,
    UpsilonPlusShell,
    WalkPlusFock,
}

impl From<DistanceSpec> for DistanceKind {
    fn from(d: DistanceSpec) -> Self {
        match d {
            DistanceSpec::Hop => DistanceKind::Hop,
            DistanceSpec::Upsilon => DistanceKind::Upsilon,
            DistanceSpec::UpsilonPlusShell => DistanceKind::UpsilonPlusShell,
            DistanceSpec::WalkPlusFock => DistanceKind::WalkPlusFock,
        }
    }
}

/// A config error with a field-level message; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| ConfigError(format!("schema violation: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model_params()
            .validate()
            .map_err(|e| ConfigError(format!("model: {e}")))?;
        match (&self.region.extent, &self.region.sites) {
            (Some(_), Some(_)) => {
                return Err(ConfigError(
                    "region: give either extent or sites, not both".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError("region: needs extent or sites".into()))
            }
            _ => {}
        }
        if self.region.sites.is_some() && !self.region.exclude.is_empty() {
            return Err(ConfigError(
                "region: exclude only applies to box extents".into(),
            ));
        }
        match &self.experiment {
            ExperimentKind::Sweep { s, realizations, pairs, energies } => {
                if !(0.0 < *s && *s < 1.0) {
                    return Err(ConfigError(format!(
                        "experiment.s: fractional power must lie in (0, 1), got {s}"
                    )));
                }
                if *realizations == 0 {
                    return Err(ConfigError("experiment.realizations: must be >= 1".into()));
                }
                if pairs.is_empty() || energies.is_empty() {
                    return Err(ConfigError(
                        "experiment: needs at least one pair and one energy".into(),
                    ));
                }
            }
            ExperimentKind::Fit { s, realizations, pairs, energies, .. } => {
                if !(0.0 < *s && *s < 1.0) {
                    return Err(ConfigError(format!(
                        "experiment.s: fractional power must lie in (0, 1), got {s}"
                    )));
                }
                if *realizations == 0 {
                    return Err(ConfigError("experiment.realizations: must be >= 1".into()));
                }
                if pairs.is_empty() || energies.is_empty() {
                    return Err(ConfigError(
                        "experiment: needs at least one pair and one energy".into(),
                    ));
                }
            }
            ExperimentKind::Correlator { realizations, pairs, .. } => {
                if *realizations == 0 {
                    return Err(ConfigError("experiment.realizations: must be >= 1".into()));
                }
                if pairs.is_empty() {
                    return Err(ConfigError("experiment.pairs: must not be empty".into()));
                }
            }
            ExperimentKind::Verify { tolerance_scale, .. }
                if !(tolerance_scale.is_finite() && *tolerance_scale > 0.0) =>
            {
                return Err(ConfigError(
                    "experiment.tolerance_scale: must be positive".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            dimension: self.model.dimension,
            gamma: self.model.gamma,
            omega: self.model.omega,
            beta: Complex64::new(self.model.beta_re, self.model.beta_im),
            v_plus: self.model.v_plus,
            density: self.model.density,
        }
    }

    pub fn build_region(&self) -> Result<Arc<LatticeRegion>, ConfigError> {
        let region = if let Some(extent) = &self.region.extent {
            if extent.len() != self.model.dimension {
                return Err(ConfigError(format!(
                    "region.extent: {} axes but model.D = {}",
                    extent.len(),
                    self.model.dimension
                )));
            }
            LatticeRegion::boxed(extent, &self.region.exclude)
        } else {
            LatticeRegion::from_sites(
                self.model.dimension,
                self.region.sites.clone().unwrap_or_default(),
            )
        };
        region
            .map(Arc::new)
            .map_err(|e| ConfigError(format!("region: {e}")))
    }

    pub fn truncation_policy(&self) -> TruncationPolicy {
        let mut policy = TruncationPolicy::new(self.truncation.k_max);
        if let Some(cap) = self.truncation.per_site_cap {
            policy = policy.with_per_site_cap(cap);
        }
        if let Some(max) = self.truncation.max_states {
            policy.max_states = max;
        }
        policy
    }

    /// Canonical serialization plus its hash; workers and output paths are
    /// execution details and stay out of the hash.
    pub fn config_hash(&self) -> String {
        use sha1::{Digest, Sha1};
        #[derive(Serialize)]
        struct Hashed<'a> {
            model: &'a ModelSection,
            region: &'a RegionSection,
            truncation: &'a TruncationSection,
            experiment: &'a ExperimentKind,
            seed: u64,
        }
        let canonical = serde_json::to_vec(&Hashed {
            model: &self.model,
            region: &self.region,
            truncation: &self.truncation,
            experiment: &self.experiment,
            seed: self.seed,
        })
        .expect("config serializes");
        let mut hasher = Sha1::new();
        hasher.update(&canonical);
        format!("{:x}", hasher.finalize())
    }
}

pub fn resolve_state(
    region: &LatticeRegion,
    spec: &StateSpec,
) -> Result<BasisState, ConfigError> {
    let site = region
        .site_id(&spec.site)
        .map_err(|e| ConfigError(format!("state site: {e}")))?;
    let counts = spec
        .excitations
        .iter()
        .map(|e| {
            region
                .site_id(&e.site)
                .map(|id| (id, e.count))
                .map_err(|err| ConfigError(format!("excitation site: {err}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BasisState::new(site, OscillatorConfig::from_counts(counts)))
}

pub fn resolve_pairs(
    region: &LatticeRegion,
    pairs: &[PairSpec],
) -> Result<Vec<(BasisState, BasisState)>, ConfigError> {
    pairs
        .iter()
        .map(|p| Ok((resolve_state(region, &p.row)?, resolve_state(region, &p.col)?)))
        .collect()
}

pub fn resolve_selector(
    region: &LatticeRegion,
    spec: &SelectorSpec,
) -> Result<SubspaceSelector, ConfigError> {
    Ok(match spec {
        SelectorSpec::Full => SubspaceSelector::Full,
        SelectorSpec::BandIn { k } => SubspaceSelector::BandIn(*k),
        SelectorSpec::BandOut { k } => SubspaceSelector::BandOut(*k),
        SelectorSpec::Position { sites } => {
            let ids = sites
                .iter()
                .map(|s| {
                    region
                        .site_id(s)
                        .map_err(|e| ConfigError(format!("selector site: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            SubspaceSelector::Position(ids)
        }
    })
}
