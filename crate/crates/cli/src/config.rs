//! Run configuration: one JSON document per invocation.

use std::collections::BTreeMap;
use std::path::Path;

use pslab_core::cartan::{Functional, Matrix, ThetaSet};
use pslab_core::matgroup::{exterior_power_rep, symmetric_power_rep, Presentation};
use serde::{Deserialize, Serialize};

/// Version of the config layout and of the CSV column orders.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
#[error("{path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, message: impl ToString) -> Self {
        ConfigError { path: path.into(), message: message.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    pub dimension: usize,
    /// Each generator as `dimension^2` entries in row-major order.
    pub generators: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
    #[serde(default = "default_true")]
    pub assume_free: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representation: Option<Representation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<PhiSpec>,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_true() -> bool {
    true
}

/// Representation applied to every generator before the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase", tag = "kind")]
pub enum Representation {
    /// Irreducible representation of SL(2) into SL(dimension).
    SymmetricPower { dimension: usize },
    ExteriorPower { k: usize },
}

/// Linear functional given by coefficients on fundamental weights and simple roots.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSpec {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub omega: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub alpha: BTreeMap<usize, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Metric {
    Chordal,
    Flag,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Method {
    Regression,
    Series,
}

/// Command parameters. Each command reads the fields it needs and falls back
/// to its defaults for absent ones.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct Params {
    /// Word length of the ball or sphere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    /// Relative offset of `s` above the exponent estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_schedule: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shell: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spheres: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass_target: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_spread: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_word_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primitive_only: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgroup_words: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi2: Option<PhiSpec>,
    /// Upper slack for normalized exponents in the concavity run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_tolerance: Option<f64>,
    /// Group element acting in the quasi-invariance check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_word: Option<String>,
    /// Word whose attracting line is the target of the conicality run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_word: Option<String>,
    /// Explicit isotropic vector, an alternative to `boundaryWord`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_point: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct Tolerances {
    #[serde(default = "default_gap")]
    pub gap: f64,
    #[serde(default = "default_transverse")]
    pub transverse: f64,
    /// Largest tolerated fraction of orbit points where `phi` is negative.
    #[serde(default)]
    pub negative_fraction: f64,
}

fn default_gap() -> f64 {
    pslab_core::flags::DEFAULT_GAP_TOLERANCE
}

fn default_transverse() -> f64 {
    pslab_core::flags::DEFAULT_TRANSVERSE_TOLERANCE
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { gap: default_gap(), transverse: default_transverse(), negative_fraction: 0.0 }
    }
}

/// Validated objects built from a config.
#[derive(Clone, Debug)]
pub struct Setup {
    pub presentation: Presentation,
    pub theta: ThetaSet,
    pub phi: Functional,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::new(path, e.into_inner())
        })?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::new("schemaVersion", format!("expected {SCHEMA_VERSION}")));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new("", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Builds the presentation, index set and functional, reporting the
    /// offending field on failure.
    pub fn setup(&self) -> Result<Setup, ConfigError> {
        let d = self.dimension;
        if d < 2 {
            return Err(ConfigError::new("dimension", "must be at least 2"));
        }
        if self.generators.is_empty() {
            return Err(ConfigError::new("generators", "at least one generator is required"));
        }
        let mut mats = Vec::with_capacity(self.generators.len());
        for (i, g) in self.generators.iter().enumerate() {
            if g.len() != d * d {
                return Err(ConfigError::new(format!("generators[{i}]"), format!("expected {} entries, found {}", d * d, g.len())));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(ConfigError::new(format!("generators[{i}]"), "entries must be finite"));
            }
            mats.push(Matrix::from_row_slice(d, d, g));
        }
        let labels = if self.labels.is_empty() {
            (0..mats.len()).map(default_label).collect()
        } else if self.labels.len() != mats.len() {
            return Err(ConfigError::new("labels", "one label per generator"));
        } else {
            self.labels.clone()
        };
        let mut presentation =
            Presentation::new(mats, labels, self.assume_free).map_err(|e| ConfigError::new("generators", e))?;
        if let Some(rep) = &self.representation {
            presentation = match *rep {
                Representation::SymmetricPower { dimension } => {
                    if d != 2 {
                        return Err(ConfigError::new("representation", "symmetric powers need dimension 2"));
                    }
                    if dimension < 2 {
                        return Err(ConfigError::new("representation.dimension", "must be at least 2"));
                    }
                    presentation.map_generators(|a| symmetric_power_rep(a, dimension).expect("checked target dimension"))
                }
                Representation::ExteriorPower { k } => {
                    if k == 0 || k >= d {
                        return Err(ConfigError::new("representation.k", format!("must lie in 1..{d}")));
                    }
                    presentation.map_generators(|a| exterior_power_rep(a, k).expect("checked exterior degree"))
                }
            }
            .map_err(|e| ConfigError::new("representation", e))?;
        }
        let rd = presentation.dim();
        let theta = match &self.theta {
            Some(indices) => ThetaSet::new(rd, indices),
            None => ThetaSet::full(rd),
        }
        .map_err(|e| ConfigError::new("theta", e))?;
        let phi = match &self.phi {
            Some(spec) => spec.functional(rd).map_err(|e| ConfigError::new(format!("phi.{}", e.path), e.message))?,
            None => Functional::alpha(rd, 1).map_err(|e| ConfigError::new("phi", e))?,
        };
        self.check_tolerances()?;
        Ok(Setup { presentation, theta, phi })
    }

    fn check_tolerances(&self) -> Result<(), ConfigError> {
        let t = &self.tolerances;
        if !(t.gap > 0.0) {
            return Err(ConfigError::new("tolerances.gap", "must be positive"));
        }
        if !(t.transverse > 0.0) {
            return Err(ConfigError::new("tolerances.transverse", "must be positive"));
        }
        if !(0.0..1.0).contains(&t.negative_fraction) {
            return Err(ConfigError::new("tolerances.negativeFraction", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

fn default_label(i: usize) -> String {
    const NAMES: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
    match NAMES.get(i) {
        Some(&c) => (c as char).to_string(),
        None => format!("g{i}"),
    }
}

impl PhiSpec {
    pub fn functional(&self, d: usize) -> Result<Functional, ConfigError> {
        if self.omega.is_empty() && self.alpha.is_empty() {
            return Err(ConfigError::new("", "no coefficients"));
        }
        let omegas: Vec<(usize, f64)> = self.omega.iter().map(|(&k, &c)| (k, c)).collect();
        let mut phi = Functional::from_omega_coefficients(d, &omegas).map_err(|e| ConfigError::new("omega", e))?;
        for (&k, &c) in &self.alpha {
            let root = Functional::alpha(d, k).map_err(|e| ConfigError::new(format!("alpha.{k}"), e))?;
            phi = phi.plus(&root.scaled(c));
        }
        Ok(phi)
    }
}
