//! Run configuration read from TOML. Unknown keys are rejected at every level.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::montecarlo::{Scheme, SimConfig};
use crate::problem::{BoundParams, Branch, ModelSpec, ScalarField};
use crate::spectral::Grid;
use crate::verify::VerifySettings;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const SCENARIOS: &[&str] = &["harmonic", "ou-kappa", "yule", "critical"];

/// TOML source of a bundled scenario.
pub fn scenario_source(name: &str) -> Option<&'static str> {
    match name {
        "harmonic" => Some(include_str!("../scenarios/harmonic.toml")),
        "ou-kappa" => Some(include_str!("../scenarios/ou-kappa.toml")),
        "yule" => Some(include_str!("../scenarios/yule.toml")),
        "critical" => Some(include_str!("../scenarios/critical.toml")),
        _ => None,
    }
}

fn default_modes() -> usize {
    6
}
fn default_tol() -> f64 {
    1e-9
}
fn default_box_threshold() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub radius: f64,
    pub points: usize,
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Largest accepted change of `λ₀`, `λ₁` when the box grows by 1.5.
    #[serde(default = "default_box_threshold")]
    pub box_threshold: f64,
}

impl GridSection {
    pub fn grid(&self, dimension: usize) -> Result<Grid> {
        Grid::new(dimension, self.radius, self.points)
    }
}

fn default_cap() -> usize {
    1_000_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub population_cap: usize,
    #[serde(default)]
    pub scheme: Scheme,
    /// Start point; the origin when omitted.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Sample times for `simulate`, `fk` and `qsd`.
    pub times: Vec<f64>,
    /// Test function for `fk`; `1` when omitted.
    #[serde(default)]
    pub phi: Option<ScalarField>,
}

impl SimSection {
    pub fn sim_config(&self) -> Result<SimConfig> {
        let cfg = SimConfig {
            dt: self.dt,
            t_max: self.t_max,
            n_paths: self.n_paths,
            seed: self.seed,
            population_cap: self.population_cap,
            scheme: self.scheme,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn start(&self, dimension: usize) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| vec![0.0; dimension])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthExponents {
    pub alpha: f64,
    pub beta: f64,
}

fn default_r0() -> f64 {
    1.0
}
fn default_ball_samples() -> usize {
    64
}
fn default_box_radius() -> f64 {
    4.0
}
fn default_quad_tol() -> f64 {
    1e-8
}

/// Sweep of `μ(H_{c,c0})` over the product of `c` and `c0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub branch: Branch,
    pub c: Vec<f64>,
    pub c0: Vec<f64>,
    #[serde(default = "default_r0")]
    pub r0: f64,
    #[serde(default = "default_ball_samples")]
    pub ball_samples: usize,
    #[serde(default = "default_box_radius")]
    pub box_radius: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
    /// When set, the model is replaced by the growth family with these exponents.
    #[serde(default)]
    pub growth_exponents: Option<GrowthExponents>,
}

impl BoundsSection {
    /// `(c, c0)` cells in row-major order; an empty sweep is an error.
    pub fn cells(&self) -> Result<Vec<BoundParams>> {
        if self.c.is_empty() || self.c0.is_empty() {
            return Err(Error::Config(
                "bounds sweep needs at least one c and one c0".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.c.len() * self.c0.len());
        for &c in &self.c {
            for &c0 in &self.c0 {
                let p = BoundParams {
                    c,
                    c0,
                    r0: self.r0,
                    ball_samples: self.ball_samples,
                    branch: self.branch,
                };
                p.validate().map_err(|e| Error::Config(e.to_string()))?;
                out.push(p);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    TotalMass,
    GapRate,
    Qsd,
    WeightedEnvelope,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TotalMassSection {
    pub x0: Vec<f64>,
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapRateSection {
    pub phi: ScalarField,
    pub times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QsdSection {
    pub times: Vec<f64>,
    pub phis: Vec<ScalarField>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedEnvelopeSection {
    pub phi: ScalarField,
    pub branch: Branch,
    #[serde(default = "default_box_radius")]
    pub box_radius: f64,
    #[serde(default = "default_quad_tol")]
    pub quad_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub total_mass: Option<TotalMassSection>,
    #[serde(default)]
    pub gap_rate: Option<GapRateSection>,
    #[serde(default)]
    pub qsd: Option<QsdSection>,
    #[serde(default)]
    pub weighted_envelope: Option<WeightedEnvelopeSection>,
    #[serde(default)]
    pub tolerances: VerifySettings,
}

impl VerifySection {
    fn validate(&self) -> Result<()> {
        if self.checks.is_empty() {
            return Err(Error::Config("verify.checks is empty".into()));
        }
        for c in &self.checks {
            let present = match c {
                CheckKind::TotalMass => self.total_mass.is_some(),
                CheckKind::GapRate => self.gap_rate.is_some(),
                CheckKind::Qsd => self.qsd.is_some(),
                CheckKind::WeightedEnvelope => self.weighted_envelope.is_some(),
            };
            if !present {
                let name = serde_json::to_string(c).unwrap_or_default();
                return Err(Error::Config(format!(
                    "check {name} selected but its section is missing"
                )));
            }
        }
        self.tolerances
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub sim: Option<SimSection>,
    #[serde(default)]
    pub bounds: Option<BoundsSection>,
    #[serde(default)]
    pub verify: Option<VerifySection>,
    #[serde(default)]
    pub output: Option<OutputSection>,
}

impl RunConfig {
    pub fn from_toml_str(src: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        cfg.model
            .validate()
            .map_err(|e| Error::Config(format!("model: {e}")))?;
        if let Some(v) = &cfg.verify {
            v.validate()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let src = std::fs::read_to_string(path)?;
        Self::from_toml_str(&src)
    }

    pub fn scenario(name: &str) -> Result<Self> {
        let src = scenario_source(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown scenario `{name}`; known: {}",
                SCENARIOS.join(", ")
            ))
        })?;
        Self::from_toml_str(src)
    }

    pub fn override_seed(&mut self, seed: u64) {
        if let Some(sim) = &mut self.sim {
            sim.seed = seed;
        }
    }

    pub fn grid_section(&self) -> Result<&GridSection> {
        self.grid
            .as_ref()
            .ok_or_else(|| Error::Config("missing [grid] section".into()))
    }

    pub fn sim_section(&self) -> Result<&SimSection> {
        self.sim
            .as_ref()
            .ok_or_else(|| Error::Config("missing [sim] section".into()))
    }

    pub fn bounds_section(&self) -> Result<&BoundsSection> {
        self.bounds
            .as_ref()
            .ok_or_else(|| Error::Config("missing [bounds] section".into()))
    }

    pub fn verify_section(&self) -> Result<&VerifySection> {
        self.verify
            .as_ref()
            .ok_or_else(|| Error::Config("missing [verify] section".into()))
    }

    /// SHA-256 of the canonical JSON form, so formatting and key order in
    /// the TOML file do not matter.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self) -> Option<u64> {
        self.sim.as_ref().map(|s| s.seed)
    }

    /// First line of every output file.
    pub fn header(&self) -> String {
        let seed = self.seed().map_or("none".to_string(), |s| s.to_string());
        format!(
            "# bslab version={ARTIFACT_VERSION} config_sha256={} seed={seed}",
            self.digest()
        )
    }
}
