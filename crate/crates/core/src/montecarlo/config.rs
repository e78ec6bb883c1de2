use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

fn default_cap() -> usize {
    1_000_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    /// Number of independent paths (or branching replicas).
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default = "default_cap")]
    pub population_cap: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

impl SimConfig {
    pub fn new(dt: f64, t_max: f64, n_paths: usize, seed: u64) -> Result<Self> {
        let cfg = SimConfig {
            dt,
            t_max,
            n_paths,
            seed,
            population_cap: default_cap(),
            scheme: Scheme::EulerMaruyama,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.dt <= self.t_max) || !self.t_max.is_finite() {
            return Err(Error::InvalidInput(format!(
                "need dt <= t_max, got dt = {} and t_max = {}",
                self.dt, self.t_max
            )));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidInput("n_paths must be at least 1".into()));
        }
        if self.population_cap == 0 {
            return Err(Error::InvalidInput(
                "population_cap must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Number of Euler steps to reach `t_max`, `round(t_max / dt)`.
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn with_paths(mut self, n: usize) -> Self {
        self.n_paths = n;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }
}
