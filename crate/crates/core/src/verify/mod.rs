//! Cross-checks of spectral predictions against Monte Carlo estimates and
//! closed forms. Every check returns a [`ConvergenceReport`] whose verdict
//! can be recomputed from the report alone.
//!
//! Sup-norms over space are taken as maxima over grid nodes.

pub mod envelope;
pub mod gap;
pub mod mass;
pub mod qsd;
pub mod report;

pub use envelope::{check_weighted_envelope, weighted_envelope_report};
pub use gap::{check_gap_rate, dominant_mode};
pub use mass::check_total_mass;
pub use qsd::{check_qsd, qsd_density};
pub use report::{
    combine_verdicts, Comparison, ConvergenceReport, FittedConstants, Guard, SlopeCheck, Verdict,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and switches shared by the checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySettings {
    /// Monte Carlo comparisons allow this many standard errors.
    pub se_factor: f64,
    /// Absolute floor for the total-mass limit comparison.
    pub mass_abs_tol: f64,
    pub mass_slope_rel_tol: f64,
    pub mass_slope_abs_tol: f64,
    pub max_capped_fraction: f64,
    /// Also estimate the mass by the weighted single-path estimator.
    pub fk_cross_check: bool,
    pub gap_slope_rel_tol: f64,
    /// Below this first-time error the gap check has nothing to fit.
    pub trivial_floor: f64,
    /// Fit only errors above `floor_factor` times the round-off floor.
    pub floor_factor: f64,
    pub spectral_tol: f64,
    pub min_ess_fraction: f64,
    /// Added to the computed `λ₀` before predictions are formed. Nonzero
    /// only to exercise the failure path.
    pub lambda0_offset: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        VerifySettings {
            se_factor: 3.0,
            mass_abs_tol: 5e-3,
            mass_slope_rel_tol: 0.05,
            mass_slope_abs_tol: 0.0,
            max_capped_fraction: 0.01,
            fk_cross_check: true,
            gap_slope_rel_tol: 0.1,
            trivial_floor: 1e-13,
            floor_factor: 10.0,
            spectral_tol: 1e-4,
            min_ess_fraction: 0.01,
            lambda0_offset: 0.0,
        }
    }
}

impl VerifySettings {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("se_factor", self.se_factor),
            ("mass_abs_tol", self.mass_abs_tol),
            ("mass_slope_rel_tol", self.mass_slope_rel_tol),
            ("mass_slope_abs_tol", self.mass_slope_abs_tol),
            ("max_capped_fraction", self.max_capped_fraction),
            ("gap_slope_rel_tol", self.gap_slope_rel_tol),
            ("trivial_floor", self.trivial_floor),
            ("floor_factor", self.floor_factor),
            ("spectral_tol", self.spectral_tol),
            ("min_ess_fraction", self.min_ess_fraction),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        if !self.lambda0_offset.is_finite() {
            return Err(Error::InvalidInput("lambda0_offset must be finite".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("no times to check".into()));
    }
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidInput("times must be finite and >= 0".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "times must be strictly increasing".into(),
        ));
    }
    Ok(())
}
