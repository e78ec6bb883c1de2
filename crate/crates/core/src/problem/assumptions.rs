//! Sampled evidence for the standing assumptions on `K~` and `V`.
//!
//! Limits at infinity cannot be checked numerically. The report records
//! trends over user-supplied radii and labels the result `consistent`,
//! `inconsistent`, or `inconclusive`, never "proved".

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::bounds::{ball_infimum_with, unit_sphere_points, BallStencil, Branch};
use super::model::ModelSpec;
use super::quadrature::{integrate_decaying, QuadOutcome, QuadStatus};
use crate::error::{Error, Result};
use crate::stats::linear_fit;

const SPHERE_POINTS: usize = 64;
const BALL_SAMPLES: usize = 64;
const QUAD_TOL: f64 = 1e-6;

/// Log-log slope bands used to classify a sampled ratio sequence.
const SLOPE_FLAT: f64 = 0.25;
const SLOPE_STEEP: f64 = 0.75;
const NEGLIGIBLE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectedBranch {
    Ess,
    Ess2,
    Neither,
    /// At least one ratio trend sits between the decision bands.
    Undecided,
}

impl DetectedBranch {
    pub fn branch(self) -> Option<Branch> {
        match self {
            DetectedBranch::Ess => Some(Branch::Ess),
            DetectedBranch::Ess2 => Some(Branch::Ess2),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Suprema over the sphere of radius `radius` of the four ratios whose
/// limsups decide the growth regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioTrace {
    pub radius: f64,
    /// `V_-(x) / |x|^2`, must tend to 0 (ess).
    pub vminus_over_r2: f64,
    /// `V_-(x) / inf_B K~`, must stay bounded (ess).
    pub vminus_over_inf: f64,
    /// `|x|^2 / inf_B K~`, must stay bounded (ess2).
    pub r2_over_inf: f64,
    /// `V_-(x) / (|x| (inf_B K~)^{1/2})`, must tend to 0 (ess2).
    pub vminus_over_r_sqrt_inf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaIntegral {
    pub theta: f64,
    pub outcome: QuadOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub radii_checked: Vec<f64>,
    pub ktilde_min_at_radius: Vec<f64>,
    pub theta_integrals: Vec<ThetaIntegral>,
    pub branch_detected: DetectedBranch,
    pub ratio_traces: Vec<RatioTrace>,
    pub verdict: Verdict,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Trend {
    Holds,
    Fails,
    Undecided,
}

fn tail<T: Copy>(v: &[T]) -> &[T] {
    let k = (v.len() / 2 + 1).max(3).min(v.len());
    &v[v.len() - k..]
}

fn log_slope(radii: &[f64], values: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(r, v)| (r.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(linear_fit(&xs, &ys).slope)
}

/// `limsup < ∞` judged from the tail of the sequence.
fn bounded(radii: &[f64], values: &[f64]) -> Trend {
    let (r, v) = (tail(radii), tail(values));
    if v.iter().any(|x| !x.is_finite()) {
        return Trend::Fails;
    }
    if v.iter().all(|x| x.abs() <= NEGLIGIBLE) {
        return Trend::Holds;
    }
    match log_slope(r, v) {
        Some(s) if s <= SLOPE_FLAT => Trend::Holds,
        Some(s) if s >= SLOPE_STEEP => Trend::Fails,
        Some(_) => Trend::Undecided,
        None => Trend::Holds,
    }
}

/// `limsup = 0` judged from the tail of the sequence.
fn vanishing(radii: &[f64], values: &[f64]) -> Trend {
    let (r, v) = (tail(radii), tail(values));
    if v.iter().any(|x| !x.is_finite()) {
        return Trend::Fails;
    }
    if v.iter().all(|x| x.abs() <= NEGLIGIBLE) {
        return Trend::Holds;
    }
    match log_slope(r, v) {
        Some(s) if s <= -SLOPE_STEEP => Trend::Holds,
        Some(s) if s >= -SLOPE_FLAT => Trend::Fails,
        Some(_) => Trend::Undecided,
        None => Trend::Undecided,
    }
}

fn combine(a: Trend, b: Trend) -> Trend {
    match (a, b) {
        (Trend::Fails, _) | (_, Trend::Fails) => Trend::Fails,
        (Trend::Holds, Trend::Holds) => Trend::Holds,
        _ => Trend::Undecided,
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Samples `K~` on spheres of the given radii, integrates `e^{-θ K~}`, and
/// classifies the growth regime from the sampled ratio sequences.
pub fn check_assumptions(
    spec: &ModelSpec,
    radii: &[f64],
    thetas: &[f64],
) -> Result<AssumptionReport> {
    if radii.len() < 4 || radii.windows(2).any(|w| w[1] <= w[0]) || radii[0] <= 0.0 {
        return Err(Error::InvalidInput(
            "radii must be positive, strictly increasing, with at least 4 entries".into(),
        ));
    }
    if thetas.is_empty() || thetas.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidInput(
            "thetas must be a nonempty list of positive reals".into(),
        ));
    }
    let dim = spec.dimension;
    let directions = unit_sphere_points(dim, SPHERE_POINTS);
    let stencil = BallStencil::new(dim, BALL_SAMPLES);
    let mut diagnostics = Vec::new();

    let mut kmin = Vec::with_capacity(radii.len());
    let mut kmax_last = f64::NEG_INFINITY;
    let mut traces = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut trace = RatioTrace {
            radius: r,
            vminus_over_r2: 0.0,
            vminus_over_inf: 0.0,
            r2_over_inf: 0.0,
            vminus_over_r_sqrt_inf: 0.0,
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for dir in &directions {
            let x: Vec<f64> = dir.iter().map(|d| d * r).collect();
            let k = spec.effective_potential(&x)?;
            lo = lo.min(k);
            hi = hi.max(k);
            let inf = ball_infimum_with(spec, &stencil, &x)?;
            let vminus = (-spec.potential_value(&x)).max(0.0);
            let r2 = r * r;
            trace.vminus_over_r2 = trace.vminus_over_r2.max(vminus / r2);
            trace.vminus_over_inf = trace.vminus_over_inf.max(ratio(vminus, inf));
            trace.r2_over_inf = trace.r2_over_inf.max(ratio(r2, inf));
            let root = if inf > 0.0 { r * inf.sqrt() } else { 0.0 };
            trace.vminus_over_r_sqrt_inf = trace.vminus_over_r_sqrt_inf.max(ratio(vminus, root));
        }
        kmin.push(lo);
        kmax_last = hi;
        traces.push(trace);
    }

    let mut theta_integrals = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let mut failure = None;
        let outcome = integrate_decaying(dim, 1.0, QUAD_TOL, 10, |x| {
            match spec.effective_potential(x) {
                Ok(k) => -theta * k,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        theta_integrals.push(ThetaIntegral { theta, outcome });
    }

    let column = |f: fn(&RatioTrace) -> f64| traces.iter().map(f).collect::<Vec<_>>();
    let ess = combine(
        vanishing(radii, &column(|t| t.vminus_over_r2)),
        bounded(radii, &column(|t| t.vminus_over_inf)),
    );
    let ess2 = combine(
        bounded(radii, &column(|t| t.r2_over_inf)),
        vanishing(radii, &column(|t| t.vminus_over_r_sqrt_inf)),
    );
    let branch_detected = match (ess, ess2) {
        (_, Trend::Holds) => DetectedBranch::Ess2,
        (Trend::Holds, _) => DetectedBranch::Ess,
        (Trend::Fails, Trend::Fails) => DetectedBranch::Neither,
        _ => DetectedBranch::Undecided,
    };

    let increasing = tail(&kmin).windows(2).all(|w| w[1] > w[0]);
    let mut verdict = Verdict::Consistent;
    let mut downgrade = |v: Verdict, why: String, diags: &mut Vec<String>| {
        diags.push(why);
        verdict = match (verdict, v) {
            (Verdict::Inconsistent, _) | (_, Verdict::Inconsistent) => Verdict::Inconsistent,
            _ => Verdict::Inconclusive,
        };
    };
    if kmax_last < 0.0 {
        downgrade(
            Verdict::Inconsistent,
            format!(
                "K~ is negative on the whole sphere of radius {}",
                radii[radii.len() - 1]
            ),
            &mut diagnostics,
        );
    }
    if !increasing {
        downgrade(
            Verdict::Inconsistent,
            "minimum of K~ over spheres is not increasing over the outer radii".into(),
            &mut diagnostics,
        );
    }
    for ti in &theta_integrals {
        match ti.outcome.status {
            QuadStatus::Converged => {}
            QuadStatus::Diverged { radius } => downgrade(
                Verdict::Inconsistent,
                format!(
                    "integral of exp(-{} K~) diverges (detected at box radius {radius})",
                    ti.theta
                ),
                &mut diagnostics,
            ),
            QuadStatus::Unresolved => downgrade(
                Verdict::Inconclusive,
                format!("integral of exp(-{} K~) did not converge", ti.theta),
                &mut diagnostics,
            ),
        }
    }
    match branch_detected {
        DetectedBranch::Neither => downgrade(
            Verdict::Inconsistent,
            "neither growth regime (ess / ess2) is supported by the sampled ratios".into(),
            &mut diagnostics,
        ),
        DetectedBranch::Undecided => downgrade(
            Verdict::Inconclusive,
            "ratio trends sit at a regime boundary".into(),
            &mut diagnostics,
        ),
        _ => {}
    }

    Ok(AssumptionReport {
        radii_checked: radii.to_vec(),
        ktilde_min_at_radius: kmin,
        theta_integrals,
        branch_detected,
        ratio_traces: traces,
        verdict,
        diagnostics,
    })
}

impl AssumptionReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "radius,ktilde_min,vminus_over_r2,vminus_over_inf,r2_over_inf,vminus_over_r_sqrt_inf"
        )?;
        for (t, k) in self.ratio_traces.iter().zip(&self.ktilde_min_at_radius) {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                t.radius,
                k,
                t.vminus_over_r2,
                t.vminus_over_inf,
                t.r2_over_inf,
                t.vminus_over_r_sqrt_inf
            )?;
        }
        Ok(())
    }

    pub fn verdict_line(&self) -> String {
        let branch = match self.branch_detected {
            DetectedBranch::Ess => "ess",
            DetectedBranch::Ess2 => "ess2",
            DetectedBranch::Neither => "neither",
            DetectedBranch::Undecided => "undecided",
        };
        format!("assumptions verdict={} branch={branch}", self.verdict)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::field::ScalarField;

    const RADII: [f64; 4] = [2.0, 4.0, 8.0, 16.0];

    #[test]
    fn harmonic_is_consistent_ess2() {
        let m = ModelSpec::harmonic(1);
        let r = check_assumptions(&m, &RADII, &[1.0]).unwrap();
        assert_eq!(r.verdict, Verdict::Consistent, "{:?}", r.diagnostics);
        assert_eq!(r.branch_detected, DetectedBranch::Ess2);
        let q = r.theta_integrals[0].outcome;
        assert!((q.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn flat_potential_is_inconsistent() {
        let m = ModelSpec::new(
            1,
            ScalarField::zero(),
            ScalarField::zero(),
            ScalarField::zero(),
        )
        .unwrap();
        let r = check_assumptions(&m, &RADII, &[1.0]).unwrap();
        assert_eq!(r.verdict, Verdict::Inconsistent);
        assert!(r.theta_integrals[0].outcome.diverged());
    }

    #[test]
    fn ou_with_constant_k_sits_outside_both_regimes() {
        // K~ = 1/2 + x^2/2 but V_- = x^2/2: V_- / (|x| sqrt(inf K~)) -> sqrt(2), not 0,
        // and V_- / |x|^2 -> 1/2, not 0.
        let m = ModelSpec::ornstein_uhlenbeck(1, -1.0, 1.0);
        let r = check_assumptions(&m, &RADII, &[1.0]).unwrap();
        let last = r.ratio_traces.last().unwrap();
        assert!((last.vminus_over_r2 - 0.5).abs() < 1e-12);
        assert!((last.vminus_over_r_sqrt_inf - 2.0f64.sqrt()).abs() < 0.02);
        assert_eq!(r.branch_detected, DetectedBranch::Neither);
        assert!(r.theta_integrals[0].outcome.converged());
        assert_eq!(r.verdict, Verdict::Inconsistent);
    }

    #[test]
    fn growth_family_detects_ess() {
        // V ~ |x| grows (V_- = 0) and K ~ |x|^1.5: only the ess ratios are bounded.
        let m = ModelSpec::growth_family(1, 1.0, 1.5);
        let r = check_assumptions(&m, &[4.0, 8.0, 16.0, 32.0, 64.0], &[0.5, 2.0]).unwrap();
        assert_eq!(r.branch_detected, DetectedBranch::Ess);
        assert_eq!(r.verdict, Verdict::Consistent, "{:?}", r.diagnostics);
    }

    #[test]
    fn two_dimensional_harmonic() {
        let m = ModelSpec::harmonic(2);
        let r = check_assumptions(&m, &RADII, &[1.0]).unwrap();
        assert_eq!(r.verdict, Verdict::Consistent, "{:?}", r.diagnostics);
        let q = r.theta_integrals[0].outcome;
        assert!((q.value - 2.0 * std::f64::consts::PI).abs() < 1e-4, "{q:?}");
    }

    #[test]
    fn rejects_bad_radii() {
        let m = ModelSpec::harmonic(1);
        assert!(check_assumptions(&m, &[1.0, 2.0, 3.0], &[1.0]).is_err());
        assert!(check_assumptions(&m, &[1.0, 3.0, 2.0, 4.0], &[1.0]).is_err());
        assert!(check_assumptions(&m, &RADII, &[]).is_err());
    }

    #[test]
    fn csv_has_one_row_per_radius() {
        let m = ModelSpec::harmonic(1);
        let r = check_assumptions(&m, &RADII, &[1.0]).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(
            r.verdict_line(),
            "assumptions verdict=consistent branch=ess2"
        );
    }
}
