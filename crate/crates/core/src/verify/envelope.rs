use super::report::{Comparison, ConvergenceReport, Guard};
use crate::error::{Error, Result};
use crate::problem::{
    weighted_envelope_integral, BoundParams, ModelSpec, QuadOutcome, QuadStatus, ScalarField,
};

/// `∫ H_{c,c0}(y) |φ(y)| μ(dy)` by box doubling from `box_radius`.
pub fn check_weighted_envelope(
    spec: &ModelSpec,
    params: &BoundParams,
    phi: &ScalarField,
    box_radius: f64,
    quad_tol: f64,
) -> Result<QuadOutcome> {
    phi.validate(spec.dimension).map_err(Error::InvalidInput)?;
    if phi.is_zero() {
        return Ok(QuadOutcome {
            value: 0.0,
            radius: box_radius,
            status: QuadStatus::Converged,
        });
    }
    weighted_envelope_integral(spec, params, box_radius, quad_tol, |x| {
        phi.value(x).abs().ln()
    })
}

/// Wraps the integral in a report: pass when it converged, fail when it
/// diverged, inconclusive when neither could be decided.
pub fn weighted_envelope_report(outcome: &QuadOutcome) -> ConvergenceReport {
    let mut r = ConvergenceReport::new("weighted_envelope");
    r.notes.push(format!(
        "integral {} at box radius {} ({:?})",
        outcome.value, outcome.radius, outcome.status
    ));
    r.comparisons.push(Comparison {
        t: 0.0,
        quantity: "diverged".into(),
        lhs: if outcome.diverged() { 1.0 } else { 0.0 },
        rhs: 0.0,
        std_error: 0.0,
        se_factor: 0.0,
        abs_tol: 0.0,
        checked: true,
    });
    let unresolved = !outcome.converged() && !outcome.diverged();
    r.guards.push(Guard::at_most(
        "unresolved",
        if unresolved { 1.0 } else { 0.0 },
        0.0,
    ));
    r.finish()
}
