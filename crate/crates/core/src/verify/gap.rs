use super::report::{Comparison, ConvergenceReport, FittedConstants, Guard, SlopeCheck};
use super::{check_times, VerifySettings};
use crate::error::{Error, Result};
use crate::spectral::SpectralDecomposition;

/// Modes below this fraction of the largest excited-mode amplitude are
/// treated as absent, e.g. odd modes of an even function.
const NEGLIGIBLE_MODE: f64 = 1e-8;
/// Round-off floor of the error, per unit of `Σ |c_n| max|φ_n|`.
const ROUNDOFF: f64 = 64.0 * f64::EPSILON;

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Lowest excited mode that contributes to `φ`, with its amplitude
/// `|⟨φ_n, φ⟩_μ| max|φ_n|`. `None` when `φ` has no excited component.
pub fn dominant_mode(dec: &SpectralDecomposition, phi: &[f64]) -> Option<(usize, f64)> {
    let c = dec.coefficients(phi);
    let amps: Vec<f64> = (1..dec.modes())
        .map(|n| c[n].abs() * sup(dec.phi(n)))
        .collect();
    let top = amps.iter().copied().fold(0.0f64, f64::max);
    if !(top > 0.0) {
        return None;
    }
    amps.iter()
        .position(|a| *a >= NEGLIGIBLE_MODE * top)
        .map(|i| (i + 1, amps[i]))
}

/// Decay of `max_nodes |e^{λ₀t} P_t φ − Π(φ)|`. The fitted slope must lie
/// within `gap_slope_rel_tol` of `-(λ_{n*} − λ₀)`, where `n*` is the
/// dominant excited mode of `φ`, and the fitted errors must decrease.
pub fn check_gap_rate(
    dec: &SpectralDecomposition,
    phi: &[f64],
    times: &[f64],
    settings: &VerifySettings,
) -> Result<ConvergenceReport> {
    settings.validate()?;
    check_times(times)?;
    if phi.len() != dec.grid().node_count() {
        return Err(Error::InvalidInput(
            "test function length differs from the grid".into(),
        ));
    }
    let lambdas = dec.eigenvalues();
    let lambda = lambdas[0] + settings.lambda0_offset;
    let pi = dec.project_pi(phi);
    let coeffs = dec.coefficients(phi);
    let budget: f64 = (0..dec.modes())
        .map(|n| coeffs[n].abs() * sup(dec.phi(n)))
        .sum();
    let floor = ROUNDOFF * budget;

    let mut report = ConvergenceReport::new("gap_rate");
    report
        .notes
        .push(format!("sup-norm taken over {} grid nodes", phi.len()));
    report
        .notes
        .push(format!("expansion truncated at {} modes", dec.modes()));
    report.notes.push(format!("round-off floor {floor:e}"));

    let mut errors = Vec::with_capacity(times.len());
    for &t in times {
        let pt = dec.semigroup_apply(t, phi)?;
        let scale = (lambda * t).exp();
        let err = pt
            .iter()
            .zip(&pi)
            .fold(0.0f64, |m, (p, q)| m.max((scale * p - q).abs()));
        errors.push(err);
        report.comparisons.push(Comparison {
            t,
            quantity: "sup_error".into(),
            lhs: err,
            rhs: 0.0,
            std_error: 0.0,
            se_factor: 0.0,
            abs_tol: 0.0,
            checked: false,
        });
    }
    report.guards.push(Guard::at_least(
        "first_error",
        errors[0],
        settings.trivial_floor,
    ));

    let target_rate = match dominant_mode(dec, phi) {
        Some((n, _)) => {
            report.dominant_mode = Some(n);
            report.notes.push(format!(
                "dominant mode n* = {n}, rate lambda_n* - lambda0 = {}",
                lambdas[n] - lambdas[0]
            ));
            lambdas[n] - lambdas[0]
        }
        None => dec.gap(),
    };

    let (fit_t, fit_e): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(&errors)
        .filter(|(_, e)| **e > settings.floor_factor * floor)
        .map(|(t, e)| (*t, *e))
        .unzip();
    report
        .guards
        .push(Guard::at_least("fit_points", fit_t.len() as f64, 2.0));
    let slope = SlopeCheck::new(
        "log_sup_error",
        fit_t.clone(),
        fit_e,
        -target_rate,
        settings.gap_slope_rel_tol,
        0.0,
        true,
    );
    if slope.intercept.is_finite() {
        report.constants = Some(FittedConstants {
            c0: slope.intercept.exp(),
            t0: fit_t[0],
        });
    }
    report.slopes.push(slope);
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ModelSpec, ScalarField};
    use crate::spectral::{decompose, Grid};
    use crate::verify::Verdict;

    fn harmonic() -> SpectralDecomposition {
        decompose(
            &ModelSpec::harmonic(1),
            &Grid::new(1, 8.0, 401).unwrap(),
            10,
            1e-10,
        )
        .unwrap()
    }

    #[test]
    fn single_mode_decays_exactly() {
        let dec = harmonic();
        let phi = dec.phi(1).to_vec();
        let r = check_gap_rate(
            &dec,
            &phi,
            &[1.0, 2.0, 3.0, 4.0],
            &VerifySettings::default(),
        )
        .unwrap();
        assert_eq!(r.dominant_mode, Some(1));
        let s = &r.slopes[0];
        assert!((s.slope + dec.gap()).abs() < 1e-6, "{}", s.slope);
        assert_eq!(r.verdict, Verdict::Pass);
        let c0 = r.constants.unwrap().c0;
        assert!((c0 - sup(dec.phi(1))).abs() < 1e-6 * c0);
    }

    #[test]
    fn even_function_skips_odd_mode() {
        let dec = harmonic();
        let ones = vec![1.0; dec.grid().node_count()];
        let r = check_gap_rate(
            &dec,
            &ones,
            &[1.0, 2.0, 3.0, 4.0],
            &VerifySettings::default(),
        )
        .unwrap();
        assert_eq!(r.dominant_mode, Some(2));
        assert!(
            (r.slopes[0].slope + 2.0).abs() < 0.2,
            "{}",
            r.slopes[0].slope
        );
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn ground_state_is_trivial() {
        let dec = harmonic();
        let phi = dec.phi(0).to_vec();
        let r = check_gap_rate(&dec, &phi, &[1.0, 2.0], &VerifySettings::default()).unwrap();
        assert!(r.comparisons.iter().all(|c| c.lhs <= 1e-10));
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn shifted_bump_has_unit_rate() {
        let dec = harmonic();
        let bump = ScalarField::gaussian(1.0, vec![0.7], 0.5);
        let phi = dec.grid().sample(|x| bump.value(x));
        let r = check_gap_rate(
            &dec,
            &phi,
            &[1.0, 2.0, 3.0, 4.0],
            &VerifySettings::default(),
        )
        .unwrap();
        assert_eq!(r.dominant_mode, Some(1));
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.summary_line());
        let s = VerifySettings {
            lambda0_offset: 0.3,
            ..Default::default()
        };
        let r = check_gap_rate(&dec, &phi, &[1.0, 2.0, 3.0, 4.0], &s).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }
}
