use super::report::{Comparison, ConvergenceReport, Guard, SlopeCheck};
use super::{check_times, VerifySettings};
use crate::error::Result;
use crate::montecarlo::{feynman_kac_times, simulate_replicas, SimConfig};
use crate::problem::{ModelSpec, ScalarField};
use crate::spectral::SpectralDecomposition;

/// `e^{λ₀t} E_x N_t → φ₀(x) μ(φ₀)`, with the mass estimated by replicas of
/// the particle system and, optionally, by the weighted path estimator.
///
/// Only the last time is tested against the limit; the earlier ones enter
/// the fit of `ln E_x N_t`, whose slope must match `-λ₀`.
pub fn check_total_mass(
    spec: &ModelSpec,
    dec: &SpectralDecomposition,
    x0: &[f64],
    times: &[f64],
    cfg: &SimConfig,
    settings: &VerifySettings,
) -> Result<ConvergenceReport> {
    settings.validate()?;
    check_times(times)?;
    let grid = dec.grid();
    let node = grid.nearest_node(x0);
    let x = grid.coordinates(node);
    let lambda0 = dec.eigenvalues()[0];
    let lambda = lambda0 + settings.lambda0_offset;
    let ones = vec![1.0; grid.node_count()];
    let limit = dec.project_pi(&ones)[node];

    let mut report = ConvergenceReport::new("total_mass");
    report
        .notes
        .push(format!("x0 snapped to grid node {node} at {x:?}"));
    report
        .notes
        .push(format!("lambda0 used = {lambda} (computed {lambda0})"));
    report
        .notes
        .push("replicas that hit the population cap are excluded from the means".into());

    let set = simulate_replicas(spec, &x, cfg, times)?;
    let means = set.mean_mass();
    let fk = if settings.fk_cross_check {
        Some(feynman_kac_times(
            spec,
            &x,
            times,
            &ScalarField::constant(1.0),
            cfg,
        )?)
    } else {
        None
    };

    let last = times.len() - 1;
    for (k, &t) in times.iter().enumerate() {
        // transient left over at t, from the computed modes
        let pt = dec.semigroup_apply(t, &ones)?;
        let tail = ((lambda0 * t).exp() * pt[node] - limit).abs();
        let scale = (lambda * t).exp();
        let abs_tol = settings.mass_abs_tol.max(tail);
        report.comparisons.push(Comparison {
            t,
            quantity: "branching_mass".into(),
            lhs: scale * means[k].mean,
            rhs: limit,
            std_error: scale * means[k].std_error,
            se_factor: settings.se_factor,
            abs_tol,
            checked: k == last,
        });
        if let Some(fk) = &fk {
            report.comparisons.push(Comparison {
                t,
                quantity: "path_weighted_mass".into(),
                lhs: scale * fk[k].estimate,
                rhs: limit,
                std_error: scale * fk[k].std_error,
                se_factor: settings.se_factor,
                abs_tol,
                checked: k == last,
            });
        }
    }

    let fit_times: Vec<f64> = times
        .iter()
        .zip(&means)
        .filter(|(&t, m)| t > 0.0 && m.mean > 0.0)
        .map(|(&t, _)| t)
        .collect();
    let fit_values: Vec<f64> = times
        .iter()
        .zip(&means)
        .filter(|(&t, m)| t > 0.0 && m.mean > 0.0)
        .map(|(_, m)| m.mean)
        .collect();
    report.guards.push(Guard::at_least(
        "mass_fit_points",
        fit_times.len() as f64,
        2.0,
    ));
    report.slopes.push(SlopeCheck::new(
        "log_mass",
        fit_times,
        fit_values,
        -lambda,
        settings.mass_slope_rel_tol,
        settings.mass_slope_abs_tol,
        false,
    ));
    report.guards.push(Guard::at_most(
        "capped_fraction",
        set.capped_fraction(),
        settings.max_capped_fraction,
    ));
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{decompose, Grid};
    use crate::verify::Verdict;

    #[test]
    fn ou_limit_is_one_everywhere() {
        let m = ModelSpec::ornstein_uhlenbeck(1, -1.0, 0.3);
        let dec = decompose(&m, &Grid::new(1, 7.0, 281).unwrap(), 4, 1e-10).unwrap();
        let cfg = SimConfig::new(0.01, 3.0, 4_000, 21).unwrap();
        let r = check_total_mass(
            &m,
            &dec,
            &[0.7],
            &[1.0, 2.0, 3.0],
            &cfg,
            &VerifySettings::default(),
        )
        .unwrap();
        let last = r.comparisons.iter().rev().find(|c| c.checked).unwrap();
        assert!((last.rhs - 1.0).abs() < 1e-4, "{}", last.rhs);
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.to_json().unwrap());
        assert!(r.is_self_consistent());
    }

    #[test]
    fn wrong_lambda0_fails() {
        let m = ModelSpec::ornstein_uhlenbeck(1, -1.0, 0.3);
        let dec = decompose(&m, &Grid::new(1, 7.0, 281).unwrap(), 4, 1e-10).unwrap();
        let cfg = SimConfig::new(0.01, 3.0, 2_000, 21).unwrap();
        let s = VerifySettings {
            lambda0_offset: 0.2,
            ..Default::default()
        };
        let r = check_total_mass(&m, &dec, &[0.0], &[1.0, 2.0, 3.0], &cfg, &s).unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn capped_runs_are_inconclusive() {
        let m = ModelSpec::new(
            1,
            ScalarField::quadratic(-1.0),
            ScalarField::constant(3.0),
            ScalarField::constant(1.0),
        )
        .unwrap();
        let dec = decompose(&m, &Grid::new(1, 7.0, 141).unwrap(), 3, 1e-9).unwrap();
        let mut cfg = SimConfig::new(0.01, 3.0, 50, 1).unwrap();
        cfg.population_cap = 50;
        let r = check_total_mass(
            &m,
            &dec,
            &[0.0],
            &[1.0, 3.0],
            &cfg,
            &VerifySettings::default(),
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }
}
