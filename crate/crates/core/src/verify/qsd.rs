use super::report::{Comparison, ConvergenceReport, Guard};
use super::{check_times, VerifySettings};
use crate::error::{Error, Result};
use crate::montecarlo::{qsd_sample_times, GridSampler, InitialSampler, SimConfig};
use crate::problem::{ModelSpec, ScalarField};
use crate::spectral::SpectralDecomposition;
use crate::stats::compensated_sum;

/// Quadrature weights of `ν ∝ φ₀ μ` on the grid nodes, summing to one.
pub fn qsd_density(dec: &SpectralDecomposition) -> Result<Vec<f64>> {
    let grid = dec.grid();
    let raw: Vec<f64> = (0..grid.node_count())
        .map(|i| grid.weight(i) * dec.phi(0)[i] * (2.0 * dec.potential()[i]).exp())
        .collect();
    let z = compensated_sum(raw.iter().copied());
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "ground state has total mass {z}"
        )));
    }
    Ok(raw.iter().map(|r| r / z).collect())
}

fn integrate(nu: &[f64], f: &[f64]) -> f64 {
    compensated_sum(nu.iter().zip(f).map(|(a, b)| a * b))
}

/// `∫ P_t φ dν = e^{-λ₀t} ∫ φ dν`, checked on the grid and by weighted
/// particles started from `ν`.
///
/// Rows: `spectral[k]` compares the two sides by quadrature;
/// `normalizing_constant` compares `∫ P_t 1 dν` estimated from the particles
/// with `e^{-λ₀t}`; `weighted_mean[k]` compares the self-normalized mean of
/// `phis[k]` with `∫ φ dν`.
pub fn check_qsd(
    spec: &ModelSpec,
    dec: &SpectralDecomposition,
    times: &[f64],
    phis: &[ScalarField],
    cfg: &SimConfig,
    settings: &VerifySettings,
) -> Result<ConvergenceReport> {
    settings.validate()?;
    check_times(times)?;
    for phi in phis {
        phi.validate(spec.dimension).map_err(Error::InvalidInput)?;
    }
    let grid = dec.grid();
    let lambda0 = dec.eigenvalues()[0];
    let lambda = lambda0 + settings.lambda0_offset;
    let nu = qsd_density(dec)?;
    let nodal: Vec<Vec<f64>> = phis.iter().map(|p| grid.sample(|x| p.value(x))).collect();
    let nu_phi: Vec<f64> = nodal.iter().map(|f| integrate(&nu, f)).collect();

    let mut report = ConvergenceReport::new("qsd");
    report
        .notes
        .push(format!("lambda0 used = {lambda} (computed {lambda0})"));
    for (k, p) in phis.iter().enumerate() {
        report.notes.push(format!(
            "phi[{k}] = {}",
            serde_json::to_string(p).unwrap_or_default()
        ));
    }
    report.notes.push(
        "initial particles drawn from the grid ground state by inverse CDF with in-cell jitter"
            .into(),
    );

    for &t in times {
        for (k, f) in nodal.iter().enumerate() {
            let pt = dec.semigroup_apply(t, f)?;
            report.comparisons.push(Comparison {
                t,
                quantity: format!("spectral[{k}]"),
                lhs: integrate(&nu, &pt),
                rhs: (-lambda * t).exp() * nu_phi[k],
                std_error: 0.0,
                se_factor: 0.0,
                abs_tol: settings.spectral_tol,
                checked: true,
            });
        }
    }

    let sampler = InitialSampler::Grid(GridSampler::ground_state(dec)?);
    let samples = qsd_sample_times(spec, &sampler, times, cfg)?;
    let mut min_ess = f64::INFINITY;
    for s in &samples {
        min_ess = min_ess.min(s.ess / s.len() as f64);
        let z = s.normalizing_constant;
        report.comparisons.push(Comparison {
            t: s.t,
            quantity: "normalizing_constant".into(),
            lhs: z.mean,
            rhs: (-lambda * s.t).exp(),
            std_error: z.std_error,
            se_factor: settings.se_factor,
            // the prediction itself carries the spectral error
            abs_tol: settings.spectral_tol,
            checked: true,
        });
        for (k, p) in phis.iter().enumerate() {
            let m = s.weighted_mean(p);
            report.comparisons.push(Comparison {
                t: s.t,
                quantity: format!("weighted_mean[{k}]"),
                lhs: m.mean,
                rhs: nu_phi[k],
                std_error: m.std_error,
                se_factor: settings.se_factor,
                abs_tol: 0.0,
                checked: true,
            });
        }
    }
    report.guards.push(Guard::at_least(
        "ess_fraction",
        min_ess,
        settings.min_ess_fraction,
    ));
    Ok(report.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{decompose, Grid};
    use crate::verify::Verdict;

    #[test]
    fn harmonic_identity() {
        let m = ModelSpec::harmonic(1);
        let dec = decompose(&m, &Grid::new(1, 8.0, 321).unwrap(), 8, 1e-10).unwrap();
        let nu = qsd_density(&dec).unwrap();
        assert!((nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let cfg = SimConfig::new(0.01, 1.0, 4_000, 8).unwrap();
        let phis = [ScalarField::constant(1.0), ScalarField::linear(vec![1.0])];
        let r = check_qsd(
            &m,
            &dec,
            &[0.5, 1.0],
            &phis,
            &cfg,
            &VerifySettings::default(),
        )
        .unwrap();
        let spectral = r
            .comparisons
            .iter()
            .find(|c| c.quantity == "spectral[0]" && c.t == 1.0)
            .unwrap();
        assert!((spectral.lhs - spectral.rhs).abs() < 1e-10);
        assert!(
            (spectral.lhs - (-0.5f64).exp()).abs() < 1e-4,
            "{}",
            spectral.lhs
        );
        assert_eq!(r.verdict, Verdict::Pass, "{}", r.to_json().unwrap());
    }

    #[test]
    fn time_zero_returns_nu_mean() {
        let m = ModelSpec::harmonic(1);
        let dec = decompose(&m, &Grid::new(1, 8.0, 161).unwrap(), 4, 1e-10).unwrap();
        let cfg = SimConfig::new(0.01, 0.5, 200, 8).unwrap();
        let bump = ScalarField::gaussian(1.0, vec![0.3], 0.4);
        let r = check_qsd(&m, &dec, &[0.0], &[bump], &cfg, &VerifySettings::default()).unwrap();
        let z = r
            .comparisons
            .iter()
            .find(|c| c.quantity == "normalizing_constant")
            .unwrap();
        assert_eq!((z.lhs, z.std_error), (1.0, 0.0));
    }
}
