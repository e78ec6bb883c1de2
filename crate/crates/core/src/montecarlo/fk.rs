use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::step::step_in_place;
use super::{map_indexed, path_rng, step_indices, STREAM_FK};
use crate::error::{Error, Result};
use crate::problem::{ModelSpec, ScalarField};
use crate::stats::{mean_estimate, MeanEstimate};

const LOG_MAX: f64 = 709.0;

/// Monte Carlo estimate of `E_x[exp(-∫_0^t K(X_s) ds) φ(X_t)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FkEstimate {
    pub t: f64,
    pub x0: Vec<f64>,
    pub phi: ScalarField,
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Smallest and largest path weight at `t`.
    pub weight_min: f64,
    pub weight_max: f64,
}

fn reduction_rate(spec: &ModelSpec, x: &[f64]) -> Result<f64> {
    let k = spec.reduction_rate(x);
    if k.is_finite() {
        Ok(k)
    } else {
        Err(Error::Rate {
            position: x.to_vec(),
            reason: format!("reduction rate K is {k}"),
        })
    }
}

/// Runs one path from `x` and calls `on_sample(k, log_weight, x)` at each
/// requested step, where `log_weight = -Σ K(X_{t_j}) dt` (left endpoints).
pub(crate) fn weighted_path(
    spec: &ModelSpec,
    x: &mut [f64],
    dt: f64,
    sample_steps: &[usize],
    rng: &mut ChaCha8Rng,
    mut on_sample: impl FnMut(usize, f64, &[f64]),
) -> Result<()> {
    let d = x.len();
    let mut noise = vec![0.0; d];
    let mut drift = vec![0.0; d];
    let last = sample_steps.iter().copied().max().unwrap_or(0);
    let mut integral = 0.0;
    for (k, &s) in sample_steps.iter().enumerate() {
        if s == 0 {
            on_sample(k, 0.0, x);
        }
    }
    for step in 1..=last {
        integral += reduction_rate(spec, x)? * dt;
        for n in noise.iter_mut() {
            *n = rng.sample(StandardNormal);
        }
        step_in_place(spec, x, dt, &noise, &mut drift)?;
        for (k, &s) in sample_steps.iter().enumerate() {
            if s == step {
                on_sample(k, -integral, x);
            }
        }
    }
    Ok(())
}

fn summarize(t: f64, x0: &[f64], phi: &ScalarField, weights: &[f64], values: &[f64]) -> FkEstimate {
    let e = mean_estimate(values);
    FkEstimate {
        t,
        x0: x0.to_vec(),
        phi: phi.clone(),
        estimate: e.mean,
        std_error: if values.len() > 1 {
            e.std_error
        } else {
            f64::NAN
        },
        n_paths: values.len(),
        weight_min: weights.iter().copied().fold(f64::INFINITY, f64::min),
        weight_max: weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

fn check_inputs(spec: &ModelSpec, x0: &[f64], phi: &ScalarField, cfg: &SimConfig) -> Result<()> {
    cfg.validate()?;
    if x0.len() != spec.dimension || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "start point must be a finite {}-vector",
            spec.dimension
        )));
    }
    phi.validate(spec.dimension).map_err(Error::InvalidInput)
}

/// Feynman-Kac estimates at several times from one set of `cfg.n_paths` paths.
pub fn feynman_kac_times(
    spec: &ModelSpec,
    x0: &[f64],
    times: &[f64],
    phi: &ScalarField,
    cfg: &SimConfig,
) -> Result<Vec<FkEstimate>> {
    check_inputs(spec, x0, phi, cfg)?;
    let steps = step_indices(times, cfg)?;
    let nt = times.len();
    let paths = map_indexed(cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, STREAM_FK + i);
        let mut x = x0.to_vec();
        let mut logw = vec![0.0; nt];
        let mut vals = vec![0.0; nt];
        weighted_path(spec, &mut x, cfg.dt, &steps, &mut rng, |k, lw, x| {
            logw[k] = lw;
            vals[k] = phi.value(x);
        })?;
        Ok((logw, vals))
    })?;
    let mut out = Vec::with_capacity(nt);
    for (k, &t) in times.iter().enumerate() {
        let max_int = paths
            .iter()
            .map(|(lw, _)| lw[k])
            .fold(f64::NEG_INFINITY, f64::max);
        if max_int > LOG_MAX {
            return Err(Error::WeightOverflow {
                max_integral: max_int,
            });
        }
        let weights: Vec<f64> = paths.iter().map(|(lw, _)| lw[k].exp()).collect();
        let values: Vec<f64> = paths
            .iter()
            .zip(&weights)
            .map(|((_, v), w)| w * v[k])
            .collect();
        out.push(summarize(t, x0, phi, &weights, &values));
    }
    Ok(out)
}

pub fn feynman_kac_estimate(
    spec: &ModelSpec,
    x0: &[f64],
    t: f64,
    phi: &ScalarField,
    cfg: &SimConfig,
) -> Result<FkEstimate> {
    Ok(feynman_kac_times(spec, x0, &[t], phi, cfg)?.remove(0))
}

/// Estimates at step `dt` and `dt / 2` driven by the same Brownian paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtPair {
    pub coarse: FkEstimate,
    pub fine: FkEstimate,
    /// Pathwise `fine - coarse`, with its own standard error.
    pub difference: MeanEstimate,
}

/// The coarse path uses the sums of consecutive fine increments, so the
/// difference isolates the discretization bias from the sampling noise.
pub fn feynman_kac_dt_pair(
    spec: &ModelSpec,
    x0: &[f64],
    t: f64,
    phi: &ScalarField,
    cfg: &SimConfig,
) -> Result<DtPair> {
    check_inputs(spec, x0, phi, cfg)?;
    let coarse_steps = step_indices(&[t], cfg)?[0];
    let dt = cfg.dt;
    let half = 0.5 * dt;
    let d = spec.dimension;
    let paths = map_indexed(cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, STREAM_FK + i);
        let (mut xc, mut xf) = (x0.to_vec(), x0.to_vec());
        let (mut ic, mut if_) = (0.0, 0.0);
        let mut drift = vec![0.0; d];
        let mut n1 = vec![0.0; d];
        let mut n2 = vec![0.0; d];
        let mut nc = vec![0.0; d];
        for _ in 0..coarse_steps {
            for j in 0..d {
                n1[j] = rng.sample(StandardNormal);
                n2[j] = rng.sample(StandardNormal);
                nc[j] = (n1[j] + n2[j]) / std::f64::consts::SQRT_2;
            }
            ic += reduction_rate(spec, &xc)? * dt;
            step_in_place(spec, &mut xc, dt, &nc, &mut drift)?;
            if_ += reduction_rate(spec, &xf)? * half;
            step_in_place(spec, &mut xf, half, &n1, &mut drift)?;
            if_ += reduction_rate(spec, &xf)? * half;
            step_in_place(spec, &mut xf, half, &n2, &mut drift)?;
        }
        Ok((-ic, phi.value(&xc), -if_, phi.value(&xf)))
    })?;
    for (lc, _, lf, _) in &paths {
        if lc.max(*lf) > LOG_MAX {
            return Err(Error::WeightOverflow {
                max_integral: lc.max(*lf),
            });
        }
    }
    let wc: Vec<f64> = paths.iter().map(|p| p.0.exp()).collect();
    let wf: Vec<f64> = paths.iter().map(|p| p.2.exp()).collect();
    let vc: Vec<f64> = paths.iter().zip(&wc).map(|(p, w)| w * p.1).collect();
    let vf: Vec<f64> = paths.iter().zip(&wf).map(|(p, w)| w * p.3).collect();
    let diff: Vec<f64> = vf.iter().zip(&vc).map(|(a, b)| a - b).collect();
    Ok(DtPair {
        coarse: summarize(t, x0, phi, &wc, &vc),
        fine: summarize(t, x0, phi, &wf, &vf),
        difference: mean_estimate(&diff),
    })
}

/// CSV `t,x0...,estimate,std_error,n_paths`.
pub fn write_fk_csv<W: Write>(estimates: &[FkEstimate], header: &str, mut out: W) -> Result<()> {
    writeln!(out, "{header}")?;
    let mut w = csv::Writer::from_writer(out);
    let dim = estimates.first().map_or(0, |e| e.x0.len());
    let mut cols = vec!["t".to_string()];
    cols.extend((0..dim).map(|k| format!("x0_{k}")));
    cols.extend(["estimate", "std_error", "n_paths"].map(String::from));
    w.write_record(&cols)?;
    for e in estimates {
        let mut rec = vec![e.t.to_string()];
        rec.extend(e.x0.iter().map(|v| v.to_string()));
        rec.extend([
            e.estimate.to_string(),
            e.std_error.to_string(),
            e.n_paths.to_string(),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_gives_exact_one() {
        let m = ModelSpec::ornstein_uhlenbeck(1, -1.0, 0.0);
        let cfg = SimConfig::new(0.01, 1.0, 500, 1).unwrap();
        let e = feynman_kac_estimate(&m, &[0.3], 1.0, &ScalarField::constant(1.0), &cfg).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.std_error, 0.0);
        assert_eq!((e.weight_min, e.weight_max), (1.0, 1.0));
    }

    #[test]
    fn cameron_martin() {
        let m = ModelSpec::harmonic(1);
        let cfg = SimConfig::new(0.002, 1.0, 20_000, 5).unwrap();
        let e = feynman_kac_estimate(&m, &[0.0], 1.0, &ScalarField::constant(1.0), &cfg).unwrap();
        let exact = 1f64.cosh().powf(-0.5);
        assert!((e.estimate - exact).abs() < 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn constant_rate_factorizes() {
        let kappa = 0.4;
        let m = ModelSpec::ornstein_uhlenbeck(1, -1.0, kappa);
        let free = ModelSpec::ornstein_uhlenbeck(1, -1.0, 0.0);
        let cfg = SimConfig::new(0.01, 2.0, 2_000, 9).unwrap();
        let phi = ScalarField::gaussian(1.0, vec![0.5], 0.7);
        let a = feynman_kac_estimate(&m, &[1.0], 2.0, &phi, &cfg).unwrap();
        let b = feynman_kac_estimate(&free, &[1.0], 2.0, &phi, &cfg).unwrap();
        let w = (-(0..200).map(|_| kappa * 0.01).sum::<f64>()).exp();
        assert!((a.estimate - w * b.estimate).abs() < 1e-14);
    }

    #[test]
    fn weight_overflow_is_reported() {
        let m = ModelSpec::ornstein_uhlenbeck(1, -1.0, -500.0);
        let cfg = SimConfig::new(0.1, 2.0, 4, 1).unwrap();
        let r = feynman_kac_estimate(&m, &[0.0], 2.0, &ScalarField::constant(1.0), &cfg);
        assert!(matches!(r, Err(Error::WeightOverflow { .. })));
    }

    #[test]
    fn dt_pair_difference_is_small() {
        let m = ModelSpec::harmonic(1);
        let cfg = SimConfig::new(0.01, 1.0, 5_000, 2).unwrap();
        let p = feynman_kac_dt_pair(&m, &[0.0], 1.0, &ScalarField::constant(1.0), &cfg).unwrap();
        assert!(p.difference.mean.abs() < p.fine.std_error);
        assert!(p.difference.std_error < 0.1 * p.fine.std_error);
    }

    #[test]
    fn reproducible() {
        let m = ModelSpec::harmonic(2);
        let cfg = SimConfig::new(0.01, 1.0, 300, 4).unwrap();
        let phi = ScalarField::quadratic(1.0);
        let a = feynman_kac_times(&m, &[0.1, 0.2], &[0.5, 1.0], &phi, &cfg).unwrap();
        let b = feynman_kac_times(&m, &[0.1, 0.2], &[0.5, 1.0], &phi, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
