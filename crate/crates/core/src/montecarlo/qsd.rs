use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::fk::weighted_path;
use super::{map_indexed, path_rng, step_indices, STREAM_QSD};
use crate::error::{Error, Result};
use crate::problem::{ModelSpec, ScalarField};
use crate::spectral::{Grid, SpectralDecomposition};
use crate::stats::{compensated_sum, mean_estimate, CompensatedSum, MeanEstimate};

/// Draws from a tabulated density on grid nodes: pick a node by inverse CDF,
/// then jitter uniformly within its cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSampler {
    grid: Grid,
    nodes: Vec<usize>,
    cdf: Vec<f64>,
}

impl GridSampler {
    /// `density` is a nonnegative function value per grid node (not yet
    /// multiplied by quadrature weights).
    pub fn from_density(grid: &Grid, density: &[f64]) -> Result<Self> {
        if density.len() != grid.node_count() {
            return Err(Error::InvalidInput(
                "density length differs from the grid".into(),
            ));
        }
        let mut nodes = Vec::new();
        let mut cdf = Vec::new();
        let mut acc = CompensatedSum::new();
        for (node, &p) in density.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                if p.is_finite() && p > -1e-12 {
                    continue;
                }
                return Err(Error::InvalidInput(format!(
                    "density at node {node} is {p}"
                )));
            }
            let m = p * grid.weight(node);
            if m > 0.0 {
                acc.add(m);
                nodes.push(node);
                cdf.push(acc.value());
            }
        }
        let total = acc.value();
        if nodes.is_empty() || !(total > 0.0) {
            return Err(Error::InvalidInput("density has no mass".into()));
        }
        for c in cdf.iter_mut() {
            *c /= total;
        }
        Ok(Self {
            grid: grid.clone(),
            nodes,
            cdf,
        })
    }

    /// The discrete quasi-stationary law `φ0 e^{2V} dx`.
    pub fn ground_state(dec: &SpectralDecomposition) -> Result<Self> {
        let density: Vec<f64> = dec
            .phi(0)
            .iter()
            .zip(dec.potential())
            .map(|(p, v)| (p * (2.0 * v).exp()).max(0.0))
            .collect();
        Self::from_density(dec.grid(), &density)
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let u: f64 = rng.random();
        let k = self
            .cdf
            .partition_point(|&c| c < u)
            .min(self.nodes.len() - 1);
        let mut x = self.grid.coordinates(self.nodes[k]);
        let h = self.grid.spacing();
        let r = self.grid.radius();
        for xi in x.iter_mut() {
            let j: f64 = rng.random_range(-0.5..0.5);
            *xi = (*xi + j * h).clamp(-r, r);
        }
        x
    }
}

/// Initial law of the weighted particles.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialSampler {
    Point(Vec<f64>),
    Gaussian { mean: Vec<f64>, std: f64 },
    Grid(GridSampler),
}

impl InitialSampler {
    pub fn dimension(&self) -> usize {
        match self {
            Self::Point(x) => x.len(),
            Self::Gaussian { mean, .. } => mean.len(),
            Self::Grid(g) => g.grid.dimension(),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Point(x) => format!("point({x:?})"),
            Self::Gaussian { mean, std } => format!("gaussian(mean={mean:?}, std={std})"),
            Self::Grid(g) => format!(
                "grid(radius={}, points={})",
                g.grid.radius(),
                g.grid.points_per_axis()
            ),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Self::Point(x) => x.clone(),
            Self::Gaussian { mean, std } => mean
                .iter()
                .map(|m| m + std * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Self::Grid(g) => g.sample(rng),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Point(x) if x.iter().any(|v| !v.is_finite()) => {
                Err(Error::InvalidInput("start point must be finite".into()))
            }
            Self::Gaussian { mean, std }
                if mean.iter().any(|v| !v.is_finite()) || !(*std >= 0.0) || !std.is_finite() =>
            {
                Err(Error::InvalidInput(
                    "gaussian start law needs a finite mean and std >= 0".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Self-normalized weighted particles approximating the conditioned law at `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QsdSample {
    pub t: f64,
    pub nu0: String,
    pub dimension: usize,
    /// Flat, `dimension` coordinates per particle.
    pub positions: Vec<f64>,
    /// Normalized to sum to one.
    pub weights: Vec<f64>,
    /// Kish effective sample size `1 / Σ w²`.
    pub ess: f64,
    /// Estimate of `∫ P_t 1 dν0`.
    pub normalizing_constant: MeanEstimate,
}

impl QsdSample {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dimension..(i + 1) * self.dimension]
    }

    /// `Σ w_i φ(x_i)` with the delta-method standard error of the ratio estimator.
    pub fn weighted_mean(&self, phi: &ScalarField) -> MeanEstimate {
        let vals: Vec<f64> = (0..self.len())
            .map(|i| phi.value(self.particle(i)))
            .collect();
        let mean = compensated_sum(self.weights.iter().zip(&vals).map(|(w, v)| w * v));
        let var = compensated_sum(
            self.weights
                .iter()
                .zip(&vals)
                .map(|(w, v)| (w * (v - mean)).powi(2)),
        );
        MeanEstimate {
            mean,
            std_error: var.sqrt(),
            samples: self.len(),
        }
    }

    /// CSV `x0...,weight`.
    pub fn write_csv<W: Write>(&self, header: &str, mut out: W) -> Result<()> {
        writeln!(out, "{header}")?;
        writeln!(
            out,
            "# t={} ess={} normalizing_constant={} std_error={}",
            self.t, self.ess, self.normalizing_constant.mean, self.normalizing_constant.std_error
        )?;
        let mut w = csv::Writer::from_writer(out);
        let mut cols: Vec<String> = (0..self.dimension).map(|k| format!("x{k}")).collect();
        cols.push("weight".into());
        w.write_record(&cols)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.particle(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.weights[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn assemble(
    t: f64,
    nu0: &InitialSampler,
    d: usize,
    logw: Vec<f64>,
    positions: Vec<f64>,
) -> Result<QsdSample> {
    let lmax = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // exp(lmax) must be representable for the normalizing constant
    if !(lmax > -745.0) {
        return Err(Error::WeightUnderflow { t });
    }
    let scaled: Vec<f64> = logw.iter().map(|l| (l - lmax).exp()).collect();
    let total = compensated_sum(scaled.iter().copied());
    let weights: Vec<f64> = scaled.iter().map(|s| s / total).collect();
    let ess = 1.0 / compensated_sum(weights.iter().map(|w| w * w));
    let e = mean_estimate(&scaled);
    let f = lmax.exp();
    Ok(QsdSample {
        t,
        nu0: nu0.describe(),
        dimension: d,
        positions,
        weights,
        ess,
        normalizing_constant: MeanEstimate {
            mean: e.mean * f,
            std_error: e.std_error * f,
            samples: e.samples,
        },
    })
}

/// Weighted samples of the conditioned law at each of `times`, from one set
/// of `cfg.n_paths` paths started from `nu0`.
pub fn qsd_sample_times(
    spec: &ModelSpec,
    nu0: &InitialSampler,
    times: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<QsdSample>> {
    cfg.validate()?;
    nu0.validate()?;
    let d = spec.dimension;
    if nu0.dimension() != d {
        return Err(Error::InvalidInput(format!(
            "initial law has dimension {}, model has {d}",
            nu0.dimension()
        )));
    }
    let steps = step_indices(times, cfg)?;
    let nt = times.len();
    let paths = map_indexed(cfg.n_paths, |i| {
        let mut rng = path_rng(cfg.seed, STREAM_QSD + i);
        let mut x = nu0.sample(&mut rng);
        let mut logw = vec![0.0; nt];
        let mut pos = vec![0.0; nt * d];
        weighted_path(spec, &mut x, cfg.dt, &steps, &mut rng, |k, lw, x| {
            logw[k] = lw;
            pos[k * d..(k + 1) * d].copy_from_slice(x);
        })?;
        Ok((logw, pos))
    })?;
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let logw = paths.iter().map(|(lw, _)| lw[k]).collect();
            let positions = paths
                .iter()
                .flat_map(|(_, p)| p[k * d..(k + 1) * d].iter().copied())
                .collect();
            assemble(t, nu0, d, logw, positions)
        })
        .collect()
}

pub fn qsd_sample(
    spec: &ModelSpec,
    nu0: &InitialSampler,
    t: f64,
    cfg: &SimConfig,
) -> Result<QsdSample> {
    Ok(qsd_sample_times(spec, nu0, &[t], cfg)?.remove(0))
}
