use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::step::step_in_place;
use super::{map_indexed, path_rng, step_indices, STREAM_BRANCHING};
use crate::error::{Error, Result};
use crate::problem::{ModelSpec, ScalarField};
use crate::stats::{mean_estimate, MeanEstimate};

/// Snapshot of one replica: the alive particles at time `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub t: f64,
    pub dimension: usize,
    /// Positions, `dimension` coordinates per particle.
    pub positions: Vec<f64>,
    pub extinct: bool,
    /// The population exceeded the cap at or before `t`; the run is truncated.
    pub capped: bool,
}

impl PopulationState {
    /// Total mass `N_t`.
    pub fn total_mass(&self) -> usize {
        self.positions.len() / self.dimension
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dimension..(i + 1) * self.dimension]
    }
}

struct Snapshot {
    count: usize,
    capped: bool,
    positions: Option<Vec<f64>>,
}

fn rate(field: &ScalarField, name: &str, x: &[f64]) -> Result<f64> {
    let r = field.value(x);
    if r.is_finite() && r >= 0.0 {
        Ok(r)
    } else {
        Err(Error::Rate {
            position: x.to_vec(),
            reason: format!("{name} rate is {r}"),
        })
    }
}

/// Bernoulli draw with probability `1 - e^{-rate dt}`; no draw for zero rates.
fn event(rng: &mut ChaCha8Rng, rate: f64, dt: f64) -> bool {
    rate > 0.0 && rng.random::<f64>() < -(-rate * dt).exp_m1()
}

fn run_population(
    spec: &ModelSpec,
    x0: &[f64],
    cfg: &SimConfig,
    sample_steps: &[usize],
    rng: &mut ChaCha8Rng,
    record_positions: bool,
) -> Result<Vec<Snapshot>> {
    let d = spec.dimension;
    let dt = cfg.dt;
    let mut pos = x0.to_vec();
    let mut next: Vec<f64> = Vec::new();
    let mut noise = vec![0.0; d];
    let mut drift = vec![0.0; d];
    let mut capped = false;
    let last = sample_steps.iter().copied().max().unwrap_or(0);
    let mut out: Vec<Option<Snapshot>> = sample_steps.iter().map(|_| None).collect();
    let fill = |out: &mut Vec<Option<Snapshot>>, step: usize, pos: &[f64], capped: bool| {
        for (slot, &s) in out.iter_mut().zip(sample_steps) {
            if s == step {
                *slot = Some(Snapshot {
                    count: pos.len() / d,
                    capped,
                    positions: record_positions.then(|| pos.to_vec()),
                });
            }
        }
    };
    fill(&mut out, 0, &pos, false);
    let mut step = 0;
    while step < last && !pos.is_empty() && !capped {
        step += 1;
        next.clear();
        for x in pos.chunks_exact(d) {
            // Death is adjudicated before birth, both at the left endpoint.
            if event(rng, rate(&spec.death, "death", x)?, dt) {
                continue;
            }
            next.extend_from_slice(x);
            if event(rng, rate(&spec.birth, "birth", x)?, dt) {
                next.extend_from_slice(x);
            }
        }
        std::mem::swap(&mut pos, &mut next);
        for x in pos.chunks_exact_mut(d) {
            for n in noise.iter_mut() {
                *n = rng.sample(StandardNormal);
            }
            step_in_place(spec, x, dt, &noise, &mut drift)?;
        }
        if pos.len() / d > cfg.population_cap {
            capped = true;
        }
        fill(&mut out, step, &pos, capped);
    }
    // Samples after extinction or the cap keep the final state.
    Ok(out
        .into_iter()
        .map(|s| {
            s.unwrap_or_else(|| Snapshot {
                count: pos.len() / d,
                capped,
                positions: record_positions.then(|| pos.clone()),
            })
        })
        .collect())
}

/// One replica started from a single particle at `x0`, recorded at `times`.
pub fn simulate_branching(
    spec: &ModelSpec,
    x0: &[f64],
    cfg: &SimConfig,
    times: &[f64],
    replica: u64,
) -> Result<Vec<PopulationState>> {
    cfg.validate()?;
    check_start(spec, x0)?;
    let steps = step_indices(times, cfg)?;
    let mut rng = path_rng(cfg.seed, STREAM_BRANCHING + replica);
    let snaps = run_population(spec, x0, cfg, &steps, &mut rng, true)?;
    Ok(snaps
        .into_iter()
        .zip(times)
        .map(|(s, &t)| PopulationState {
            t,
            dimension: spec.dimension,
            extinct: s.count == 0,
            capped: s.capped,
            positions: s.positions.unwrap_or_default(),
        })
        .collect())
}

fn check_start(spec: &ModelSpec, x0: &[f64]) -> Result<()> {
    if x0.len() != spec.dimension || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "start point must be a finite {}-vector",
            spec.dimension
        )));
    }
    Ok(())
}

/// Total masses of `cfg.n_paths` independent replicas.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSet {
    pub times: Vec<f64>,
    /// `counts[r][k]` is `N_t` of replica `r` at `times[k]`.
    pub counts: Vec<Vec<u64>>,
    /// `capped[r][k]`: replica `r` had hit the cap by `times[k]`.
    pub capped: Vec<Vec<bool>>,
}

/// Runs `cfg.n_paths` replicas from `x0` and records `N_t` at `times`.
pub fn simulate_replicas(
    spec: &ModelSpec,
    x0: &[f64],
    cfg: &SimConfig,
    times: &[f64],
) -> Result<ReplicaSet> {
    cfg.validate()?;
    check_start(spec, x0)?;
    let steps = step_indices(times, cfg)?;
    let runs = map_indexed(cfg.n_paths, |r| {
        let mut rng = path_rng(cfg.seed, STREAM_BRANCHING + r);
        run_population(spec, x0, cfg, &steps, &mut rng, false)
    })?;
    let counts = runs
        .iter()
        .map(|s| s.iter().map(|x| x.count as u64).collect())
        .collect();
    let capped = runs
        .iter()
        .map(|s| s.iter().map(|x| x.capped).collect())
        .collect();
    Ok(ReplicaSet {
        times: times.to_vec(),
        counts,
        capped,
    })
}

impl ReplicaSet {
    pub fn replicas(&self) -> usize {
        self.counts.len()
    }

    pub fn is_capped(&self, replica: usize) -> bool {
        self.capped[replica].iter().any(|c| *c)
    }

    pub fn capped_count(&self) -> usize {
        (0..self.replicas()).filter(|&r| self.is_capped(r)).count()
    }

    pub fn capped_fraction(&self) -> f64 {
        self.capped_count() as f64 / self.replicas() as f64
    }

    /// Mean total mass at each time over replicas that never hit the cap.
    /// Extinct replicas contribute zero.
    pub fn mean_mass(&self) -> Vec<MeanEstimate> {
        let kept: Vec<usize> = (0..self.replicas())
            .filter(|&r| !self.is_capped(r))
            .collect();
        (0..self.times.len())
            .map(|k| {
                let v: Vec<f64> = kept.iter().map(|&r| self.counts[r][k] as f64).collect();
                mean_estimate(&v)
            })
            .collect()
    }

    /// Long-format CSV `replica,t,N_t,capped,extinct`.
    pub fn write_csv<W: Write>(&self, header: &str, mut out: W) -> Result<()> {
        writeln!(out, "{header}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["replica", "t", "N_t", "capped", "extinct"])?;
        for (r, (counts, capped)) in self.counts.iter().zip(&self.capped).enumerate() {
            for ((t, n), c) in self.times.iter().zip(counts).zip(capped) {
                w.write_record([
                    r.to_string(),
                    t.to_string(),
                    n.to_string(),
                    c.to_string(),
                    (*n == 0).to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// CSV `t,mean_N_t,std_error,replicas_used` of [`ReplicaSet::mean_mass`].
    pub fn write_summary_csv<W: Write>(&self, header: &str, mut out: W) -> Result<()> {
        writeln!(out, "{header}")?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "mean_N_t", "std_error", "replicas_used"])?;
        for (t, m) in self.times.iter().zip(self.mean_mass()) {
            w.write_record([
                t.to_string(),
                m.mean.to_string(),
                m.std_error.to_string(),
                m.samples.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
