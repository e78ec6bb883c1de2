//! Particle simulation of the branching diffusion, Feynman-Kac path
//! estimators and self-normalized sampling of the quasi-stationary law.
//!
//! Every replica or path `i` draws from its own ChaCha8 stream
//! `(seed, stream_base + i)`, and results are reduced in index order, so
//! outputs do not depend on the thread schedule.

pub mod branching;
pub mod config;
pub mod fk;
pub mod qsd;
pub mod step;

pub use branching::{simulate_branching, simulate_replicas, PopulationState, ReplicaSet};
pub use config::{Scheme, SimConfig};
pub use fk::{feynman_kac_dt_pair, feynman_kac_estimate, feynman_kac_times, DtPair, FkEstimate};
pub use qsd::{qsd_sample, qsd_sample_times, GridSampler, InitialSampler, QsdSample};
pub use step::diffusion_step;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

pub(crate) const STREAM_BRANCHING: u64 = 0;
pub(crate) const STREAM_FK: u64 = 1 << 40;
pub(crate) const STREAM_QSD: u64 = 2 << 40;

pub(crate) fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `f(0..n)`, possibly in parallel, and returns results in index order.
/// The first error by index wins.
pub(crate) fn map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let results: Vec<Result<T>> = {
        use rayon::prelude::*;
        (0..n as u64).into_par_iter().map(&f).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<T>> = (0..n as u64).map(&f).collect();
    results.into_iter().collect()
}

/// Step indices for the requested sample times; `t / dt` is rounded.
pub(crate) fn step_indices(times: &[f64], cfg: &SimConfig) -> Result<Vec<usize>> {
    let total = cfg.steps();
    times
        .iter()
        .map(|&t| {
            if !(t >= 0.0) || t > cfg.t_max * (1.0 + 1e-12) {
                return Err(crate::Error::InvalidInput(format!(
                    "sample time {t} outside [0, t_max = {}]",
                    cfg.t_max
                )));
            }
            Ok(((t / cfg.dt).round() as usize).min(total))
        })
        .collect()
}
