//! The eigenfunction envelope `H_{c,c0}` and the integrability functional `μ(H)`.

use serde::{Deserialize, Serialize};

use super::model::ModelSpec;
use super::quadrature::{integrate_decaying, QuadOutcome};
use crate::error::{Error, Result};

/// Which growth regime of the envelope is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `V_-` negligible against `|x|^2` and bounded by the ball infimum of `K~`.
    Ess,
    /// `|x|^2` bounded by the ball infimum of `K~`.
    Ess2,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Ess => "ess",
            Branch::Ess2 => "ess2",
        })
    }
}

pub const MIN_BALL_SAMPLES: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default = "default_r0")]
    pub r0: f64,
    #[serde(default = "default_ball_samples")]
    pub ball_samples: usize,
    pub branch: Branch,
}

fn default_c() -> f64 {
    10.0
}
fn default_c0() -> f64 {
    0.05
}
fn default_r0() -> f64 {
    1.0
}
fn default_ball_samples() -> usize {
    64
}

impl BoundParams {
    pub fn new(branch: Branch) -> Self {
        BoundParams {
            c: default_c(),
            c0: default_c0(),
            r0: default_r0(),
            ball_samples: default_ball_samples(),
            branch,
        }
    }

    pub fn with_constants(mut self, c: f64, c0: f64) -> Self {
        self.c = c;
        self.c0 = c0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c0 > 0.0) {
            return Err(Error::InvalidInput(format!(
                "bound constants must be positive (c = {}, c0 = {})",
                self.c, self.c0
            )));
        }
        if self.r0 < 1.0 {
            return Err(Error::InvalidInput(format!(
                "r0 = {} must be >= 1",
                self.r0
            )));
        }
        if self.ball_samples < MIN_BALL_SAMPLES {
            return Err(Error::InvalidInput(format!(
                "ball_samples = {} must be >= {MIN_BALL_SAMPLES}",
                self.ball_samples
            )));
        }
        Ok(())
    }
}

/// Radical inverse of `i` in base `b` (Halton coordinate).
fn radical_inverse(mut i: usize, b: usize) -> f64 {
    let inv = 1.0 / b as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % b) as f64;
        i /= b;
        f *= inv;
    }
    r
}

const PRIMES: [usize; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Deterministic sample of the closed unit ball: the center, points on the
/// unit sphere, and a low-discrepancy interior fill.
#[derive(Clone, Debug)]
pub struct BallStencil {
    dim: usize,
    offsets: Vec<f64>,
}

impl BallStencil {
    pub fn new(dim: usize, samples: usize) -> Self {
        assert!(
            dim >= 1 && dim <= PRIMES.len(),
            "unsupported dimension {dim}"
        );
        let mut offsets = vec![0.0; dim];
        if dim == 1 {
            let n = samples.max(2);
            for i in 0..n {
                offsets.push(-1.0 + 2.0 * i as f64 / (n - 1) as f64);
            }
            return BallStencil { dim, offsets };
        }
        let on_sphere = samples / 2;
        for p in unit_sphere_points(dim, on_sphere) {
            offsets.extend(p);
        }
        let mut accepted = 0;
        let mut i = 1;
        while accepted < samples - on_sphere {
            let p: Vec<f64> = (0..dim)
                .map(|k| 2.0 * radical_inverse(i, PRIMES[k]) - 1.0)
                .collect();
            i += 1;
            if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                offsets.extend(p);
                accepted += 1;
            }
        }
        BallStencil { dim, offsets }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Calls `f` on every sample point of the ball `B(center, radius)`.
    pub fn for_each_point(&self, center: &[f64], radius: f64, mut f: impl FnMut(&[f64])) {
        let mut p = vec![0.0; self.dim];
        for off in self.offsets.chunks_exact(self.dim) {
            for k in 0..self.dim {
                p[k] = center[k] + radius * off[k];
            }
            f(&p);
        }
    }
}

/// `count` deterministic, roughly uniform points on the unit sphere in R^dim
/// (always including the coordinate poles).
pub fn unit_sphere_points(dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut pts = Vec::with_capacity(count.max(2 * dim));
    match dim {
        1 => {
            pts.push(vec![-1.0]);
            pts.push(vec![1.0]);
        }
        2 => {
            let n = count.max(4);
            for i in 0..n {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                pts.push(vec![a.cos(), a.sin()]);
            }
        }
        3 => {
            for k in 0..3 {
                for s in [-1.0, 1.0] {
                    let mut p = vec![0.0; 3];
                    p[k] = s;
                    pts.push(p);
                }
            }
            // Fibonacci lattice
            let n = count.max(6);
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            for i in 0..n {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let a = golden * i as f64;
                pts.push(vec![r * a.cos(), r * a.sin(), z]);
            }
        }
        _ => {
            for k in 0..dim {
                for s in [-1.0, 1.0] {
                    let mut p = vec![0.0; dim];
                    p[k] = s;
                    pts.push(p);
                }
            }
            let mut i = 1;
            while pts.len() < count {
                let p: Vec<f64> = (0..dim)
                    .map(|k| 2.0 * radical_inverse(i, PRIMES[k]) - 1.0)
                    .collect();
                i += 1;
                let n = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 1e-3 {
                    pts.push(p.iter().map(|v| v / n).collect());
                }
            }
        }
    }
    pts
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Minimum of `K~` over the stencil points of `B(x, |x|/2)`.
pub fn ball_infimum_with(spec: &ModelSpec, stencil: &BallStencil, x: &[f64]) -> Result<f64> {
    let radius = 0.5 * norm(x);
    let mut best = f64::INFINITY;
    let mut err = None;
    stencil.for_each_point(x, radius, |p| match spec.effective_potential(p) {
        Ok(v) => best = best.min(v),
        Err(e) => {
            if err.is_none() {
                err = Some(e)
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(best),
    }
}

/// `inf_{z ∈ B(x, |x|/2)} K~(z)` approximated on `params.ball_samples` points.
pub fn ball_infimum_ktilde(spec: &ModelSpec, x: &[f64], params: &BoundParams) -> Result<f64> {
    if norm(x) == 0.0 {
        return Err(Error::InvalidInput("ball infimum needs |x| > 0".into()));
    }
    let stencil = BallStencil::new(spec.dimension, params.ball_samples);
    ball_infimum_with(spec, &stencil, x)
}

/// Precomputed evaluator for `log H_{c,c0}`.
pub struct Envelope<'a> {
    spec: &'a ModelSpec,
    params: BoundParams,
    stencil: BallStencil,
}

impl<'a> Envelope<'a> {
    pub fn new(spec: &'a ModelSpec, params: &BoundParams) -> Self {
        Envelope {
            spec,
            params: params.clone(),
            stencil: BallStencil::new(spec.dimension, params.ball_samples),
        }
    }

    pub fn log_value(&self, x: &[f64]) -> Result<f64> {
        let r = norm(x);
        let inf = ball_infimum_with(self.spec, &self.stencil, x)?;
        // Inside r0 the closed form is only an extension: clamp the infimum at 0.
        // Outside, the ess2 square root still needs a non-negative argument.
        let inf = if r < self.params.r0 {
            inf.max(0.0)
        } else {
            inf
        };
        let v_plus = self.spec.potential_value(x).max(0.0);
        let tail = match self.params.branch {
            Branch::Ess => log_add_exp(-self.params.c * inf, -self.params.c0 * r * r),
            Branch::Ess2 => -self.params.c0 * r * inf.max(0.0).sqrt(),
        };
        Ok(-v_plus + tail)
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        self.log_value(x).map(f64::exp)
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `H_{c,c0}(x)`.
pub fn bound_h(spec: &ModelSpec, params: &BoundParams, x: &[f64]) -> Result<f64> {
    Envelope::new(spec, params).value(x)
}

/// `∫ H(x) w(x) e^{2V(x)} dx` with `w = exp(log_weight)`.
pub fn weighted_envelope_integral<W>(
    spec: &ModelSpec,
    params: &BoundParams,
    box_radius: f64,
    quad_tol: f64,
    log_weight: W,
) -> Result<QuadOutcome>
where
    W: Fn(&[f64]) -> f64,
{
    params.validate()?;
    if !(box_radius > params.r0) {
        return Err(Error::InvalidInput(format!(
            "box radius {box_radius} must exceed r0 = {}",
            params.r0
        )));
    }
    let env = Envelope::new(spec, params);
    let mut failure = None;
    let outcome = integrate_decaying(spec.dimension, box_radius, quad_tol, 10, |x| {
        let lw = log_weight(x);
        if lw == f64::NEG_INFINITY {
            return lw;
        }
        match env.log_value(x) {
            Ok(lh) => lh + 2.0 * spec.potential_value(x) + lw,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

/// `μ(H_{c,c0}) = ∫ H(x) e^{2V(x)} dx`.
pub fn mu_h_integral(
    spec: &ModelSpec,
    params: &BoundParams,
    box_radius: f64,
    quad_tol: f64,
) -> Result<QuadOutcome> {
    weighted_envelope_integral(spec, params, box_radius, quad_tol, |_| 0.0)
}

/// Growth exponents `(alpha, beta)` for which `V ~ |x|^alpha`,
/// `K~ >~ |x|^beta` satisfies the integrability condition.
pub fn growth_exponents_admissible(alpha: f64, beta: f64) -> bool {
    (alpha < 2.0 && alpha <= beta) || (beta >= 2.0 && alpha < 1.0 + beta / 2.0)
}
