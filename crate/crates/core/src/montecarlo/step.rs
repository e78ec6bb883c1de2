use crate::error::{Error, Result};
use crate::problem::ModelSpec;

/// One Euler-Maruyama step of `dX = grad V(X) dt + dB`:
/// `x + grad V(x) dt + sqrt(dt) noise`.
pub fn diffusion_step(spec: &ModelSpec, x: &[f64], dt: f64, noise: &[f64]) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    let mut drift = vec![0.0; x.len()];
    step_in_place(spec, &mut y, dt, noise, &mut drift)?;
    Ok(y)
}

/// In-place step; `drift` is scratch space of length `d`.
pub(crate) fn step_in_place(
    spec: &ModelSpec,
    x: &mut [f64],
    dt: f64,
    noise: &[f64],
    drift: &mut [f64],
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let sq = dt.sqrt();
    if spec.potential.is_zero() {
        for (xi, n) in x.iter_mut().zip(noise) {
            *xi += sq * n;
        }
        return Ok(());
    }
    drift.iter_mut().for_each(|g| *g = 0.0);
    spec.potential.add_gradient(x, dt, drift);
    if drift.iter().any(|g| !g.is_finite()) {
        return Err(Error::Evaluation {
            field: "gradient of V",
            point: x.to_vec(),
        });
    }
    for ((xi, g), n) in x.iter_mut().zip(drift.iter()).zip(noise) {
        *xi += g + sq * n;
    }
    Ok(())
}
