//! JSON entry points behind the static demo page in `www/`.
//!
//! Every operation takes a one-dimensional model as JSON (the same shape as
//! the `[model]` table of a run config) and returns a JSON document for
//! plotting. The functions are plain Rust so they can be tested natively;
//! the `wasm` module only re-exports them through `wasm-bindgen`.

use branching_spectra::montecarlo::{simulate_replicas, SimConfig};
use branching_spectra::problem::{ModelSpec, ScalarField};
use branching_spectra::spectral::{decompose, Grid, SpectralDecomposition};
use serde_json::{json, Value};

const TOL: f64 = 1e-9;

fn parse_model(model_json: &str) -> Result<ModelSpec, String> {
    let spec: ModelSpec = serde_json::from_str(model_json).map_err(|e| format!("model: {e}"))?;
    spec.validate().map_err(|e| e.to_string())?;
    if spec.dimension != 1 {
        return Err("the demo plots one-dimensional models only".into());
    }
    Ok(spec)
}

fn solve(
    spec: &ModelSpec,
    radius: f64,
    points: usize,
    modes: usize,
) -> Result<SpectralDecomposition, String> {
    let grid = Grid::new(1, radius, points).map_err(|e| e.to_string())?;
    decompose(spec, &grid, modes, TOL).map_err(|e| e.to_string())
}

fn axis(dec: &SpectralDecomposition) -> Vec<f64> {
    let g = dec.grid();
    (0..g.node_count()).map(|i| g.axis_coordinate(i)).collect()
}

fn time_axis(t_max: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| t_max * k as f64 / count as f64)
        .collect()
}

/// Lowest eigenvalues and the ground state, both in the flat
/// (`φ̃₀`) and the weighted (`φ₀ = e^{-V} φ̃₀`) normalization.
pub fn spectrum(
    model_json: &str,
    radius: f64,
    points: usize,
    modes: usize,
) -> Result<String, String> {
    let spec = parse_model(model_json)?;
    let dec = solve(&spec, radius, points, modes)?;
    let doc = json!({
        "eigenvalues": dec.eigenvalues(),
        "residuals": dec.residuals(),
        "gap": dec.gap(),
        "x": axis(&dec),
        "phi_tilde_0": dec.phi_tilde(0),
        "phi_0": dec.phi(0),
    });
    Ok(doc.to_string())
}

/// Mean population `E N_t` started from one particle at `x0`, simulated
/// with `replicas` independent copies, next to the grid value `P_t 1 (x0)`.
#[allow(clippy::too_many_arguments)]
pub fn mass_curve(
    model_json: &str,
    x0: f64,
    t_max: f64,
    dt: f64,
    replicas: usize,
    seed: u64,
    radius: f64,
    points: usize,
) -> Result<String, String> {
    let spec = parse_model(model_json)?;
    let dec = solve(&spec, radius, points, 8)?;
    let times = time_axis(t_max, 16);
    let cfg = SimConfig::new(dt, t_max, replicas, seed).map_err(|e| e.to_string())?;
    let set = simulate_replicas(&spec, &[x0], &cfg, &times).map_err(|e| e.to_string())?;
    let node = dec.grid().nearest_node(&[x0]);
    let ones = vec![1.0; dec.grid().node_count()];
    let mut spectral = Vec::with_capacity(times.len());
    for &t in &times {
        spectral.push(dec.semigroup_apply(t, &ones).map_err(|e| e.to_string())?[node]);
    }
    let mass = set.mean_mass();
    let doc = json!({
        "t": times,
        "mean": mass.iter().map(|m| m.mean).collect::<Vec<_>>(),
        "std_error": mass.iter().map(|m| m.std_error).collect::<Vec<_>>(),
        "spectral": spectral,
        "lambda0": dec.eigenvalues()[0],
        "capped": set.capped_count(),
    });
    Ok(doc.to_string())
}

/// `sup_x |e^{λ₀t} P_t φ − Π φ|` for a gaussian bump `φ`, with the
/// predicted decay rate `λ_{n*} − λ₀` of its lowest excited mode.
pub fn gap_decay(
    model_json: &str,
    center: f64,
    width: f64,
    t_max: f64,
    radius: f64,
    points: usize,
) -> Result<String, String> {
    let spec = parse_model(model_json)?;
    let bump = ScalarField::gaussian(1.0, vec![center], width);
    bump.validate(1)?;
    let dec = solve(&spec, radius, points, 8)?;
    let phi = dec.grid().sample(|x| bump.value(x));
    let pi = dec.project_pi(&phi);
    let lambda0 = dec.eigenvalues()[0];
    let times = time_axis(t_max, 24);
    let mut errors = Vec::with_capacity(times.len());
    for &t in &times {
        let pt = dec.semigroup_apply(t, &phi).map_err(|e| e.to_string())?;
        let s = (lambda0 * t).exp();
        errors.push(
            pt.iter()
                .zip(&pi)
                .fold(0.0f64, |m, (p, q)| m.max((s * p - q).abs())),
        );
    }
    let mode = branching_spectra::verify::dominant_mode(&dec, &phi);
    let rate = mode.map(|(n, _)| dec.eigenvalues()[n] - lambda0);
    let doc = json!({
        "t": times,
        "error": errors,
        "dominant_mode": mode.map(|(n, _)| n),
        "predicted_rate": rate,
        "gap": dec.gap(),
        "phi": phi,
        "limit": pi,
        "x": axis(&dec),
    });
    Ok(doc.to_string())
}

/// Parsed form of a returned document, for callers that want a `Value`.
pub fn parse(doc: &str) -> Value {
    serde_json::from_str(doc).unwrap_or(Value::Null)
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    fn js(r: Result<String, String>) -> Result<String, JsValue> {
        r.map_err(|e| JsValue::from_str(&e))
    }

    #[wasm_bindgen]
    pub fn spectrum(
        model_json: &str,
        radius: f64,
        points: usize,
        modes: usize,
    ) -> Result<String, JsValue> {
        js(super::spectrum(model_json, radius, points, modes))
    }

    #[wasm_bindgen(js_name = massCurve)]
    #[allow(clippy::too_many_arguments)]
    pub fn mass_curve(
        model_json: &str,
        x0: f64,
        t_max: f64,
        dt: f64,
        replicas: usize,
        seed: u32,
        radius: f64,
        points: usize,
    ) -> Result<String, JsValue> {
        js(super::mass_curve(
            model_json,
            x0,
            t_max,
            dt,
            replicas,
            seed as u64,
            radius,
            points,
        ))
    }

    #[wasm_bindgen(js_name = gapDecay)]
    pub fn gap_decay(
        model_json: &str,
        center: f64,
        width: f64,
        t_max: f64,
        radius: f64,
        points: usize,
    ) -> Result<String, JsValue> {
        js(super::gap_decay(
            model_json, center, width, t_max, radius, points,
        ))
    }
}
