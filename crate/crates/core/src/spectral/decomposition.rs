use serde::{Deserialize, Serialize};

use super::grid::Grid;
use super::lanczos::lowest_eigenpairs;
use super::operator::{discretize, DiscreteOperator};
use crate::error::{Error, Result};
use crate::problem::{BoundParams, Envelope, ModelSpec};
use crate::stats::{compensated_sum, linear_fit};

pub const MIN_GAP: f64 = 1e-10;

/// Lowest modes of the drift-free operator on a grid.
///
/// `phi_tilde[n]` is `L²(dx)`-orthonormal under the trapezoid rule and
/// `phi[n] = e^{-V} phi_tilde[n]` is `L²(μ)`-orthonormal, `μ = e^{2V} dx`.
/// Both are stored on every node, with zeros on the Dirichlet boundary.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub(crate) grid: Grid,
    pub(crate) shift: f64,
    pub(crate) eigenvalues: Vec<f64>,
    pub(crate) phi_tilde: Vec<Vec<f64>>,
    pub(crate) phi: Vec<Vec<f64>>,
    pub(crate) residuals: Vec<f64>,
    pub(crate) potential: Vec<f64>,
    pub(crate) weights: Vec<f64>,
    pub(crate) potential_digest: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatKernel {
    pub p_tilde: f64,
    pub p: f64,
    /// Heuristic size of the omitted modes, see [`SpectralDecomposition::heat_kernel`].
    pub tail_estimate: f64,
}

/// The `m_modes` smallest eigenpairs of `op`, shift removed.
pub fn eigs_smallest(
    op: &DiscreteOperator,
    m_modes: usize,
    tol: f64,
) -> Result<SpectralDecomposition> {
    if m_modes < 2 {
        return Err(Error::InvalidInput(
            "at least two modes are required".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let pairs = lowest_eigenpairs(op, m_modes, tol)?;
    let grid = op.grid().clone();
    let h = grid.spacing();
    let norm_factor = h.powf(-0.5 * grid.dimension() as f64);
    let eigenvalues: Vec<f64> = pairs.values.iter().map(|v| v - op.shift()).collect();
    let gap = eigenvalues[1] - eigenvalues[0];
    if gap < MIN_GAP {
        return Err(Error::DegenerateGroundState { gap });
    }
    let potential = op.potential().to_vec();
    let mut phi_tilde = Vec::with_capacity(m_modes);
    for (n, v) in pairs.vectors.iter().enumerate() {
        let mut full = op.embed(v);
        full.iter_mut().for_each(|x| *x *= norm_factor);
        let flip = if n == 0 {
            compensated_sum(full.iter().copied()) < 0.0
        } else {
            // First node (in node order) attaining the largest magnitude, up to
            // roundoff, so that antisymmetric modes get a reproducible sign.
            let best = full.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let at = full
                .iter()
                .position(|x| x.abs() >= best * (1.0 - 1e-6))
                .unwrap_or(0);
            full[at] < 0.0
        };
        if flip {
            full.iter_mut().for_each(|x| *x = -*x);
        }
        phi_tilde.push(full);
    }
    let phi = phi_tilde
        .iter()
        .map(|pt| {
            pt.iter()
                .zip(&potential)
                .map(|(p, v)| p * (-v).exp())
                .collect()
        })
        .collect();
    Ok(SpectralDecomposition {
        weights: grid.weights(),
        grid,
        shift: op.shift(),
        eigenvalues,
        phi_tilde,
        phi,
        residuals: pairs.residuals,
        potential,
        potential_digest: op.potential_digest().to_string(),
    })
}

/// Discretizes `spec` on `grid` and solves for `m_modes` modes.
pub fn decompose(
    spec: &ModelSpec,
    grid: &Grid,
    m_modes: usize,
    tol: f64,
) -> Result<SpectralDecomposition> {
    eigs_smallest(&discretize(spec, grid)?, m_modes, tol)
}

/// Result of re-solving on an enlarged box with the same spacing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStability {
    pub radius: f64,
    pub enlarged_radius: f64,
    pub drift_lambda0: f64,
    pub drift_lambda1: f64,
}

/// Solves on `grid` and on a box 1.5 times larger; the decomposition is
/// accepted only if `λ₀` and `λ₁` move by less than `threshold`.
pub fn decompose_checked(
    spec: &ModelSpec,
    grid: &Grid,
    m_modes: usize,
    tol: f64,
    threshold: f64,
) -> Result<(SpectralDecomposition, BoxStability)> {
    let base = decompose(spec, grid, m_modes, tol)?;
    let big_grid = grid.enlarged(1.5)?;
    let big = decompose(spec, &big_grid, 2, tol)?;
    let stability = BoxStability {
        radius: grid.radius(),
        enlarged_radius: big_grid.radius(),
        drift_lambda0: (big.eigenvalues[0] - base.eigenvalues[0]).abs(),
        drift_lambda1: (big.eigenvalues[1] - base.eigenvalues[1]).abs(),
    };
    let drift = stability.drift_lambda0.max(stability.drift_lambda1);
    if !(drift < threshold) {
        return Err(Error::NotConfining {
            radius: stability.radius,
            enlarged_radius: stability.enlarged_radius,
            drift,
        });
    }
    Ok((base, stability))
}

impl SpectralDecomposition {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn phi_tilde(&self, n: usize) -> &[f64] {
        &self.phi_tilde[n]
    }

    pub fn phi(&self, n: usize) -> &[f64] {
        &self.phi[n]
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn potential_digest(&self) -> &str {
        &self.potential_digest
    }

    pub fn gap(&self) -> f64 {
        self.eigenvalues[1] - self.eigenvalues[0]
    }

    /// `∫ f g dx` by the trapezoid rule.
    pub fn inner_dx(&self, f: &[f64], g: &[f64]) -> f64 {
        compensated_sum(
            self.weights
                .iter()
                .zip(f)
                .zip(g)
                .map(|((w, a), b)| w * a * b),
        )
    }

    /// `∫ f g e^{2V} dx` by the trapezoid rule.
    pub fn inner_mu(&self, f: &[f64], g: &[f64]) -> f64 {
        compensated_sum(
            self.weights
                .iter()
                .zip(&self.potential)
                .zip(f.iter().zip(g))
                .map(|((w, v), (a, b))| {
                    if a * b == 0.0 {
                        0.0
                    } else {
                        w * (2.0 * v).exp() * a * b
                    }
                }),
        )
    }

    /// `⟨φ_n, f⟩_μ = ∫ e^{V} φ~_n f dx` for every mode.
    pub fn coefficients(&self, f: &[f64]) -> Vec<f64> {
        self.phi_tilde
            .iter()
            .map(|pt| {
                compensated_sum(
                    self.weights
                        .iter()
                        .zip(&self.potential)
                        .zip(pt.iter().zip(f))
                        .map(|((w, v), (p, x))| if *p == 0.0 { 0.0 } else { w * v.exp() * p * x }),
                )
            })
            .collect()
    }

    /// Largest deviation of the `dx` Gram matrix of `phi_tilde` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.modes() {
            for j in 0..=i {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst
                    .max((self.inner_dx(&self.phi_tilde[i], &self.phi_tilde[j]) - target).abs());
            }
        }
        worst
    }

    /// Truncated eigen-expansions of `p~(t, x, y)` and
    /// `p(t, x, y) = p~(t, x, y) e^{-V(x)} e^{-V(y)}` at two nodes.
    ///
    /// `tail_estimate` bounds the omitted modes by
    /// `e^{-λ_{m-1} t} M² / (1 - e^{-δ t})`, with `M` the largest nodal value of
    /// the computed `phi_tilde` and `δ` the mean spacing of the top computed
    /// eigenvalues; it assumes the omitted modes keep that spacing.
    pub fn heat_kernel(&self, t: f64, x: usize, y: usize) -> Result<HeatKernel> {
        if !(t > 0.0) {
            return Err(Error::InvalidInput(format!(
                "heat kernel needs t > 0, got {t}"
            )));
        }
        let terms = self
            .eigenvalues
            .iter()
            .zip(&self.phi_tilde)
            .map(|(l, pt)| (-l * t).exp() * (pt[x] * pt[y]));
        let p_tilde = compensated_sum(terms);
        let p = p_tilde * (-self.potential[x]).exp() * (-self.potential[y]).exp();
        let m = self.modes();
        let sup = self
            .phi_tilde
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0f64, |a, b| a.max(b.abs()));
        let k = m.min(5);
        let delta =
            ((self.eigenvalues[m - 1] - self.eigenvalues[m - k]) / (k - 1) as f64).max(1e-3);
        let tail_estimate =
            (-self.eigenvalues[m - 1] * t).exp() * sup * sup / (1.0 - (-delta * t).exp());
        Ok(HeatKernel {
            p_tilde,
            p,
            tail_estimate,
        })
    }

    /// `P_t φ = Σ_n e^{-λ_n t} φ_n ⟨φ_n, φ⟩_μ` on every node. At `t = 0` this is
    /// the projection of `φ` onto the computed modes, not `φ` itself.
    pub fn semigroup_apply(&self, t: f64, phi: &[f64]) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "semigroup needs t >= 0, got {t}"
            )));
        }
        if phi.len() != self.grid.node_count() || phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "test function must be finite on every node".into(),
            ));
        }
        let coeffs = self.coefficients(phi);
        let mut out = vec![0.0; phi.len()];
        for ((l, c), ph) in self.eigenvalues.iter().zip(&coeffs).zip(&self.phi) {
            let a = (-l * t).exp() * c;
            for (o, p) in out.iter_mut().zip(ph) {
                *o += a * p;
            }
        }
        Ok(out)
    }

    /// `Π(g) = φ₀ ⟨g, φ₀⟩_μ`.
    pub fn project_pi(&self, g: &[f64]) -> Vec<f64> {
        let c = self.coefficients(g)[0];
        self.phi[0].iter().map(|p| p * c).collect()
    }

    /// Partial sums `Σ_{n<k} e^{-λ_n t}`, `k = 1..=modes`.
    pub fn trace_partial_sums(&self, t: f64) -> Vec<f64> {
        let mut acc = 0.0;
        self.eigenvalues
            .iter()
            .map(|l| {
                acc += (-l * t).exp();
                acc
            })
            .collect()
    }
}

/// Fitted envelope `|φ_n(x)| <= C₀ e^{λ_n T₀ / 2} H(x)` over modes `0..=n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCheck {
    /// `max |φ_k| / H` over checked nodes, for `k = 0..=n`.
    pub ratios: Vec<f64>,
    pub ratio_max: f64,
    pub c0_fit: f64,
    pub t0_fit: f64,
    /// `exp` of the largest absolute log-residual of the fit.
    pub max_residual_factor: f64,
    pub checked_nodes: usize,
    /// Nodes dropped because `H` underflows there.
    pub excluded_nodes: usize,
    pub pass: bool,
}

pub const ENVELOPE_FACTOR: f64 = 10.0;
const LOG_MIN_POSITIVE: f64 = -708.0;

/// Envelope check against `H_{c,c0}` for modes `0..=n`.
pub fn eigenfunction_envelope_check(
    dec: &SpectralDecomposition,
    spec: &ModelSpec,
    params: &BoundParams,
    n: usize,
) -> Result<EnvelopeCheck> {
    params.validate()?;
    let env = Envelope::new(spec, params);
    envelope_check_with(dec, n, params.r0, |x| env.log_value(x))
}

/// Envelope check against an arbitrary `log H`.
pub fn envelope_check_with(
    dec: &SpectralDecomposition,
    n: usize,
    r0: f64,
    mut log_h: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<EnvelopeCheck> {
    if n >= dec.modes() {
        return Err(Error::InvalidInput(format!(
            "mode {n} not available, decomposition has {} modes",
            dec.modes()
        )));
    }
    let grid = dec.grid();
    let mut x = vec![0.0; grid.dimension()];
    let mut log_ratio = vec![f64::NEG_INFINITY; n + 1];
    let (mut checked, mut excluded) = (0, 0);
    for node in 0..grid.node_count() {
        if grid.is_boundary(node) {
            continue;
        }
        grid.coordinates_into(node, &mut x);
        if x.iter().map(|v| v * v).sum::<f64>().sqrt() < r0 {
            continue;
        }
        let lh = log_h(&x)?;
        if lh < LOG_MIN_POSITIVE {
            excluded += 1;
            continue;
        }
        checked += 1;
        for (k, lr) in log_ratio.iter_mut().enumerate() {
            let a = dec.phi_tilde[k][node].abs();
            if a > 0.0 {
                *lr = lr.max(a.ln() - dec.potential[node] - lh);
            }
        }
    }
    if checked == 0 {
        return Err(Error::InvalidInput(format!(
            "no grid nodes with |x| >= {r0} and H > 0"
        )));
    }
    let (c0_fit, t0_fit, resid) = if n == 0 {
        (log_ratio[0].exp(), 0.0, 0.0)
    } else {
        let xs: Vec<f64> = dec.eigenvalues[..=n].iter().map(|l| 0.5 * l).collect();
        let fit = linear_fit(&xs, &log_ratio);
        (fit.intercept.exp(), fit.slope, fit.max_abs_residual)
    };
    let ratios: Vec<f64> = log_ratio.iter().map(|l| l.exp()).collect();
    let max_residual_factor = resid.exp();
    let pass = ratios.iter().all(|r| r.is_finite()) && max_residual_factor <= ENVELOPE_FACTOR;
    Ok(EnvelopeCheck {
        ratio_max: ratios[n],
        ratios,
        c0_fit,
        t0_fit,
        max_residual_factor,
        checked_nodes: checked,
        excluded_nodes: excluded,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Branch;
    use crate::spectral::operator::discretize_with_offset;

    fn harmonic(n: usize, modes: usize) -> SpectralDecomposition {
        decompose(
            &ModelSpec::harmonic(1),
            &Grid::new(1, 8.0, n).unwrap(),
            modes,
            1e-9,
        )
        .unwrap()
    }

    #[test]
    fn harmonic_levels() {
        let dec = harmonic(801, 3);
        for (k, l) in dec.eigenvalues().iter().enumerate() {
            assert!((l - (k as f64 + 0.5)).abs() < 1e-3, "{k}: {l}");
        }
        assert!(dec.orthonormality_error() < 1e-8);
        assert!(dec.phi_tilde(0).iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn ou_levels() {
        let m = ModelSpec::ornstein_uhlenbeck(1, -1.0, 1.0);
        let dec = decompose(&m, &Grid::new(1, 8.0, 801).unwrap(), 3, 1e-9).unwrap();
        for (k, l) in dec.eigenvalues().iter().enumerate() {
            assert!((l - (k as f64 + 1.0)).abs() < 1e-3, "{k}: {l}");
        }
        for k in 0..3 {
            let norm = dec.inner_mu(dec.phi(k), dec.phi(k));
            assert!((norm - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_shift_moves_spectrum_only() {
        let m = ModelSpec::harmonic(1);
        let g = Grid::new(1, 8.0, 401).unwrap();
        let a = eigs_smallest(&discretize(&m, &g).unwrap(), 4, 1e-11).unwrap();
        let b = eigs_smallest(&discretize_with_offset(&m, &g, 7.0).unwrap(), 4, 1e-11).unwrap();
        for k in 0..4 {
            assert!((b.eigenvalues()[k] - a.eigenvalues()[k] - 7.0).abs() < 1e-9);
            let diff = a
                .phi_tilde(k)
                .iter()
                .zip(b.phi_tilde(k))
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(diff < 1e-10, "mode {k}: {diff}");
        }
    }

    #[test]
    fn mehler_kernel_at_origin() {
        let dec = harmonic(801, 24);
        let c = dec.grid().nearest_node(&[0.0]);
        let hk = dec.heat_kernel(1.0, c, c).unwrap();
        let exact = 1.0 / (2.0 * std::f64::consts::PI * 1f64.sinh()).sqrt();
        assert!(
            (hk.p_tilde - exact).abs() < 1e-3,
            "{} vs {exact}",
            hk.p_tilde
        );
        assert_eq!(hk.p, hk.p_tilde);
        assert!(dec.heat_kernel(0.0, c, c).is_err());
    }

    #[test]
    fn heat_kernel_symmetry_and_chapman_kolmogorov() {
        let dec = harmonic(401, 30);
        let g = dec.grid();
        let (x, y) = (g.nearest_node(&[-0.7]), g.nearest_node(&[1.3]));
        let a = dec.heat_kernel(0.8, x, y).unwrap();
        let b = dec.heat_kernel(0.8, y, x).unwrap();
        assert_eq!(a.p_tilde, b.p_tilde);
        let composed = compensated_sum((0..g.node_count()).map(|z| {
            g.weight(z)
                * dec.heat_kernel(0.3, x, z).unwrap().p_tilde
                * dec.heat_kernel(0.5, z, y).unwrap().p_tilde
        }));
        assert!((composed - a.p_tilde).abs() < 1e-6 + a.tail_estimate);
    }

    #[test]
    fn cameron_martin_and_pi() {
        let dec = harmonic(801, 24);
        let c = dec.grid().nearest_node(&[0.0]);
        let ones = vec![1.0; dec.grid().node_count()];
        let p1 = dec.semigroup_apply(1.0, &ones).unwrap();
        assert!((p1[c] - 1f64.cosh().powf(-0.5)).abs() < 2e-3, "{}", p1[c]);
        let pi = dec.project_pi(&ones);
        assert!((pi[c] - 2f64.sqrt()).abs() < 2e-3);
    }

    #[test]
    fn eigenrelations() {
        let dec = harmonic(401, 6);
        let p = dec.semigroup_apply(0.7, dec.phi(0)).unwrap();
        let l0 = dec.eigenvalues()[0];
        for (a, b) in p.iter().zip(dec.phi(0)) {
            assert!((a - (-l0 * 0.7).exp() * b).abs() < 1e-8);
        }
        let pi0 = dec.project_pi(dec.phi(0));
        assert!(pi0
            .iter()
            .zip(dec.phi(0))
            .all(|(a, b)| (a - b).abs() < 1e-8));
        for k in 1..6 {
            assert!(dec.project_pi(dec.phi(k)).iter().all(|v| v.abs() < 1e-7));
        }
    }

    #[test]
    fn constant_rate_semigroup() {
        // OU with K = 0.7: P_t 1 = e^{-0.7 t} away from the box edge.
        let kappa = 0.7;
        let m = ModelSpec::ornstein_uhlenbeck(1, -1.0, kappa);
        let dec = decompose(&m, &Grid::new(1, 6.0, 2401).unwrap(), 4, 1e-10).unwrap();
        let ones = vec![1.0; dec.grid().node_count()];
        let p = dec.semigroup_apply(1.5, &ones).unwrap();
        for x in [-1.0, 0.0, 0.5, 2.0] {
            let v = p[dec.grid().nearest_node(&[x])];
            assert!((v - (-kappa * 1.5f64).exp()).abs() < 1e-6, "x={x}: {v}");
        }
    }

    #[test]
    fn trace_sums_flatten() {
        let dec = harmonic(801, 40);
        let s = dec.trace_partial_sums(1.0);
        assert!(s.windows(2).all(|w| w[1] >= w[0]));
        assert!(dec.eigenvalues().iter().all(|l| (-l).exp() > 0.0));
        assert!(s[39] - s[38] < 1e-10);
    }

    #[test]
    fn envelope_checks() {
        let m = ModelSpec::harmonic(1);
        let dec = harmonic(401, 6);
        let params = BoundParams::new(Branch::Ess2);
        let e = eigenfunction_envelope_check(&dec, &m, &params, 0).unwrap();
        assert!(e.pass && e.ratio_max.is_finite());
        let e5 = eigenfunction_envelope_check(&dec, &m, &params, 5).unwrap();
        assert!(e5.ratios.len() == 6 && e5.t0_fit.is_finite());

        let flat = envelope_check_with(&dec, 0, 1.0, |_| Ok(0.0)).unwrap();
        let g = dec.grid();
        let max_phi = (0..g.node_count())
            .filter(|&i| g.coordinates(i)[0].abs() >= 1.0)
            .map(|i| dec.phi(0)[i].abs())
            .fold(0.0, f64::max);
        assert!(flat.pass);
        assert!((flat.c0_fit - max_phi).abs() < 1e-12 * max_phi);
    }

    #[test]
    fn rejects_degenerate_requests() {
        let op = discretize(&ModelSpec::harmonic(1), &Grid::new(1, 8.0, 101).unwrap()).unwrap();
        assert!(eigs_smallest(&op, 1, 1e-8).is_err());
    }

    #[test]
    fn flat_potential_fails_box_stability() {
        let m = ModelSpec::new(
            1,
            crate::problem::ScalarField::zero(),
            crate::problem::ScalarField::zero(),
            crate::problem::ScalarField::zero(),
        )
        .unwrap();
        let r = decompose_checked(&m, &Grid::new(1, 8.0, 201).unwrap(), 3, 1e-9, 1e-6);
        assert!(matches!(r, Err(Error::NotConfining { .. })), "{r:?}");
        let ok = decompose_checked(
            &ModelSpec::harmonic(1),
            &Grid::new(1, 8.0, 401).unwrap(),
            3,
            1e-9,
            1e-6,
        );
        assert!(ok.is_ok());
    }
}
