use super::grid::Grid;
use super::linalg::{conjugate_gradient, TridiagonalFactor};
use crate::error::{Error, Result};
use crate::problem::ModelSpec;

/// Matrix-free `-½Δ_h + diag(K~ + m)` on the interior nodes of a grid,
/// with homogeneous Dirichlet values on the boundary.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    grid: Grid,
    interior: Vec<usize>,
    /// Diagonal of the shifted matrix over interior unknowns.
    diag: Vec<f64>,
    /// Off-diagonal coupling `-1 / (2 h^2)`.
    off: f64,
    shift: f64,
    /// `K~` at every node, boundary included.
    ktilde: Vec<f64>,
    /// `V` at every node.
    potential: Vec<f64>,
    factor: Option<TridiagonalFactor>,
    potential_digest: String,
}

/// Builds the shifted operator; `m = max(0, 1 - min K~)` over interior nodes.
pub fn discretize(spec: &ModelSpec, grid: &Grid) -> Result<DiscreteOperator> {
    discretize_with_offset(spec, grid, 0.0)
}

/// As [`discretize`] with a constant added to `K~`.
pub fn discretize_with_offset(
    spec: &ModelSpec,
    grid: &Grid,
    offset: f64,
) -> Result<DiscreteOperator> {
    if grid.dimension() != spec.dimension {
        return Err(Error::InvalidInput(format!(
            "grid dimension {} does not match model dimension {}",
            grid.dimension(),
            spec.dimension
        )));
    }
    let mut ktilde = Vec::with_capacity(grid.node_count());
    let mut potential = Vec::with_capacity(grid.node_count());
    let mut x = vec![0.0; grid.dimension()];
    for node in 0..grid.node_count() {
        grid.coordinates_into(node, &mut x);
        let k = spec.effective_potential(&x)? + offset;
        if !k.is_finite() {
            return Err(Error::Evaluation {
                field: "effective potential K~",
                point: x.clone(),
            });
        }
        ktilde.push(k);
        let v = spec.potential_value(&x);
        if !v.is_finite() {
            return Err(Error::Evaluation {
                field: "potential V",
                point: x.clone(),
            });
        }
        potential.push(v);
    }
    let interior = grid.interior_nodes();
    let kmin = interior
        .iter()
        .map(|&i| ktilde[i])
        .fold(f64::INFINITY, f64::min);
    let shift = (1.0 - kmin).max(0.0);
    let h = grid.spacing();
    let lap_diag = grid.dimension() as f64 / (h * h);
    let diag: Vec<f64> = interior
        .iter()
        .map(|&i| lap_diag + ktilde[i] + shift)
        .collect();
    let off = -0.5 / (h * h);
    let factor = if grid.dimension() == 1 {
        Some(TridiagonalFactor::new(&diag, off)?)
    } else {
        None
    };
    Ok(DiscreteOperator {
        grid: grid.clone(),
        interior,
        diag,
        off,
        shift,
        ktilde,
        potential,
        factor,
        potential_digest: potential_digest(spec),
    })
}

/// SHA-256 of the serialized potential descriptor, recorded with stored eigenvectors.
pub fn potential_digest(spec: &ModelSpec) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(&spec.potential).expect("field descriptors serialize");
    Sha256::digest(json.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn ktilde(&self) -> &[f64] {
        &self.ktilde
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn potential_digest(&self) -> &str {
        &self.potential_digest
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn unknowns(&self) -> usize {
        self.interior.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// `y = A x` on interior unknowns.
    pub fn apply_interior(&self, x: &[f64], y: &mut [f64]) {
        let m = self.grid.points_per_axis() - 2;
        let dim = self.grid.dimension();
        let mut stride = 1;
        for (yi, (di, xi)) in y.iter_mut().zip(self.diag.iter().zip(x)) {
            *yi = di * xi;
        }
        for _axis in 0..dim {
            let block = stride * m;
            for i in 0..x.len() {
                let pos = (i / stride) % m;
                if pos > 0 {
                    y[i] += self.off * x[i - stride];
                }
                if pos + 1 < m {
                    y[i] += self.off * x[i + stride];
                }
            }
            stride = block;
        }
    }

    /// Action on a node-indexed vector. Boundary entries of `v` are ignored
    /// and the result is zero on the boundary.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let x: Vec<f64> = self.interior.iter().map(|&i| v[i]).collect();
        let mut y = vec![0.0; x.len()];
        self.apply_interior(&x, &mut y);
        self.embed(&y)
    }

    /// Solves `A x = b` on interior unknowns.
    pub fn solve_interior(&self, b: &[f64], x: &mut [f64]) -> Result<()> {
        match &self.factor {
            Some(f) => {
                f.solve(b, x);
                Ok(())
            }
            None => {
                x.iter_mut().for_each(|v| *v = 0.0);
                let max_iter = 20 * self.unknowns().max(100);
                conjugate_gradient(
                    |u, w| self.apply_interior(u, w),
                    &self.diag,
                    b,
                    x,
                    1e-14,
                    max_iter,
                )
                .map(|_| ())
            }
        }
    }

    pub fn embed(&self, interior_values: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.grid.node_count()];
        for (&node, &v) in self.interior.iter().zip(interior_values) {
            full[node] = v;
        }
        full
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ScalarField;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn centre_stencil_value() {
        // n = 17 on [-8, 8]: h = 1
        let m = ModelSpec::new(
            1,
            ScalarField::zero(),
            ScalarField::zero(),
            ScalarField::constant(2.0),
        )
        .unwrap();
        let g = Grid::new(1, 8.0, 17).unwrap();
        let op = discretize(&m, &g).unwrap();
        assert_eq!(op.shift(), 0.0);
        let mut e = vec![0.0; 17];
        e[8] = 1.0;
        let y = op.apply(&e);
        assert_eq!(y[8], 1.0 + 2.0);
        assert_eq!(y[7], -0.5);
        assert_eq!(y[0], 0.0);
    }

    #[test]
    fn shift_lifts_minimum_to_one() {
        let m = ModelSpec::harmonic(1);
        let op = discretize(&m, &Grid::new(1, 4.0, 33).unwrap()).unwrap();
        assert_eq!(op.shift(), 1.0);
    }

    #[test]
    fn constant_potential_rayleigh_bound() {
        let kappa = 0.3;
        let m = ModelSpec::ornstein_uhlenbeck(2, 0.0, kappa);
        let g = Grid::new(2, 3.0, 21).unwrap();
        let op = discretize(&m, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = random(op.unknowns(), &mut rng);
        let mut av = vec![0.0; v.len()];
        op.apply_interior(&v, &mut av);
        let rq = crate::spectral::linalg::dot(&v, &av) / crate::spectral::linalg::dot(&v, &v);
        assert!(rq >= kappa + op.shift());
    }

    #[test]
    fn symmetric_and_positive() {
        for dim in 1..=3 {
            let m = ModelSpec::growth_family(dim, 1.0, 2.0);
            let g = Grid::new(dim, 3.0, 17).unwrap();
            let op = discretize(&m, &g).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
            let u = random(g.node_count(), &mut rng);
            let v = random(g.node_count(), &mut rng);
            let au = op.apply(&u);
            let av = op.apply(&v);
            let lhs = crate::spectral::linalg::dot(&au, &v);
            let rhs = crate::spectral::linalg::dot(&u, &av);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()));
            let vint: Vec<f64> = op.interior().iter().map(|&i| v[i]).collect();
            let vfull = op.embed(&vint);
            assert!(crate::spectral::linalg::dot(&op.apply(&vfull), &vfull) >= 0.0);
        }
    }

    #[test]
    fn solve_inverts_apply() {
        for dim in 1..=2 {
            let m = ModelSpec::harmonic(dim);
            let g = Grid::new(dim, 4.0, 33).unwrap();
            let op = discretize(&m, &g).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let b = random(op.unknowns(), &mut rng);
            let mut x = vec![0.0; b.len()];
            op.solve_interior(&b, &mut x).unwrap();
            let mut ax = vec![0.0; b.len()];
            op.apply_interior(&x, &mut ax);
            let err = ax
                .iter()
                .zip(&b)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "dim {dim}: {err}");
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = ModelSpec::harmonic(2);
        assert!(discretize(&m, &Grid::new(1, 4.0, 33).unwrap()).is_err());
    }
}
