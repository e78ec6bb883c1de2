//! Shift-invert Lanczos for the lowest eigenpairs of the discrete operator.
//!
//! The shifted matrix `A` satisfies `A >= I`, so `A^{-1}` is well conditioned
//! and its largest eigenvalues `1 / λ` are the wanted ones. Each pass runs
//! Lanczos with full reorthogonalization against its own basis and against
//! all previously accepted vectors; further passes recover copies of
//! repeated eigenvalues that a single Krylov space cannot see. A few steps
//! of block inverse iteration with Rayleigh-Ritz then polish the residuals
//! measured on `A` itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::{axpy, dot, norm, orthogonalize, scale, symmetric_eigen, tridiagonal_eigen};
use super::operator::DiscreteOperator;
use crate::error::{Error, Result};

const START_SEED: u64 = 0x1a2c_2050;
const RITZ_TOL: f64 = 1e-11;
const MAX_POLISH: usize = 25;

/// Eigenpairs of `A` (shift included), Euclidean-normalized on interior unknowns.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

struct Pass {
    /// Eigenvalue estimates of `A`, ascending.
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

fn solve(op: &DiscreteOperator, b: &[f64]) -> Result<Vec<f64>> {
    let mut x = vec![0.0; b.len()];
    op.solve_interior(b, &mut x)?;
    Ok(x)
}

/// One Lanczos run on `A^{-1}` restricted to the complement of `locked`.
/// Stops once the `want` largest Ritz values are converged, or early when
/// `stop_above` is given and the top Ritz value already maps above it.
fn lanczos_pass(
    op: &DiscreteOperator,
    locked: &[Vec<f64>],
    want: usize,
    stop_above: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Pass> {
    let n = op.unknowns();
    let avail = n - locked.len();
    let max_k = avail.min(4 * want + 80);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    orthogonalize(&mut q, locked);
    let qn = norm(&q);
    scale(1.0 / qn, &mut q);
    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    loop {
        let k = basis.len();
        let mut w = solve(op, &basis[k - 1])?;
        let a = dot(&basis[k - 1], &w);
        alpha.push(a);
        orthogonalize(&mut w, locked);
        orthogonalize(&mut w, &basis);
        let b = norm(&w);
        let scale_ref = alpha.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let breakdown = b <= 1e-13 * scale_ref;
        let at_cap = k >= max_k;
        let check = breakdown || at_cap || (k >= want.max(2) && k.is_multiple_of(8));
        if check {
            let (theta, s) = tridiagonal_eigen(&alpha, &beta)?;
            // Largest Ritz values of A^{-1} are the smallest of A.
            let take = want.min(k);
            let converged = (0..take).all(|i| {
                let j = k - 1 - i;
                b * s[(k - 1) * k + j].abs() <= RITZ_TOL * theta[k - 1]
            });
            let early = stop_above.is_some_and(|limit| {
                let top = k - 1;
                b * s[(k - 1) * k + top].abs() <= RITZ_TOL * theta[top] && 1.0 / theta[top] >= limit
            });
            if converged || breakdown || early || at_cap {
                if !converged && !breakdown && !early {
                    let residuals = (0..take)
                        .map(|i| b * s[(k - 1) * k + (k - 1 - i)].abs() / theta[k - 1])
                        .collect();
                    return Err(Error::SolverNotConverged {
                        iterations: k,
                        residuals,
                    });
                }
                let mut values = Vec::with_capacity(take);
                let mut vectors = Vec::with_capacity(take);
                for i in 0..take {
                    let j = k - 1 - i;
                    let mut v = vec![0.0; n];
                    for (r, qr) in basis.iter().enumerate() {
                        axpy(s[r * k + j], qr, &mut v);
                    }
                    let vn = norm(&v);
                    scale(1.0 / vn, &mut v);
                    values.push(1.0 / theta[j]);
                    vectors.push(v);
                }
                return Ok(Pass { values, vectors });
            }
        }
        beta.push(b);
        scale(1.0 / b, &mut w);
        basis.push(w);
    }
}

fn rayleigh_ritz(op: &DiscreteOperator, x: &mut Vec<Vec<f64>>) -> (Vec<f64>, Vec<f64>) {
    let p = x.len();
    let n = op.unknowns();
    let ax: Vec<Vec<f64>> = x
        .iter()
        .map(|v| {
            let mut y = vec![0.0; n];
            op.apply_interior(v, &mut y);
            y
        })
        .collect();
    let mut h = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let v = 0.5 * (dot(&x[i], &ax[j]) + dot(&x[j], &ax[i]));
            h[i * p + j] = v;
            h[j * p + i] = v;
        }
    }
    let (_, s) = symmetric_eigen(&h, p);
    let mut rotated = vec![vec![0.0; n]; p];
    let mut arot = vec![vec![0.0; n]; p];
    for j in 0..p {
        for i in 0..p {
            axpy(s[i * p + j], &x[i], &mut rotated[j]);
            axpy(s[i * p + j], &ax[i], &mut arot[j]);
        }
    }
    let mut values = Vec::with_capacity(p);
    let mut residuals = Vec::with_capacity(p);
    for j in 0..p {
        let nv = norm(&rotated[j]);
        scale(1.0 / nv, &mut rotated[j]);
        scale(1.0 / nv, &mut arot[j]);
        let rho = dot(&rotated[j], &arot[j]);
        let mut r = arot[j].clone();
        axpy(-rho, &rotated[j], &mut r);
        values.push(rho);
        residuals.push(norm(&r));
    }
    *x = rotated;
    (values, residuals)
}

fn orthonormalize(x: &mut [Vec<f64>]) {
    for i in 0..x.len() {
        let (done, rest) = x.split_at_mut(i);
        let v = &mut rest[0];
        orthogonalize(v, done);
        let vn = norm(v);
        scale(1.0 / vn, v);
    }
}

/// The `count` smallest eigenpairs of `A`, residuals `‖A v - λ v‖ <= tol`.
pub fn lowest_eigenpairs(op: &DiscreteOperator, count: usize, tol: f64) -> Result<EigenPairs> {
    let n = op.unknowns();
    if count == 0 || count > n {
        return Err(Error::InvalidInput(format!(
            "cannot compute {count} modes from {n} unknowns"
        )));
    }
    let block = (count + (count / 4).max(4)).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);

    let first = lanczos_pass(op, &[], block, None, &mut rng)?;
    let mut values = first.values;
    let mut vectors = first.vectors;
    // Recover missed copies of repeated eigenvalues.
    while vectors.len() < n {
        let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let limit = if vectors.len() >= block {
            top
        } else {
            f64::INFINITY
        };
        let extra = lanczos_pass(
            op,
            &vectors,
            block.min(n - vectors.len()),
            Some(limit),
            &mut rng,
        )?;
        let mut added = false;
        for (v, x) in extra.values.into_iter().zip(extra.vectors) {
            if vectors.len() < block || v < top * (1.0 - 1e-12) {
                values.push(v);
                vectors.push(x);
                added = true;
            }
        }
        if !added {
            break;
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        order.truncate(block);
        values = order.iter().map(|&i| values[i]).collect();
        vectors = order.iter().map(|&i| vectors[i].clone()).collect();
    }

    let mut x = vectors;
    orthonormalize(&mut x);
    let (mut vals, mut res) = rayleigh_ritz(op, &mut x);
    let mut iterations = 0;
    while res[..count].iter().any(|r| *r > tol) {
        if iterations >= MAX_POLISH {
            return Err(Error::SolverNotConverged {
                iterations,
                residuals: res[..count].to_vec(),
            });
        }
        for v in x.iter_mut() {
            *v = solve(op, v)?;
        }
        orthonormalize(&mut x);
        (vals, res) = rayleigh_ritz(op, &mut x);
        iterations += 1;
    }
    x.truncate(count);
    vals.truncate(count);
    res.truncate(count);
    Ok(EigenPairs {
        values: vals,
        vectors: x,
        residuals: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::ModelSpec;
    use crate::spectral::grid::Grid;
    use crate::spectral::operator::discretize;
    use nalgebra::{DMatrix, SymmetricEigen};

    #[test]
    fn matches_dense_oracle_on_coarse_grid() {
        let m = ModelSpec::harmonic(1);
        let g = Grid::new(1, 8.0, 201).unwrap();
        let op = discretize(&m, &g).unwrap();
        let n = op.unknowns();
        let mut dense = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            op.apply_interior(&e, &mut col);
            for i in 0..n {
                dense[(i, j)] = col[i];
            }
        }
        let mut oracle: Vec<f64> = SymmetricEigen::new(dense)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        oracle.sort_by(f64::total_cmp);
        let pairs = lowest_eigenpairs(&op, 6, 1e-9).unwrap();
        for (a, b) in pairs.values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(pairs.residuals.iter().all(|r| *r <= 1e-9));
    }

    #[test]
    fn finds_repeated_eigenvalues_in_2d() {
        // Isotropic oscillator: levels k + 1 with multiplicity k + 1.
        let m = ModelSpec::harmonic(2);
        let g = Grid::new(2, 7.0, 71).unwrap();
        let op = discretize(&m, &g).unwrap();
        let pairs = lowest_eigenpairs(&op, 6, 1e-8).unwrap();
        let shift = op.shift();
        let expected = [1.0, 2.0, 2.0, 3.0, 3.0, 3.0];
        for (a, b) in pairs.values.iter().zip(expected) {
            assert!((a - shift - b).abs() < 2e-2, "{a} vs {b}");
        }
    }
}
