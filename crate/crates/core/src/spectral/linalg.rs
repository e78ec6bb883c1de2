//! Dense kernels used by the eigensolver: tridiagonal QL, cyclic Jacobi,
//! Thomas elimination and preconditioned conjugate gradients.

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x {
        *xi *= alpha;
    }
}

/// Two passes of classical Gram-Schmidt of `w` against `basis`.
/// Returns the coefficients of the first pass.
pub fn orthogonalize(w: &mut [f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let first: Vec<f64> = basis.iter().map(|q| dot(q, w)).collect();
    for (q, c) in basis.iter().zip(&first) {
        axpy(-c, q, w);
    }
    let second: Vec<f64> = basis.iter().map(|q| dot(q, w)).collect();
    for (q, c) in basis.iter().zip(&second) {
        axpy(-c, q, w);
    }
    first
}

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL.
///
/// `diag` has length n, `off[i]` couples `i` and `i + 1` (length n - 1).
/// Returns ascending eigenvalues and the eigenvector matrix, column `j`
/// stored at `z[i * n + j]`.
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    assert_eq!(off.len() + 1, n.max(1));
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::SolverNotConverged {
                    iterations: iter,
                    residuals: vec![e[l].abs()],
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    let zk = &mut z[k * n..(k + 1) * n];
                    let f = zk[i + 1];
                    zk[i + 1] = s * zk[i] + c * f;
                    zk[i] = c * zk[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(sort_eigen(d, z, n))
}

fn sort_eigen(vals: Vec<f64>, z: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let sorted_vals = order.iter().map(|&j| vals[j]).collect();
    let mut sorted_z = vec![0.0; n * n];
    for i in 0..n {
        for (jj, &j) in order.iter().enumerate() {
            sorted_z[i * n + jj] = z[i * n + j];
        }
    }
    (sorted_vals, sorted_z)
}

/// Cyclic Jacobi for a small dense symmetric matrix (row-major `n x n`).
/// Returns ascending eigenvalues and eigenvectors as columns.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-15 * frob || frob == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| a[i * n + i]).collect();
    sort_eigen(vals, v, n)
}

/// LU factors of a symmetric tridiagonal matrix with constant off-diagonal.
#[derive(Clone, Debug)]
pub struct TridiagonalFactor {
    off: f64,
    /// Modified super-diagonal coefficients `c'_i`.
    c_prime: Vec<f64>,
    /// Pivots `b_i - off * c'_{i-1}`.
    pivot: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn new(diag: &[f64], off: f64) -> Result<Self> {
        let n = diag.len();
        let mut c_prime = vec![0.0; n];
        let mut pivot = vec![0.0; n];
        for i in 0..n {
            let piv = if i == 0 {
                diag[0]
            } else {
                diag[i] - off * c_prime[i - 1]
            };
            if piv.abs() < 1e-300 {
                return Err(Error::InvalidInput("singular tridiagonal matrix".into()));
            }
            pivot[i] = piv;
            c_prime[i] = off / piv;
        }
        Ok(TridiagonalFactor {
            off,
            c_prime,
            pivot,
        })
    }

    pub fn solve(&self, b: &[f64], x: &mut [f64]) {
        let n = b.len();
        for i in 0..n {
            let prev = if i == 0 { 0.0 } else { x[i - 1] };
            x[i] = (b[i] - self.off * prev) / self.pivot[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            x[i] -= self.c_prime[i] * x[i + 1];
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for an SPD operator.
/// `x` holds the initial guess on entry. Returns the iteration count.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        let rnorm = norm(&r);
        if rnorm <= rel_tol * bnorm {
            return Ok(it);
        }
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        for ((zi, ri), di) in z.iter_mut().zip(&r).zip(diag) {
            *zi = ri / di;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    let rnorm = norm(&r);
    if rnorm <= rel_tol * bnorm {
        Ok(max_iter)
    } else {
        Err(Error::SolverNotConverged {
            iterations: max_iter,
            residuals: vec![rnorm / bnorm],
        })
    }
}
