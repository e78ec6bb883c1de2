//! Smooth scalar fields on R^d with analytic gradient and Laplacian.
//!
//! Fields are plain descriptors so they can be read from config files,
//! hashed, and evaluated without allocation on the Monte Carlo hot path.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarField {
    /// `a * (|x|^2 + shift)^(alpha / 2)`.
    ///
    /// `shift > 0` regularizes the origin; with `shift = 0` the field is only
    /// C^2 for `alpha = 0` or `alpha >= 2`.
    RadialPolynomial {
        a: f64,
        alpha: f64,
        #[serde(default)]
        shift: f64,
    },
    /// `c |x|^2 / 2`.
    Quadratic {
        c: f64,
    },
    Constant {
        value: f64,
    },
    /// `coefficients · x`.
    Linear {
        coefficients: Vec<f64>,
    },
    /// `amplitude * exp(-|x - center|^2 / (2 width^2))`.
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
    Sum {
        terms: Vec<ScalarField>,
    },
    Scaled {
        factor: f64,
        field: Box<ScalarField>,
    },
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

impl ScalarField {
    pub fn zero() -> Self {
        ScalarField::Constant { value: 0.0 }
    }

    pub fn constant(value: f64) -> Self {
        ScalarField::Constant { value }
    }

    pub fn quadratic(c: f64) -> Self {
        ScalarField::Quadratic { c }
    }

    pub fn radial(a: f64, alpha: f64, shift: f64) -> Self {
        ScalarField::RadialPolynomial { a, alpha, shift }
    }

    pub fn linear(coefficients: Vec<f64>) -> Self {
        ScalarField::Linear { coefficients }
    }

    pub fn gaussian(amplitude: f64, center: Vec<f64>, width: f64) -> Self {
        ScalarField::Gaussian {
            amplitude,
            center,
            width,
        }
    }

    pub fn sum(terms: Vec<ScalarField>) -> Self {
        ScalarField::Sum { terms }
    }

    pub fn scaled(factor: f64, field: ScalarField) -> Self {
        ScalarField::Scaled {
            factor,
            field: Box::new(field),
        }
    }

    /// Checks that the descriptor is well formed for dimension `dim`.
    pub fn validate(&self, dim: usize) -> Result<(), String> {
        match self {
            ScalarField::RadialPolynomial { a, alpha, shift } => {
                if !a.is_finite() || !alpha.is_finite() || !shift.is_finite() {
                    return Err("radial-polynomial parameters must be finite".into());
                }
                if *alpha < 0.0 {
                    return Err(format!("radial-polynomial exponent {alpha} is negative"));
                }
                if *shift < 0.0 {
                    return Err(format!("radial-polynomial shift {shift} is negative"));
                }
                if *shift == 0.0 && *alpha != 0.0 && *alpha < 2.0 {
                    return Err(format!(
                        "radial-polynomial with alpha = {alpha} < 2 needs shift > 0 to be C^2"
                    ));
                }
                Ok(())
            }
            ScalarField::Quadratic { c } => finite(*c, "quadratic coefficient"),
            ScalarField::Constant { value } => finite(*value, "constant"),
            ScalarField::Linear { coefficients } => {
                if coefficients.len() != dim {
                    return Err(format!(
                        "linear field has {} coefficients, model dimension is {dim}",
                        coefficients.len()
                    ));
                }
                coefficients
                    .iter()
                    .try_for_each(|c| finite(*c, "linear coefficient"))
            }
            ScalarField::Gaussian {
                amplitude,
                center,
                width,
            } => {
                finite(*amplitude, "gaussian amplitude")?;
                if center.len() != dim {
                    return Err(format!(
                        "gaussian center has {} coordinates, model dimension is {dim}",
                        center.len()
                    ));
                }
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(format!("gaussian width {width} must be positive"));
                }
                Ok(())
            }
            ScalarField::Sum { terms } => terms.iter().try_for_each(|t| t.validate(dim)),
            ScalarField::Scaled { factor, field } => {
                finite(*factor, "scale factor")?;
                field.validate(dim)
            }
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::RadialPolynomial { a, alpha, shift } => {
                if *alpha == 0.0 {
                    return *a;
                }
                let u = norm_sq(x) + shift;
                if *alpha == 2.0 {
                    a * u
                } else {
                    a * u.powf(alpha / 2.0)
                }
            }
            ScalarField::Quadratic { c } => 0.5 * c * norm_sq(x),
            ScalarField::Constant { value } => *value,
            ScalarField::Linear { coefficients } => {
                coefficients.iter().zip(x).map(|(c, xi)| c * xi).sum()
            }
            ScalarField::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            ScalarField::Sum { terms } => terms.iter().map(|t| t.value(x)).sum(),
            ScalarField::Scaled { factor, field } => factor * field.value(x),
        }
    }

    /// Adds `scale * grad f(x)` into `out`.
    pub fn add_gradient(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            ScalarField::RadialPolynomial { a, alpha, shift } => {
                if *alpha == 0.0 {
                    return;
                }
                let u = norm_sq(x) + shift;
                // d/dx_i a u^(alpha/2) = a alpha u^(alpha/2 - 1) x_i
                let coeff = if *alpha == 2.0 {
                    2.0 * a
                } else if u == 0.0 {
                    0.0
                } else {
                    a * alpha * u.powf(alpha / 2.0 - 1.0)
                };
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += scale * coeff * xi;
                }
            }
            ScalarField::Quadratic { c } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += scale * c * xi;
                }
            }
            ScalarField::Constant { .. } => {}
            ScalarField::Linear { coefficients } => {
                for (o, c) in out.iter_mut().zip(coefficients) {
                    *o += scale * c;
                }
            }
            ScalarField::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let w2 = width * width;
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                let g = amplitude * (-r2 / (2.0 * w2)).exp();
                for ((o, xi), ci) in out.iter_mut().zip(x).zip(center) {
                    *o -= scale * g * (xi - ci) / w2;
                }
            }
            ScalarField::Sum { terms } => {
                for t in terms {
                    t.add_gradient(x, scale, out);
                }
            }
            ScalarField::Scaled { factor, field } => field.add_gradient(x, scale * factor, out),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.add_gradient(x, 1.0, &mut g);
        g
    }

    pub fn laplacian(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        match self {
            ScalarField::RadialPolynomial { a, alpha, shift } => {
                if *alpha == 0.0 {
                    return 0.0;
                }
                if *alpha == 2.0 {
                    return 2.0 * a * d;
                }
                let r2 = norm_sq(x);
                let u = r2 + shift;
                if u == 0.0 {
                    // only reachable with alpha > 2 (validated), where the limit is 0
                    return 0.0;
                }
                // a alpha u^(alpha/2 - 2) [d u + (alpha - 2) r^2]
                a * alpha * u.powf(alpha / 2.0 - 1.0) * (d + (alpha - 2.0) * r2 / u)
            }
            ScalarField::Quadratic { c } => c * d,
            ScalarField::Constant { .. } | ScalarField::Linear { .. } => 0.0,
            ScalarField::Gaussian {
                amplitude,
                center,
                width,
            } => {
                let w2 = width * width;
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                let g = amplitude * (-r2 / (2.0 * w2)).exp();
                g * (r2 / (w2 * w2) - d / w2)
            }
            ScalarField::Sum { terms } => terms.iter().map(|t| t.laplacian(x)).sum(),
            ScalarField::Scaled { factor, field } => factor * field.laplacian(x),
        }
    }

    /// True when the field depends on `x` only through `|x|`.
    pub fn is_radial(&self) -> bool {
        match self {
            ScalarField::RadialPolynomial { .. }
            | ScalarField::Quadratic { .. }
            | ScalarField::Constant { .. } => true,
            ScalarField::Linear { coefficients } => coefficients.iter().all(|c| *c == 0.0),
            ScalarField::Gaussian { center, .. } => center.iter().all(|c| *c == 0.0),
            ScalarField::Sum { terms } => terms.iter().all(ScalarField::is_radial),
            ScalarField::Scaled { field, .. } => field.is_radial(),
        }
    }

    /// True when the field is identically zero by construction.
    pub fn is_zero(&self) -> bool {
        match self {
            ScalarField::Constant { value } => *value == 0.0,
            ScalarField::Quadratic { c } => *c == 0.0,
            ScalarField::Linear { coefficients } => coefficients.iter().all(|c| *c == 0.0),
            ScalarField::RadialPolynomial { a, .. } => *a == 0.0,
            ScalarField::Gaussian { amplitude, .. } => *amplitude == 0.0,
            ScalarField::Sum { terms } => terms.iter().all(ScalarField::is_zero),
            ScalarField::Scaled { factor, field } => *factor == 0.0 || field.is_zero(),
        }
    }
}

fn finite(v: f64, what: &str) -> Result<(), String> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(format!("{what} is not finite"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd_gradient(f: &ScalarField, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[i] += h;
                m[i] -= h;
                (f.value(&p) - f.value(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn fd_laplacian(f: &ScalarField, x: &[f64], h: f64) -> f64 {
        let f0 = f.value(x);
        (0..x.len())
            .map(|i| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[i] += h;
                m[i] -= h;
                (f.value(&p) - 2.0 * f0 + f.value(&m)) / (h * h)
            })
            .sum()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
    }

    fn sample_fields(dim: usize) -> Vec<ScalarField> {
        vec![
            ScalarField::quadratic(-1.0),
            ScalarField::radial(0.5, 3.0, 0.0),
            ScalarField::radial(1.0, 1.0, 1.0),
            ScalarField::radial(2.0, 4.0, 0.5),
            ScalarField::gaussian(1.5, vec![0.3; dim], 0.8),
            ScalarField::linear(vec![-0.7; dim]),
            ScalarField::sum(vec![
                ScalarField::constant(2.0),
                ScalarField::scaled(-0.5, ScalarField::radial(1.0, 2.5, 1.0)),
                ScalarField::quadratic(0.25),
            ]),
        ]
    }

    #[test]
    fn quadratic_closed_forms() {
        let f = ScalarField::quadratic(-1.0);
        assert_eq!(f.value(&[2.0]), -2.0);
        assert_eq!(f.gradient(&[2.0]), vec![-2.0]);
        assert_eq!(f.laplacian(&[2.0, 1.0]), -2.0);
    }

    #[test]
    fn radial_at_origin_is_finite() {
        let f = ScalarField::radial(1.0, 3.0, 0.0);
        assert_eq!(f.value(&[0.0, 0.0]), 0.0);
        assert_eq!(f.gradient(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_eq!(f.laplacian(&[0.0, 0.0]), 0.0);
        let q = ScalarField::radial(1.0, 2.0, 0.0);
        assert_eq!(q.laplacian(&[0.0]), 2.0);
    }

    #[test]
    fn validation_rejects_singular_radial() {
        assert!(ScalarField::radial(1.0, 1.0, 0.0).validate(1).is_err());
        assert!(ScalarField::radial(1.0, 1.0, 1.0).validate(1).is_ok());
        assert!(ScalarField::gaussian(1.0, vec![0.0], 1.0)
            .validate(2)
            .is_err());
    }

    #[test]
    fn parses_from_toml() {
        let src = r#"
            kind = "sum"
            terms = [{ kind = "constant", value = 1.0 }, { kind = "quadratic", c = 2.0 }]
        "#;
        let f: ScalarField = toml::from_str(src).unwrap();
        assert_eq!(f.value(&[1.0]), 2.0);
        let bad = "kind = \"quadratic\"\nc = 1.0\nd = 2.0\n";
        assert!(toml::from_str::<ScalarField>(bad).is_err());
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(
            xs in proptest::collection::vec(-20.0f64..20.0, 1..=3),
        ) {
            let dim = xs.len();
            for f in sample_fields(dim) {
                let g = f.gradient(&xs);
                let gfd = fd_gradient(&f, &xs, 1e-4);
                for (a, b) in g.iter().zip(&gfd) {
                    prop_assert!(close(*a, *b, 1e-6), "{f:?} grad {a} vs {b} at {xs:?}");
                }
                let l = f.laplacian(&xs);
                // second differences lose ~8 digits; relax accordingly
                let lfd = fd_laplacian(&f, &xs, 1e-3);
                let scale = f.value(&xs).abs().max(1.0);
                prop_assert!((l - lfd).abs() <= 1e-5 * scale.max(l.abs()), "{f:?} lap {l} vs {lfd}");
            }
        }

        #[test]
        fn radial_fields_depend_on_norm_only(r in 0.0f64..20.0, theta in 0.0f64..std::f64::consts::TAU) {
            let f = ScalarField::radial(0.7, 3.5, 0.2);
            let a = f.value(&[r, 0.0]);
            let b = f.value(&[r * theta.cos(), r * theta.sin()]);
            prop_assert!(close(a, b, 1e-12));
        }
    }
}
