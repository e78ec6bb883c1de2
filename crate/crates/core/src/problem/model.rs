use serde::{Deserialize, Serialize};

use super::field::ScalarField;
use crate::error::{Error, Result};

/// A branching-diffusion model: traits follow `dX = grad V(X) dt + dB`,
/// individuals give birth at rate `b(x)` and die at rate `d(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dimension: usize,
    pub potential: ScalarField,
    pub birth: ScalarField,
    pub death: ScalarField,
}

impl ModelSpec {
    pub fn new(
        dimension: usize,
        potential: ScalarField,
        birth: ScalarField,
        death: ScalarField,
    ) -> Result<Self> {
        let spec = ModelSpec {
            dimension,
            potential,
            birth,
            death,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        for (name, f) in [
            ("potential", &self.potential),
            ("birth", &self.birth),
            ("death", &self.death),
        ] {
            f.validate(self.dimension)
                .map_err(|e| Error::InvalidInput(format!("{name}: {e}")))?;
        }
        for x in sample_points(self.dimension) {
            for (name, f) in [("birth", &self.birth), ("death", &self.death)] {
                let v = f.value(&x);
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "{name} rate must be finite and non-negative, got {v} at {x:?}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `V = 0`, `b = 0`, `d(x) = |x|^2 / 2`: the Schrödinger harmonic oscillator.
    pub fn harmonic(dimension: usize) -> Self {
        ModelSpec {
            dimension,
            potential: ScalarField::zero(),
            birth: ScalarField::zero(),
            death: ScalarField::quadratic(1.0),
        }
    }

    /// Ornstein-Uhlenbeck traits (`V = c|x|^2/2`) with a constant reduction
    /// rate `kappa`, realized as pure death (`kappa >= 0`) or pure birth.
    pub fn ornstein_uhlenbeck(dimension: usize, c: f64, kappa: f64) -> Self {
        let (birth, death) = if kappa >= 0.0 {
            (ScalarField::zero(), ScalarField::constant(kappa))
        } else {
            (ScalarField::constant(-kappa), ScalarField::zero())
        };
        ModelSpec {
            dimension,
            potential: ScalarField::quadratic(c),
            birth,
            death,
        }
    }

    /// Growth family `V ~ |x|^alpha`, `K ~ |x|^beta`, regularized at the origin.
    pub fn growth_family(dimension: usize, alpha: f64, beta: f64) -> Self {
        let field = |p: f64| {
            if p == 0.0 {
                ScalarField::constant(1.0)
            } else {
                ScalarField::radial(1.0, p, 1.0)
            }
        };
        ModelSpec {
            dimension,
            potential: field(alpha),
            birth: ScalarField::zero(),
            death: field(beta),
        }
    }

    pub fn potential_value(&self, x: &[f64]) -> f64 {
        self.potential.value(x)
    }

    /// Reduction rate `K = d - b`.
    pub fn reduction_rate(&self, x: &[f64]) -> f64 {
        self.death.value(x) - self.birth.value(x)
    }

    /// `K~(x) = K(x) + ΔV(x)/2 + |∇V(x)|^2/2`, the potential of the drift-free
    /// operator obtained by conjugating the generator with `e^V`.
    pub fn effective_potential(&self, x: &[f64]) -> Result<f64> {
        let k = self.reduction_rate(x);
        if !k.is_finite() {
            return Err(self.eval_error("reduction rate K", x));
        }
        if self.potential.is_zero() {
            return Ok(k);
        }
        let lap = self.potential.laplacian(x);
        if !lap.is_finite() {
            return Err(self.eval_error("laplacian of V", x));
        }
        let grad_sq: f64 = self.potential.gradient(x).iter().map(|g| g * g).sum();
        if !grad_sq.is_finite() {
            return Err(self.eval_error("gradient of V", x));
        }
        Ok(k + 0.5 * lap + 0.5 * grad_sq)
    }

    fn eval_error(&self, field: &'static str, x: &[f64]) -> Error {
        Error::Evaluation {
            field,
            point: x.to_vec(),
        }
    }
}

/// Origin plus points on the coordinate axes at radii 1/2 .. 64.
fn sample_points(dim: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]];
    for r in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 64.0] {
        for k in 0..dim {
            for s in [-1.0, 1.0] {
                let mut x = vec![0.0; dim];
                x[k] = s * r;
                pts.push(x);
            }
        }
    }
    pts
}

/// Free-function form of [`ModelSpec::effective_potential`].
pub fn effective_potential(spec: &ModelSpec, x: &[f64]) -> Result<f64> {
    spec.effective_potential(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(v: ScalarField, k: ScalarField) -> ModelSpec {
        ModelSpec::new(1, v, ScalarField::zero(), k).unwrap()
    }

    #[test]
    fn zero_potential_reduces_to_k() {
        let m = model(ScalarField::zero(), ScalarField::quadratic(1.0));
        assert_eq!(m.effective_potential(&[2.0]).unwrap(), 2.0);
    }

    #[test]
    fn inverted_quadratic_potential() {
        // 0 + (-1)/2 + 1/2
        let m = model(ScalarField::quadratic(-1.0), ScalarField::zero());
        assert_eq!(m.effective_potential(&[1.0]).unwrap(), 0.0);
        // 1 - 1/2 + 4/2
        let m = model(ScalarField::quadratic(-1.0), ScalarField::constant(1.0));
        assert_eq!(m.effective_potential(&[2.0]).unwrap(), 2.5);
    }

    #[test]
    fn non_finite_field_names_culprit() {
        let m = ModelSpec {
            dimension: 1,
            potential: ScalarField::zero(),
            birth: ScalarField::zero(),
            death: ScalarField::constant(f64::INFINITY),
        };
        match m.effective_potential(&[0.5]) {
            Err(Error::Evaluation { field, point }) => {
                assert_eq!(field, "reduction rate K");
                assert_eq!(point, vec![0.5]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_negative_rates() {
        let r = ModelSpec::new(
            1,
            ScalarField::zero(),
            ScalarField::constant(-1.0),
            ScalarField::zero(),
        );
        assert!(r.is_err());
        let r = ModelSpec::new(
            1,
            ScalarField::zero(),
            ScalarField::zero(),
            ScalarField::quadratic(-1.0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn ou_constructor_signs() {
        let m = ModelSpec::ornstein_uhlenbeck(1, -1.0, -0.5);
        assert_eq!(m.reduction_rate(&[3.0]), -0.5);
        assert_eq!(m.birth.value(&[0.0]), 0.5);
    }

    proptest! {
        #[test]
        fn zero_potential_is_exact(x in -50.0f64..50.0, y in -50.0f64..50.0, a in 0.0f64..5.0) {
            let m = ModelSpec::new(
                2,
                ScalarField::zero(),
                ScalarField::constant(0.3),
                ScalarField::radial(a, 3.0, 0.0),
            ).unwrap();
            let p = [x, y];
            prop_assert_eq!(m.effective_potential(&p).unwrap(), m.reduction_rate(&p));
        }

        #[test]
        fn effective_potential_is_pure(x in -10.0f64..10.0) {
            let m = ModelSpec::growth_family(1, 1.0, 2.0);
            prop_assert_eq!(
                m.effective_potential(&[x]).unwrap().to_bits(),
                m.effective_potential(&[x]).unwrap().to_bits()
            );
        }
    }
}
