//! Small statistics helpers shared by the Monte Carlo and verification code.

use serde::{Deserialize, Serialize};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = CompensatedSum::new();
    for x in it {
        s.add(x);
    }
    s.value()
}

/// Sample mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

pub fn mean_estimate(values: &[f64]) -> MeanEstimate {
    let n = values.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            samples: 0,
        };
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    let std_error = if n > 1 {
        let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
        (ss / (n - 1) as f64 / n as f64).sqrt()
    } else {
        f64::INFINITY
    };
    MeanEstimate {
        mean,
        std_error,
        samples: n,
    }
}

/// Ordinary least squares `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope from the residual variance; `inf` with 2 points.
    pub slope_se: f64,
    pub max_abs_residual: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| y - intercept - slope * x)
        .collect();
    let max_abs_residual = residuals.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let slope_se = if xs.len() > 2 {
        let rss: f64 = residuals.iter().map(|r| r * r).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    LinearFit {
        slope,
        intercept,
        slope_se,
        max_abs_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut v = vec![1e16];
        v.extend(std::iter::repeat_n(1.0, 1000));
        v.push(-1e16);
        assert_eq!(compensated_sum(v), 1000.0);
    }

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let f = linear_fit(&xs, &ys);
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
        assert!(f.slope_se < 1e-12);
    }

    #[test]
    fn mean_and_error() {
        let m = mean_estimate(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        // sample sd = sqrt(5/3)
        assert!((m.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-14);
    }
}
