use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{linear_fit, LinearFit};

/// JSON has no NaN or infinity; such values are written as strings.
mod float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Fail beats inconclusive beats pass.
pub fn combine_verdicts<I: IntoIterator<Item = Verdict>>(verdicts: I) -> Verdict {
    let mut out = Verdict::Pass;
    for v in verdicts {
        match v {
            Verdict::Fail => return Verdict::Fail,
            Verdict::Inconclusive => out = Verdict::Inconclusive,
            Verdict::Pass => {}
        }
    }
    out
}

/// One observed value against its prediction. The tolerance is
/// `max(se_factor * std_error, abs_tol)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub t: f64,
    pub quantity: String,
    #[serde(with = "float")]
    pub lhs: f64,
    #[serde(with = "float")]
    pub rhs: f64,
    #[serde(with = "float")]
    pub std_error: f64,
    pub se_factor: f64,
    pub abs_tol: f64,
    /// Unchecked rows are recorded for plotting only.
    pub checked: bool,
}

impl Comparison {
    pub fn error(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }

    pub fn tolerance(&self) -> f64 {
        let se = if self.se_factor == 0.0 {
            0.0
        } else {
            self.se_factor * self.std_error
        };
        se.max(self.abs_tol)
    }

    pub fn holds(&self) -> bool {
        self.error() <= self.tolerance()
    }
}

/// Slope of `ln(values)` against `times`, tested against `target` with
/// allowance `rel_tol * |target| + abs_tol`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub quantity: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(with = "float")]
    pub slope: f64,
    #[serde(with = "float")]
    pub slope_se: f64,
    #[serde(with = "float")]
    pub intercept: f64,
    #[serde(with = "float")]
    pub target: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Values must strictly decrease over the fitted times.
    pub require_monotone: bool,
}

impl SlopeCheck {
    pub fn new(
        quantity: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
        target: f64,
        rel_tol: f64,
        abs_tol: f64,
        require_monotone: bool,
    ) -> Self {
        let fit = Self::fit_of(&times, &values);
        SlopeCheck {
            quantity: quantity.into(),
            times,
            values,
            slope: fit.slope,
            slope_se: fit.slope_se,
            intercept: fit.intercept,
            target,
            rel_tol,
            abs_tol,
            require_monotone,
        }
    }

    fn fit_of(times: &[f64], values: &[f64]) -> LinearFit {
        if times.len() < 2 || values.iter().any(|v| !(*v > 0.0)) {
            return LinearFit {
                slope: f64::NAN,
                intercept: f64::NAN,
                slope_se: f64::NAN,
                max_abs_residual: f64::NAN,
            };
        }
        let logs: Vec<f64> = values.iter().map(|v| v.ln()).collect();
        linear_fit(times, &logs)
    }

    pub fn allowance(&self) -> f64 {
        self.rel_tol * self.target.abs() + self.abs_tol
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[1] < w[0])
    }

    /// Refits from the recorded series; the stored slope is not trusted.
    pub fn holds(&self) -> bool {
        let fit = Self::fit_of(&self.times, &self.values);
        (fit.slope - self.target).abs() <= self.allowance()
            && (!self.require_monotone || self.is_monotone())
    }
}

/// A precondition for a meaningful decision; a violated guard makes the
/// verdict inconclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Guard {
    AtMost {
        name: String,
        #[serde(with = "float")]
        value: f64,
        limit: f64,
    },
    AtLeast {
        name: String,
        #[serde(with = "float")]
        value: f64,
        limit: f64,
    },
}

impl Guard {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Guard::AtMost {
            name: name.into(),
            value,
            limit,
        }
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Guard::AtLeast {
            name: name.into(),
            value,
            limit,
        }
    }

    pub fn violated(&self) -> bool {
        match self {
            Guard::AtMost { value, limit, .. } => !(value <= limit),
            Guard::AtLeast { value, limit, .. } => !(value >= limit),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Guard::AtMost { name, .. } | Guard::AtLeast { name, .. } => name,
        }
    }
}

/// Fitted `C₀`, `T₀` in `error(t) <= C₀ e^{-gap t}` for `t >= T₀`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedConstants {
    pub c0: f64,
    pub t0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub check: String,
    pub comparisons: Vec<Comparison>,
    pub slopes: Vec<SlopeCheck>,
    pub guards: Vec<Guard>,
    pub constants: Option<FittedConstants>,
    pub dominant_mode: Option<usize>,
    pub notes: Vec<String>,
    pub verdict: Verdict,
}

impl ConvergenceReport {
    pub(crate) fn new(check: &str) -> Self {
        ConvergenceReport {
            check: check.into(),
            comparisons: Vec::new(),
            slopes: Vec::new(),
            guards: Vec::new(),
            constants: None,
            dominant_mode: None,
            notes: Vec::new(),
            verdict: Verdict::Inconclusive,
        }
    }

    /// The verdict implied by the recorded values and tolerances alone.
    pub fn rederive(&self) -> Verdict {
        if self.guards.iter().any(Guard::violated) {
            return Verdict::Inconclusive;
        }
        let rows = self
            .comparisons
            .iter()
            .filter(|c| c.checked)
            .all(Comparison::holds);
        let slopes = self.slopes.iter().all(SlopeCheck::holds);
        if rows && slopes {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub(crate) fn finish(mut self) -> Self {
        self.verdict = self.rederive();
        self
    }

    /// True when the stored verdict matches [`Self::rederive`].
    pub fn is_self_consistent(&self) -> bool {
        self.verdict == self.rederive()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("bad report: {e}")))
    }

    /// Long-format CSV `t,quantity,lhs,rhs,error,tolerance,checked`.
    pub fn write_csv<W: Write>(&self, header: &str, mut out: W) -> Result<()> {
        writeln!(out, "{header}")?;
        writeln!(out, "# check={} verdict={}", self.check, self.verdict)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "t",
            "quantity",
            "lhs",
            "rhs",
            "error",
            "tolerance",
            "checked",
        ])?;
        for c in &self.comparisons {
            w.write_record([
                c.t.to_string(),
                c.quantity.clone(),
                c.lhs.to_string(),
                c.rhs.to_string(),
                c.error().to_string(),
                c.tolerance().to_string(),
                c.checked.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One machine-readable line: check name, verdict and key numbers.
    pub fn summary_line(&self) -> String {
        let mut s = format!("check={} verdict={}", self.check, self.verdict);
        let worst = self
            .comparisons
            .iter()
            .filter(|c| c.checked)
            .map(|c| match (c.error(), c.tolerance()) {
                (e, t) if t > 0.0 => e / t,
                (0.0, _) => 0.0,
                _ => f64::INFINITY,
            })
            .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
        if let Some(r) = worst {
            s.push_str(&format!(" worst_error_over_tolerance={r:.4}"));
        }
        for sl in &self.slopes {
            s.push_str(&format!(
                " {}_slope={:.6} {}_target={:.6}",
                sl.quantity, sl.slope, sl.quantity, sl.target
            ));
        }
        if let Some(n) = self.dominant_mode {
            s.push_str(&format!(" dominant_mode={n}"));
        }
        if let Some(c) = self.constants {
            s.push_str(&format!(" c0={:.6e} t0={}", c.c0, c.t0));
        }
        for g in self.guards.iter().filter(|g| g.violated()) {
            s.push_str(&format!(" guard_violated={}", g.name()));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(lhs: f64, se: f64, checked: bool) -> Comparison {
        Comparison {
            t: 1.0,
            quantity: "q".into(),
            lhs,
            rhs: 1.0,
            std_error: se,
            se_factor: 3.0,
            abs_tol: 1e-3,
            checked,
        }
    }

    #[test]
    fn tolerance_is_max_of_parts() {
        assert_eq!(row(1.0, 0.1, true).tolerance(), 0.30000000000000004);
        assert_eq!(row(1.0, 0.0, true).tolerance(), 1e-3);
        assert!(row(1.0005, 0.0, true).holds());
        assert!(!row(1.01, 0.0, true).holds());
        assert!(!row(f64::NAN, 0.0, true).holds());
    }

    #[test]
    fn verdict_logic() {
        let mut r = ConvergenceReport::new("x");
        r.comparisons.push(row(1.5, 0.0, false));
        r.comparisons.push(row(1.0, 0.0, true));
        assert_eq!(r.clone().finish().verdict, Verdict::Pass);
        r.comparisons.push(row(2.0, 0.0, true));
        assert_eq!(r.clone().finish().verdict, Verdict::Fail);
        r.guards.push(Guard::at_most("capped_fraction", 0.02, 0.01));
        assert_eq!(r.clone().finish().verdict, Verdict::Inconclusive);
    }

    #[test]
    fn slope_refit_ignores_stored_slope() {
        let t = vec![1.0, 2.0, 3.0];
        let v: Vec<f64> = t.iter().map(|t: &f64| (-t).exp()).collect();
        let mut s = SlopeCheck::new("e", t, v, -1.0, 0.1, 0.0, true);
        assert!((s.slope + 1.0).abs() < 1e-12);
        assert!(s.holds());
        s.slope = 5.0;
        assert!(s.holds());
        s.values[2] = 1.0;
        assert!(!s.holds());
    }

    #[test]
    fn json_round_trip_reproduces_verdict() {
        let mut r = ConvergenceReport::new("x");
        r.comparisons.push(row(1.0002, 0.0, true));
        r.slopes.push(SlopeCheck::new(
            "m",
            vec![0.0, 1.0],
            vec![1.0, 0.5],
            -0.69,
            0.05,
            0.0,
            false,
        ));
        r.guards.push(Guard::at_least("first_error", 1.0, 1e-13));
        r.slopes.push(SlopeCheck::new(
            "two",
            vec![0.0, 1.0],
            vec![1.0, 0.5],
            -0.7,
            0.05,
            0.0,
            false,
        ));
        let r = r.finish();
        let back = ConvergenceReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back.to_json().unwrap(), r.to_json().unwrap());
        assert!(back.slopes[1].slope_se.is_infinite());
        assert_eq!(back.rederive(), r.verdict);
        assert!(back.is_self_consistent());
    }

    #[test]
    fn combine() {
        use Verdict::*;
        assert_eq!(combine_verdicts([Pass, Pass]), Pass);
        assert_eq!(combine_verdicts([Pass, Inconclusive]), Inconclusive);
        assert_eq!(combine_verdicts([Inconclusive, Fail, Pass]), Fail);
        assert_eq!(combine_verdicts([]), Pass);
    }
}
