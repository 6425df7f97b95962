//! Reaction kernels `f` with their tail integrals `F(s) = ∫_s^∞ f`.
//!
//! Admissible kernels are positive, strictly decreasing and integrable on
//! `[0, ∞)`, normalized so that `F(0) = 1`. The built-in families satisfy
//! this exactly; tabulated kernels are rescaled by [`Nonlinearity::normalized`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analytic continuation of a tabulated kernel past its last sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum TailForm {
    /// `f(s) = f_last · exp(-rate (s - s_last))`
    Exponential { rate: f64 },
    /// `f(s) = f_last · ((1 + s) / (1 + s_last))^(-exponent)`
    Power { exponent: f64 },
}

/// Monotone cubic (Fritsch–Carlson) interpolant of `(s, f)` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    s: Vec<f64>,
    f: Vec<f64>,
    slope: Vec<f64>,
    cumulative: Vec<f64>,
    tail: Option<TailForm>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Exponential,
    Algebraic { b: f64 },
    Tabulated(Table),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nonlinearity {
    family: Family,
    scale: f64,
}

impl Table {
    fn new(samples: &[(f64, f64)], tail: Option<TailForm>) -> Result<Self> {
        if samples.len() < 3 {
            return Err(Error::Invalid(
                "tabulated kernel needs at least three samples".into(),
            ));
        }
        let (s, f): (Vec<f64>, Vec<f64>) = samples.iter().copied().unzip();
        if s[0] != 0.0 {
            return Err(Error::Invalid(format!(
                "tabulated kernel must start at s = 0, got {}",
                s[0]
            )));
        }
        if s.iter().chain(f.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Invalid(
                "tabulated kernel contains non-finite values".into(),
            ));
        }
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Invalid(
                "tabulated abscissae must be strictly increasing".into(),
            ));
        }
        match tail {
            Some(TailForm::Exponential { rate }) if !(rate > 0.0 && rate.is_finite()) => {
                return Err(Error::Invalid(format!(
                    "exponential tail rate must be positive, got {rate}"
                )));
            }
            Some(TailForm::Power { exponent }) if !(exponent > 0.0 && exponent.is_finite()) => {
                return Err(Error::Invalid(format!(
                    "power tail exponent must be positive, got {exponent}"
                )));
            }
            _ => {}
        }
        let slope = pchip_slopes(&s, &f);
        let mut cumulative = vec![0.0; s.len()];
        for i in 1..s.len() {
            let h = s[i] - s[i - 1];
            cumulative[i] = cumulative[i - 1]
                + h * (f[i - 1] + f[i]) / 2.0
                + h * h * (slope[i - 1] - slope[i]) / 12.0;
        }
        Ok(Self {
            s,
            f,
            slope,
            cumulative,
            tail,
        })
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.s.iter().copied().zip(self.f.iter().copied())
    }

    pub fn tail(&self) -> Option<TailForm> {
        self.tail
    }

    fn s_max(&self) -> f64 {
        *self.s.last().unwrap()
    }

    fn locate(&self, x: f64) -> usize {
        match self.s.partition_point(|&v| v <= x) {
            0 => 0,
            i => (i - 1).min(self.s.len() - 2),
        }
    }

    /// Hermite basis on panel `i` at local coordinate `t ∈ [0, 1]`.
    fn value(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.s[i + 1] - self.s[i];
        let t = (x - self.s[i]) / h;
        let (y0, y1, d0, d1) = (self.f[i], self.f[i + 1], self.slope[i], self.slope[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * h * d1
    }

    fn derivative(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.s[i + 1] - self.s[i];
        let t = (x - self.s[i]) / h;
        let (y0, y1, d0, d1) = (self.f[i], self.f[i + 1], self.slope[i], self.slope[i + 1]);
        let t2 = t * t;
        ((6.0 * t2 - 6.0 * t) * y0 + (-6.0 * t2 + 6.0 * t) * y1) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * d0
            + (3.0 * t2 - 2.0 * t) * d1
    }

    /// Integral of the interpolant over `[s_i, x]` inside panel `i`.
    fn partial(&self, i: usize, x: f64) -> f64 {
        let h = self.s[i + 1] - self.s[i];
        let t = (x - self.s[i]) / h;
        let (y0, y1, d0, d1) = (self.f[i], self.f[i + 1], self.slope[i], self.slope[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        h * ((t4 / 2.0 - t3 + t) * y0
            + (t4 / 4.0 - 2.0 * t3 / 3.0 + t2 / 2.0) * h * d0
            + (-t4 / 2.0 + t3) * y1
            + (t4 / 4.0 - t3 / 3.0) * h * d1)
    }

    /// `∫_0^x` of the interpolant, `x` within the table.
    fn integral_to(&self, x: f64) -> f64 {
        let i = self.locate(x);
        self.cumulative[i] + self.partial(i, x)
    }

    /// `∫_{s_max}^∞` under the declared tail, `None` when undeclared,
    /// infinite when the declared tail is not integrable.
    fn tail_mass(&self) -> Option<f64> {
        let f_last = *self.f.last().unwrap();
        let s_last = self.s_max();
        self.tail.map(|tail| match tail {
            TailForm::Exponential { rate } => f_last / rate,
            TailForm::Power { exponent } if exponent > 1.0 => {
                f_last * (1.0 + s_last) / (exponent - 1.0)
            }
            TailForm::Power { .. } => f64::INFINITY,
        })
    }

    fn tail_value(&self, x: f64) -> Option<f64> {
        let f_last = *self.f.last().unwrap();
        let s_last = self.s_max();
        self.tail.map(|tail| match tail {
            TailForm::Exponential { rate } => f_last * (-rate * (x - s_last)).exp(),
            TailForm::Power { exponent } => f_last * ((1.0 + x) / (1.0 + s_last)).powf(-exponent),
        })
    }

    fn tail_slope(&self, x: f64) -> Option<f64> {
        let v = self.tail_value(x)?;
        Some(match self.tail? {
            TailForm::Exponential { rate } => -rate * v,
            TailForm::Power { exponent } => -exponent * v / (1.0 + x),
        })
    }

    /// `∫_x^∞` under the declared tail for `x ≥ s_max`.
    fn tail_from(&self, x: f64) -> Option<f64> {
        let v = self.tail_value(x)?;
        Some(match self.tail? {
            TailForm::Exponential { rate } => v / rate,
            TailForm::Power { exponent } if exponent > 1.0 => v * (1.0 + x) / (exponent - 1.0),
            TailForm::Power { .. } => f64::INFINITY,
        })
    }

    fn big_f(&self, x: f64) -> Option<f64> {
        let s_max = self.s_max();
        if x >= s_max {
            return self.tail_from(x);
        }
        let total = self.cumulative[self.s.len() - 1];
        Some(total - self.integral_to(x) + self.tail_mass()?)
    }

    /// `∫_lo^hi` of the (tail-extended) kernel for `0 ≤ lo ≤ hi`.
    fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let s_max = self.s_max();
        if lo >= s_max {
            return match (self.tail_from(lo), self.tail_from(hi)) {
                (Some(a), Some(b)) if a.is_finite() => a - b,
                _ => self.tail_value(lo).unwrap_or(0.0) * (hi - lo),
            };
        }
        if hi > s_max {
            return self.mass_between(lo, s_max) + self.mass_between(s_max, hi);
        }
        let (i, j) = (self.locate(lo), self.locate(hi));
        if i == j {
            self.partial(i, hi) - self.partial(i, lo)
        } else {
            self.cumulative[j] + self.partial(j, hi) - self.cumulative[i] - self.partial(i, lo)
        }
    }
}

fn pchip_slopes(s: &[f64], f: &[f64]) -> Vec<f64> {
    let n = s.len();
    let h: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (f[i + 1] - f[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    d[0] = pchip_end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = pchip_end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn pchip_end(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

impl Nonlinearity {
    /// `f(s) = e^{-s}`.
    pub fn exponential() -> Self {
        Self {
            family: Family::Exponential,
            scale: 1.0,
        }
    }

    /// `f(s) = b (1 + s)^{-1-b}`.
    pub fn algebraic(b: f64) -> Result<Self> {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Invalid(format!(
                "algebraic exponent b must be positive, got {b}"
            )));
        }
        Ok(Self {
            family: Family::Algebraic { b },
            scale: 1.0,
        })
    }

    /// Tabulated kernel from `(s, f)` samples starting at `s = 0`. Not
    /// normalized; see [`Nonlinearity::normalized`].
    pub fn tabulated(samples: &[(f64, f64)], tail: Option<TailForm>) -> Result<Self> {
        Ok(Self {
            family: Family::Tabulated(Table::new(samples, tail)?),
            scale: 1.0,
        })
    }

    /// Rescales `f` so that `∫_0^∞ f = 1`. `f'` scales by the same factor.
    pub fn normalized(&self) -> Result<Self> {
        let mass = self.eval_big_f(0.0)?;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Invalid(format!(
                "kernel mass {mass} cannot be normalized"
            )));
        }
        if (mass - 1.0).abs() > 1e-14 {
            log::warn!("rescaling kernel by 1/{mass}; f' is rescaled by the same factor");
        }
        Ok(Self {
            family: self.family.clone(),
            scale: self.scale / mass,
        })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Exponential => "exponential",
            Family::Algebraic { .. } => "algebraic",
            Family::Tabulated(_) => "tabulated",
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self.family, Family::Tabulated(_))
    }

    /// `f(s)`; errors for `s < 0` and for tabulated kernels past their last sample.
    pub fn eval_f(&self, s: f64) -> Result<f64> {
        check_nonneg(s)?;
        if let Family::Tabulated(t) = &self.family {
            if s > t.s_max() {
                return Err(Error::Extrapolation { s, max: t.s_max() });
            }
        }
        Ok(self.f(s))
    }

    /// `F(s) = ∫_s^∞ f`.
    pub fn eval_big_f(&self, s: f64) -> Result<f64> {
        check_nonneg(s)?;
        match &self.family {
            Family::Exponential => Ok(self.scale * (-s).exp()),
            Family::Algebraic { b } => Ok(self.scale * (1.0 + s).powf(-b)),
            Family::Tabulated(t) => t.big_f(s).map(|v| self.scale * v).ok_or(Error::MissingTail),
        }
    }

    pub fn eval_df(&self, s: f64) -> Result<f64> {
        check_nonneg(s)?;
        if let Family::Tabulated(t) = &self.family {
            if s > t.s_max() {
                return Err(Error::Extrapolation { s, max: t.s_max() });
            }
        }
        Ok(self.df(s))
    }

    /// Kernel value used inside the solvers: clamped to `f(0)` for negative
    /// arguments, and continued by the declared tail past a table's end.
    #[inline]
    pub(crate) fn f(&self, s: f64) -> f64 {
        let s = s.max(0.0);
        self.scale
            * match &self.family {
                Family::Exponential => (-s).exp(),
                Family::Algebraic { b } => b * (1.0 + s).powf(-1.0 - b),
                Family::Tabulated(t) => {
                    if s <= t.s_max() {
                        t.value(s)
                    } else {
                        t.tail_value(s).unwrap_or(*t.f.last().unwrap())
                    }
                }
            }
    }

    /// `out[i] = f(u[i])` with the family dispatch hoisted out of the loop.
    pub(crate) fn fill_f(&self, u: &[f64], out: &mut [f64]) {
        let scale = self.scale;
        match &self.family {
            Family::Exponential => {
                for (o, &v) in out.iter_mut().zip(u) {
                    *o = scale * (-v.max(0.0)).exp();
                }
            }
            Family::Algebraic { b } => {
                let e = -1.0 - b;
                for (o, &v) in out.iter_mut().zip(u) {
                    *o = scale * b * (1.0 + v.max(0.0)).powf(e);
                }
            }
            Family::Tabulated(_) => {
                for (o, &v) in out.iter_mut().zip(u) {
                    *o = self.f(v);
                }
            }
        }
    }

    #[inline]
    pub(crate) fn df(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        self.scale
            * match &self.family {
                Family::Exponential => -(-s).exp(),
                Family::Algebraic { b } => -b * (1.0 + b) * (1.0 + s).powf(-2.0 - b),
                Family::Tabulated(t) => {
                    if s <= t.s_max() {
                        t.derivative(s)
                    } else {
                        t.tail_slope(s).unwrap_or(0.0)
                    }
                }
            }
    }

    /// `F(m - gap) - F(m) = ∫_{m-gap}^m f`, computed without cancellation
    /// for small gaps. Requires `0 ≤ gap ≤ m`.
    pub(crate) fn mass_below(&self, m: f64, gap: f64) -> f64 {
        self.scale
            * match &self.family {
                Family::Exponential => (-m).exp() * gap.exp_m1(),
                Family::Algebraic { b } => {
                    let x = gap / (1.0 + m);
                    (1.0 + m).powf(-b) * (-b * (-x).ln_1p()).exp_m1()
                }
                Family::Tabulated(t) => t.mass_between((m - gap).max(0.0), m),
            }
    }

    /// `sup_{s ≥ 0} |f'(s)|`.
    pub fn max_slope(&self) -> f64 {
        match &self.family {
            Family::Exponential | Family::Algebraic { .. } => self.df(0.0).abs(),
            Family::Tabulated(t) => self.scale * t.slope.iter().fold(0.0f64, |m, d| m.max(d.abs())),
        }
    }
}

fn check_nonneg(s: f64) -> Result<()> {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "kernel argument must be finite and nonnegative, got {s}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NonPositive { s: f64, value: f64 },
    NotDecreasing { s: f64, next: f64 },
    Normalization { mass: f64, tolerance: f64 },
    Unevaluable { reason: String },
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AdmissibilityReport {
    pub violations: Vec<Violation>,
}

impl AdmissibilityReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Default probe: 1001 points on `[0, 100]`, clustered near 0.
pub fn default_probe_grid() -> Vec<f64> {
    let k = 6.0f64;
    (0..=1000)
        .map(|i| 100.0 * ((k * i as f64 / 1000.0).exp() - 1.0) / (k.exp() - 1.0))
        .collect()
}

/// Checks positivity, strict decrease (by sampled differences) and
/// normalization. Violations are reported, not raised.
pub fn check_admissible(nl: &Nonlinearity, probe_grid: &[f64]) -> AdmissibilityReport {
    let mut report = AdmissibilityReport::default();
    let limit = match &nl.family {
        Family::Tabulated(t) => t.s_max(),
        _ => f64::INFINITY,
    };
    let probes: Vec<f64> = probe_grid
        .iter()
        .copied()
        .filter(|&s| s >= 0.0 && s <= limit)
        .collect();
    let values: Vec<f64> = probes.iter().map(|&s| nl.f(s)).collect();
    for (&s, &v) in probes.iter().zip(&values) {
        if !(v > 0.0) {
            report
                .violations
                .push(Violation::NonPositive { s, value: v });
        }
    }
    for (w, v) in probes.windows(2).zip(values.windows(2)) {
        if w[1] > w[0] && !(v[1] < v[0]) {
            report.violations.push(Violation::NotDecreasing {
                s: w[0],
                next: w[1],
            });
        }
    }
    if let Family::Tabulated(t) = &nl.family {
        for (w, v) in t.s.windows(2).zip(t.f.windows(2)) {
            if !(v[1] < v[0]) {
                report.violations.push(Violation::NotDecreasing {
                    s: w[0],
                    next: w[1],
                });
            }
        }
    }
    let tolerance = if nl.is_builtin() { 1e-10 } else { 1e-6 };
    match nl.eval_big_f(0.0) {
        Ok(mass) if (mass - 1.0).abs() <= tolerance => {}
        Ok(mass) => report
            .violations
            .push(Violation::Normalization { mass, tolerance }),
        Err(e) => report.violations.push(Violation::Unevaluable {
            reason: e.to_string(),
        }),
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_table(step: f64, s_max: f64) -> Nonlinearity {
        let n = (s_max / step).round() as usize;
        let samples: Vec<(f64, f64)> = (0..=n)
            .map(|i| (i as f64 * step, (-(i as f64) * step).exp()))
            .collect();
        Nonlinearity::tabulated(&samples, Some(TailForm::Exponential { rate: 1.0 })).unwrap()
    }

    #[test]
    fn builtin_values() {
        let e = Nonlinearity::exponential();
        assert_eq!(e.eval_f(0.0).unwrap(), 1.0);
        assert!((e.eval_f(2f64.ln()).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(e.eval_big_f(0.0).unwrap(), 1.0);
        let a1 = Nonlinearity::algebraic(1.0).unwrap();
        assert!((a1.eval_f(1.0).unwrap() - 0.25).abs() < 1e-15);
        let a2 = Nonlinearity::algebraic(2.0).unwrap();
        assert!((a2.eval_big_f(1.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn negative_argument_is_a_domain_error() {
        let e = Nonlinearity::exponential();
        assert!(matches!(e.eval_f(-1e-3), Err(Error::Domain(_))));
        assert!(matches!(e.eval_big_f(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn tabulated_beyond_grid_is_an_extrapolation_error() {
        let t = exp_table(0.1, 10.0);
        assert!(matches!(t.eval_f(10.5), Err(Error::Extrapolation { .. })));
        assert!(t.eval_big_f(10.5).is_ok());
    }

    #[test]
    fn tabulated_without_tail_cannot_evaluate_big_f() {
        let samples: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, (-(i as f64)).exp())).collect();
        let t = Nonlinearity::tabulated(&samples, None).unwrap();
        assert!(matches!(t.eval_big_f(1.0), Err(Error::MissingTail)));
    }

    #[test]
    fn tabulated_exponential_tail_integral() {
        let t = exp_table(0.01, 30.0);
        let v = t.eval_big_f(1.0).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-6, "F(1) = {v}");
        assert!((t.eval_big_f(0.0).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn admissibility_of_builtins_and_bad_tables() {
        assert!(
            check_admissible(&Nonlinearity::exponential(), &default_probe_grid()).is_admissible()
        );
        assert!(check_admissible(
            &Nonlinearity::algebraic(0.5).unwrap(),
            &default_probe_grid()
        )
        .is_admissible());

        let harmonic: Vec<(f64, f64)> = (0..=200)
            .map(|i| (i as f64 * 0.5, 1.0 / (1.0 + i as f64 * 0.5)))
            .collect();
        let h =
            Nonlinearity::tabulated(&harmonic, Some(TailForm::Power { exponent: 1.0 })).unwrap();
        let report = check_admissible(&h, &default_probe_grid());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Normalization { .. })));

        let rising: Vec<(f64, f64)> = (0..=10)
            .map(|i| (i as f64, 0.1 + 0.01 * i as f64))
            .collect();
        let r =
            Nonlinearity::tabulated(&rising, Some(TailForm::Exponential { rate: 1.0 })).unwrap();
        let report = check_admissible(&r, &default_probe_grid());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NotDecreasing { .. })));
    }

    #[test]
    fn normalization_rescales_mass() {
        let samples: Vec<(f64, f64)> = (0..=3000)
            .map(|i| (i as f64 * 0.01, 3.0 * (-(i as f64) * 0.01).exp()))
            .collect();
        let t =
            Nonlinearity::tabulated(&samples, Some(TailForm::Exponential { rate: 1.0 })).unwrap();
        assert!((t.eval_big_f(0.0).unwrap() - 3.0).abs() < 1e-5);
        let n = t.normalized().unwrap();
        assert!((n.eval_big_f(0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((n.eval_f(0.0).unwrap() - 1.0).abs() < 1e-5);
        assert!(check_admissible(&n, &default_probe_grid()).is_admissible());
    }

    #[test]
    fn mass_below_matches_difference_of_tails() {
        for nl in [
            Nonlinearity::exponential(),
            Nonlinearity::algebraic(1.5).unwrap(),
            exp_table(0.01, 40.0),
        ] {
            for &(m, gap) in &[(1.0, 0.3), (5.0, 5.0), (20.0, 1e-9)] {
                let direct = nl.mass_below(m, gap);
                let diff = nl.eval_big_f(m - gap).unwrap() - nl.eval_big_f(m).unwrap();
                assert!(
                    (direct - diff).abs() <= 1e-9 * direct.abs() + 1e-15,
                    "{} m={m} gap={gap}",
                    nl.name()
                );
            }
        }
    }

    #[test]
    fn slopes() {
        let a = Nonlinearity::algebraic(1.0).unwrap();
        assert!((a.max_slope() - 2.0).abs() < 1e-15);
        assert!((Nonlinearity::exponential().eval_df(0.0).unwrap() + 1.0).abs() < 1e-15);
    }
}
