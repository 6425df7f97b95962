//! Blow-up rate laws, their regression against trajectories, and the
//! boundary-layer profile `√2 y = ∫_0^U F^{-1/2}`.

use serde::Serialize;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::evolution::{linear_fit, Status, Trajectory};
use crate::nonlinearity::{Family, Nonlinearity};
use crate::quadrature::adaptive_gk;
use crate::roots::golden_min;
use crate::steady::mu_of_max_flat;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum RateLaw {
    /// `M ≈ intercept + slope · ln(T − t)`
    LogLaw {
        slope: f64,
        intercept: f64,
    },
    /// `M ≈ coefficient · (T − t)^exponent`
    PowerLaw {
        exponent: f64,
        coefficient: f64,
    },
    NotApplicable {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePrediction {
    pub law: RateLaw,
    /// `(√λ − √2|∂Ω|)/|Ω|`, for `p = 2`.
    pub lambda1: Option<f64>,
    /// `λ/|Ω|^p`, for `p > 2`.
    pub lambda2: Option<f64>,
}

/// Closed-form center growth near blow-up. For the algebraic family the tail
/// coefficient of `f(s) ~ B s^{-1-b}` is `B = b`.
pub fn predicted_rate(
    nl: &Nonlinearity,
    p: f64,
    lambda: f64,
    dom: &DomainSpec,
) -> Result<RatePrediction> {
    if !(p > 0.0 && lambda > 0.0) {
        return Err(Error::Invalid("p and lambda must be positive".into()));
    }
    let na = |reason: &str| RatePrediction {
        law: RateLaw::NotApplicable {
            reason: reason.into(),
        },
        lambda1: None,
        lambda2: None,
    };
    let (vol, bdry) = (dom.volume(), dom.boundary_measure());
    let critical = (p - 2.0).abs() <= 1e-12;
    if p < 2.0 && !critical {
        return Ok(na("globally bounded for p < 2"));
    }
    let kind = match nl.family() {
        Family::Tabulated(_) => return Ok(na("no closed form for tabulated kernels")),
        Family::Exponential => None,
        Family::Algebraic { b } => Some(*b),
    };
    if critical {
        if lambda <= dom.critical_lambda_p2() {
            return Ok(na("no blow-up for lambda <= 2|boundary|^2"));
        }
        let l1 = (lambda.sqrt() - 2f64.sqrt() * bdry) / vol;
        let law = match kind {
            None => RateLaw::LogLaw {
                slope: -1.0,
                intercept: -2.0 * l1.ln(),
            },
            Some(b) => RateLaw::PowerLaw {
                exponent: -1.0 / b,
                coefficient: (b * l1 * l1 / b).powf(-1.0 / b),
            },
        };
        return Ok(RatePrediction {
            law,
            lambda1: Some(l1),
            lambda2: None,
        });
    }
    let l2 = lambda / vol.powf(p);
    let law = match kind {
        None => RateLaw::LogLaw {
            slope: 1.0 / (1.0 - p),
            intercept: ((p - 1.0) * l2).ln() / (1.0 - p),
        },
        Some(b) => {
            let q = (1.0 + b) * (p - 1.0);
            let exponent = 1.0 / (1.0 - q);
            RateLaw::PowerLaw {
                exponent,
                coefficient: ((q - 1.0) / b.powf(p - 1.0) * l2).powf(exponent),
            }
        }
    };
    Ok(RatePrediction {
        law,
        lambda1: None,
        lambda2: Some(l2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LawHint {
    Log,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub t_hat: f64,
    /// Slope of `M` (log law) or `ln M` (power law) against `ln(T − t)`.
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub window: (f64, f64),
}

/// Largest `g h²`, with `g = λ/I^p`, at which a sample still enters a rate
/// fit. The boundary layer has width `~1/√g`; past this point it spans fewer
/// than three cells and the discrete growth lags the continuum one.
pub const RESOLVED_LAYER: f64 = 0.1;

/// Largest share of `I` the pinned boundary nodes may carry in a sample that
/// enters a rate fit for `p > 2`. The continuum integral is core-dominated and
/// tends to zero; the discrete one cannot fall below the boundary floor.
pub const FLOOR_SHARE: f64 = 0.2;

/// Fits a blown-up trajectory. Trailing samples that no longer represent the
/// continuum are dropped first: for `p ≤ 2`, where the boundary layer carries
/// a leading-order share of `I`, those whose layer is thinner than the mesh
/// (see [`RESOLVED_LAYER`]); for `p > 2`, where the core dominates, those
/// whose integral sits near the boundary floor (see [`FLOOR_SHARE`]).
/// `window_fraction` then selects the trailing share of the samples that
/// remain.
pub fn fit_blowup_rate(traj: &Trajectory, law: LawHint, window_fraction: f64) -> Result<RateFit> {
    if !matches!(traj.status, Status::BlownUp { .. }) {
        return Err(Error::NotBlownUp(traj.status.name().into()));
    }
    let h = traj.grid[1] - traj.grid[0];
    let resolved = traj
        .integral_series
        .iter()
        .position(|&i| {
            if traj.p > 2.0 {
                traj.boundary_floor > FLOOR_SHARE * i
            } else {
                traj.lambda / i.powf(traj.p) * h * h > RESOLVED_LAYER
            }
        })
        .unwrap_or(traj.times.len());
    if resolved < 8 {
        return Err(Error::DynamicRange(format!(
            "only {resolved} samples precede the loss of resolution"
        )));
    }
    fit_series(
        &traj.times[..resolved],
        &traj.max_series[..resolved],
        law,
        window_fraction,
    )
}

/// Regression of `M` (or `ln M`) on `ln(T − t)`, with `T` chosen by a
/// 400-point scan over `(t_f, t_f + 2(t_f − t_lo)]` and a golden-section
/// polish around the best candidate.
pub fn fit_series(
    times: &[f64],
    max: &[f64],
    law: LawHint,
    window_fraction: f64,
) -> Result<RateFit> {
    if times.len() != max.len() || times.len() < 8 {
        return Err(Error::Invalid(
            "need at least eight (t, M) samples of equal length".into(),
        ));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::Invalid(format!(
            "window fraction must lie in (0, 1], got {window_fraction}"
        )));
    }
    let m_first = max.iter().copied().find(|&m| m > 0.0).unwrap_or(0.0);
    let m_last = max[max.len() - 1];
    match law {
        LawHint::Log if m_last - max[0] < 3.0 => {
            return Err(Error::DynamicRange(format!(
                "M grows by {:.3} units, 3 are needed for a log-law fit",
                m_last - max[0]
            )))
        }
        LawHint::Power if !(m_first > 0.0 && (m_last / m_first).log10() >= 1.5) => {
            return Err(Error::DynamicRange(format!(
                "M grows by {:.3} decades, 1.5 are needed for a power-law fit",
                (m_last / m_first).log10()
            )))
        }
        _ => {}
    }
    let n = times.len();
    let start = n - ((window_fraction * n as f64).ceil() as usize).clamp(5, n);
    let t = &times[start..];
    let y: Vec<f64> = match law {
        LawHint::Log => max[start..].to_vec(),
        LawHint::Power => max[start..]
            .iter()
            .map(|m| m.max(f64::MIN_POSITIVE).ln())
            .collect(),
    };
    let (t_lo, t_f) = (t[0], t[t.len() - 1]);
    let span = 2.0 * (t_f - t_lo);
    let fit_at = |big_t: f64| {
        let x: Vec<f64> = t.iter().map(|&s| (big_t - s).ln()).collect();
        linear_fit(&x, &y)
    };
    let candidate = |k: usize| t_f + span * k as f64 / 400.0;
    let mut best = 1;
    let mut best_rms = f64::INFINITY;
    for k in 1..=400 {
        let rms = fit_at(candidate(k)).2;
        if rms < best_rms {
            best_rms = rms;
            best = k;
        }
    }
    let lo = if best == 1 {
        t_f + span * 1e-9
    } else {
        candidate(best - 1)
    };
    let hi = candidate((best + 1).min(400));
    let (t_hat, _) = golden_min(|x| Ok(fit_at(x).2), lo, hi, 1e-12 * (1.0 + t_f.abs()))?;
    let (c, a, rms) = fit_at(t_hat);
    Ok(RateFit {
        t_hat,
        slope: a,
        intercept: c,
        residual: rms,
        window: (t_lo, t_f),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryLayer {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    /// `U'(0)` by a second-order one-sided difference.
    pub slope_at_zero: f64,
    /// `∫_0^∞ f(U(y)) dy`: quadrature on the grid plus the exact tail
    /// `√(2F(U(y_max)))`.
    pub layer_integral: f64,
}

/// Inverts `√2 y = ∫_0^U F^{-1/2}(s) ds` node by node.
pub fn boundary_layer_profile(nl: &Nonlinearity, y_grid: &[f64]) -> Result<BoundaryLayer> {
    if y_grid.len() < 3 || y_grid[0] != 0.0 || y_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid(
            "y grid must start at 0, increase strictly and have three nodes".into(),
        ));
    }
    let big_f = |s: f64| nl.eval_big_f(s);
    let inv_sqrt = |s: f64| big_f(s).map(|v| v.powf(-0.5)).unwrap_or(f64::NAN);
    let mut u = vec![0.0; y_grid.len()];
    // Running pair (U, ∫_0^U F^{-1/2}) so each node integrates only its step.
    let (mut u_prev, mut acc) = (0.0f64, 0.0f64);
    for (k, &y) in y_grid.iter().enumerate().skip(1) {
        let target = 2f64.sqrt() * y;
        let mut x = u_prev + (target - acc) * big_f(u_prev)?.sqrt();
        let mut value = acc;
        for iter in 0.. {
            value = acc + adaptive_gk(inv_sqrt, u_prev, x, 1e-15, 1e-14)?;
            let step = (value - target) * big_f(x)?.sqrt();
            // Newton on a convex-increasing integral never overshoots from
            // below once it is above the root; keep iterates above u_prev.
            let next = (x - step).max(0.5 * (u_prev + x));
            if (next - x).abs() <= 1e-14 * x.max(1.0) {
                x = next;
                break;
            }
            x = next;
            if iter > 100 {
                return Err(Error::RootNotConverged { iterations: 100 });
            }
        }
        value = acc + adaptive_gk(inv_sqrt, u_prev, x, 1e-15, 1e-14).unwrap_or(value);
        u[k] = x;
        u_prev = x;
        acc = value;
    }
    let (h1, h2) = (y_grid[1], y_grid[2] - y_grid[1]);
    // Three-point one-sided derivative on a possibly nonuniform grid.
    let slope_at_zero = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * u[0] + (h1 + h2) / (h1 * h2) * u[1]
        - h1 / (h2 * (h1 + h2)) * u[2];
    let fu: Vec<f64> = u.iter().map(|&v| nl.f(v)).collect();
    let mut integral: f64 = y_grid
        .windows(2)
        .zip(fu.windows(2))
        .map(|(y, f)| 0.5 * (y[1] - y[0]) * (f[0] + f[1]))
        .sum();
    let uniform = y_grid
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h1).abs() <= 1e-9 * h1);
    if uniform && (y_grid.len() - 1).is_multiple_of(2) {
        integral = crate::quadrature::simpson(&fu, h1);
    }
    let last = *u.last().unwrap();
    let layer_integral = integral + (2.0 * big_f(last)?).sqrt();
    Ok(BoundaryLayer {
        y: y_grid.to_vec(),
        u,
        slope_at_zero,
        layer_integral,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GDiagnostic {
    pub max: f64,
    pub mu: f64,
    /// `f(M) √μ(M) / F(M)`
    pub g: f64,
    /// `μ(M) f(M)`, bounded by `2M`.
    pub mu_f: f64,
    /// `√μ(M) f(M)`, tends to 0.
    pub sqrt_mu_f: f64,
    /// `M / √(2μ(M))`, tends to 0.
    pub max_over_sqrt_2mu: f64,
}

/// Layer diagnostics along the unit-interval steady branch.
pub fn g_diagnostic(nl: &Nonlinearity, m_grid: &[f64]) -> Result<Vec<GDiagnostic>> {
    if m_grid.is_empty() || m_grid[0] <= 0.0 || m_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid(
            "M grid must be positive and increasing".into(),
        ));
    }
    m_grid
        .iter()
        .map(|&m| {
            let mu = mu_of_max_flat(nl, m, 1.0)?;
            let f = nl.f(m);
            Ok(GDiagnostic {
                max: m,
                mu,
                g: f * mu.sqrt() / nl.eval_big_f(m)?,
                mu_f: mu * f,
                sqrt_mu_f: mu.sqrt() * f,
                max_over_sqrt_2mu: m / (2.0 * mu).sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> DomainSpec {
        DomainSpec::interval(1.0).unwrap()
    }

    #[test]
    fn predictions() {
        let e = Nonlinearity::exponential();
        let r = predicted_rate(&e, 2.0, 12.0, &unit()).unwrap();
        let l1 = (12f64.sqrt() - 2.0 * 2f64.sqrt()) / 2.0;
        assert!((r.lambda1.unwrap() - l1).abs() < 1e-15);
        assert_eq!(
            r.law,
            RateLaw::LogLaw {
                slope: -1.0,
                intercept: -2.0 * l1.ln()
            }
        );
        let a = Nonlinearity::algebraic(1.0).unwrap();
        assert!(
            matches!(predicted_rate(&a, 2.0, 12.0, &unit()).unwrap().law, RateLaw::PowerLaw { exponent, .. } if exponent == -1.0)
        );
        assert!(
            matches!(predicted_rate(&e, 3.0, 2.0, &unit()).unwrap().law, RateLaw::LogLaw { slope, .. } if slope == -0.5)
        );
        assert!(matches!(
            predicted_rate(&e, 1.5, 2.0, &unit()).unwrap().law,
            RateLaw::NotApplicable { .. }
        ));
        assert!(matches!(
            predicted_rate(&e, 2.0, 8.0, &unit()).unwrap().law,
            RateLaw::NotApplicable { .. }
        ));
        let p3 = predicted_rate(&a, 3.0, 2.0, &unit()).unwrap();
        assert!(
            matches!(p3.law, RateLaw::PowerLaw { exponent, .. } if (exponent + 1.0 / 3.0).abs() < 1e-15)
        );
    }

    #[test]
    fn synthetic_power_law() {
        let times: Vec<f64> = (0..=490).map(|i| 0.5 + i as f64 * 1e-3).collect();
        let max: Vec<f64> = times.iter().map(|t| 1.0 / (1.0 - t)).collect();
        let fit = fit_series(&times, &max, LawHint::Power, 0.4).unwrap();
        assert!((fit.t_hat - 1.0).abs() < 1e-4, "{fit:?}");
        assert!((fit.slope + 1.0).abs() < 1e-3);
    }

    #[test]
    fn synthetic_log_law() {
        let times: Vec<f64> = (0..=999)
            .map(|i| 1.0 - 10f64.powf(-0.004 * i as f64))
            .collect();
        let max: Vec<f64> = times.iter().map(|t| -(1.0 - t).ln() + 0.7).collect();
        let fit = fit_series(&times, &max, LawHint::Log, 0.4).unwrap();
        assert!((fit.t_hat - 1.0).abs() < 1e-3, "{fit:?}");
        assert!((fit.slope + 1.0).abs() < 1e-3);
        assert!((fit.intercept - 0.7).abs() < 1e-3);
    }

    #[test]
    fn short_series_is_rejected() {
        let times: Vec<f64> = (0..20).map(|i| i as f64 * 0.01).collect();
        let max: Vec<f64> = times.iter().map(|t| 1.0 + t).collect();
        assert!(matches!(
            fit_series(&times, &max, LawHint::Log, 0.4),
            Err(Error::DynamicRange(_))
        ));
        assert!(matches!(
            fit_series(&times, &max, LawHint::Power, 0.4),
            Err(Error::DynamicRange(_))
        ));
    }

    #[test]
    fn exponential_layer_closed_form() {
        let y: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let layer = boundary_layer_profile(&Nonlinearity::exponential(), &y).unwrap();
        for (&yy, &u) in y.iter().zip(&layer.u) {
            let exact = 2.0 * (1.0 + yy / 2f64.sqrt()).ln();
            assert!((u - exact).abs() < 1e-8, "y = {yy}: {u} vs {exact}");
        }
        assert!((layer.slope_at_zero - 2f64.sqrt()).abs() < 1e-2 * 2f64.sqrt());
        assert!((layer.layer_integral - 2f64.sqrt()).abs() < 1e-2 * 2f64.sqrt());
    }

    #[test]
    fn diagnostics_decay() {
        for nl in [
            Nonlinearity::exponential(),
            Nonlinearity::algebraic(1.0).unwrap(),
        ] {
            let d = g_diagnostic(&nl, &[1.0, 10.0, 100.0]).unwrap();
            assert!(d.windows(2).all(|w| w[1].sqrt_mu_f < w[0].sqrt_mu_f));
            assert!(d
                .windows(2)
                .all(|w| w[1].max_over_sqrt_2mu < w[0].max_over_sqrt_2mu));
            assert!(d.iter().all(|x| x.mu_f <= 2.0 * x.max));
        }
    }
}
