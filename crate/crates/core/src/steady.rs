//! Local steady states `Δw + μ f(w) = 0` on intervals and balls, the
//! bifurcation curve `λ(μ) = μ (∫_Ω f(w_μ))^p`, and the nonlocal steady
//! states it parametrizes.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::ode::{dopri5, Tolerance};
use crate::quadrature::{refined_gauss, simpson};
use crate::roots::{brent, golden_max};

/// Largest center value the shooter will consider.
pub const M_CAP: f64 = 1e6;
/// Grid floor used for branch points.
pub const BRANCH_GRID: usize = 256;
/// Relative tolerance between the volume and flux forms of `λ`.
pub const LAMBDA_CONSISTENCY: f64 = 5e-3;

const MAX_INTERVALS: usize = 1 << 17;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyProfile {
    pub mu: f64,
    /// Radial nodes from the center to the boundary.
    pub grid: Vec<f64>,
    pub w: Vec<f64>,
    /// Center value `M = w(0)`.
    pub max: f64,
    /// `|w'(R)|`
    pub boundary_slope: f64,
    /// `∫_Ω f(w) dx` by Simpson on `grid`.
    pub integral: f64,
}

/// `√μ L = (√2/2) ∫_0^M ds / √(F(s) − F(M))` inverted for `μ`: the
/// parameter of the 1D steady state on `(-L, L)` with center value `M`.
pub fn mu_of_max_flat(nl: &Nonlinearity, max: f64, half_length: f64) -> Result<f64> {
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::Domain(format!(
            "center value must be positive, got {max}"
        )));
    }
    if !(half_length > 0.0 && half_length.is_finite()) {
        return Err(Error::Domain(format!(
            "half-length must be positive, got {half_length}"
        )));
    }
    // s = M - M t² turns the inverse square root at s = M into a smooth limit.
    let integrand = |t: f64| {
        if t == 0.0 {
            return 2.0 * (max / nl.f(max)).sqrt();
        }
        2.0 * max * t / nl.mass_below(max, max * t * t).sqrt()
    };
    let integral = refined_gauss(integrand, 0.0, 1.0, 2048, 1e-12, 6)?;
    Ok(integral * integral / (2.0 * half_length * half_length))
}

/// Intervals used for a steady solve: at least `grid_size`, and enough to put
/// sixteen nodes across the `1/√μ` boundary layer.
pub fn effective_intervals(grid_size: usize, radius: f64, mu: f64) -> usize {
    let layer = (16.0 * radius * mu.sqrt()).ceil();
    let n = if layer.is_finite() {
        grid_size.max(layer as usize)
    } else {
        MAX_INTERVALS
    };
    (n + n % 2).min(MAX_INTERVALS)
}

struct Shooter<'a> {
    nl: &'a Nonlinearity,
    mu: f64,
    n: f64,
    radius: f64,
}

impl Shooter<'_> {
    /// Fourth-order Taylor data `(c2, c4)` of `w = M + c2 r² + c4 r⁴`.
    fn taylor(&self, m: f64) -> (f64, f64) {
        let c2 = -self.mu * self.nl.f(m) / (2.0 * self.n);
        let c4 = -self.mu * self.nl.df(m) * c2 / (4.0 * (self.n + 2.0));
        (c2, c4)
    }

    fn start_radius(&self, m: f64) -> f64 {
        let k = (self.mu * (self.nl.f(m) + self.nl.df(m).abs())).sqrt();
        (1e-3 * self.radius).min(1e-3 / k)
    }

    fn series(&self, m: f64, r: f64) -> [f64; 2] {
        let (c2, c4) = self.taylor(m);
        let r2 = r * r;
        [m + c2 * r2 + c4 * r2 * r2, 2.0 * c2 * r + 4.0 * c4 * r2 * r]
    }

    fn tolerance(&self, m: f64) -> Tolerance {
        Tolerance {
            rtol: 1e-12,
            atol: 1e-13 * m.max(1.0),
        }
    }

    fn rhs(&self) -> impl FnMut(f64, &[f64; 2]) -> [f64; 2] + '_ {
        let (mu, n1, nl) = (self.mu, self.n - 1.0, self.nl);
        move |r, y| [y[1], -n1 * y[1] / r - mu * nl.f(y[0])]
    }

    /// State `(w, w')` at the boundary for center value `m`.
    fn shoot(&self, m: f64) -> Result<[f64; 2]> {
        let r0 = self.start_radius(m);
        let (y, _) = dopri5(
            self.rhs(),
            r0,
            self.series(m, r0),
            &[self.radius],
            self.tolerance(m),
            self.radius,
            |_, _| true,
        )?;
        Ok(y)
    }

    fn residual(&self, m: f64) -> Result<f64> {
        self.shoot(m).map(|y| y[0])
    }

    /// Center value of the positive solution. The residual `w(R; M)` is
    /// nondecreasing in `M`, and comparison with `f(0)` and `f(M)` gives a
    /// bracket directly.
    fn center(&self) -> Result<f64> {
        let q = self.mu * self.radius * self.radius / (2.0 * self.n);
        let mut hi = (q * self.nl.f(0.0)).min(M_CAP);
        let lower_gap = |x: f64| Ok(x - q * self.nl.f(x));
        let g0 = lower_gap(0.0)?;
        let gh = lower_gap(hi)?;
        let mut lo = if gh <= 0.0 {
            return Err(Error::ShootingBracket {
                mu: self.mu,
                cap: M_CAP,
            });
        } else {
            brent(lower_gap, 0.0, hi, g0, gh, 1e-14 * hi, 200)?
        };
        let mut r_lo = self.residual(lo)?;
        let mut r_hi = self.residual(hi)?;
        if r_hi < 0.0 {
            return Err(Error::ShootingBracket {
                mu: self.mu,
                cap: M_CAP,
            });
        }
        if r_lo > 0.0 {
            // Only possible through rounding when the bracket is already tight.
            lo *= 0.5;
            r_lo = self.residual(lo)?;
        }
        while hi > 2.0 * lo {
            let mid = (lo * hi).sqrt();
            let r = self.residual(mid)?;
            if r == 0.0 {
                return Ok(mid);
            }
            if r > 0.0 {
                hi = mid;
                r_hi = r;
            } else {
                lo = mid;
                r_lo = r;
            }
        }
        brent(|m| self.residual(m), lo, hi, r_lo, r_hi, 2e-15 * hi, 200)
    }

    /// `(w, w')` at every node of an increasing grid starting at 0.
    fn sample(&self, m: f64, nodes: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let r0 = self.start_radius(m);
        let mut w = Vec::with_capacity(nodes.len());
        let mut dw = Vec::with_capacity(nodes.len());
        for &r in nodes.iter().take_while(|&&r| r <= r0) {
            let y = self.series(m, r);
            w.push(y[0]);
            dw.push(y[1]);
        }
        let stops = &nodes[w.len()..];
        dopri5(
            self.rhs(),
            r0,
            self.series(m, r0),
            stops,
            self.tolerance(m),
            self.radius,
            |_, y| {
                w.push(y[0]);
                dw.push(y[1]);
                true
            },
        )?;
        Ok((w, dw))
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu >= 0.0 && mu.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "mu must be finite and nonnegative, got {mu}"
        )))
    }
}

/// Steady state on caller-chosen radial nodes `0 = r_0 < … < r_N = R`.
pub fn solve_radial_steady_at(
    nl: &Nonlinearity,
    mu: f64,
    dom: &DomainSpec,
    nodes: &[f64],
) -> Result<SteadyProfile> {
    check_mu(mu)?;
    dom.validate()?;
    let radius = dom.radius();
    if nodes.len() < 3
        || nodes[0] != 0.0
        || (nodes[nodes.len() - 1] - radius).abs() > 1e-12 * radius
    {
        return Err(Error::Invalid(
            "radial nodes must run from 0 to the domain radius".into(),
        ));
    }
    if nodes.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Invalid(
            "radial nodes must be strictly increasing".into(),
        ));
    }
    let n = dom.dim() as f64;
    let weight = |r: f64, v: f64| r.powi(dom.dim() as i32 - 1) * v;
    let integral_of = |w: &[f64]| -> f64 {
        let vals: Vec<f64> = nodes
            .iter()
            .zip(w)
            .map(|(&r, &v)| weight(r, nl.f(v)))
            .collect();
        dom.radial_weight() * nonuniform_simpson(nodes, &vals)
    };
    if mu == 0.0 {
        let w = vec![0.0; nodes.len()];
        let integral = integral_of(&w);
        return Ok(SteadyProfile {
            mu,
            grid: nodes.to_vec(),
            w,
            max: 0.0,
            boundary_slope: 0.0,
            integral,
        });
    }
    let shooter = Shooter { nl, mu, n, radius };
    let max = shooter.center()?;
    let (mut w, dw) = shooter.sample(max, nodes)?;
    let last = w.len() - 1;
    let slack = 1e-9 * max.max(1.0);
    for i in 0..last {
        if w[i + 1] > w[i] + slack || w[i] < -slack {
            return Err(Error::NonMonotone { node: i + 1, mu });
        }
        w[i] = w[i].max(0.0);
    }
    w[last] = 0.0;
    let integral = integral_of(&w);
    Ok(SteadyProfile {
        mu,
        grid: nodes.to_vec(),
        w,
        max,
        boundary_slope: dw[last].abs(),
        integral,
    })
}

/// Steady state on a uniform radial grid with at least `grid_size` intervals,
/// refined near the boundary layer for large `μ`.
pub fn solve_radial_steady(
    nl: &Nonlinearity,
    mu: f64,
    dom: &DomainSpec,
    grid_size: usize,
) -> Result<SteadyProfile> {
    if grid_size < 64 {
        return Err(Error::Invalid(format!(
            "grid_size must be at least 64, got {grid_size}"
        )));
    }
    check_mu(mu)?;
    let intervals = effective_intervals(grid_size, dom.radius(), mu);
    let h = dom.radius() / intervals as f64;
    let nodes: Vec<f64> = (0..=intervals).map(|i| i as f64 * h).collect();
    solve_radial_steady_at(nl, mu, dom, &nodes)
}

/// Simpson on uniform grids; falls back to the trapezoid rule otherwise.
fn nonuniform_simpson(x: &[f64], y: &[f64]) -> f64 {
    let h = x[1] - x[0];
    let uniform = x.windows(2).all(|p| ((p[1] - p[0]) - h).abs() <= 1e-9 * h);
    if uniform {
        simpson(y, h)
    } else {
        x.windows(2)
            .zip(y.windows(2))
            .map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1]))
            .sum()
    }
}

/// Both forms of `λ(μ)` for a solved profile: `(volume, flux)`.
pub fn lambda_forms(profile: &SteadyProfile, p: f64, dom: &DomainSpec) -> (f64, f64) {
    let mu = profile.mu;
    let volume = mu * profile.integral.powf(p);
    let flux = mu.powf(1.0 - p) * (dom.boundary_measure() * profile.boundary_slope).powf(p);
    (volume, flux)
}

fn check_forms(mu: f64, volume: f64, flux: f64) -> Result<()> {
    if (volume - flux).abs() <= LAMBDA_CONSISTENCY * volume {
        Ok(())
    } else {
        Err(Error::LambdaInconsistent { mu, volume, flux })
    }
}

/// `λ(μ) = μ (∫_Ω f(w_μ))^p`, cross-checked against the flux form.
pub fn lambda_of_mu(nl: &Nonlinearity, mu: f64, p: f64, dom: &DomainSpec) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    check_p(p)?;
    let profile = solve_radial_steady(nl, mu, dom, BRANCH_GRID)?;
    let (volume, flux) = lambda_forms(&profile, p, dom);
    check_forms(mu, volume, flux)?;
    Ok(volume)
}

/// `-w'(R)/√μ`, bounded above by `√2`.
pub fn boundary_flux_ratio(nl: &Nonlinearity, mu: f64, dom: &DomainSpec) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    let profile = solve_radial_steady(nl, mu, dom, BRANCH_GRID)?;
    Ok(profile.boundary_slope / mu.sqrt())
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("p must be positive, got {p}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchPoint {
    pub mu: f64,
    pub max: f64,
    pub lambda: f64,
    pub lambda_flux: f64,
    pub flux_ratio: f64,
}

/// Expected shape of `λ(μ)` for the exponent `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `p ≤ 1`: strictly increasing, one steady state for every `λ`.
    Monotone,
    /// `1 < p < 2`: grows without bound.
    Unbounded,
    /// `p = 2`: increases toward `2|∂Ω|²` without reaching it.
    Saturating,
    /// `p > 2`: rises to an interior maximum and decays to zero.
    RiseThenDecay,
}

impl Regime {
    pub fn of(p: f64) -> Self {
        if is_critical_p(p) {
            Self::Saturating
        } else if p <= 1.0 {
            Self::Monotone
        } else if p < 2.0 {
            Self::Unbounded
        } else {
            Self::RiseThenDecay
        }
    }
}

fn is_critical_p(p: f64) -> bool {
    (p - 2.0).abs() <= 1e-12
}

#[derive(Debug, Clone)]
pub struct SteadyBranch {
    pub nl: Nonlinearity,
    pub p: f64,
    pub domain: DomainSpec,
    pub regime: Regime,
    pub points: Vec<BranchPoint>,
}

/// Log-spaced grid from `lo` to `hi` with `per_decade` points per decade.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let decades = (hi / lo).log10();
    let n = (decades * per_decade as f64).round().max(1.0) as usize;
    (0..=n)
        .map(|i| lo * 10f64.powf(decades * i as f64 / n as f64))
        .collect()
}

/// 200 points per decade on `[1e-4, 1e6]`.
pub fn default_mu_grid() -> Vec<f64> {
    log_grid(1e-4, 1e6, 200)
}

/// Samples `λ(μ)` on `mu_grid`. Points are solved in parallel and returned in
/// grid order.
pub fn trace_branch(
    nl: &Nonlinearity,
    p: f64,
    dom: &DomainSpec,
    mu_grid: &[f64],
) -> Result<SteadyBranch> {
    check_p(p)?;
    dom.validate()?;
    if mu_grid.is_empty() || mu_grid[0] <= 0.0 || mu_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid(
            "mu grid must be nonempty, positive and strictly increasing".into(),
        ));
    }
    let points = mu_grid
        .par_iter()
        .map(|&mu| {
            let profile = solve_radial_steady(nl, mu, dom, BRANCH_GRID)?;
            let (lambda, lambda_flux) = lambda_forms(&profile, p, dom);
            check_forms(mu, lambda, lambda_flux)?;
            Ok(BranchPoint {
                mu,
                max: profile.max,
                lambda,
                lambda_flux,
                flux_ratio: profile.boundary_slope / mu.sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SteadyBranch {
        nl: nl.clone(),
        p,
        domain: *dom,
        regime: Regime::of(p),
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaStar {
    /// `value` is authoritative; for `p = 2` it is the analytic supremum and
    /// `numerical_sup` the largest sampled value.
    Finite {
        value: f64,
        mu_at_max: f64,
        numerical_sup: f64,
    },
    Unbounded,
}

impl LambdaStar {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Self::Finite { value, .. } => Some(value),
            Self::Unbounded => None,
        }
    }
}

pub fn lambda_star(branch: &SteadyBranch) -> Result<LambdaStar> {
    let points = &branch.points;
    if points.is_empty() {
        return Err(Error::Invalid("empty branch".into()));
    }
    if branch.p < 2.0 && !is_critical_p(branch.p) {
        return Ok(LambdaStar::Unbounded);
    }
    let (imax, top) = points
        .iter()
        .enumerate()
        .fold((0, points[0]), |acc, (i, pt)| {
            if pt.lambda > acc.1.lambda {
                (i, *pt)
            } else {
                acc
            }
        });
    if is_critical_p(branch.p) {
        return Ok(LambdaStar::Finite {
            value: branch.domain.critical_lambda_p2(),
            mu_at_max: top.mu,
            numerical_sup: top.lambda,
        });
    }
    if imax == 0 || imax == points.len() - 1 {
        return Err(Error::MaximumAtEndpoint { mu: top.mu });
    }
    let lo = points[imax - 1].mu.ln();
    let hi = points[imax + 1].mu.ln();
    let (x, v) = golden_max(
        |x| lambda_of_mu(&branch.nl, x.exp(), branch.p, &branch.domain),
        lo,
        hi,
        1e-7,
    )?;
    let (value, mu_at_max) = if v >= top.lambda {
        (v, x.exp())
    } else {
        (top.lambda, top.mu)
    };
    Ok(LambdaStar::Finite {
        value,
        mu_at_max,
        numerical_sup: top.lambda,
    })
}

#[derive(Debug, Clone)]
pub struct NonlocalSteady {
    pub profiles: Vec<SteadyProfile>,
    /// Set when the sampled branch cannot certify that every root was found.
    pub warnings: Vec<String>,
}

/// Nonlocal steady states for `λ`, found as roots of `λ(μ) = λ` on the
/// default branch.
pub fn solve_nonlocal_steady(
    nl: &Nonlinearity,
    lambda: f64,
    p: f64,
    dom: &DomainSpec,
) -> Result<NonlocalSteady> {
    let branch = trace_branch(nl, p, dom, &default_mu_grid())?;
    nonlocal_steady_on(&branch, lambda)
}

/// As [`solve_nonlocal_steady`], on an already traced branch.
pub fn nonlocal_steady_on(branch: &SteadyBranch, lambda: f64) -> Result<NonlocalSteady> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    let (nl, p, dom) = (&branch.nl, branch.p, &branch.domain);
    let pts = &branch.points;
    let mut warnings = Vec::new();
    if branch.regime == Regime::Saturating && lambda >= dom.critical_lambda_p2() {
        return Ok(NonlocalSteady {
            profiles: Vec::new(),
            warnings,
        });
    }
    let first = pts[0];
    let last = pts[pts.len() - 1];
    if first.lambda > lambda {
        warnings.push(format!(
            "lambda(mu) exceeds {lambda} already at mu = {}; roots below the grid are not excluded",
            first.mu
        ));
    }
    if last.lambda < lambda
        && matches!(
            branch.regime,
            Regime::Monotone | Regime::Unbounded | Regime::Saturating
        )
    {
        warnings.push(format!(
            "lambda(mu) is still below {lambda} at mu = {}; extend the grid",
            last.mu
        ));
    }
    if last.lambda > lambda && branch.regime == Regime::RiseThenDecay {
        warnings.push(format!(
            "lambda(mu) is still above {lambda} at mu = {}; a root beyond the grid is missed",
            last.mu
        ));
    }
    let mut profiles = Vec::new();
    for pair in pts.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (ga, gb) = (a.lambda - lambda, b.lambda - lambda);
        if ga == 0.0 {
            profiles.push(solve_radial_steady(nl, a.mu, dom, BRANCH_GRID)?);
            continue;
        }
        if ga.signum() == gb.signum() || gb == 0.0 {
            continue;
        }
        let g = |x: f64| lambda_of_mu(nl, x.exp(), p, dom).map(|l| l - lambda);
        let x = brent(g, a.mu.ln(), b.mu.ln(), ga, gb, 1e-12, 200)?;
        profiles.push(solve_radial_steady(nl, x.exp(), dom, BRANCH_GRID)?);
    }
    if let Some(pt) = pts.last() {
        if pt.lambda == lambda {
            profiles.push(solve_radial_steady(nl, pt.mu, dom, BRANCH_GRID)?);
        }
    }
    Ok(NonlocalSteady { profiles, warnings })
}
