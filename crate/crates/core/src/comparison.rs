//! Quasi-steady envelopes `w(x; μ(t))` driven by
//! `μ' = (λ − λ(μ)) / I(μ)^p · inf f(w)/w_μ`, which bound the parabolic
//! solution from above or below.

use serde::Serialize;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::ode::{dopri5, Tolerance};
use crate::roots::brent;
use crate::steady::{
    effective_intervals, lambda_of_mu, log_grid, solve_radial_steady_at, trace_branch,
    SteadyBranch, BRANCH_GRID,
};

const DEFAULT_DELTA: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuDerivative {
    pub mu: f64,
    pub grid: Vec<f64>,
    pub w: Vec<f64>,
    /// `∂w/∂μ` per node; zero at the boundary node.
    pub dw: Vec<f64>,
    pub delta: f64,
}

fn uniform_nodes(radius: f64, intervals: usize) -> Vec<f64> {
    let h = radius / intervals as f64;
    (0..=intervals).map(|i| i as f64 * h).collect()
}

fn derivative_on(
    nl: &Nonlinearity,
    mu: f64,
    dom: &DomainSpec,
    nodes: &[f64],
    delta: f64,
) -> Result<MuDerivative> {
    let plus = solve_radial_steady_at(nl, mu * (1.0 + delta), dom, nodes)?;
    let minus = solve_radial_steady_at(nl, mu * (1.0 - delta), dom, nodes)?;
    let centre = solve_radial_steady_at(nl, mu, dom, nodes)?;
    let mut dw: Vec<f64> = plus
        .w
        .iter()
        .zip(&minus.w)
        .map(|(a, b)| (a - b) / (2.0 * delta * mu))
        .collect();
    let last = dw.len() - 1;
    dw[last] = 0.0;
    Ok(MuDerivative {
        mu,
        grid: nodes.to_vec(),
        w: centre.w,
        dw,
        delta,
    })
}

/// Central difference of steady solves at `μ(1 ± δ)`, `δ = 1e-4`, retried
/// once at `δ/10` if any interior value is not positive.
pub fn dw_dmu(
    nl: &Nonlinearity,
    mu: f64,
    dom: &DomainSpec,
    grid_size: usize,
) -> Result<MuDerivative> {
    dw_dmu_with(nl, mu, dom, grid_size, DEFAULT_DELTA)
}

pub fn dw_dmu_with(
    nl: &Nonlinearity,
    mu: f64,
    dom: &DomainSpec,
    grid_size: usize,
    delta: f64,
) -> Result<MuDerivative> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    if grid_size < 64 {
        return Err(Error::Invalid(format!(
            "grid_size must be at least 64, got {grid_size}"
        )));
    }
    let nodes = uniform_nodes(
        dom.radius(),
        effective_intervals(grid_size, dom.radius(), mu * (1.0 + delta)),
    );
    let mut bad = 0;
    for d in [delta, delta / 10.0] {
        let out = derivative_on(nl, mu, dom, &nodes, d)?;
        match out.dw[..out.dw.len() - 1].iter().position(|&v| !(v > 0.0)) {
            None => return Ok(out),
            Some(i) => bad = i,
        }
    }
    Err(Error::SignViolation { node: bad, mu })
}

/// `inf f(w)/w_μ` over interior nodes, skipping the node next to the
/// boundary where both factors degenerate. Returns `(inf, ∫_Ω f(w))`.
fn inf_ratio(nl: &Nonlinearity, mu: f64, dom: &DomainSpec) -> Result<(f64, f64)> {
    let d = dw_dmu(nl, mu, dom, BRANCH_GRID)?;
    let n = d.w.len();
    let inf = d.w[..n - 2]
        .iter()
        .zip(&d.dw[..n - 2])
        .map(|(&w, &dw)| nl.f(w) / dw)
        .fold(f64::INFINITY, f64::min);
    let integral = solve_radial_steady_at(nl, mu, dom, &d.grid)?.integral;
    Ok((inf, integral))
}

/// Right-hand side of the envelope ODE with fresh steady solves.
pub fn mu_ode_rhs(
    mu: f64,
    lambda: f64,
    p: f64,
    nl: &Nonlinearity,
    dom: &DomainSpec,
) -> Result<f64> {
    let lam_mu = lambda_of_mu(nl, mu, p, dom)?;
    if lam_mu == lambda {
        return Ok(0.0);
    }
    let (inf, integral) = inf_ratio(nl, mu, dom)?;
    Ok((lambda - lam_mu) / integral.powf(p) * inf)
}

/// Monotone cubic interpolant of `λ` against `ln μ` on a traced branch.
#[derive(Debug, Clone)]
pub struct LambdaCache {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl LambdaCache {
    pub fn new(branch: &SteadyBranch) -> Result<Self> {
        if branch.points.len() < 3 {
            return Err(Error::Invalid(
                "lambda cache needs at least three branch points".into(),
            ));
        }
        let x: Vec<f64> = branch.points.iter().map(|p| p.mu.ln()).collect();
        let y: Vec<f64> = branch.points.iter().map(|p| p.lambda).collect();
        let d = pchip(&x, &y);
        Ok(Self { x, y, d })
    }

    pub fn mu_range(&self) -> (f64, f64) {
        (self.x[0].exp(), self.x[self.x.len() - 1].exp())
    }

    pub fn eval(&self, mu: f64) -> Result<f64> {
        let x = mu.ln();
        let (lo, hi) = (self.x[0], self.x[self.x.len() - 1]);
        if !(x >= lo - 1e-12 && x <= hi + 1e-12) {
            return Err(Error::Domain(format!(
                "mu = {mu} outside the cached branch [{}, {}]",
                lo.exp(),
                hi.exp()
            )));
        }
        let x = x.clamp(lo, hi);
        let i = self
            .x
            .partition_point(|&v| v <= x)
            .clamp(1, self.x.len() - 1)
            - 1;
        let h = self.x[i + 1] - self.x[i];
        let t = (x - self.x[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        Ok((2.0 * t3 - 3.0 * t2 + 1.0) * self.y[i]
            + (t3 - 2.0 * t2 + t) * h * self.d[i]
            + (-2.0 * t3 + 3.0 * t2) * self.y[i + 1]
            + (t3 - t2) * h * self.d[i + 1])
    }
}

fn pchip(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        if del[i - 1] * del[i] > 0.0 {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
        }
    }
    d[0] = del[0];
    d[n - 1] = del[n - 2];
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Starts above the solution; `μ` decreases when `λ ≤ λ(μ0)`.
    Upper,
    /// Starts below the solution; `μ` increases when `λ ≥ λ(μ0)`.
    Lower,
}

impl Direction {
    fn name(self) -> &'static str {
        match self {
            Self::Upper => "upper",
            Self::Lower => "lower",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    ReachedRoot { mu: f64 },
    Escaped,
    MaxTime,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvelopePath {
    pub mu0: f64,
    pub direction: Direction,
    pub times: Vec<f64>,
    pub mu_series: Vec<f64>,
    pub lambda_series: Vec<f64>,
    pub terminal: Terminal,
}

impl EnvelopePath {
    /// `μ(t)` by interpolation in `ln μ`; constant after the last sample.
    pub fn mu_at(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&s| s <= t);
        if i == 0 {
            return self.mu_series[0];
        }
        if i == self.times.len() {
            return self.mu_series[i - 1];
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let (a, b) = (self.mu_series[i - 1].ln(), self.mu_series[i].ln());
        (a + (b - a) * (t - t0) / (t1 - t0)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeOptions {
    /// Escape threshold; must lie inside the cached branch.
    pub mu_cap: f64,
    /// Relative `|λ(μ) − λ|` that counts as reaching the root.
    pub tol: f64,
    /// Number of equally spaced output times on `[0, t_max]`.
    pub outputs: usize,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        Self {
            mu_cap: 1e6,
            tol: 1e-6,
            outputs: 400,
        }
    }
}

/// Integrates the envelope ODE from `μ0` with a fresh branch cache.
#[allow(clippy::too_many_arguments)]
pub fn evolve_envelope(
    mu0: f64,
    direction: Direction,
    lambda: f64,
    p: f64,
    nl: &Nonlinearity,
    dom: &DomainSpec,
    t_max: f64,
) -> Result<EnvelopePath> {
    let opts = EnvelopeOptions::default();
    let lo = (mu0 * 0.5).min(1e-4);
    let branch = trace_branch(nl, p, dom, &log_grid(lo, opts.mu_cap * 2.0, 40))?;
    let cache = LambdaCache::new(&branch)?;
    evolve_envelope_cached(mu0, direction, lambda, &cache, &branch, t_max, &opts)
}

/// Integrates in `ln μ` using a prepared cache for `λ(μ)`; `branch` supplies
/// the kernel, exponent and domain.
pub fn evolve_envelope_cached(
    mu0: f64,
    direction: Direction,
    lambda: f64,
    cache: &LambdaCache,
    branch: &SteadyBranch,
    t_max: f64,
    opts: &EnvelopeOptions,
) -> Result<EnvelopePath> {
    let (nl, p, dom) = (&branch.nl, branch.p, &branch.domain);
    if !(mu0 > 0.0 && t_max > 0.0 && lambda > 0.0) {
        return Err(Error::Invalid(
            "mu0, t_max and lambda must be positive".into(),
        ));
    }
    let (_, mu_hi) = cache.mu_range();
    let cap = opts.mu_cap.min(mu_hi);
    let lam0 = cache.eval(mu0)?;
    let gap = lambda - lam0;
    let consistent = match direction {
        Direction::Upper => gap <= 0.0,
        Direction::Lower => gap >= 0.0,
    };
    if !consistent {
        return Err(Error::DirectionMismatch {
            direction: direction.name(),
            gap,
        });
    }
    let mut path = EnvelopePath {
        mu0,
        direction,
        times: vec![0.0],
        mu_series: vec![mu0],
        lambda_series: vec![lam0],
        terminal: Terminal::MaxTime,
    };
    if gap.abs() < opts.tol * lambda {
        path.terminal = Terminal::ReachedRoot { mu: mu0 };
        return Ok(path);
    }
    let mut failure = None;
    let mut rhs = |_t: f64, y: &[f64; 1]| -> [f64; 1] {
        let mu = y[0].exp().min(mu_hi);
        let value = cache.eval(mu).and_then(|lam| {
            let (inf, _) = inf_ratio(nl, mu, dom)?;
            // I(μ) from the cache keeps the prefactor consistent with λ(μ).
            let integral = (lam / mu).powf(1.0 / p);
            Ok((lambda - lam) / integral.powf(p) * inf / mu)
        });
        match value {
            Ok(v) => [v],
            Err(e) => {
                failure.get_or_insert(e);
                [0.0]
            }
        }
    };
    let stops: Vec<f64> = (1..=opts.outputs)
        .map(|i| t_max * i as f64 / opts.outputs as f64)
        .collect();
    let mut terminal = Terminal::MaxTime;
    let mut samples = Vec::new();
    dopri5(
        &mut rhs,
        0.0,
        [mu0.ln()],
        &stops,
        Tolerance {
            rtol: 1e-8,
            atol: 1e-10,
        },
        t_max,
        |t, y| {
            let mu = y[0].exp();
            if mu > cap {
                samples.push((t, mu, f64::NAN));
                terminal = Terminal::Escaped;
                return false;
            }
            let lam = cache.eval(mu).unwrap_or(f64::NAN);
            samples.push((t, mu, lam));
            if (lam - lambda).abs() < opts.tol * lambda {
                terminal = Terminal::ReachedRoot { mu };
                return false;
            }
            true
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    for (t, mu, lam) in samples {
        path.times.push(t);
        path.mu_series.push(mu);
        path.lambda_series.push(lam);
    }
    path.terminal = terminal;
    if let Terminal::ReachedRoot { mu } = terminal {
        // Polish against fresh solves so the reported root matches the
        // nonlocal steady state, not the interpolant.
        let g = |x: f64| lambda_of_mu(nl, x.exp(), p, dom).map(|l| l - lambda);
        let (a, b) = (mu.ln() - 1e-3, mu.ln() + 1e-3);
        if let (Ok(ga), Ok(gb)) = (g(a), g(b)) {
            if ga * gb < 0.0 {
                let x = brent(g, a, b, ga, gb, 1e-12, 100)?;
                path.terminal = Terminal::ReachedRoot { mu: x.exp() };
            }
        }
    }
    Ok(path)
}

/// Smallest `μ` (to a relative 1e-6) whose steady profile dominates the
/// radial samples `u0` on `nodes`.
pub fn dominating_mu(
    nl: &Nonlinearity,
    dom: &DomainSpec,
    nodes: &[f64],
    u0: &[f64],
    mu_cap: f64,
) -> Result<f64> {
    let dominates = |mu: f64| -> Result<bool> {
        let w = solve_radial_steady_at(nl, mu, dom, nodes)?.w;
        Ok(w.iter().zip(u0).all(|(a, b)| a >= b))
    };
    if !dominates(mu_cap)? {
        return Err(Error::NoDominatingProfile { cap: mu_cap });
    }
    let (mut lo, mut hi) = (1e-8f64, mu_cap);
    if dominates(lo)? {
        return Ok(lo);
    }
    while hi / lo > 1.0 + 1e-6 {
        let mid = (lo * hi).sqrt();
        if dominates(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
