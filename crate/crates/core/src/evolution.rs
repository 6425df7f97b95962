//! Method-of-lines integration of `u_t = Δu + λ f(u) / (∫_Ω f(u))^p` with
//! Bogacki–Shampine 3(2) time stepping, blow-up detection and regime
//! classification.
//!
//! A fixed grid cannot blow up: the boundary nodes keep the discrete integral
//! above a positive floor. A run is therefore called blown up once the
//! reaction rate outruns the grid, i.e. the boundary layer becomes thinner
//! than the mesh and the step size collapses, provided the integral has
//! collapsed and the extrapolated blow-up time is finite.

use serde::Serialize;

use crate::domain::DomainSpec;
use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::ode::StepStats;
use crate::quadrature::simpson_weights;
use crate::steady::{nonlocal_steady_on, solve_radial_steady_at, SteadyBranch};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Zero,
    /// Local steady state `w(·; μ)`.
    Steady {
        mu: f64,
    },
    /// `A cos(πx/2L)` on intervals, `A (1 − (r/R)²)` on balls.
    Bump {
        amplitude: f64,
    },
    /// Piecewise-linear samples `(x, u)`. Radial when every `x ≥ 0`,
    /// otherwise interval coordinates covering `[-L, L]`.
    Samples {
        points: Vec<(f64, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub nl: Nonlinearity,
    pub lambda: f64,
    pub p: f64,
    pub domain: DomainSpec,
    pub initial: InitialData,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.p > 0.0 && self.p.is_finite()) {
            return Err(Error::Invalid(format!(
                "p must be positive, got {}",
                self.p
            )));
        }
        self.domain.validate()?;
        match &self.initial {
            InitialData::Steady { mu } if !(*mu >= 0.0 && mu.is_finite()) => Err(Error::Invalid(
                format!("initial steady mu must be nonnegative, got {mu}"),
            )),
            InitialData::Bump { amplitude } if !(*amplitude >= 0.0 && amplitude.is_finite()) => {
                Err(Error::Invalid(format!(
                    "bump amplitude must be nonnegative, got {amplitude}"
                )))
            }
            InitialData::Samples { points } if points.len() < 2 => Err(Error::Invalid(
                "initial samples need at least two points".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Controls {
    pub t_max: f64,
    /// Floor on the reaction step cap; defaults to `h²/5`. The run stops
    /// once stiffening reaction pushes the cap below it.
    pub dt_min: Option<f64>,
    /// Sup-norm above which growth counts toward blow-up or divergence.
    pub m_big: f64,
    /// Local error tolerance, also the convergence threshold on the steady
    /// residual.
    pub tol: f64,
    /// Times at which full profiles are stored.
    pub snapshot_times: Vec<f64>,
}

impl Default for Controls {
    fn default() -> Self {
        Self {
            t_max: 50.0,
            dt_min: None,
            m_big: 3.0,
            tol: 1e-6,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Status {
    Converged { residual: f64 },
    BlownUp { t_est: f64, t_ci: f64 },
    Diverging,
    MaxTimeReached,
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Converged { .. } => "converged",
            Self::BlownUp { .. } => "blown_up",
            Self::Diverging => "diverging",
            Self::MaxTimeReached => "max_time_reached",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    Converged,
    BlownUp,
    Diverging,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    /// Node coordinates: `x ∈ [-L, L]` on intervals, `r ∈ [0, R]` on balls.
    pub grid: Vec<f64>,
    /// Sample times. Samples are kept whenever `M` or `I` moved by a relative
    /// 1e-3 or `t` advanced by `t_max/10⁴`, and at the final step.
    pub times: Vec<f64>,
    pub max_series: Vec<f64>,
    pub integral_series: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    pub final_u: Vec<f64>,
    pub status: Status,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// `(t, T_est)` checkpoints once `M > M_big`; infinite when the
    /// extrapolation predicts no finite blow-up.
    pub blowup_estimates: Vec<(f64, f64)>,
    pub lambda: f64,
    pub p: f64,
    pub m_big: f64,
    /// Contribution of the pinned boundary nodes, where `u = 0`, to the
    /// discrete `I`: a floor below which the discrete integral cannot fall.
    pub boundary_floor: f64,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn initial_integral(&self) -> f64 {
        self.integral_series[0]
    }

    /// Rate `λ f(M)/I^p` of center growth, per sample.
    pub fn growth_rate(&self, nl: &Nonlinearity) -> Vec<f64> {
        self.max_series
            .iter()
            .zip(&self.integral_series)
            .map(|(&m, &i)| self.lambda * nl.f(m) / i.powf(self.p))
            .collect()
    }
}

/// Spatial discretization: three-point Laplacian and Simpson weights.
#[derive(Debug, Clone)]
pub struct Grid {
    pub nodes: Vec<f64>,
    pub h: f64,
    radial: bool,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    weights: Vec<f64>,
    /// Indices of the nodes that evolve; the rest are pinned to zero.
    free: std::ops::Range<usize>,
}

impl Grid {
    pub fn new(dom: &DomainSpec, intervals: usize) -> Result<Self> {
        dom.validate()?;
        if intervals < 4 || !intervals.is_multiple_of(2) {
            return Err(Error::Invalid(format!(
                "grid size must be even and at least 4, got {intervals}"
            )));
        }
        let n = intervals;
        let size = dom.radius();
        let radial = matches!(dom, DomainSpec::Ball { .. });
        let (nodes, h) = if radial {
            let h = size / n as f64;
            ((0..=n).map(|i| i as f64 * h).collect::<Vec<_>>(), h)
        } else {
            let h = 2.0 * size / n as f64;
            ((0..=n).map(|i| -size + i as f64 * h).collect::<Vec<_>>(), h)
        };
        let ih2 = 1.0 / (h * h);
        let mut lower = vec![ih2; n + 1];
        let mut diag = vec![-2.0 * ih2; n + 1];
        let mut upper = vec![ih2; n + 1];
        let mut weights = simpson_weights(n, h);
        if radial {
            let dim = dom.dim() as f64;
            lower[0] = 0.0;
            diag[0] = -2.0 * dim * ih2;
            upper[0] = 2.0 * dim * ih2;
            for i in 1..n {
                let drift = (dim - 1.0) / (2.0 * h * nodes[i]);
                lower[i] = ih2 - drift;
                upper[i] = ih2 + drift;
            }
            for (w, &r) in weights.iter_mut().zip(&nodes) {
                *w *= dom.radial_weight() * r.powi(dom.dim() as i32 - 1);
            }
        }
        let free = if radial { 0..n } else { 1..n };
        Ok(Self {
            nodes,
            h,
            radial,
            lower,
            diag,
            upper,
            weights,
            free,
        })
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Distance from the center of every node.
    pub fn radii(&self) -> Vec<f64> {
        self.nodes.iter().map(|x| x.abs()).collect()
    }

    /// Quadrature weight times `f(0)` summed over the pinned boundary nodes.
    pub fn boundary_floor(&self, nl: &Nonlinearity) -> f64 {
        (0..self.nodes.len())
            .filter(|i| !self.free.contains(i))
            .map(|i| self.weights[i] * nl.f(0.0))
            .sum()
    }

    pub fn integral(&self, nl: &Nonlinearity, u: &[f64]) -> f64 {
        self.weights.iter().zip(u).map(|(w, &v)| w * nl.f(v)).sum()
    }

    fn laplacian_at(&self, u: &[f64], i: usize) -> f64 {
        let left = if i == 0 {
            0.0
        } else {
            self.lower[i] * u[i - 1]
        };
        left + self.diag[i] * u[i] + self.upper[i] * u[i + 1]
    }
}

struct Semi<'a> {
    grid: &'a Grid,
    nl: &'a Nonlinearity,
    lambda: f64,
    p: f64,
    fbuf: Vec<f64>,
}

impl Semi<'_> {
    /// Writes `du/dt` into `out` and returns `I`.
    fn eval(&mut self, u: &[f64], out: &mut [f64]) -> f64 {
        self.nl.fill_f(u, &mut self.fbuf);
        let integral: f64 = self
            .fbuf
            .iter()
            .zip(&self.grid.weights)
            .map(|(f, w)| f * w)
            .sum();
        let g = self.lambda / integral.powf(self.p);
        let grid = self.grid;
        let n = u.len() - 1;
        out[n] = 0.0;
        if grid.radial {
            out[0] = grid.diag[0] * u[0] + grid.upper[0] * u[1] + g * self.fbuf[0];
        } else {
            out[0] = 0.0;
        }
        for i in 1..n {
            out[i] = grid.lower[i] * u[i - 1]
                + grid.diag[i] * u[i]
                + grid.upper[i] * u[i + 1]
                + g * self.fbuf[i];
        }
        integral
    }
}

/// Samples of the initial datum on the grid nodes.
pub fn initial_profile(prob: &ProblemSpec, grid: &Grid) -> Result<Vec<f64>> {
    prob.validate()?;
    let size = prob.domain.radius();
    let radii = grid.radii();
    let mut u = match &prob.initial {
        InitialData::Zero => vec![0.0; radii.len()],
        InitialData::Bump { amplitude } => radii
            .iter()
            .map(|&r| {
                let s = r / size;
                if grid.radial {
                    amplitude * (1.0 - s * s)
                } else {
                    amplitude * (std::f64::consts::FRAC_PI_2 * s).cos()
                }
            })
            .collect(),
        InitialData::Steady { mu } => {
            // Solve on the nonnegative half and map back by |x|.
            let half: Vec<f64> = if grid.radial {
                grid.nodes.clone()
            } else {
                grid.nodes[grid.intervals() / 2..]
                    .iter()
                    .map(|x| x.abs())
                    .collect()
            };
            let prof = solve_radial_steady_at(&prob.nl, *mu, &prob.domain, &half)?;
            if grid.radial {
                prof.w
            } else {
                let mid = grid.intervals() / 2;
                (0..=grid.intervals())
                    .map(|i| prof.w[i.abs_diff(mid)])
                    .collect()
            }
        }
        InitialData::Samples { points } => {
            let full = points.iter().any(|&(x, _)| x < 0.0);
            let coords: Vec<f64> = if full { grid.nodes.clone() } else { radii };
            coords
                .iter()
                .map(|&x| interpolate(points, x))
                .collect::<Result<Vec<_>>>()?
        }
    };
    for (i, v) in u.iter_mut().enumerate() {
        if !(v.is_finite() && *v >= -1e-12) {
            return Err(Error::Invalid(format!(
                "initial datum must be finite and nonnegative, got {v} at node {i}"
            )));
        }
        *v = v.max(0.0);
    }
    let last = u.len() - 1;
    u[last] = 0.0;
    if !grid.radial {
        u[0] = 0.0;
    }
    Ok(u)
}

fn interpolate(points: &[(f64, f64)], x: f64) -> Result<f64> {
    let i = points.partition_point(|&(s, _)| s <= x);
    let tol = 1e-9 * (1.0 + x.abs());
    if i == 0 {
        return if (points[0].0 - x).abs() <= tol {
            Ok(points[0].1)
        } else {
            Err(Error::Invalid(format!(
                "initial samples do not cover x = {x}"
            )))
        };
    }
    if i == points.len() {
        let (s, v) = points[points.len() - 1];
        return if (s - x).abs() <= tol {
            Ok(v)
        } else {
            Err(Error::Invalid(format!(
                "initial samples do not cover x = {x}"
            )))
        };
    }
    let (x0, y0) = points[i - 1];
    let (x1, y1) = points[i];
    Ok(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

/// Sup norm over interior nodes of `Δu + λ f(u) / I(u)^p`.
pub fn steady_residual(u: &[f64], prob: &ProblemSpec) -> Result<f64> {
    let grid = Grid::new(&prob.domain, u.len().saturating_sub(1))?;
    Ok(residual_on(&grid, &prob.nl, prob.lambda, prob.p, u))
}

fn residual_on(grid: &Grid, nl: &Nonlinearity, lambda: f64, p: f64, u: &[f64]) -> f64 {
    let g = lambda / grid.integral(nl, u).powf(p);
    grid.free
        .clone()
        .map(|i| (grid.laplacian_at(u, i) + g * nl.f(u[i])).abs())
        .fold(0.0, f64::max)
}

/// Extrapolated blow-up time from `(t, M, ρ)` samples with `ρ = λ f(M)/I^p`
/// the center growth rate. `ρ` is fitted as `e^{aM}` or `M^a` over three
/// trailing windows of the `M` range; the remaining time is `∫_M^∞ dM/ρ`.
/// Returns `(T_est, T_ci)`, with `T_est` infinite when the fitted rate does
/// not grow fast enough to blow up.
pub fn estimate_blowup_time(times: &[f64], max: &[f64], rate: &[f64]) -> Option<(f64, f64)> {
    let n = times.len();
    if n < 8 {
        return None;
    }
    let (m0, mf) = (max[0], max[n - 1]);
    let t_f = times[n - 1];
    let mut estimates = Vec::with_capacity(3);
    for fraction in [0.5, 0.35, 0.2] {
        let floor = mf - fraction * (mf - m0);
        let start = max.iter().rposition(|&m| m < floor).map_or(0, |i| i + 1);
        let idx: Vec<usize> = (start..n)
            .filter(|&i| max[i] > 0.0 && rate[i] > 0.0)
            .collect();
        if idx.len() < 5 {
            return None;
        }
        let ln_rate: Vec<f64> = idx.iter().map(|&i| rate[i].ln()).collect();
        let lin: Vec<f64> = idx.iter().map(|&i| max[i]).collect();
        let log: Vec<f64> = idx.iter().map(|&i| max[i].ln()).collect();
        let (_, a_exp, rms_exp) = linear_fit(&lin, &ln_rate);
        let (_, a_pow, rms_pow) = linear_fit(&log, &ln_rate);
        let remaining = if rms_exp <= rms_pow {
            if a_exp > 0.0 {
                1.0 / (a_exp * rate[n - 1])
            } else {
                f64::INFINITY
            }
        } else if a_pow > 1.0 {
            mf / ((a_pow - 1.0) * rate[n - 1])
        } else {
            f64::INFINITY
        };
        estimates.push(t_f + remaining);
    }
    let mut sorted = estimates.clone();
    sorted.sort_by(f64::total_cmp);
    let spread = sorted[2] - sorted[0];
    let ci = if spread.is_finite() {
        0.5 * spread
    } else {
        f64::INFINITY
    };
    Some((sorted[1], ci))
}

/// Fallback blow-up time from the step-size collapse itself: the reaction
/// step scales like `1/g = I^p/λ`, which is extrapolated linearly to zero over
/// the same trailing windows of the `M` range as [`estimate_blowup_time`].
pub fn collapse_time_estimate(
    times: &[f64],
    max: &[f64],
    integral: &[f64],
    p: f64,
) -> Option<(f64, f64)> {
    let n = times.len();
    if n < 8 {
        return None;
    }
    let (m0, mf) = (max[0], max[n - 1]);
    let mut estimates = Vec::with_capacity(3);
    for fraction in [0.5, 0.35, 0.2] {
        let floor = mf - fraction * (mf - m0);
        let start = max.iter().rposition(|&m| m < floor).map_or(0, |i| i + 1);
        if n - start < 5 {
            return None;
        }
        let inv_g: Vec<f64> = integral[start..].iter().map(|i| i.powf(p)).collect();
        let (c, a, _) = linear_fit(&times[start..], &inv_g);
        if !(a < 0.0) {
            return None;
        }
        estimates.push((-c / a).max(times[n - 1]));
    }
    estimates.sort_by(f64::total_cmp);
    Some((estimates[1], 0.5 * (estimates[2] - estimates[0])))
}

/// Least squares `y = c + a x`; returns `(c, a, rms)`.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c = my - a * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a_, b)| (b - c - a * a_).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (c, a, rms)
}

struct Recorder {
    times: Vec<f64>,
    max: Vec<f64>,
    integral: Vec<f64>,
    min_dt: f64,
}

impl Recorder {
    fn push(&mut self, t: f64, m: f64, i: f64, force: bool) {
        if let (Some(&t0), Some(&m0), Some(&i0)) =
            (self.times.last(), self.max.last(), self.integral.last())
        {
            let moved = (m - m0).abs() > 1e-3 * m0.abs().max(1e-3) || (i - i0).abs() > 1e-3 * i0;
            if !(force || moved || t - t0 >= self.min_dt) || t <= t0 {
                return;
            }
        }
        self.times.push(t);
        self.max.push(m);
        self.integral.push(i);
    }
}

fn sup(u: &[f64]) -> f64 {
    u.iter().copied().fold(0.0, f64::max)
}

/// Integrates on a grid of `grid_size` intervals: the full interval
/// `[-L, L]`, or the radius `[0, R]` of a ball.
pub fn integrate(prob: &ProblemSpec, grid_size: usize, controls: &Controls) -> Result<Trajectory> {
    prob.validate()?;
    if grid_size < 128 {
        return Err(Error::Invalid(format!(
            "grid_size must be at least 128, got {grid_size}"
        )));
    }
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !(positive(controls.t_max) && positive(controls.m_big) && positive(controls.tol)) {
        return Err(Error::Invalid(
            "t_max, m_big and tol must be positive".into(),
        ));
    }
    if controls.dt_min.is_some_and(|d| !positive(d)) {
        return Err(Error::Invalid("dt_min must be positive".into()));
    }
    let grid = Grid::new(&prob.domain, grid_size)?;
    let (nl, lambda, p, tol) = (&prob.nl, prob.lambda, prob.p, controls.tol);
    let h2 = grid.h * grid.h;
    let dt_diffusion = 0.4 * h2;
    let dt_min = controls.dt_min.unwrap_or(0.2 * h2);
    let len = grid.nodes.len();
    // Stiffness of the continuum layer next to the boundary, where u ≈ 0. The
    // nodal slopes miss it once the layer is thinner than the mesh.
    let slope = nl.max_slope();

    let mut snapshot_times: Vec<f64> = controls
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t >= 0.0 && t <= controls.t_max)
        .collect();
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup();
    let mut next_snapshot = 0;

    let mut semi = Semi {
        grid: &grid,
        nl,
        lambda,
        p,
        fbuf: vec![0.0; len],
    };
    let mut u = initial_profile(prob, &grid)?;
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut stage = vec![0.0; len];
    let mut u_new = vec![0.0; len];

    let mut integral = semi.eval(&u, &mut k1);
    let i0 = integral;
    let mut t = 0.0;
    let mut rec = Recorder {
        times: Vec::new(),
        max: Vec::new(),
        integral: Vec::new(),
        min_dt: controls.t_max / 1e4,
    };
    rec.push(t, sup(&u), integral, true);
    let mut snapshots = Vec::new();
    while next_snapshot < snapshot_times.len() && snapshot_times[next_snapshot] <= t {
        snapshots.push(Snapshot { t, u: u.clone() });
        next_snapshot += 1;
    }
    let mut stats = StepStats::default();
    let mut dt = dt_diffusion;
    let mut estimates: Vec<(f64, f64)> = Vec::new();
    let mut next_checkpoint = f64::NAN;
    let mut last_check_max = f64::NAN;
    let mut steps_since_check = 0usize;
    let mut collapsed = false;
    let mut converged_residual = None;

    while t < controls.t_max {
        let g = lambda / integral.powf(p);
        let dt_reaction = if slope > 0.0 {
            0.4 / (g * slope)
        } else {
            f64::INFINITY
        };
        // Only the reaction cap signals collapse; accuracy may ask for
        // smaller steps, e.g. while the initial corner layers form.
        if dt_reaction < dt_min {
            collapsed = true;
            break;
        }
        let limit = dt.min(dt_diffusion).min(dt_reaction);
        if limit <= 1e-14 * t.max(dt_min) {
            return Err(Error::Integration {
                at: t,
                reason: format!("time step underflow ({limit:e})"),
            });
        }
        let mut step = limit;
        let mut target = controls.t_max;
        if next_snapshot < snapshot_times.len() {
            target = target.min(snapshot_times[next_snapshot]);
        }
        let clipped = t + step >= target;
        if clipped {
            step = target - t;
        }

        for i in 0..len {
            stage[i] = u[i] + 0.5 * step * k1[i];
        }
        semi.eval(&stage, &mut k2);
        for i in 0..len {
            stage[i] = u[i] + 0.75 * step * k2[i];
        }
        semi.eval(&stage, &mut k3);
        for i in 0..len {
            u_new[i] = u[i] + step * (2.0 / 9.0 * k1[i] + 1.0 / 3.0 * k2[i] + 4.0 / 9.0 * k3[i]);
        }
        let new_integral = semi.eval(&u_new, &mut k4);
        let mut err = 0.0f64;
        for i in 0..len {
            let e = step
                * (-5.0 / 72.0 * k1[i] + 1.0 / 12.0 * k2[i] + 1.0 / 9.0 * k3[i]
                    - 1.0 / 8.0 * k4[i]);
            err = err.max(e.abs() / (tol * (1.0 + u_new[i].abs())));
        }
        if !err.is_finite() || !(new_integral > 0.0) {
            stats.rejected += 1;
            dt = step * 0.2;
            if new_integral == 0.0 {
                return Err(Error::IntegralUnderflow { t });
            }
            continue;
        }
        if err > 1.0 {
            stats.rejected += 1;
            dt = step * (0.9 * err.powf(-1.0 / 3.0)).clamp(0.2, 0.9);
            continue;
        }
        stats.accepted += 1;
        t = if clipped { target } else { t + step };
        let mut clipped_any = false;
        for (i, v) in u_new.iter_mut().enumerate() {
            if *v < 0.0 {
                if *v < -10.0 * tol {
                    return Err(Error::Undershoot {
                        value: *v,
                        node: i,
                        t,
                    });
                }
                *v = 0.0;
                clipped_any = true;
            }
        }
        std::mem::swap(&mut u, &mut u_new);
        if clipped_any {
            integral = semi.eval(&u, &mut k1);
        } else {
            std::mem::swap(&mut k1, &mut k4);
            integral = new_integral;
        }
        dt = step * (0.9 * err.max(1e-12).powf(-1.0 / 3.0)).clamp(0.2, 5.0);
        if clipped {
            dt = dt.max(limit);
        }
        let m = sup(&u);
        rec.push(t, m, integral, false);
        while next_snapshot < snapshot_times.len() && snapshot_times[next_snapshot] <= t {
            snapshots.push(Snapshot { t, u: u.clone() });
            next_snapshot += 1;
        }

        if m > controls.m_big && !(t < next_checkpoint) {
            let rate: Vec<f64> = rec
                .max
                .iter()
                .zip(&rec.integral)
                .map(|(&mm, &ii)| lambda * nl.f(mm) / ii.powf(p))
                .collect();
            if let Some((t_est, _)) = estimate_blowup_time(&rec.times, &rec.max, &rate) {
                estimates.push((t, t_est));
            }
            next_checkpoint = t * 1.25;
        }

        steps_since_check += 1;
        if steps_since_check >= 200 {
            steps_since_check = 0;
            let residual = residual_on(&grid, nl, lambda, p, &u);
            let plateau = (m - last_check_max).abs() <= 10.0 * tol * m.max(1.0);
            last_check_max = m;
            if residual < tol && plateau {
                converged_residual = Some(residual);
                break;
            }
        }
    }

    let m_final = sup(&u);
    rec.push(t, m_final, integral, true);
    let rate: Vec<f64> = rec
        .max
        .iter()
        .zip(&rec.integral)
        .map(|(&mm, &ii)| lambda * nl.f(mm) / ii.powf(p))
        .collect();
    let status = if let Some(residual) = converged_residual {
        Status::Converged { residual }
    } else if collapsed {
        let estimate = match estimate_blowup_time(&rec.times, &rec.max, &rate) {
            Some((t_est, t_ci)) if t_est.is_finite() => Some((t_est, t_ci)),
            _ => collapse_time_estimate(&rec.times, &rec.max, &rec.integral, p),
        };
        match estimate {
            Some((t_est, t_ci))
                if integral < i0 / 10.0 && m_final > controls.m_big && t_est.is_finite() =>
            {
                Status::BlownUp { t_est, t_ci }
            }
            _ => {
                return Err(Error::StepCollapse {
                    t,
                    dt_min,
                    max: m_final,
                    integral_ratio: integral / i0,
                })
            }
        }
    } else if m_final > controls.m_big && receding(&estimates) {
        Status::Diverging
    } else {
        Status::MaxTimeReached
    };
    if snapshots.last().is_none_or(|s| s.t < t) {
        snapshots.push(Snapshot { t, u: u.clone() });
    }
    Ok(Trajectory {
        grid: grid.nodes.clone(),
        times: rec.times,
        max_series: rec.max,
        integral_series: rec.integral,
        snapshots,
        final_u: u,
        status,
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
        blowup_estimates: estimates,
        lambda,
        p,
        m_big: controls.m_big,
        boundary_floor: grid.boundary_floor(nl),
    })
}

/// The last three blow-up time estimates move later (or are infinite).
fn receding(estimates: &[(f64, f64)]) -> bool {
    if estimates.len() < 3 {
        return false;
    }
    let tail = &estimates[estimates.len() - 3..];
    tail.windows(2)
        .all(|w| w[1].1 >= w[0].1 || w[1].1.is_infinite())
}

/// Regime of a finished run. With a steady oracle, a converged run must also
/// land on one of the oracle's nonlocal steady states (center value within
/// 1e-2 relative).
pub fn classify(traj: &Trajectory, steady_oracle: Option<&SteadyBranch>) -> RegimeLabel {
    match traj.status {
        Status::Converged { .. } => match steady_oracle {
            None => RegimeLabel::Converged,
            Some(branch) => {
                let m = sup(&traj.final_u);
                let matched = nonlocal_steady_on(branch, traj.lambda)
                    .map(|s| {
                        s.profiles
                            .iter()
                            .any(|pr| (pr.max - m).abs() <= 1e-2 * pr.max.max(1e-3))
                    })
                    .unwrap_or(false);
                if matched {
                    RegimeLabel::Converged
                } else {
                    RegimeLabel::Undetermined
                }
            }
        },
        Status::BlownUp { .. } => RegimeLabel::BlownUp,
        Status::Diverging => RegimeLabel::Diverging,
        Status::MaxTimeReached => RegimeLabel::Undetermined,
    }
}
