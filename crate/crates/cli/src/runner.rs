//! Dispatch from a validated [`RunConfig`] to the solvers. Each command
//! stages its artifacts; nothing touches the disk unless the run succeeds.

use std::path::Path;

use log::{info, warn};
use ohmic_core::asymptotics::{fit_blowup_rate, predicted_rate, LawHint, RateFit, RateLaw};
use ohmic_core::comparison::{
    evolve_envelope_cached, Direction, EnvelopeOptions, LambdaCache, Terminal,
};
use ohmic_core::evolution::{
    classify, integrate, Controls, InitialData, ProblemSpec, RegimeLabel, Status, Trajectory,
};
use ohmic_core::io::{
    fmt17, write_branch_csv, write_envelope_csv, write_profile_csv, write_snapshot_csv,
    write_trajectory_csv,
};
use ohmic_core::nonlinearity::Family;
use ohmic_core::steady::{
    lambda_of_mu, lambda_star, nonlocal_steady_on, trace_branch, LambdaStar, Regime,
};
use ohmic_core::{DomainSpec, TailForm};
use rayon::prelude::*;
use serde::Serialize;

use crate::artifacts::{Artifacts, Manifest};
use crate::config::{Command, EnvelopeSide, Format, RunConfig};
use crate::error::CliError;
use crate::plot::{render, Plot, PlotKind, Series};

#[derive(Debug, Serialize)]
struct ProblemSummary {
    family: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tail: Option<TailForm>,
    lambda: f64,
    p: f64,
    domain: DomainSpec,
    initial: InitialData,
}

fn summary(prob: &ProblemSpec) -> ProblemSummary {
    ProblemSummary {
        family: prob.nl.name(),
        b: match prob.nl.family() {
            Family::Algebraic { b } => Some(*b),
            _ => None,
        },
        tail: match prob.nl.family() {
            Family::Tabulated(table) => table.tail(),
            _ => None,
        },
        lambda: prob.lambda,
        p: prob.p,
        domain: prob.domain,
        initial: prob.initial.clone(),
    }
}

fn csv_bytes(
    write: impl FnOnce(&mut Vec<u8>) -> ohmic_core::Result<()>,
) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn add_plot(out: &mut Artifacts, name: &str, plot: &Plot) -> Result<(), CliError> {
    if out.wants(Format::Svg) {
        out.add(name, Format::Svg, render(plot)?.into_bytes());
    }
    Ok(())
}

fn is_critical(p: f64) -> bool {
    (p - 2.0).abs() <= 1e-12
}

/// Runs `cfg` and writes its artifacts to `out_dir`.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<Manifest, CliError> {
    let mut out = Artifacts::new(&cfg.formats);
    info!("running {}", cfg.command.name());
    match cfg.command {
        Command::Bifurcation => bifurcation(cfg, &mut out)?,
        Command::Evolve => {
            let traj = evolve(cfg, &cfg.problem, &mut out)?;
            out.add_json("run.json", &run_record(cfg, &cfg.problem, &traj))?;
        }
        Command::Classify => classify_run(cfg, &mut out)?,
        Command::Envelope => envelope(cfg, &mut out)?,
        Command::BlowupRate => blowup_rate(cfg, &mut out)?,
        Command::RegimeMap => regime_map(cfg, &mut out)?,
    }
    let manifest = out.commit(out_dir, cfg.command.name())?;
    info!(
        "wrote {} artifacts to {}",
        manifest.artifacts.len() + 1,
        out_dir.display()
    );
    Ok(manifest)
}

#[derive(Debug, Serialize)]
struct RootRecord {
    mu: f64,
    max: f64,
    profile: String,
}

#[derive(Debug, Serialize)]
struct BifurcationRecord {
    problem: ProblemSummary,
    regime: Regime,
    points: usize,
    lambda_star: Option<LambdaStar>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_star_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    roots: Option<Vec<RootRecord>>,
    warnings: Vec<String>,
}

fn bifurcation(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let prob = &cfg.problem;
    let branch = trace_branch(&prob.nl, prob.p, &prob.domain, &cfg.numerics.mu_grid)?;
    let (star, star_error) = match lambda_star(&branch) {
        Ok(s) => (Some(s), None),
        Err(e) => {
            warn!("lambda* not determined: {e}");
            (None, Some(e.to_string()))
        }
    };
    let mut warnings = Vec::new();
    let roots = if cfg.has_lambda {
        let found = nonlocal_steady_on(&branch, prob.lambda)?;
        warnings.extend(found.warnings);
        let mut roots = Vec::new();
        for (k, profile) in found.profiles.iter().enumerate() {
            let name = format!("profiles/root_{k:02}.csv");
            out.add(
                name.clone(),
                Format::Csv,
                csv_bytes(|b| write_profile_csv(b, profile))?,
            );
            roots.push(RootRecord {
                mu: profile.mu,
                max: profile.max,
                profile: name,
            });
        }
        Some(roots)
    } else {
        None
    };
    out.add(
        "branch.csv",
        Format::Csv,
        csv_bytes(|b| write_branch_csv(b, &branch))?,
    );
    out.add_json(
        "bifurcation.json",
        &BifurcationRecord {
            problem: summary(prob),
            regime: branch.regime,
            points: branch.points.len(),
            lambda_star: star,
            lambda_star_error: star_error,
            roots,
            warnings,
        },
    )?;
    let mut hlines = Vec::new();
    if is_critical(prob.p) {
        let c = prob.domain.critical_lambda_p2();
        hlines.push((c, format!("2|∂Ω|² = {c:.4}")));
    }
    add_plot(
        out,
        "branch.svg",
        &Plot {
            title: format!("{} kernel, p = {}", prob.nl.name(), prob.p),
            x_label: "μ".into(),
            y_label: "λ(μ)".into(),
            kind: PlotKind::SemiLogX,
            series: vec![Series {
                name: "λ(μ)".into(),
                x: branch.points.iter().map(|p| p.mu).collect(),
                y: branch.points.iter().map(|p| p.lambda).collect(),
            }],
            hlines,
        },
    )
}

fn integrate_logged(
    prob: &ProblemSpec,
    grid_size: usize,
    controls: &Controls,
) -> Result<Trajectory, CliError> {
    let traj = integrate(prob, grid_size, controls)?;
    info!(
        "lambda = {}, p = {}: {} after {} steps ({} rejected), t = {}",
        prob.lambda,
        prob.p,
        traj.status.name(),
        traj.accepted_steps,
        traj.rejected_steps,
        traj.final_time()
    );
    Ok(traj)
}

/// Integrates and stages the trajectory, snapshot and plot artifacts.
fn evolve(
    cfg: &RunConfig,
    prob: &ProblemSpec,
    out: &mut Artifacts,
) -> Result<Trajectory, CliError> {
    let traj = integrate_logged(prob, cfg.numerics.grid_size, &cfg.numerics.controls)?;
    out.add(
        "trajectory.csv",
        Format::Csv,
        csv_bytes(|b| write_trajectory_csv(b, &traj))?,
    );
    for (k, snap) in traj.snapshots.iter().enumerate() {
        out.add(
            format!("snapshots/snapshot_{k:03}.csv"),
            Format::Csv,
            csv_bytes(|b| write_snapshot_csv(b, &traj.grid, &snap.u))?,
        );
    }
    add_plot(
        out,
        "trajectory.svg",
        &Plot {
            title: format!(
                "λ = {}, p = {}: {}",
                prob.lambda,
                prob.p,
                traj.status.name()
            ),
            x_label: "t".into(),
            y_label: "max u".into(),
            kind: PlotKind::SemiLogY,
            series: vec![Series {
                name: "M(t)".into(),
                x: traj.times.clone(),
                y: traj.max_series.clone(),
            }],
            hlines: Vec::new(),
        },
    )?;
    Ok(traj)
}

#[derive(Debug, Serialize)]
struct RunRecord {
    problem: ProblemSummary,
    grid_size: usize,
    controls: Controls,
    status: Status,
    final_time: f64,
    final_max: f64,
    accepted_steps: usize,
    rejected_steps: usize,
    snapshots: Vec<f64>,
}

fn run_record(cfg: &RunConfig, prob: &ProblemSpec, traj: &Trajectory) -> RunRecord {
    RunRecord {
        problem: summary(prob),
        grid_size: cfg.numerics.grid_size,
        controls: cfg.numerics.controls.clone(),
        status: traj.status,
        final_time: traj.final_time(),
        final_max: traj.max_series.last().copied().unwrap_or(f64::NAN),
        accepted_steps: traj.accepted_steps,
        rejected_steps: traj.rejected_steps,
        snapshots: traj.snapshots.iter().map(|s| s.t).collect(),
    }
}

#[derive(Debug, Serialize)]
struct ClassifyRecord {
    label: RegimeLabel,
    steady_roots: Vec<f64>,
    run: RunRecord,
}

fn classify_run(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let prob = &cfg.problem;
    let branch = trace_branch(&prob.nl, prob.p, &prob.domain, &cfg.numerics.mu_grid)?;
    let roots = nonlocal_steady_on(&branch, prob.lambda)?;
    let traj = evolve(cfg, prob, out)?;
    let label = classify(&traj, Some(&branch));
    out.add_json(
        "classification.json",
        &ClassifyRecord {
            label,
            steady_roots: roots.profiles.iter().map(|p| p.max).collect(),
            run: run_record(cfg, prob, &traj),
        },
    )
}

#[derive(Debug, Serialize)]
struct EnvelopeRecord {
    problem: ProblemSummary,
    mu0: f64,
    direction: Direction,
    terminal: Terminal,
    final_mu: f64,
}

fn envelope(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let prob = &cfg.problem;
    let mu0 = cfg.numerics.mu0.expect("validated");
    let grid = &cfg.numerics.mu_grid;
    if mu0 < grid[0] || mu0 > grid[grid.len() - 1] {
        return Err(CliError::Config(format!(
            "mu0 = {mu0} lies outside [mu_min, mu_max]"
        )));
    }
    let direction = match cfg.numerics.side {
        EnvelopeSide::Upper => Direction::Upper,
        EnvelopeSide::Lower => Direction::Lower,
        EnvelopeSide::Auto => {
            if prob.lambda <= lambda_of_mu(&prob.nl, mu0, prob.p, &prob.domain)? {
                Direction::Upper
            } else {
                Direction::Lower
            }
        }
    };
    let branch = trace_branch(&prob.nl, prob.p, &prob.domain, grid)?;
    let cache = LambdaCache::new(&branch)?;
    let opts = EnvelopeOptions {
        mu_cap: EnvelopeOptions::default().mu_cap.min(grid[grid.len() - 1]),
        ..EnvelopeOptions::default()
    };
    let path = evolve_envelope_cached(
        mu0,
        direction,
        prob.lambda,
        &cache,
        &branch,
        cfg.numerics.controls.t_max,
        &opts,
    )?;
    out.add(
        "envelope.csv",
        Format::Csv,
        csv_bytes(|b| write_envelope_csv(b, &path))?,
    );
    out.add_json(
        "envelope.json",
        &EnvelopeRecord {
            problem: summary(prob),
            mu0,
            direction,
            terminal: path.terminal,
            final_mu: *path.mu_series.last().unwrap_or(&mu0),
        },
    )?;
    add_plot(
        out,
        "envelope.svg",
        &Plot {
            title: format!("{direction:?} envelope, λ = {}", prob.lambda),
            x_label: "t".into(),
            y_label: "μ(t)".into(),
            kind: PlotKind::SemiLogY,
            series: vec![Series {
                name: "μ(t)".into(),
                x: path.times.clone(),
                y: path.mu_series.clone(),
            }],
            hlines: Vec::new(),
        },
    )
}

#[derive(Debug, Serialize)]
struct RateReport {
    law: LawHint,
    predicted: f64,
    fitted: f64,
    relative_error: f64,
    prediction: RateLaw,
    fit: RateFit,
}

fn blowup_rate(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let prob = &cfg.problem;
    let prediction = predicted_rate(&prob.nl, prob.p, prob.lambda, &prob.domain)?;
    let (law, predicted) = match prediction.law {
        RateLaw::LogLaw { slope, .. } => (LawHint::Log, slope),
        RateLaw::PowerLaw { exponent, .. } => (LawHint::Power, exponent),
        RateLaw::NotApplicable { ref reason } => {
            return Err(CliError::Config(format!(
                "no blow-up rate applies: {reason}"
            )))
        }
    };
    let traj = evolve(cfg, prob, out)?;
    let fit = fit_blowup_rate(&traj, law, cfg.numerics.window_fraction)?;
    let relative_error = (fit.slope - predicted).abs() / predicted.abs();
    info!("fitted {} against predicted {predicted}", fit.slope);
    out.add_json(
        "rate.json",
        &RateReport {
            law,
            predicted,
            fitted: fit.slope,
            relative_error,
            prediction: prediction.law.clone(),
            fit,
        },
    )?;
    out.add_json("run.json", &run_record(cfg, prob, &traj))?;

    let n = traj
        .times
        .iter()
        .position(|&t| t >= fit.window.0)
        .unwrap_or(0);
    let last = traj
        .times
        .iter()
        .rposition(|&t| t <= fit.window.1)
        .unwrap_or(traj.times.len() - 1);
    let gap: Vec<f64> = traj.times[n..=last].iter().map(|t| fit.t_hat - t).collect();
    let data = traj.max_series[n..=last].to_vec();
    let (kind, x, y_fit): (PlotKind, Vec<f64>, Vec<f64>) = match law {
        LawHint::Log => (
            PlotKind::Line,
            gap.iter().map(|g| g.ln()).collect(),
            gap.iter()
                .map(|g| fit.intercept + fit.slope * g.ln())
                .collect(),
        ),
        LawHint::Power => (
            PlotKind::LogLog,
            gap.clone(),
            gap.iter()
                .map(|g| (fit.intercept + fit.slope * g.ln()).exp())
                .collect(),
        ),
    };
    add_plot(
        out,
        "rate.svg",
        &Plot {
            title: format!("fitted {:.4}, predicted {predicted:.4}", fit.slope),
            x_label: match law {
                LawHint::Log => "ln(T − t)".into(),
                LawHint::Power => "T − t".into(),
            },
            y_label: "max u".into(),
            kind,
            series: vec![
                Series {
                    name: "data".into(),
                    x: x.clone(),
                    y: data,
                },
                Series {
                    name: "fit".into(),
                    x,
                    y: y_fit,
                },
            ],
            hlines: Vec::new(),
        },
    )
}

#[derive(Debug, Serialize)]
struct RegimePoint {
    lambda: f64,
    p: f64,
    label: Option<RegimeLabel>,
    status: Option<Status>,
    final_time: f64,
    final_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn regime_map(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let pairs: Vec<(f64, f64)> = cfg
        .lambdas
        .iter()
        .flat_map(|&l| cfg.ps.iter().map(move |&p| (l, p)))
        .collect();
    // Indexed collect keeps config order whatever the completion order.
    let points: Vec<RegimePoint> = pairs
        .par_iter()
        .map(|&(lambda, p)| {
            let prob = ProblemSpec {
                lambda,
                p,
                ..cfg.problem.clone()
            };
            match integrate_logged(&prob, cfg.numerics.grid_size, &cfg.numerics.controls) {
                Ok(traj) => RegimePoint {
                    lambda,
                    p,
                    label: Some(classify(&traj, None)),
                    status: Some(traj.status),
                    final_time: traj.final_time(),
                    final_max: traj.max_series.last().copied().unwrap_or(f64::NAN),
                    error: None,
                },
                Err(e) => {
                    warn!("lambda = {lambda}, p = {p}: {e}");
                    RegimePoint {
                        lambda,
                        p,
                        label: None,
                        status: None,
                        final_time: f64::NAN,
                        final_max: f64::NAN,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let mut csv = String::from("lambda,p,label,status,t_est,final_time,final_max\n");
    for pt in &points {
        let label = pt.label.map_or("failed", |l| match l {
            RegimeLabel::Converged => "converged",
            RegimeLabel::BlownUp => "blown_up",
            RegimeLabel::Diverging => "diverging",
            RegimeLabel::Undetermined => "undetermined",
        });
        let status = pt.status.map_or("failed", |s| s.name());
        let t_est = match pt.status {
            Some(Status::BlownUp { t_est, .. }) => t_est,
            _ => f64::NAN,
        };
        csv.push_str(&format!(
            "{},{},{label},{status},{},{},{}\n",
            fmt17(pt.lambda),
            fmt17(pt.p),
            fmt17(t_est),
            fmt17(pt.final_time),
            fmt17(pt.final_max)
        ));
    }
    out.add("regime_map.csv", Format::Csv, csv.into_bytes());
    out.add_json("regime_map.json", &points)
}
