//! Run configurations: flat `key = value` text under `[section]` headers, or
//! the same layout as a JSON object. Both parse into a [`RawConfig`] first,
//! so validation is shared.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use ohmic_core::evolution::{Controls, InitialData, ProblemSpec};
use ohmic_core::io::{read_profile, read_tabulated_kernel};
use ohmic_core::nonlinearity::{check_admissible, default_probe_grid};
use ohmic_core::steady::log_grid;
use ohmic_core::{DomainSpec, Nonlinearity, TailForm};
use serde::Serialize;

use crate::error::CliError;

/// `(section, key) → value`; top-level keys live in section `""`.
pub type RawConfig = BTreeMap<(String, String), String>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn parse_text(text: &str) -> Result<RawConfig, CliError> {
    let mut out = RawConfig::new();
    let mut section = String::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| config_err(format!("line {}: unterminated section header", n + 1)))?
                .trim();
            if name.is_empty() {
                return Err(config_err(format!("line {}: empty section name", n + 1)));
            }
            section = name.to_ascii_lowercase();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected key = value", n + 1)))?;
        let key = key.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err(config_err(format!("line {}: empty key", n + 1)));
        }
        let value = value.trim();
        let value = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .unwrap_or(value);
        if out
            .insert((section.clone(), key.clone()), value.to_string())
            .is_some()
        {
            return Err(config_err(format!("line {}: duplicate key {key}", n + 1)));
        }
    }
    Ok(out)
}

fn json_scalar(v: &serde_json::Value, key: &str) -> Result<String, CliError> {
    use serde_json::Value;
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(x) => Ok(x.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Array(items) => items
            .iter()
            .map(|item| match item {
                Value::Array(_) | Value::Object(_) => {
                    Err(config_err(format!("{key}: nested arrays are not allowed")))
                }
                other => json_scalar(other, key),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(|parts| parts.join(",")),
        Value::Null => Err(config_err(format!("{key}: null is not a value"))),
        Value::Object(_) => Err(config_err(format!(
            "{key}: objects are only allowed as sections"
        ))),
    }
}

pub fn parse_json(text: &str) -> Result<RawConfig, CliError> {
    let root: serde_json::Value =
        serde_json::from_str(text).map_err(|e| config_err(format!("invalid JSON: {e}")))?;
    let obj = root
        .as_object()
        .ok_or_else(|| config_err("JSON config must be an object"))?;
    let mut out = RawConfig::new();
    for (name, value) in obj {
        match value {
            serde_json::Value::Object(inner) => {
                for (key, v) in inner {
                    let full = format!("{name}.{key}");
                    out.insert(
                        (name.to_ascii_lowercase(), key.to_ascii_lowercase()),
                        json_scalar(v, &full)?,
                    );
                }
            }
            other => {
                out.insert(
                    (String::new(), name.to_ascii_lowercase()),
                    json_scalar(other, name)?,
                );
            }
        }
    }
    Ok(out)
}

/// JSON when the first non-blank character is `{`, text otherwise.
pub fn parse_any(text: &str) -> Result<RawConfig, CliError> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_text(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Bifurcation,
    Evolve,
    Classify,
    Envelope,
    BlowupRate,
    RegimeMap,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Self::Bifurcation,
        Self::Evolve,
        Self::Classify,
        Self::Envelope,
        Self::BlowupRate,
        Self::RegimeMap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bifurcation => "bifurcation",
            Self::Evolve => "evolve",
            Self::Classify => "classify",
            Self::Envelope => "envelope",
            Self::BlowupRate => "blowup-rate",
            Self::RegimeMap => "regime-map",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| config_err(format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

pub fn parse_formats(s: &str) -> Result<Vec<Format>, CliError> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let f = match part {
            "csv" => Format::Csv,
            "json" => Format::Json,
            "svg" => Format::Svg,
            other => return Err(config_err(format!("unknown format {other:?}"))),
        };
        if !out.contains(&f) {
            out.push(f);
        }
    }
    if out.is_empty() {
        return Err(config_err("format list is empty"));
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeSide {
    Upper,
    Lower,
    /// Chosen from the sign of `λ − λ(μ0)`.
    Auto,
}

#[derive(Debug, Clone)]
pub struct Numerics {
    pub grid_size: usize,
    pub controls: Controls,
    pub mu_grid: Vec<f64>,
    pub mu0: Option<f64>,
    pub side: EnvelopeSide,
    pub window_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    /// The first `(λ, p)` pair; the only one outside `regime-map`.
    pub problem: ProblemSpec,
    pub lambdas: Vec<f64>,
    pub ps: Vec<f64>,
    /// Whether `lambda` was given; `bifurcation` treats it as optional.
    pub has_lambda: bool,
    pub numerics: Numerics,
    pub out_dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("", &["command"]),
    (
        "problem",
        &[
            "family",
            "b",
            "table",
            "tail",
            "tail_rate",
            "tail_exponent",
            "lambda",
            "p",
            "domain",
            "half_length",
            "dim",
            "radius",
            "initial",
            "initial_mu",
            "initial_amplitude",
            "initial_profile",
        ],
    ),
    (
        "numerics",
        &[
            "grid_size",
            "tol",
            "t_max",
            "m_big",
            "dt_min",
            "mu_min",
            "mu_max",
            "mu_per_decade",
            "snapshots",
            "mu0",
            "direction",
            "window_fraction",
        ],
    ),
    ("output", &["dir", "formats"]),
];

struct Fields<'a> {
    raw: &'a RawConfig,
}

impl Fields<'_> {
    fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.raw
            .get(&(section.to_string(), key.to_string()))
            .map(String::as_str)
    }

    fn number(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        self.get(section, key)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| {
                        config_err(format!("{section}.{key}: not a finite number: {v:?}"))
                    })
            })
            .transpose()
    }

    fn positive(&self, section: &str, key: &str) -> Result<Option<f64>, CliError> {
        match self.number(section, key)? {
            Some(x) if x <= 0.0 => Err(config_err(format!(
                "{section}.{key} must be positive, got {x}"
            ))),
            other => Ok(other),
        }
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        self.get(section, key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<f64>()
                            .ok()
                            .filter(|x| x.is_finite())
                            .ok_or_else(|| {
                                config_err(format!("{section}.{key}: not a finite number: {s:?}"))
                            })
                    })
                    .collect()
            })
            .transpose()
    }

    fn count(&self, section: &str, key: &str) -> Result<Option<usize>, CliError> {
        self.get(section, key)
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| config_err(format!("{section}.{key}: not a whole number: {v:?}")))
            })
            .transpose()
    }
}

fn resolve(base: &Path, value: &str) -> PathBuf {
    let p = Path::new(value);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| config_err(format!("cannot open {}: {e}", path.display())))
}

fn kernel(f: &Fields, base: &Path) -> Result<Nonlinearity, CliError> {
    let family = f.get("problem", "family").unwrap_or("exponential");
    let nl = match family {
        "exponential" => Nonlinearity::exponential(),
        "algebraic" => {
            let b = f
                .positive("problem", "b")?
                .ok_or_else(|| config_err("problem.b is required for the algebraic family"))?;
            Nonlinearity::algebraic(b).map_err(|e| config_err(e.to_string()))?
        }
        "tabulated" => {
            let table = f
                .get("problem", "table")
                .ok_or_else(|| config_err("problem.table is required for a tabulated kernel"))?;
            let tail = match f.get("problem", "tail") {
                Some("exponential") => TailForm::Exponential {
                    rate: f.positive("problem", "tail_rate")?.ok_or_else(|| {
                        config_err("problem.tail_rate is required for an exponential tail")
                    })?,
                },
                Some("power") => TailForm::Power {
                    exponent: f.positive("problem", "tail_exponent")?.ok_or_else(|| {
                        config_err("problem.tail_exponent is required for a power tail")
                    })?,
                },
                Some(other) => return Err(config_err(format!("unknown tail form {other:?}"))),
                None => {
                    return Err(config_err(
                        "problem.tail is required for a tabulated kernel",
                    ))
                }
            };
            let nl = read_tabulated_kernel(open(&resolve(base, table))?, Some(tail))
                .map_err(|e| config_err(format!("{table}: {e}")))?;
            let report = check_admissible(&nl, &default_probe_grid());
            if !report.is_admissible() {
                return Err(config_err(format!(
                    "tabulated kernel is not admissible: {:?}",
                    report.violations
                )));
            }
            nl
        }
        other => return Err(config_err(format!("unknown family {other:?}"))),
    };
    for (key, used) in [
        ("b", family == "algebraic"),
        ("table", family == "tabulated"),
        ("tail", family == "tabulated"),
    ] {
        if !used && f.get("problem", key).is_some() {
            return Err(config_err(format!(
                "problem.{key} does not apply to the {family} family"
            )));
        }
    }
    Ok(nl)
}

fn domain(f: &Fields) -> Result<DomainSpec, CliError> {
    let dom = match f.get("problem", "domain").unwrap_or("interval") {
        "interval" => DomainSpec::interval(f.positive("problem", "half_length")?.unwrap_or(1.0)),
        "ball" => {
            let dim = f.count("problem", "dim")?.unwrap_or(2);
            DomainSpec::ball(dim as u32, f.positive("problem", "radius")?.unwrap_or(1.0))
        }
        other => return Err(config_err(format!("unknown domain {other:?}"))),
    };
    dom.map_err(|e| config_err(e.to_string()))
}

fn initial(f: &Fields, base: &Path) -> Result<InitialData, CliError> {
    Ok(match f.get("problem", "initial").unwrap_or("zero") {
        "zero" => InitialData::Zero,
        "steady" => InitialData::Steady {
            mu: f
                .positive("problem", "initial_mu")?
                .ok_or_else(|| config_err("problem.initial_mu is required for steady data"))?,
        },
        "bump" => {
            let amplitude = f.number("problem", "initial_amplitude")?.unwrap_or(1.0);
            if amplitude < 0.0 {
                return Err(config_err("problem.initial_amplitude must be nonnegative"));
            }
            InitialData::Bump { amplitude }
        }
        "profile" => {
            let path = f.get("problem", "initial_profile").ok_or_else(|| {
                config_err("problem.initial_profile is required for profile data")
            })?;
            let points = read_profile(open(&resolve(base, path))?)
                .map_err(|e| config_err(format!("{path}: {e}")))?;
            InitialData::Samples { points }
        }
        other => return Err(config_err(format!("unknown initial data {other:?}"))),
    })
}

impl RunConfig {
    /// Validates `raw`. Relative paths resolve against `base`; `command`
    /// comes from the config, the command line, or both when they agree.
    pub fn from_raw(
        raw: &RawConfig,
        base: &Path,
        cli_command: Option<Command>,
    ) -> Result<Self, CliError> {
        for (section, key) in raw.keys() {
            let known = KNOWN
                .iter()
                .any(|(s, keys)| s == section && keys.contains(&key.as_str()));
            if !known {
                let name = if section.is_empty() {
                    key.clone()
                } else {
                    format!("{section}.{key}")
                };
                return Err(config_err(format!("unknown key {name}")));
            }
        }
        let f = Fields { raw };
        let declared = f.get("", "command").map(Command::parse).transpose()?;
        let command = match (declared, cli_command) {
            (Some(a), Some(b)) if a != b => {
                return Err(config_err(format!(
                    "config declares command {} but {} was requested",
                    a.name(),
                    b.name()
                )))
            }
            (Some(c), _) | (None, Some(c)) => c,
            (None, None) => return Err(config_err("no command given")),
        };

        let nl = kernel(&f, base)?;
        let dom = domain(&f)?;
        let lambdas = f.list("problem", "lambda")?.unwrap_or_default();
        let ps = f
            .list("problem", "p")?
            .ok_or_else(|| config_err("problem.p is required"))?;
        if let Some(x) = lambdas.iter().chain(&ps).find(|x| **x <= 0.0) {
            return Err(config_err(format!(
                "lambda and p must be positive, got {x}"
            )));
        }
        if ps.is_empty() {
            return Err(config_err("problem.p is empty"));
        }
        let has_lambda = !lambdas.is_empty();
        if !has_lambda && command != Command::Bifurcation {
            return Err(config_err("problem.lambda is required"));
        }
        if command != Command::RegimeMap && (lambdas.len() > 1 || ps.len() > 1) {
            return Err(config_err(
                "lists of lambda or p values are only accepted by regime-map",
            ));
        }

        let mut controls = Controls::default();
        if let Some(v) = f.positive("numerics", "t_max")? {
            controls.t_max = v;
        }
        if let Some(v) = f.positive("numerics", "tol")? {
            controls.tol = v;
        }
        if let Some(v) = f.positive("numerics", "m_big")? {
            controls.m_big = v;
        }
        controls.dt_min = f.positive("numerics", "dt_min")?;
        if let Some(times) = f.list("numerics", "snapshots")? {
            if times.iter().any(|&t| t < 0.0 || t > controls.t_max) {
                return Err(config_err("numerics.snapshots must lie in [0, t_max]"));
            }
            controls.snapshot_times = times;
        }
        let grid_size = f.count("numerics", "grid_size")?.unwrap_or(256);
        if grid_size < 128 {
            return Err(config_err("numerics.grid_size must be at least 128"));
        }
        let mu_min = f.positive("numerics", "mu_min")?.unwrap_or(1e-4);
        let mu_max = f.positive("numerics", "mu_max")?.unwrap_or(1e6);
        if mu_max <= mu_min {
            return Err(config_err("numerics.mu_max must exceed numerics.mu_min"));
        }
        let per_decade = f.count("numerics", "mu_per_decade")?.unwrap_or(50);
        if per_decade == 0 {
            return Err(config_err("numerics.mu_per_decade must be positive"));
        }
        let side = match f.get("numerics", "direction") {
            None | Some("auto") => EnvelopeSide::Auto,
            Some("upper") => EnvelopeSide::Upper,
            Some("lower") => EnvelopeSide::Lower,
            Some(other) => return Err(config_err(format!("unknown direction {other:?}"))),
        };
        let mu0 = f.positive("numerics", "mu0")?;
        if command == Command::Envelope && mu0.is_none() {
            return Err(config_err("numerics.mu0 is required for envelope"));
        }
        let window_fraction = f.positive("numerics", "window_fraction")?.unwrap_or(0.4);
        if window_fraction > 1.0 {
            return Err(config_err("numerics.window_fraction must not exceed 1"));
        }

        let problem = ProblemSpec {
            nl,
            lambda: lambdas.first().copied().unwrap_or(1.0),
            p: ps[0],
            domain: dom,
            initial: initial(&f, base)?,
        };
        problem.validate().map_err(|e| config_err(e.to_string()))?;
        let formats = match f.get("output", "formats") {
            Some(s) => parse_formats(s)?,
            None => vec![Format::Csv, Format::Json, Format::Svg],
        };
        Ok(Self {
            command,
            problem,
            lambdas,
            ps,
            has_lambda,
            numerics: Numerics {
                grid_size,
                controls,
                mu_grid: log_grid(mu_min, mu_max, per_decade),
                mu0,
                side,
                window_fraction,
            },
            out_dir: f.get("output", "dir").map(|d| resolve(base, d)),
            formats,
        })
    }

    pub fn load(path: &Path, cli_command: Option<Command>) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_raw(&parse_any(&text)?, base, cli_command)
    }
}
