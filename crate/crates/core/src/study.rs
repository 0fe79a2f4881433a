//! Convergence studies over `(N, h)` grids and their configuration.
//!
//! A config file holds `key = value` lines; `#` starts a comment. Keys and
//! defaults:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `study` | `time-weak` | `time-weak`, `space-weak`, `time-strong`, `space-strong`, `deterministic`, `validate-mc` |
//! | `modes` | `64` | truncation `K` of the continuous eigenbasis |
//! | `noise` | `white` | `white`, `diagonal_power`, `kernel`, `zero` |
//! | `beta0` | `0.5` | exponent of `diagonal_power` |
//! | `kernel_file` | | cosine coefficients for `kernel`, one per line |
//! | `alpha`, `beta` | `0.51`, from the noise | declared regularity indices |
//! | `theta`, `horizon` | `1`, `1` | scheme weight and final time |
//! | `N_list` | `8,16,32,64,128,256` | step counts |
//! | `space` | `spectral` | `spectral` or `p1` |
//! | `M_list` | `4,8,16,32` | spectral modes `m` or P1 elements `M` |
//! | `pinned_N` | `4096` | step count for space studies |
//! | `pinned_M` | `K` (spectral) or largest `M_list` (p1) | space for time studies |
//! | `initial` | `zero` | `zero`, `mode:k` or a coefficient list |
//! | `functional` | `cosine` | `cosine`, `linear`, `quadratic` |
//! | `g` | `mode:1` | `mode:k`, `band:n` or a coefficient list |
//! | `phase` | `0` | phase of the cosine functional |
//! | `seed`, `paths` | `0`, `10000` | Monte Carlo settings |
//! | `allow_unstable_theta` | `false` | permit `theta <= 1/2` |
//! | `check_slope` | | `lo,hi` window used by `--check` |
//! | `out`, `format` | stdout, `csv` | output destination and format |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{
    admissible_gamma_for, read_kernel_coefficients, CovarianceModel, NoiseSpec, RegularityIndices,
};
use crate::error::{Error, Result};
use crate::fem1d::DiscreteSpace;
use crate::law::{
    continuous_law, deterministic_error_norm, discrete_law, expect_functional, semidiscrete_law,
    strong_error_sq, weak_error, Functional,
};
use crate::mc::{mc_expect_functional, NoiseStream};
use crate::rate::fit_rate;
use crate::spectral::{SpectralModel, ThetaScheme};

/// Share of the coarsest error the pinned resolution may contribute before
/// a contamination warning is raised.
pub const CONTAMINATION_THRESHOLD: f64 = 0.05;
/// Below this R^2 the coarsest point is dropped and the fit redone.
pub const MIN_R_SQUARED: f64 = 0.98;
/// Monte Carlo agreement is required within this many standard errors.
pub const MC_STDERR_FACTOR: f64 = 4.0;
/// Steps used to approximate the time-continuous strong error on a space.
const SEMIDISCRETE_STEPS: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyKind {
    TimeWeak,
    SpaceWeak,
    TimeStrong,
    SpaceStrong,
    Deterministic,
    ValidateMc,
}

impl StudyKind {
    pub fn name(&self) -> &'static str {
        match self {
            StudyKind::TimeWeak => "time-weak",
            StudyKind::SpaceWeak => "space-weak",
            StudyKind::TimeStrong => "time-strong",
            StudyKind::SpaceStrong => "space-strong",
            StudyKind::Deterministic => "deterministic",
            StudyKind::ValidateMc => "validate-mc",
        }
    }

    fn is_space(&self) -> bool {
        matches!(self, StudyKind::SpaceWeak | StudyKind::SpaceStrong)
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "time-weak" => StudyKind::TimeWeak,
            "space-weak" => StudyKind::SpaceWeak,
            "time-strong" => StudyKind::TimeStrong,
            "space-strong" => StudyKind::SpaceStrong,
            "deterministic" => StudyKind::Deterministic,
            "validate-mc" => StudyKind::ValidateMc,
            other => return Err(Error::Config(format!("unknown study kind '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceKind {
    Spectral,
    P1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

/// Coefficient vector given as `zero`, `mode:k`, `band:n` or `c1,c2,...`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Coefficients {
    Zero,
    Mode(usize),
    Band(usize),
    List(Vec<f64>),
}

impl Coefficients {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Coefficients::Zero => Vec::new(),
            Coefficients::Mode(k) => {
                let mut v = vec![0.0; *k];
                v[k - 1] = 1.0;
                v
            }
            Coefficients::Band(n) => vec![1.0; *n],
            Coefficients::List(v) => v.clone(),
        }
    }
}

impl FromStr for Coefficients {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let index = |v: &str| -> Result<usize> {
            match v.trim().parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k),
                _ => Err(Error::Config(format!("expected a positive index, got '{v}'"))),
            }
        };
        if s == "zero" {
            Ok(Coefficients::Zero)
        } else if let Some(k) = s.strip_prefix("mode:") {
            Ok(Coefficients::Mode(index(k)?))
        } else if let Some(n) = s.strip_prefix("band:") {
            Ok(Coefficients::Band(index(n)?))
        } else {
            Ok(Coefficients::List(parse_list(s)?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionalKind {
    Cosine,
    Linear,
    Quadratic,
}

/// Noise selection as written in a config.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseChoice {
    White,
    DiagonalPower,
    Kernel,
    Zero,
}

impl FromStr for NoiseChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "white" => NoiseChoice::White,
            "diagonal_power" => NoiseChoice::DiagonalPower,
            "kernel" => NoiseChoice::Kernel,
            "zero" => NoiseChoice::Zero,
            other => return Err(Error::Config(format!("unknown noise '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub study: StudyKind,
    pub modes: usize,
    pub noise: NoiseChoice,
    pub beta0: f64,
    pub kernel_file: Option<PathBuf>,
    pub alpha: f64,
    /// `None` means derived from the noise.
    pub beta: Option<f64>,
    pub theta: f64,
    pub horizon: f64,
    pub n_list: Vec<usize>,
    pub space: SpaceKind,
    pub m_list: Vec<usize>,
    pub pinned_n: usize,
    pub pinned_m: Option<usize>,
    pub initial: Coefficients,
    pub functional: FunctionalKind,
    pub g: Coefficients,
    pub phase: f64,
    pub seed: u64,
    pub paths: usize,
    pub allow_unstable_theta: bool,
    pub check_slope: Option<(f64, f64)>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            study: StudyKind::TimeWeak,
            modes: 64,
            noise: NoiseChoice::White,
            beta0: 0.5,
            kernel_file: None,
            alpha: 0.51,
            beta: None,
            theta: 1.0,
            horizon: 1.0,
            n_list: vec![8, 16, 32, 64, 128, 256],
            space: SpaceKind::Spectral,
            m_list: vec![4, 8, 16, 32],
            pinned_n: 4096,
            pinned_m: None,
            initial: Coefficients::Zero,
            functional: FunctionalKind::Cosine,
            g: Coefficients::Mode(1),
            phase: 0.0,
            seed: 0,
            paths: 10_000,
            allow_unstable_theta: false,
            check_slope: None,
            out: None,
            format: OutputFormat::Csv,
        }
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>> {
    let out: std::result::Result<Vec<T>, _> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect();
    match out {
        Ok(v) if !v.is_empty() => Ok(v),
        _ => Err(Error::Config(format!("cannot parse list '{s}'"))),
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

impl StudyConfig {
    /// Parses config text on top of the defaults. Relative `kernel_file`
    /// paths are resolved against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = StudyConfig::default();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), lineno + 1).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            cfg.set(key, value, base)
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip(e))))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text, path.parent())
    }

    /// Sets one key, as in a config line.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        match key {
            "study" => self.study = value.parse()?,
            "modes" | "K" => self.modes = parse_value(key, value)?,
            "noise" => self.noise = value.parse()?,
            "beta0" => self.beta0 = parse_value(key, value)?,
            "kernel_file" => {
                let p = PathBuf::from(value);
                self.kernel_file = Some(match base {
                    Some(b) if p.is_relative() => b.join(p),
                    _ => p,
                });
            }
            "alpha" => self.alpha = parse_value(key, value)?,
            "beta" => self.beta = Some(parse_value(key, value)?),
            "theta" => self.theta = parse_value(key, value)?,
            "horizon" | "T" => self.horizon = parse_value(key, value)?,
            "N_list" => self.n_list = parse_list(value)?,
            "space" => {
                self.space = match value {
                    "spectral" => SpaceKind::Spectral,
                    "p1" => SpaceKind::P1,
                    other => return Err(Error::Config(format!("unknown space '{other}'"))),
                }
            }
            "M_list" => self.m_list = parse_list(value)?,
            "pinned_N" => self.pinned_n = parse_value(key, value)?,
            "pinned_M" => self.pinned_m = Some(parse_value(key, value)?),
            "initial" => self.initial = value.parse()?,
            "functional" => {
                self.functional = match value {
                    "cosine" => FunctionalKind::Cosine,
                    "linear" => FunctionalKind::Linear,
                    "quadratic" => FunctionalKind::Quadratic,
                    other => return Err(Error::Config(format!("unknown functional '{other}'"))),
                }
            }
            "g" => {
                self.g = value.parse()?;
                if self.g == Coefficients::Zero {
                    return Err(Error::Config("g must not be zero".into()));
                }
            }
            "phase" => self.phase = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "paths" => self.paths = parse_value(key, value)?,
            "allow_unstable_theta" => self.allow_unstable_theta = parse_value(key, value)?,
            "check_slope" => {
                let v: Vec<f64> = parse_list(value)?;
                if v.len() != 2 || !(v[0] <= v[1]) {
                    return Err(Error::Config("check_slope needs 'lo,hi' with lo <= hi".into()));
                }
                self.check_slope = Some((v[0], v[1]));
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Declared `beta`, or the value implied by the noise.
    pub fn declared_beta(&self) -> f64 {
        self.beta.unwrap_or(match self.noise {
            NoiseChoice::White | NoiseChoice::Kernel => 0.0,
            NoiseChoice::DiagonalPower => self.beta0.min(self.alpha),
            NoiseChoice::Zero => self.alpha,
        })
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        Ok(match self.noise {
            NoiseChoice::White => NoiseSpec::White,
            NoiseChoice::DiagonalPower => NoiseSpec::DiagonalPower(self.beta0),
            NoiseChoice::Zero => NoiseSpec::Zero,
            NoiseChoice::Kernel => {
                let path = self
                    .kernel_file
                    .as_ref()
                    .ok_or_else(|| Error::Config("noise = kernel needs kernel_file".into()))?;
                NoiseSpec::Kernel(read_kernel_coefficients(path).map_err(|e| match e {
                    Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
                    other => other,
                })?)
            }
        })
    }

    pub fn functional(&self) -> Functional {
        let g = self.g.to_vec();
        match self.functional {
            FunctionalKind::Cosine => Functional::cosine(g, self.phase),
            FunctionalKind::Linear => Functional::Linear { g },
            FunctionalKind::Quadratic => Functional::Quadratic { g },
        }
    }

    fn scheme(&self, steps: usize) -> Result<ThetaScheme> {
        if self.allow_unstable_theta {
            ThetaScheme::new_allow_unstable(self.theta, self.horizon, steps)
        } else {
            ThetaScheme::new(self.theta, self.horizon, steps)
        }
    }

    fn build_space(&self, resolution: usize, model: &SpectralModel) -> Result<DiscreteSpace> {
        match self.space {
            SpaceKind::Spectral => DiscreteSpace::spectral(resolution, model),
            SpaceKind::P1 => DiscreteSpace::p1(resolution, model),
        }
    }

    fn pinned_space_resolution(&self) -> usize {
        self.pinned_m.unwrap_or(match self.space {
            SpaceKind::Spectral => self.modes,
            SpaceKind::P1 => self.m_list.iter().copied().max().unwrap_or(64),
        })
    }

    /// Structural checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: &str| Err(Error::Config(m.into()));
        if self.modes == 0 {
            return cfg("modes must be positive");
        }
        let grid = if self.study.is_space() { &self.m_list } else { &self.n_list };
        if grid.len() < 2 {
            return cfg("a study needs at least two resolutions");
        }
        if grid.iter().any(|&r| r == 0) {
            return cfg("resolutions must be positive");
        }
        if !(self.horizon > 0.0) {
            return cfg("horizon must be positive");
        }
        if self.study == StudyKind::ValidateMc && self.paths < 2 {
            return cfg("paths must be at least 2");
        }
        if self.g.to_vec().len() > self.modes || self.initial.to_vec().len() > self.modes {
            return cfg("g and initial must fit within the first K modes");
        }
        Ok(())
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// One grid point of a study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportPoint {
    /// `dt` for time studies, `h` for space studies.
    pub resolution: f64,
    pub dt: f64,
    pub h: f64,
    pub error: f64,
    /// Zero for exact-law errors.
    pub stderr: f64,
}

/// Monte Carlo versus exact-law comparison at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCheck {
    pub steps: usize,
    pub exact: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub study: StudyKind,
    pub points: Vec<ReportPoint>,
    /// Present only when at least three points enter the fit.
    pub slope: Option<f64>,
    pub log2_constant: Option<f64>,
    pub r_squared: Option<f64>,
    pub dropped_coarsest: bool,
    pub theory_sup: Option<f64>,
    pub indices: RegularityIndices,
    /// Error of the pinned resolution relative to the coarsest grid error.
    pub contamination: Option<f64>,
    pub contamination_warning: bool,
    pub mc_checks: Vec<McCheck>,
    pub notes: Vec<String>,
    pub seed: u64,
}

impl ConvergenceReport {
    pub fn mc_passed(&self) -> bool {
        self.mc_checks.iter().all(|c| c.within)
    }
}

struct Setup {
    model: SpectralModel,
    q: CovarianceModel,
    x: Vec<f64>,
    phi: Functional,
    indices: RegularityIndices,
}

fn setup(config: &StudyConfig) -> Result<Setup> {
    config.validate()?;
    let model = SpectralModel::dirichlet_laplacian_1d(config.modes)?;
    let indices = admissible_gamma_for(&model, config.alpha, config.declared_beta())?;
    let q = config.noise_spec()?.build(&model)?;
    Ok(Setup {
        model,
        q,
        x: config.initial.to_vec(),
        phi: config.functional(),
        indices,
    })
}

/// Runs a study. Inadmissible `(alpha, beta)` is rejected before any
/// computation.
pub fn run_study(config: &StudyConfig) -> Result<ConvergenceReport> {
    let s = setup(config)?;
    let mut notes = Vec::new();
    if !s.phi.is_bounded_c2() {
        notes.push("functional is outside the bounded C^2 class; diagnostic only".to_string());
    }
    let (points, mc_checks, pinned_error) = match config.study {
        StudyKind::TimeWeak | StudyKind::TimeStrong | StudyKind::Deterministic => {
            time_points(config, &s)?
        }
        StudyKind::SpaceWeak | StudyKind::SpaceStrong => space_points(config, &s)?,
        StudyKind::ValidateMc => {
            let (p, c) = mc_points(config, &s)?;
            (p, c, None)
        }
    };

    let theory_sup = match config.study {
        StudyKind::TimeWeak => Some(s.indices.weak_time_order()),
        StudyKind::SpaceWeak => Some(s.indices.weak_space_order()),
        StudyKind::TimeStrong => Some(s.indices.weak_time_order() / 2.0),
        StudyKind::SpaceStrong => Some(s.indices.weak_space_order() / 2.0),
        StudyKind::Deterministic => Some(1.0),
        StudyKind::ValidateMc => None,
    };

    let mut report = ConvergenceReport {
        study: config.study,
        points,
        slope: None,
        log2_constant: None,
        r_squared: None,
        dropped_coarsest: false,
        theory_sup,
        indices: s.indices,
        contamination: None,
        contamination_warning: false,
        mc_checks,
        notes,
        seed: config.seed,
    };
    if config.study != StudyKind::ValidateMc {
        fit_report(&mut report);
    }
    if let Some(pinned) = pinned_error {
        let coarsest = report
            .points
            .iter()
            .max_by(|a, b| a.resolution.total_cmp(&b.resolution))
            .map_or(0.0, |p| p.error);
        let ratio = if coarsest > 0.0 { pinned / coarsest } else { f64::INFINITY };
        report.contamination = Some(ratio);
        if ratio > CONTAMINATION_THRESHOLD {
            report.contamination_warning = true;
            report.notes.push(format!(
                "pinned resolution contributes {:.1}% of the coarsest error (threshold {:.0}%)",
                100.0 * ratio,
                100.0 * CONTAMINATION_THRESHOLD
            ));
        }
    }
    Ok(report)
}

fn fit_report(report: &mut ConvergenceReport) {
    let pts: Vec<(f64, f64)> = report.points.iter().map(|p| (p.resolution, p.error)).collect();
    let Some(mut fit) = fit_rate(&pts) else {
        report.notes.push("fewer than two positive errors; no fit".into());
        return;
    };
    for &i in &fit.excluded {
        report.notes.push(format!("point {i} excluded from the fit (non-positive error)"));
    }
    if fit.r_squared < MIN_R_SQUARED && fit.used > 3 {
        let coarsest = pts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.1 > 0.0)
            .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
            .map(|(i, _)| i);
        if let Some(c) = coarsest {
            let rest: Vec<(f64, f64)> =
                pts.iter().enumerate().filter(|(i, _)| *i != c).map(|(_, p)| *p).collect();
            if let Some(refit) = fit_rate(&rest) {
                report.notes.push(format!(
                    "R^2 = {:.4} below {MIN_R_SQUARED}; coarsest point dropped",
                    fit.r_squared
                ));
                report.dropped_coarsest = true;
                fit = refit;
            }
        }
    }
    report.r_squared = Some(fit.r_squared);
    if fit.used >= 3 {
        report.slope = Some(fit.slope);
        report.log2_constant = Some(fit.intercept);
    } else {
        report.notes.push("fewer than three points; slope not reported".into());
    }
}

type Points = (Vec<ReportPoint>, Vec<McCheck>, Option<f64>);

fn time_points(config: &StudyConfig, s: &Setup) -> Result<Points> {
    let space = config.build_space(config.pinned_space_resolution(), &s.model)?;
    let points = config
        .n_list
        .par_iter()
        .map(|&n| {
            let scheme = config.scheme(n)?;
            let error = match config.study {
                StudyKind::TimeWeak => weak_error(&s.model, &space, &s.q, &scheme, &s.x, &s.phi)?,
                StudyKind::TimeStrong => strong_error_sq(&s.model, &space, &s.q, &scheme, &s.x)?.sqrt(),
                _ => deterministic_error_norm(&space, &scheme),
            };
            Ok(ReportPoint {
                resolution: scheme.dt(),
                dt: scheme.dt(),
                h: space.mesh_size(),
                error,
                stderr: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pinned = match config.study {
        StudyKind::TimeWeak => {
            let disc = semidiscrete_law(&space, &s.q, &s.x, config.horizon)?;
            let cont = continuous_law(&s.model, &s.q, &s.x, config.horizon)?;
            Some(
                (expect_functional(&disc, &s.phi, Some(&space))?
                    - expect_functional(&cont, &s.phi, None)?)
                .abs(),
            )
        }
        StudyKind::TimeStrong => {
            let scheme = ThetaScheme::new(1.0, config.horizon, SEMIDISCRETE_STEPS)?;
            Some(strong_error_sq(&s.model, &space, &s.q, &scheme, &s.x)?.sqrt())
        }
        _ => None,
    };
    Ok((points, Vec::new(), pinned))
}

fn space_points(config: &StudyConfig, s: &Setup) -> Result<Points> {
    let scheme = config.scheme(config.pinned_n)?;
    let points = config
        .m_list
        .par_iter()
        .map(|&m| {
            let space = config.build_space(m, &s.model)?;
            let error = match config.study {
                StudyKind::SpaceWeak => weak_error(&s.model, &space, &s.q, &scheme, &s.x, &s.phi)?,
                _ => strong_error_sq(&s.model, &space, &s.q, &scheme, &s.x)?.sqrt(),
            };
            Ok(ReportPoint {
                resolution: space.mesh_size(),
                dt: scheme.dt(),
                h: space.mesh_size(),
                error,
                stderr: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // time-only error: the full spectral space at the pinned step count
    let full = DiscreteSpace::spectral(s.model.modes(), &s.model)?;
    let pinned = match config.study {
        StudyKind::SpaceWeak => weak_error(&s.model, &full, &s.q, &scheme, &s.x, &s.phi)?,
        _ => strong_error_sq(&s.model, &full, &s.q, &scheme, &s.x)?.sqrt(),
    };
    Ok((points, Vec::new(), Some(pinned)))
}

fn mc_points(config: &StudyConfig, s: &Setup) -> Result<(Vec<ReportPoint>, Vec<McCheck>)> {
    let space = config.build_space(config.pinned_space_resolution(), &s.model)?;
    let stream = NoiseStream::new(config.seed, space.dim())?;
    let mut points = Vec::new();
    let mut checks = Vec::new();
    for &n in &config.n_list {
        let scheme = config.scheme(n)?;
        let law = discrete_law(&space, &s.q, &scheme, &s.x)?;
        let exact = expect_functional(&law, &s.phi, Some(&space))?;
        let est = mc_expect_functional(&space, &s.q, &scheme, &s.x, &s.phi, &stream, config.paths)?;
        let diff = (est.estimate - exact).abs();
        checks.push(McCheck {
            steps: n,
            exact,
            estimate: est.estimate,
            stderr: est.stderr,
            within: diff <= MC_STDERR_FACTOR * est.stderr || diff == 0.0,
        });
        points.push(ReportPoint {
            resolution: scheme.dt(),
            dt: scheme.dt(),
            h: space.mesh_size(),
            error: diff,
            stderr: est.stderr,
        });
    }
    Ok((points, checks))
}

/// Acceptance check used by `--check`: the slope window (configured, or
/// `[0.8, 1.1] x theory_sup`) for rate studies, and the standard-error
/// criterion for `validate-mc`.
pub fn check_report(config: &StudyConfig, report: &ConvergenceReport) -> std::result::Result<(), String> {
    if config.study == StudyKind::ValidateMc {
        return if report.mc_passed() {
            Ok(())
        } else {
            Err(format!("Monte Carlo estimate outside {MC_STDERR_FACTOR} standard errors"))
        };
    }
    let slope = report.slope.ok_or("no slope was fitted")?;
    let (lo, hi) = match (config.check_slope, report.theory_sup) {
        (Some(w), _) => w,
        (None, Some(t)) => (0.8 * t, 1.1 * t),
        (None, None) => return Ok(()),
    };
    if (lo..=hi).contains(&slope) {
        Ok(())
    } else {
        Err(format!("slope {slope:.4} outside [{lo:.4}, {hi:.4}]"))
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("study,resolution,dt,h,error,stderr,seed\n");
    for p in &report.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            report.study.name(),
            fmt17(p.resolution),
            fmt17(p.dt),
            fmt17(p.h),
            fmt17(p.error),
            fmt17(p.stderr),
            report.seed
        );
    }
    out
}

pub fn to_json(config: &StudyConfig, report: &ConvergenceReport) -> Result<String> {
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a StudyConfig,
        report: &'a ConvergenceReport,
    }
    serde_json::to_string_pretty(&Doc { config, report })
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))
}

/// Gnuplot script plotting `csv_path` on log-log axes.
pub fn plot_script(report: &ConvergenceReport, csv_path: &Path) -> String {
    let name = report.study.name();
    let xlabel = if report.study.is_space() { "h" } else { "dt" };
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set logscale xy");
    let _ = writeln!(s, "set xlabel '{xlabel}'");
    let _ = writeln!(s, "set ylabel 'error'");
    let _ = writeln!(s, "set key left top");
    let title = match report.slope {
        Some(p) => format!("{name} (slope {p:.3})"),
        None => name.to_string(),
    };
    let _ = writeln!(
        s,
        "plot '{}' every ::1 using 2:5 with linespoints title '{title}'",
        csv_path.display()
    );
    s
}
