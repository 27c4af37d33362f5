//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` are comments. Command-line overrides use the same
//! keys (`--max_sweeps 20`, dashes and underscores are interchangeable).

use std::collections::BTreeMap;
use std::path::PathBuf;

use mgtree_core::amr::AmrConfig;
use mgtree_core::cycles::{CycleKind, CycleSettings, OmegaKind, OmegaPolicy, OmegaSource};
use mgtree_core::problems::{AbsorbingLayer, ChannelSpec, ChiField, Coupling, PhiField, ProblemSpec};
use mgtree_core::solver::NormKind;
use mgtree_core::spacetree::width;
use mgtree_core::C64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("conflicting settings: {0}")]
    Conflict(String),
}

const KEYS: &[&str] = &[
    "problem", "dim", "phi", "k", "chi", "theta", "absorbing", "coupling", "cycle", "omega", "omega_s",
    "omega_source", "hb_mask", "bpx", "omega_cg", "coarsest", "level", "h_max", "h_min", "max_sweeps",
    "target_drop", "norm", "divergence", "seed", "check_injection", "csv", "grid", "log",
];

/// Raw key/value pairs before interpretation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

fn normalise_key(key: &str) -> String {
    key.trim().replace('-', "_").to_ascii_lowercase()
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
            raw.set(key, value)?;
        }
        Ok(raw)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = normalise_key(key);
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        self.entries.insert(key, value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

/// How the grid is laid out: a fixed regular level or an adaptive range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    Fixed(u8),
    Adaptive { h_max: f64, h_min: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub kind: CycleKind,
    pub settings: CycleSettings,
    pub grid: GridSpec,
    pub max_sweeps: usize,
    pub target_drop: f64,
    pub norm: NormKind,
    pub divergence: f64,
    pub seed: Option<u64>,
    pub csv: Option<PathBuf>,
    pub grid_dump: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), value: value.to_string(), reason: reason.into() }
}

/// Accepts plain numbers and fractions such as `1/81`.
fn parse_real(key: &str, value: &str) -> Result<f64, ConfigError> {
    let parsed = match value.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()).map(|(a, b)| a / b),
        None => value.parse::<f64>().ok(),
    };
    match parsed {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(invalid(key, value, "not a finite number")),
    }
}

/// `re` or `re:im`.
fn parse_complex(key: &str, value: &str) -> Result<C64, ConfigError> {
    match value.split_once(':') {
        Some((re, im)) => Ok(C64::new(parse_real(key, re)?, parse_real(key, im)?)),
        None => Ok(C64::new(parse_real(key, value)?, 0.0)),
    }
}

fn parse_int<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| invalid(key, value, "not a valid integer"))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

fn parse_cycle(value: &str) -> Result<CycleKind, ConfigError> {
    match value {
        "tdAdd" => Ok(CycleKind::TdAdd),
        "tdBPX" => Ok(CycleKind::TdBpx),
        "buFAS" => Ok(CycleKind::BuFas),
        "textbookAdd" => Ok(CycleKind::TextbookAdd),
        _ => Err(invalid("cycle", value, "expected tdAdd, tdBPX, buFAS or textbookAdd")),
    }
}

fn parse_omega(value: &str) -> Result<OmegaKind, ConfigError> {
    match value {
        "jacobiOnly" => Ok(OmegaKind::JacobiOnly),
        "undampedCG" => Ok(OmegaKind::UndampedCg),
        "exponential" => Ok(OmegaKind::Exponential),
        "transition" => Ok(OmegaKind::Transition),
        _ => match value.strip_prefix("lGrid:") {
            Some(l) => Ok(OmegaKind::LGrid(parse_int("omega", l)?)),
            None => Err(invalid("omega", value, "expected jacobiOnly, undampedCG, lGrid:L, exponential or transition")),
        },
    }
}

fn parse_norm(value: &str) -> Result<NormKind, ConfigError> {
    match value {
        "max" => Ok(NormKind::Max),
        "euclid" => Ok(NormKind::Euclid),
        "h" => Ok(NormKind::H),
        _ => Err(invalid("norm", value, "expected max, euclid or h")),
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty())
}

fn build_problem(raw: &RawConfig) -> Result<ProblemSpec, ConfigError> {
    let id = raw.get("problem").ok_or(ConfigError::Missing("problem"))?;
    let dim: usize = match raw.get("dim") {
        Some(v) => parse_int("dim", v)?,
        None => 2,
    };
    let theta_deg = match raw.get("theta") {
        Some(v) => parse_real("theta", v)?,
        None => 0.0,
    };
    if raw.get("phi").is_some() && raw.get("k").is_some() {
        return Err(ConfigError::Conflict("set either phi or k, not both".into()));
    }
    let shifts: Vec<C64> = if let Some(v) = raw.get("phi") {
        list(v).map(|s| parse_complex("phi", s)).collect::<Result<_, _>>()?
    } else if let Some(v) = raw.get("k") {
        list(v).map(|s| parse_real("k", s).map(|k| C64::new(k * k, 0.0))).collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let default_chi = match id {
        "poisson" | "helmholtz" => ChiField::SinProduct,
        "ball" => ChiField::Ball,
        "gaussian" => ChiField::GaussianScenario,
        _ => return Err(invalid("problem", id, "expected poisson, helmholtz, ball or gaussian")),
    };
    let chi = match raw.get("chi") {
        None => default_chi,
        Some("sin") => ChiField::SinProduct,
        Some("ball") => ChiField::Ball,
        Some("zero") => ChiField::Zero,
        Some(v) => return Err(invalid("chi", v, "expected sin, ball or zero")),
    };
    let mut spec = match id {
        "gaussian" => {
            if !shifts.is_empty() || raw.get("chi").is_some() {
                return Err(ConfigError::Conflict("the gaussian scenario fixes phi and chi".into()));
            }
            ProblemSpec::gaussian(theta_deg.to_radians())
        }
        "poisson" if shifts.iter().any(|s| s.norm() != 0.0) => {
            return Err(ConfigError::Conflict("poisson has no shift; use problem = helmholtz".into()));
        }
        "helmholtz" if shifts.is_empty() => return Err(ConfigError::Missing("phi")),
        _ => {
            let shifts = if shifts.is_empty() { vec![C64::new(0.0, 0.0)] } else { shifts };
            let channels = shifts.iter().map(|&s| ChannelSpec::new(PhiField::Constant(s), chi)).collect();
            ProblemSpec { dim, channels, theta: theta_deg.to_radians(), absorbing: None, coupling: Coupling::Independent }
        }
    };
    if id == "gaussian" && raw.get("dim").is_some_and(|d| d != "2") {
        return Err(ConfigError::Conflict("the gaussian scenario is two-dimensional".into()));
    }
    match raw.get("absorbing") {
        None => {}
        Some("none") => spec.absorbing = None,
        Some("top-right") => spec.absorbing = Some(AbsorbingLayer::top_right()),
        Some(v) => return Err(invalid("absorbing", v, "expected none or top-right")),
    }
    if let Some(v) = raw.get("coupling") {
        let a: Vec<C64> = list(v).map(|s| parse_complex("coupling", s)).collect::<Result<_, _>>()?;
        spec.coupling = Coupling::CoupledBlock(a);
    }
    spec.validate().map_err(|e| ConfigError::Conflict(e.to_string()))?;
    Ok(spec)
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let problem = build_problem(raw)?;
        let kind = parse_cycle(raw.get("cycle").ok_or(ConfigError::Missing("cycle"))?)?;
        let omega_s = match raw.get("omega_s") {
            Some(v) => parse_real("omega_s", v)?,
            None => 0.8,
        };
        let omega = match raw.get("omega") {
            Some(v) => parse_omega(v)?,
            None => OmegaKind::UndampedCg,
        };
        let mut policy = OmegaPolicy::new(omega, omega_s);
        match raw.get("omega_source") {
            None | Some("fixed") => {}
            Some("twoPhase") => policy = policy.with_source(OmegaSource::TwoPhase),
            Some(v) => return Err(invalid("omega_source", v, "expected fixed or twoPhase")),
        }
        if raw.get("hb_mask").map(|v| parse_bool("hb_mask", v)).transpose()?.unwrap_or(false) {
            policy = policy.with_hb_mask();
        }
        let bpx = raw.get("bpx").map(|v| parse_bool("bpx", v)).transpose()?;
        if kind == CycleKind::TdBpx && bpx == Some(false) {
            return Err(ConfigError::Conflict("tdBPX requires bpx = true".into()));
        }
        if kind == CycleKind::TdBpx || bpx == Some(true) {
            policy = policy.with_bpx();
        }
        if policy.bpx && matches!(kind, CycleKind::TdAdd | CycleKind::TextbookAdd) {
            return Err(ConfigError::Conflict("bpx needs cycle = tdBPX or buFAS".into()));
        }
        let mut settings = CycleSettings::new(policy);
        if let Some(v) = raw.get("omega_cg") {
            settings.omega_cg = parse_complex("omega_cg", v)?;
        }
        if let Some(v) = raw.get("coarsest") {
            settings.coarsest = parse_int("coarsest", v)?;
        }
        if let Some(v) = raw.get("check_injection") {
            settings.check_injection = parse_bool("check_injection", v)?;
        }

        let grid = match (raw.get("level"), raw.get("h_max"), raw.get("h_min")) {
            (Some(l), None, None) => GridSpec::Fixed(parse_int("level", l)?),
            (None, Some(a), Some(b)) => {
                let (h_max, h_min) = (parse_real("h_max", a)?, parse_real("h_min", b)?);
                AmrConfig::new(h_max, h_min).map_err(|e| ConfigError::Conflict(e.to_string()))?;
                GridSpec::Adaptive { h_max, h_min }
            }
            (None, None, None) => return Err(ConfigError::Missing("level")),
            _ => return Err(ConfigError::Conflict("set exactly one of level or (h_max, h_min)".into())),
        };
        if let GridSpec::Fixed(l) = grid {
            if l < settings.coarsest || l > 12 {
                return Err(invalid("level", &l.to_string(), "must lie between coarsest and 12"));
            }
        }
        if kind == CycleKind::TextbookAdd && matches!(grid, GridSpec::Adaptive { .. }) {
            return Err(ConfigError::Conflict("textbookAdd runs on fixed regular grids only".into()));
        }

        let max_sweeps = match raw.get("max_sweeps") {
            Some(v) => parse_int("max_sweeps", v)?,
            None => 100,
        };
        if max_sweeps == 0 {
            return Err(invalid("max_sweeps", "0", "need at least one sweep"));
        }
        let target_drop = match raw.get("target_drop") {
            Some(v) => parse_real("target_drop", v)?,
            None => 1e-6,
        };
        let divergence = match raw.get("divergence") {
            Some(v) => parse_real("divergence", v)?,
            None => 1e6,
        };
        if divergence <= 1.0 {
            return Err(invalid("divergence", raw.get("divergence").unwrap_or(""), "must exceed 1"));
        }
        Ok(Self {
            problem,
            kind,
            settings,
            grid,
            max_sweeps,
            target_drop,
            norm: raw.get("norm").map(parse_norm).transpose()?.unwrap_or(NormKind::H),
            divergence,
            seed: raw.get("seed").map(|v| parse_int("seed", v)).transpose()?,
            csv: raw.get("csv").map(PathBuf::from),
            grid_dump: raw.get("grid").map(PathBuf::from),
            log: raw.get("log").map(PathBuf::from),
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    /// Finest level the run can reach.
    pub fn finest_level(&self) -> u8 {
        match self.grid {
            GridSpec::Fixed(l) => l,
            GridSpec::Adaptive { h_min, .. } => {
                let mut l = 0u8;
                while width(l + 1) >= h_min * (1.0 - 1e-9) {
                    l += 1;
                }
                l
            }
        }
    }
}
