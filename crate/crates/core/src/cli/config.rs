//! Run configuration file.
//!
//! Keys are the upper-case parameter names (`LENGTH`, `EPOCHS`, ...) plus
//! `PROBLEM`. Every key except `PROBLEM` is optional and falls back to the
//! problem's default listing. Problem coefficients may be given either at the
//! top level or in a table named after the problem:
//!
//! ```toml
//! PROBLEM = "wave"
//! LENGTH = 2.
//! TOTAL_TIME = .5
//! EPOCHS = 150_000
//!
//! [wave]
//! GRAVITY = 9.81
//! ```
//!
//! Numbers written with a bare leading or trailing decimal point (`2.`, `.5`)
//! are accepted and normalized before TOML parsing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::losses::LossWeights;
use crate::network::{Activation, NetConfig};
use crate::problems::{self, Problem, ProblemSpec};
use crate::sampling::{DomainBox, SamplingMode};
use crate::training::{TrainConfig, TrainMode};

pub const SEED_ENV: &str = "PINN_SEED";
pub const DEFAULT_OUTPUT_DIR: &str = "output";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("missing required field `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidField {
        field,
        reason: reason.into(),
    }
}

/// Problem coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemParams {
    Heat { epsilon: f64 },
    Wave { gravity: f64 },
    ThermalInversion { kx: f64, ky: f64 },
    Tumor { rho: f64 },
}

impl ProblemParams {
    pub fn defaults_for(name: &str) -> Option<Self> {
        Some(match name {
            "heat" => Self::Heat { epsilon: 1.0 },
            "wave" => Self::Wave {
                gravity: problems::GRAVITY,
            },
            "thermal_inversion" => Self::ThermalInversion {
                kx: problems::THERMAL_KX,
                ky: problems::THERMAL_KY,
            },
            "tumor" => Self::Tumor {
                rho: problems::TUMOR_RHO,
            },
            _ => return None,
        })
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub length: f64,
    pub total_time: f64,
    pub n_points: usize,
    pub n_points_plot: usize,
    pub weights: LossWeights,
    pub layers: usize,
    pub neurons_per_layer: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub activation: Activation,
    pub sampling: SamplingMode,
    pub train_mode: TrainMode,
    pub stop_threshold: Option<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub params: ProblemParams,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeatTable {
    #[serde(rename = "EPSILON", skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WaveTable {
    #[serde(rename = "GRAVITY", skip_serializing_if = "Option::is_none")]
    gravity: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThermalTable {
    #[serde(rename = "KX", skip_serializing_if = "Option::is_none")]
    kx: Option<f64>,
    #[serde(rename = "KY", skip_serializing_if = "Option::is_none")]
    ky: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TumorTable {
    #[serde(rename = "RHO", skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "SCREAMING_SNAKE_CASE")]
struct RawConfig {
    problem: Option<String>,
    length: Option<f64>,
    total_time: Option<f64>,
    n_points: Option<i64>,
    n_points_plot: Option<i64>,
    weight_residual: Option<f64>,
    weight_initial: Option<f64>,
    weight_boundary: Option<f64>,
    layers: Option<i64>,
    neurons_per_layer: Option<i64>,
    epochs: Option<i64>,
    learning_rate: Option<f64>,
    activation: Option<Activation>,
    sampling: Option<SamplingMode>,
    train_mode: Option<TrainMode>,
    stop_threshold: Option<f64>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    epsilon: Option<f64>,
    gravity: Option<f64>,
    kx: Option<f64>,
    ky: Option<f64>,
    rho: Option<f64>,
    #[serde(rename = "heat")]
    heat: Option<HeatTable>,
    #[serde(rename = "wave")]
    wave: Option<WaveTable>,
    #[serde(rename = "thermal_inversion")]
    thermal_inversion: Option<ThermalTable>,
    #[serde(rename = "tumor")]
    tumor: Option<TumorTable>,
}

fn is_digit(b: u8) -> bool {
    b.is_ascii_digit()
}

/// Rewrites `2.` to `2.0` and `.5` to `0.5` in `KEY = value` lines.
fn normalize_numbers(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    for line in text.lines() {
        match line.split_once('=') {
            Some((key, rest)) if !line.trim_start().starts_with('#') => {
                let (value, comment) = match rest.find('#') {
                    Some(i) => rest.split_at(i),
                    None => (rest, ""),
                };
                let trimmed = value.trim();
                let b = trimmed.as_bytes();
                let unsigned = trimmed.trim_start_matches(['+', '-']);
                let sign = &trimmed[..trimmed.len() - unsigned.len()];
                let fixed = if b.len() >= 2 && b[b.len() - 1] == b'.' && is_digit(b[b.len() - 2]) && unsigned.bytes().all(|c| is_digit(c) || c == b'.' || c == b'_') {
                    Some(format!("{trimmed}0"))
                } else if unsigned.len() >= 2 && unsigned.starts_with('.') && unsigned[1..].bytes().all(|c| is_digit(c) || c == b'_' || c == b'e' || c == b'E' || c == b'-' || c == b'+') {
                    Some(format!("{sign}0{unsigned}"))
                } else {
                    None
                };
                match fixed {
                    Some(v) => {
                        out.push_str(key);
                        out.push_str("= ");
                        out.push_str(&v);
                        if !comment.is_empty() {
                            out.push(' ');
                            out.push_str(comment);
                        }
                    }
                    None => out.push_str(line),
                }
            }
            _ => out.push_str(line),
        }
        out.push('\n');
    }
    out
}

fn count(field: &'static str, value: Option<i64>, default: usize, min: usize) -> Result<usize, ConfigError> {
    match value {
        None => Ok(default),
        Some(v) if v >= min as i64 => Ok(v as usize),
        Some(v) => Err(invalid(field, format!("must be >= {min}, got {v}"))),
    }
}

fn positive(field: &'static str, value: Option<f64>, default: f64) -> Result<f64, ConfigError> {
    let v = value.unwrap_or(default);
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

fn non_negative(field: &'static str, value: Option<f64>, default: f64) -> Result<f64, ConfigError> {
    let v = value.unwrap_or(default);
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be finite and >= 0, got {v}")))
    }
}

/// A coefficient given both at the top level and in the problem table must agree.
fn merged(field: &'static str, top: Option<f64>, table: Option<f64>) -> Result<Option<f64>, ConfigError> {
    match (top, table) {
        (Some(a), Some(b)) if a != b => Err(invalid(field, format!("top-level value {a} conflicts with table value {b}"))),
        (a, b) => Ok(b.or(a)),
    }
}

impl RunConfig {
    /// Reference defaults for a problem.
    pub fn defaults(problem: &str) -> Result<Self, ConfigError> {
        Self::from_raw(RawConfig {
            problem: Some(problem.to_string()),
            ..RawConfig::default()
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(&normalize_numbers(text)).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let problem = raw.problem.ok_or(ConfigError::Missing("PROBLEM"))?;
        let spec = ProblemSpec::by_name(&problem).map_err(|e| invalid("PROBLEM", e.to_string()))?;
        let d = spec.defaults();

        let foreign = [
            ("heat", raw.heat.is_some()),
            ("wave", raw.wave.is_some()),
            ("thermal_inversion", raw.thermal_inversion.is_some()),
            ("tumor", raw.tumor.is_some()),
        ];
        if let Some((name, _)) = foreign.iter().find(|(name, present)| *present && *name != problem) {
            return Err(invalid("PROBLEM", format!("table [{name}] does not apply to problem '{problem}'")));
        }
        let stray = [
            ("EPSILON", raw.epsilon.is_some(), "heat"),
            ("GRAVITY", raw.gravity.is_some(), "wave"),
            ("KX", raw.kx.is_some(), "thermal_inversion"),
            ("KY", raw.ky.is_some(), "thermal_inversion"),
            ("RHO", raw.rho.is_some(), "tumor"),
        ];
        if let Some((field, _, owner)) = stray.iter().find(|(_, present, owner)| *present && *owner != problem) {
            return Err(invalid(field, format!("only applies to problem '{owner}'")));
        }

        let params = match ProblemParams::defaults_for(&problem).expect("known problem") {
            ProblemParams::Heat { epsilon } => {
                let t = raw.heat.unwrap_or_default();
                ProblemParams::Heat {
                    epsilon: positive("EPSILON", merged("EPSILON", raw.epsilon, t.epsilon)?, epsilon)?,
                }
            }
            ProblemParams::Wave { gravity } => {
                let t = raw.wave.unwrap_or_default();
                ProblemParams::Wave {
                    gravity: positive("GRAVITY", merged("GRAVITY", raw.gravity, t.gravity)?, gravity)?,
                }
            }
            ProblemParams::ThermalInversion { kx, ky } => {
                let t = raw.thermal_inversion.unwrap_or_default();
                ProblemParams::ThermalInversion {
                    kx: non_negative("KX", merged("KX", raw.kx, t.kx)?, kx)?,
                    ky: non_negative("KY", merged("KY", raw.ky, t.ky)?, ky)?,
                }
            }
            ProblemParams::Tumor { rho } => {
                let t = raw.tumor.unwrap_or_default();
                ProblemParams::Tumor {
                    rho: non_negative("RHO", merged("RHO", raw.rho, t.rho)?, rho)?,
                }
            }
        };

        let stop_threshold = match raw.stop_threshold {
            Some(v) if !(v.is_finite() && v >= 0.0) => {
                return Err(invalid("STOP_THRESHOLD", format!("must be finite and >= 0, got {v}")))
            }
            v => v,
        };

        Ok(Self {
            problem,
            length: positive("LENGTH", raw.length, d.length)?,
            total_time: positive("TOTAL_TIME", raw.total_time, d.total_time)?,
            n_points: count("N_POINTS", raw.n_points, d.n_points, 2)?,
            n_points_plot: count("N_POINTS_PLOT", raw.n_points_plot, d.n_points_plot, 2)?,
            weights: LossWeights {
                residual: non_negative("WEIGHT_RESIDUAL", raw.weight_residual, d.weights.residual)?,
                initial: non_negative("WEIGHT_INITIAL", raw.weight_initial, d.weights.initial)?,
                boundary: non_negative("WEIGHT_BOUNDARY", raw.weight_boundary, d.weights.boundary)?,
            },
            layers: count("LAYERS", raw.layers, d.layers, 1)?,
            neurons_per_layer: count("NEURONS_PER_LAYER", raw.neurons_per_layer, d.neurons_per_layer, 1)?,
            epochs: count("EPOCHS", raw.epochs, d.epochs, 0)?,
            learning_rate: positive("LEARNING_RATE", raw.learning_rate, d.learning_rate)?,
            activation: raw.activation.unwrap_or_default(),
            sampling: raw.sampling.unwrap_or_default(),
            train_mode: raw.train_mode.unwrap_or_default(),
            stop_threshold,
            seed: raw.seed.unwrap_or(0),
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
            params,
        })
    }

    fn to_raw(&self) -> RawConfig {
        let mut raw = RawConfig {
            problem: Some(self.problem.clone()),
            length: Some(self.length),
            total_time: Some(self.total_time),
            n_points: Some(self.n_points as i64),
            n_points_plot: Some(self.n_points_plot as i64),
            weight_residual: Some(self.weights.residual),
            weight_initial: Some(self.weights.initial),
            weight_boundary: Some(self.weights.boundary),
            layers: Some(self.layers as i64),
            neurons_per_layer: Some(self.neurons_per_layer as i64),
            epochs: Some(self.epochs as i64),
            learning_rate: Some(self.learning_rate),
            activation: Some(self.activation),
            sampling: Some(self.sampling),
            train_mode: Some(self.train_mode),
            stop_threshold: self.stop_threshold,
            seed: Some(self.seed),
            output_dir: Some(self.output_dir.clone()),
            ..RawConfig::default()
        };
        match self.params {
            ProblemParams::Heat { epsilon } => raw.heat = Some(HeatTable { epsilon: Some(epsilon) }),
            ProblemParams::Wave { gravity } => raw.wave = Some(WaveTable { gravity: Some(gravity) }),
            ProblemParams::ThermalInversion { kx, ky } => {
                raw.thermal_inversion = Some(ThermalTable {
                    kx: Some(kx),
                    ky: Some(ky),
                })
            }
            ProblemParams::Tumor { rho } => raw.tumor = Some(TumorTable { rho: Some(rho) }),
        }
        raw
    }

    /// Fully explicit TOML; `parse(to_toml())` reproduces `self`.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("config serializes")
    }

    /// Applies the seed override from the environment, if set.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| invalid("SEED", format!("{SEED_ENV}='{v}' is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn domain(&self) -> DomainBox {
        DomainBox::square(self.length, self.total_time).expect("validated extents")
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let mut spec = ProblemSpec::by_name(&self.problem).expect("validated problem name");
        spec.problem = match (spec.problem, self.params) {
            (Problem::Heat { .. }, ProblemParams::Heat { epsilon }) => Problem::Heat { epsilon },
            (Problem::Wave { center, floor, .. }, ProblemParams::Wave { gravity }) => Problem::Wave { gravity, center, floor },
            (Problem::ThermalInversion { .. }, ProblemParams::ThermalInversion { kx, ky }) => {
                Problem::ThermalInversion { kx, ky }
            }
            (Problem::Tumor { .. }, ProblemParams::Tumor { rho }) => Problem::Tumor { rho },
            (p, _) => p,
        };
        spec.fit_domain(&self.domain())
    }

    pub fn net_config(&self) -> NetConfig {
        NetConfig {
            num_hidden: self.layers,
            dim_hidden: self.neurons_per_layer,
            activation: self.activation,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut c = TrainConfig::new(self.epochs, self.learning_rate, self.weights, self.n_points);
        c.sampling = self.sampling;
        c.seed = self.seed;
        c.mode = self.train_mode;
        c.stop_threshold = self.stop_threshold;
        c
    }
}
