//! The declarative experiment description read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use viscoflow::displacement::{
    approximate_initial_data, random_state, random_state_in, ramp_samples, IntegrateOptions,
    SimpleState, Stepper,
};
use viscoflow::numerics::{linspace, logspace};
use viscoflow::{ModelSpec, StressModel};

use crate::error::CliError;

/// Environment variable naming the root against which relative output
/// directories are resolved.
pub const OUTPUT_ROOT_VAR: &str = "VISCOFLOW_OUT";

/// Tighter relative tolerances cannot be met in double precision.
pub const MIN_RTOL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Mixed,
    #[default]
    Displacement,
}

/// Initial strain data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// Equal-weight components with the given values; `mu` is ignored.
    Explicit { values: Vec<f64> },
    /// Seeded uniform draw shifted to mean `mu`; without `range` the
    /// model-dependent default draw is used.
    Random {
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        range: Option<[f64; 2]>,
    },
    /// `p₀(x) = 2x` sampled on `samples` cells, quantized to `n` levels.
    Ramp {
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// One sample per line (or comma separated), quantized to `n` levels.
    File { path: PathBuf },
}

fn default_samples() -> usize {
    1024
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData::Random {
            seed: 1,
            range: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Record times: `count` points from `start` to `t_final`. With linear
/// spacing `start` defaults to 0, with log spacing to `1e-3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordGrid {
    pub count: usize,
    pub spacing: Spacing,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
}

impl Default for RecordGrid {
    fn default() -> Self {
        Self {
            count: 201,
            spacing: Spacing::Linear,
            start: None,
        }
    }
}

impl RecordGrid {
    pub fn times(&self, t_final: f64) -> Vec<f64> {
        let n = self.count.max(2);
        match self.spacing {
            Spacing::Linear => linspace(self.start.unwrap_or(0.0), t_final, n),
            Spacing::Log => {
                let mut t = vec![0.0];
                t.extend(logspace(self.start.unwrap_or(1e-3), t_final, n - 1));
                t
            }
        }
    }
}

/// Which analyses the run performs. Every enabled check contributes a line
/// to the manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    /// Lower bound curve; only defined for laws singular at 0, so on
    /// full-line laws it is skipped rather than failed.
    pub bounds_lower: bool,
    pub bounds_upper: bool,
    pub asympt: bool,
    pub invariants: bool,
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            bounds_lower: true,
            bounds_upper: true,
            asympt: true,
            invariants: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub boundary: Boundary,
    pub mu: f64,
    pub n: usize,
    pub initial: InitialData,
    pub stepper: Stepper,
    /// Accepted plus rejected steps before the run is declared failed.
    pub max_steps: usize,
    pub t_final: f64,
    pub record: RecordGrid,
    pub output_dir: PathBuf,
    pub analysis: Analysis,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            boundary: Boundary::default(),
            mu: 0.5,
            n: 8,
            initial: InitialData::default(),
            stepper: Stepper::default(),
            max_steps: IntegrateOptions::default().max_steps,
            t_final: 50.0,
            record: RecordGrid::default(),
            output_dir: PathBuf::from("viscoflow-out"),
            analysis: Analysis::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        // Data files are located relative to the config file.
        if let InitialData::File { path: data } = &mut cfg.initial {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, as lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Checks everything that does not need the model's hypotheses.
    pub fn validate(&self) -> Result<StressModel, CliError> {
        let model = self
            .model
            .build()
            .map_err(|e| CliError::Config(format!("model: {e}")))?;
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(CliError::Config(format!(
                "t_final must be positive, got {}",
                self.t_final
            )));
        }
        if self.max_steps == 0 {
            return Err(CliError::Config("max_steps must be positive".into()));
        }
        if self.n == 0 {
            return Err(CliError::Config("n must be at least 1".into()));
        }
        if self.record.count < 2 {
            return Err(CliError::Config("record.count must be at least 2".into()));
        }
        if let Some(s) = self.record.start {
            if !(s >= 0.0 && s < self.t_final) {
                return Err(CliError::Config(format!(
                    "record.start must lie in [0, t_final), got {s}"
                )));
            }
        }
        if self.record.spacing == Spacing::Log && self.record.start == Some(0.0) {
            return Err(CliError::Config("log spacing needs record.start > 0".into()));
        }
        match self.stepper {
            Stepper::Rk45 { rtol, atol } if !(rtol >= MIN_RTOL && atol > 0.0) => {
                return Err(CliError::Config(format!(
                    "need rtol ≥ {MIN_RTOL:e} and atol > 0, got {rtol:e}, {atol:e}"
                )))
            }
            Stepper::Prox { tau } if !(tau > 0.0) => {
                return Err(CliError::Config("tau must be positive".into()))
            }
            _ => {}
        }
        match &self.initial {
            InitialData::Explicit { values } if values.is_empty() => {
                return Err(CliError::Config("initial.values is empty".into()))
            }
            InitialData::Ramp { samples } if *samples == 0 => {
                return Err(CliError::Config("initial.samples must be positive".into()))
            }
            _ => {}
        }
        if self.boundary == Boundary::Displacement
            && !matches!(self.initial, InitialData::Explicit { .. })
            && !model.contains(self.mu)
        {
            return Err(CliError::Config(format!(
                "mu = {} is outside the domain of `{}`",
                self.mu, model.name
            )));
        }
        Ok(model)
    }

    /// Pointwise samples for the mixed problem.
    pub fn samples(&self, model: &StressModel) -> Result<Vec<f64>, CliError> {
        Ok(match &self.initial {
            InitialData::Explicit { values } => values.clone(),
            InitialData::Ramp { samples } => ramp_samples(*samples),
            InitialData::File { path } => read_samples(path)?,
            InitialData::Random { .. } => self.initial_state(model)?.values,
        })
    }

    /// Equal-weight or quantized state for the displacement problem.
    pub fn initial_state(&self, model: &StressModel) -> Result<SimpleState, CliError> {
        let state = match &self.initial {
            InitialData::Explicit { values } => SimpleState::uniform(values.clone())?,
            InitialData::Random { seed, range: None } => random_state(model, self.mu, self.n, *seed),
            InitialData::Random {
                seed,
                range: Some([lo, hi]),
            } => random_state_in(model, self.mu, self.n, *seed, (*lo, *hi))?,
            InitialData::Ramp { samples } => {
                approximate_initial_data(&ramp_samples(*samples), self.n)?.state
            }
            InitialData::File { path } => approximate_initial_data(&read_samples(path)?, self.n)?.state,
        };
        state
            .validate(model)
            .map_err(|e| CliError::Config(format!("initial data: {e}")))?;
        Ok(state)
    }

    /// `output_dir`, resolved against the output root when relative.
    pub fn resolved_output(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }
}

pub fn resolve_output(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(dir),
        _ => dir.to_path_buf(),
    }
}

/// Reads whitespace-, comma- or newline-separated numbers; `#` starts a
/// comment.
pub fn read_samples(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()) {
            if tok.is_empty() {
                continue;
            }
            out.push(tok.parse::<f64>().map_err(|_| {
                CliError::Config(format!("{}: `{tok}` is not a number", path.display()))
            })?);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config(format!("{}: no samples", path.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.hash(), back.hash());
        assert_eq!(ExperimentConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn full_config_round_trips() {
        let text = r#"
            boundary = "displacement"
            mu = 1.0
            n = 16
            t_final = 20.0
            output_dir = "runs/singular"

            [model]
            name = "singular-cubic"
            params = { kappa = 0.1 }

            [initial]
            kind = "random"
            seed = 7
            range = [0.5, 1.5]

            [stepper]
            kind = "prox"
            tau = 0.01

            [record]
            count = 11
            spacing = "log"
            start = 0.01

            [analysis]
            asympt = false
        "#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.model.params["kappa"], 0.1);
        assert_eq!(cfg.stepper, Stepper::Prox { tau: 0.01 });
        assert!(!cfg.analysis.asympt && cfg.analysis.invariants);
        let again = ExperimentConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_ne!(cfg.hash(), ExperimentConfig::default().hash());
        assert_eq!(cfg.record.times(20.0).len(), 11);
    }

    #[test]
    fn unknown_fields_and_empty_data_are_config_errors() {
        assert!(ExperimentConfig::parse("steps = 3").is_err());
        let cfg = ExperimentConfig::parse("[initial]\nkind = \"explicit\"\nvalues = []").unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let cfg = ExperimentConfig::parse("[model]\nname = \"quartic\"").unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_is_hex_sha256() {
        let h = ExperimentConfig::default().hash();
        assert_eq!(h.len(), 64);
        assert!(h.chars().all(|c| c.is_ascii_hexdigit()));
    }
}
