//! Run configuration: a JSON file whose every field the CLI can override.

use std::path::{Path, PathBuf};

use doe_core::doe::{Direction, Method, Weights};
use serde::{Deserialize, Serialize};

use crate::training::TrainSettings;
use crate::{read_json, FileError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("weight override `{0}` is not of the form name=value")]
    WeightSyntax(String),
    #[error("unknown weight `{0}` (expected w_doe, w_loss, w_v, w_ol or w_rpf)")]
    UnknownWeight(String),
    #[error("interval range `{0}` is not `N` or `start..end`")]
    IntervalSyntax(String),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("method list is empty")]
    NoMethods,
    #[error("{0}")]
    Invalid(&'static str),
}

/// Half-open range of stress-day interval indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalRange {
    pub start: usize,
    pub end: usize,
}

impl IntervalRange {
    /// `N` (the first N) or `start..end`.
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError::IntervalSyntax(s.to_string());
        let (start, end) = match s.split_once("..") {
            Some((a, b)) => (
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            ),
            None => (0, s.trim().parse().map_err(|_| bad())?),
        };
        if start >= end {
            return Err(bad());
        }
        Ok(Self { start, end })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Feeder JSON; the bundled 33-bus feeder when absent.
    pub feeder: Option<PathBuf>,
    /// Root for every artifact of a run.
    pub out: PathBuf,
    /// Dataset directory; `<out>/data` when absent.
    pub dataset: Option<PathBuf>,
    /// Model directory; `<out>/models` when absent.
    pub models: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub direction: Direction,
    /// Intervals of the stress day.
    pub steps: usize,
    /// Subset of the stress day to solve; all of it when absent.
    pub intervals: Option<IntervalRange>,
    pub weights: Weights,
    pub seed: u64,
    /// Snapshot rows to generate.
    pub samples: usize,
    /// Load multiplier range of the snapshot sampler.
    pub load_range: (f64, f64),
    pub train: TrainSettings,
    /// Also train the plain ReLU surrogates B4 needs.
    pub train_mlp: bool,
    /// Solve B1/B2 on the retrenched output selection.
    pub retrench: bool,
    pub pwl_segments: usize,
    pub node_limit: usize,
    /// Seconds per MILP.
    pub time_limit: Option<f64>,
    /// Check every envelope with the power-flow oracle.
    pub verify: bool,
    /// Solve intervals on a worker pool. Wall times then include contention.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            feeder: None,
            out: PathBuf::from("run"),
            dataset: None,
            models: None,
            methods: Method::ALL.to_vec(),
            direction: Direction::Upper,
            steps: 96,
            intervals: None,
            weights: Weights::default(),
            seed: 7,
            samples: 20_000,
            load_range: (0.2, 1.2),
            train: TrainSettings::default(),
            train_mlp: true,
            retrench: false,
            pwl_segments: 8,
            node_limit: 20_000,
            time_limit: Some(60.0),
            verify: true,
            parallel: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, FileError> {
        read_json(path)
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.dataset.clone().unwrap_or_else(|| self.out.join("data"))
    }

    pub fn models_dir(&self) -> PathBuf {
        self.models.clone().unwrap_or_else(|| self.out.join("models"))
    }

    pub fn results_dir(&self) -> PathBuf {
        self.out.join("results")
    }

    pub fn interval_range(&self) -> IntervalRange {
        let all = IntervalRange {
            start: 0,
            end: self.steps,
        };
        match self.intervals {
            Some(r) => IntervalRange {
                start: r.start.min(self.steps),
                end: r.end.min(self.steps),
            },
            None => all,
        }
    }

    /// Applies one `name=value` weight override.
    pub fn set_weight(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::WeightSyntax(spec.to_string()))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| ConfigError::WeightSyntax(spec.to_string()))?;
        let w = &mut self.weights;
        let slot = match name.trim() {
            "w_doe" => &mut w.w_doe,
            "w_loss" => &mut w.w_loss,
            "w_v" => &mut w.w_v,
            "w_ol" => &mut w.w_ol,
            "w_rpf" => &mut w.w_rpf,
            other => return Err(ConfigError::UnknownWeight(other.to_string())),
        };
        *slot = value;
        Ok(())
    }

    /// Comma-separated method names.
    pub fn set_methods(&mut self, list: &str) -> Result<(), ConfigError> {
        self.methods = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| Method::parse(s.trim()).ok_or_else(|| ConfigError::UnknownMethod(s.trim().to_string())))
            .collect::<Result<_, _>>()?;
        Ok(())
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        if self.methods.is_empty() {
            return Err(ConfigError::NoMethods);
        }
        if self.steps == 0 {
            return Err(ConfigError::Invalid("steps must be positive"));
        }
        if self.interval_range().start >= self.interval_range().end {
            return Err(ConfigError::Invalid("interval range lies outside the day"));
        }
        if !(self.load_range.0 >= 0.0 && self.load_range.0 <= self.load_range.1) {
            return Err(ConfigError::Invalid("load range must satisfy 0 <= lo <= hi"));
        }
        if self.pwl_segments == 0 {
            return Err(ConfigError::Invalid("pwl_segments must be positive"));
        }
        Ok(())
    }
}
