//! JSON experiment configurations, one document per command.
//!
//! Every struct rejects unknown fields and fills omitted ones from its
//! `Default`, which reproduces the acceptance-suite settings.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use snot_core::discrete_ot::SolverOptions;
use snot_core::measures::{DatasetKind, DatasetParams, DatasetSpec, NoiseKind, Side};
use snot_core::schedule::NoiseSchedule;
use snot_core::trainer::TrainConfig;

use crate::error::{LabError, Result};

/// Reads and validates a config file. Parse errors carry line and column.
pub fn load<T: DeserializeOwned + Validate>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::config(path, e.to_string()))?;
    let cfg: T = serde_json::from_str(&text).map_err(|e| LabError::config(path, e.to_string()))?;
    cfg.validate().map_err(|msg| LabError::config(path, msg))?;
    Ok(cfg)
}

pub trait Validate {
    fn validate(&self) -> std::result::Result<(), String>;
}

fn check_train(t: &TrainConfig) -> std::result::Result<(), String> {
    t.validate().map_err(|e| e.to_string())
}

fn check_spec(s: &DatasetSpec, d: usize, what: &str) -> std::result::Result<(), String> {
    s.validate().map_err(|e| format!("{what}: {e}"))?;
    if s.ambient_dim != d {
        return Err(format!("{what}: ambient_dim {} differs from train.d {d}", s.ambient_dim));
    }
    Ok(())
}

fn positive(values: &[f64], what: &str) -> std::result::Result<(), String> {
    if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(format!("{what} must be a nonempty list of positive numbers"));
    }
    Ok(())
}

/// A named schedule for one arm of a `train` comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub name: String,
    pub schedule: NoiseSchedule,
}

/// Sample sizes for the end-of-run metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Atoms per side for `d_cost` / `d_target` and the map-error metrics.
    pub samples: usize,
    /// Quantile atoms of the normal-direction reference.
    pub normal_atoms: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { samples: 2000, normal_atoms: snot_core::metrics::NORMAL_REFERENCE_ATOMS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCommand {
    pub train: TrainConfig,
    pub source: DatasetSpec,
    pub target: DatasetSpec,
    /// Schedules to compare on identical seeds; empty runs `train.schedule`.
    pub variants: Vec<Variant>,
    pub replicates: u64,
    pub seed: u64,
    pub eval: EvalConfig,
    /// Writes zeros in the `wall_ms` column when false, making record files
    /// byte-identical across reruns.
    pub wall_clock: bool,
}

impl Default for TrainCommand {
    /// Perpendicular `d = 2`, compared across the three schedules.
    fn default() -> Self {
        let iterations = 3000;
        let period = iterations / 10;
        Self {
            train: TrainConfig { d: 2, hidden_width: 64, k_t: 5, lr: 5e-4, iterations, log_every: 500, ..TrainConfig::default() },
            source: DatasetSpec::new(DatasetKind::Perpendicular, Side::Source, 2, 1),
            target: DatasetSpec::new(DatasetKind::Perpendicular, Side::Target, 2, 1),
            variants: vec![
                Variant { name: "unsmoothed".into(), schedule: NoiseSchedule::Constant { eps: 0.0 } },
                Variant {
                    name: "stepwise_linear".into(),
                    schedule: NoiseSchedule::StepwiseLinear { sigma_max: 0.2, sigma_min: 0.05, period, total: iterations },
                },
                Variant {
                    name: "rate_optimal".into(),
                    // E|Y| for the standard Gaussian in R^2 is sqrt(pi/2).
                    schedule: NoiseSchedule::RateOptimal { m: 1, e_abs_y: 1.2533141373155003, c0: 1.0, eps_min: 0.1, period },
                },
            ],
            replicates: 5,
            seed: 0,
            eval: EvalConfig::default(),
            wall_clock: true,
        }
    }
}

impl Validate for TrainCommand {
    fn validate(&self) -> std::result::Result<(), String> {
        check_train(&self.train)?;
        check_spec(&self.source, self.train.d, "source")?;
        check_spec(&self.target, self.train.d, "target")?;
        for v in &self.variants {
            v.schedule.validate().map_err(|e| format!("variant {}: {e}", v.name))?;
            if v.name.is_empty() || v.name.contains(['/', '\\']) || v.name.starts_with('.') {
                return Err(format!("variant name {:?} is not a plain directory name", v.name));
            }
        }
        let mut names: Vec<&str> = self.variants.iter().map(|v| v.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err("variant names must be distinct".into());
        }
        if self.replicates == 0 {
            return Err("replicates must be positive".into());
        }
        if self.eval.samples == 0 || self.eval.normal_atoms == 0 {
            return Err("eval sizes must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlopeCommand {
    /// Intrinsic dimension of the cube.
    pub m: usize,
    pub d: usize,
    pub eps: Vec<f64>,
    pub n: Vec<usize>,
    pub replicates: usize,
    /// Grid points per axis of the fixed reference discretization.
    pub per_axis: usize,
    pub low: f64,
    pub high: f64,
    pub noise: NoiseKind,
    pub seed: u64,
    pub max_entries: usize,
}

impl Default for SlopeCommand {
    fn default() -> Self {
        Self {
            m: 3,
            d: 10,
            eps: vec![1e-3, 0.5],
            n: vec![250, 500, 1000, 2000, 4000],
            replicates: 20,
            per_axis: 16,
            low: -1.0,
            high: 1.0,
            noise: NoiseKind::GaussianIsotropic,
            seed: 0,
            max_entries: 20_000_000,
        }
    }
}

impl SlopeCommand {
    pub fn solver(&self) -> SolverOptions {
        SolverOptions { max_entries: self.max_entries }
    }
}

impl Validate for SlopeCommand {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.m == 0 || self.m > self.d {
            return Err("need 1 <= m <= d".into());
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err("eps must be a nonempty list of nonnegative numbers".into());
        }
        if self.n.len() < 3 || self.n.contains(&0) {
            return Err("n needs at least three positive sample sizes".into());
        }
        if self.replicates == 0 || self.per_axis == 0 {
            return Err("replicates and per_axis must be positive".into());
        }
        if !(self.low < self.high) {
            return Err("need low < high".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningCommand {
    pub eps: Vec<f64>,
    pub seeds: u64,
    pub seed: u64,
    /// Network and optimizer settings; `schedule` is replaced per level.
    pub train: TrainConfig,
    /// Map error is logged every `eval_every` iterations.
    pub eval_every: u64,
    pub eval_points: usize,
    /// Source points at which the Jacobian norm is probed.
    pub probes: usize,
    /// Threshold as a multiple of the best error of the largest level.
    pub threshold_factor: f64,
    /// Absolute threshold; overrides `threshold_factor` when set.
    pub threshold: Option<f64>,
}

impl Default for ConditioningCommand {
    fn default() -> Self {
        Self {
            eps: vec![0.5, 0.25, 0.1, 0.05],
            seeds: 10,
            seed: 0,
            train: TrainConfig { d: 10, hidden_width: 64, k_t: 5, lr: 1e-3, iterations: 1200, log_every: 0, eval_samples: 0, ..TrainConfig::default() },
            eval_every: 25,
            eval_points: 512,
            probes: 64,
            threshold_factor: 1.5,
            threshold: None,
        }
    }
}

impl Validate for ConditioningCommand {
    fn validate(&self) -> std::result::Result<(), String> {
        check_train(&self.train)?;
        positive(&self.eps, "eps")?;
        if self.seeds == 0 || self.eval_every == 0 || self.eval_points == 0 || self.probes == 0 {
            return Err("seeds, eval_every, eval_points and probes must be positive".into());
        }
        if self.probes > self.eval_points {
            return Err("probes cannot exceed eval_points".into());
        }
        if !(self.threshold_factor > 0.0) || self.threshold.is_some_and(|t| !(t > 0.0)) {
            return Err("thresholds must be positive".into());
        }
        Ok(())
    }
}

/// Ground truth for the terminal-noise map error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reference {
    /// Known Monge map `x -> scale * x + shift`; the error is its mean
    /// squared deviation on clean source samples.
    Affine { scale: f64, shift: f64 },
    /// No closed form; the error is `d_target` on clean source samples.
    DTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminalNoiseCommand {
    pub source: DatasetSpec,
    pub target: DatasetSpec,
    /// Intrinsic dimension entering the statistical noise level.
    pub m: u32,
    /// Fixed training sample size per side.
    pub n: usize,
    /// Noise levels as multiples of the statistical level at `n`.
    pub multipliers: Vec<f64>,
    pub seeds: u64,
    pub seed: u64,
    pub train: TrainConfig,
    pub c0: f64,
    /// `E|Y|`; estimated by Monte Carlo when absent.
    pub e_abs_y: Option<f64>,
    pub reference: Reference,
    pub eval_points: usize,
}

impl Default for TerminalNoiseCommand {
    fn default() -> Self {
        let source = DatasetSpec::new(DatasetKind::UniformInterval, Side::Source, 1, 1);
        Self {
            target: source.with_params(DatasetParams { low: -2.0, high: 2.0, ..DatasetParams::default() }),
            source,
            m: 1,
            n: 512,
            multipliers: vec![0.1, 0.5, 1.0, 2.0, 10.0],
            seeds: 5,
            seed: 0,
            train: TrainConfig { d: 1, hidden_width: 64, k_t: 5, lr: 1e-3, iterations: 1500, log_every: 0, eval_samples: 0, ..TrainConfig::default() },
            c0: 1.0,
            e_abs_y: None,
            reference: Reference::Affine { scale: 2.0, shift: 0.0 },
            eval_points: 1000,
        }
    }
}

impl Validate for TerminalNoiseCommand {
    fn validate(&self) -> std::result::Result<(), String> {
        check_train(&self.train)?;
        check_spec(&self.source, self.train.d, "source")?;
        check_spec(&self.target, self.train.d, "target")?;
        positive(&self.multipliers, "multipliers")?;
        if self.m == 0 || self.n < 2 || self.seeds == 0 || self.eval_points == 0 {
            return Err("m, seeds and eval_points must be positive and n >= 2".into());
        }
        if !(self.c0 > 0.0) || self.e_abs_y.is_some_and(|e| !(e > 0.0)) {
            return Err("c0 and e_abs_y must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceCommand {
    pub schedule: NoiseSchedule,
    pub iterations: u64,
    pub batch_size: usize,
}

impl Default for TraceCommand {
    fn default() -> Self {
        Self {
            schedule: NoiseSchedule::RateOptimal { m: 1, e_abs_y: 1.2533141373155003, c0: 1.0, eps_min: 0.01, period: 100 },
            iterations: 2000,
            batch_size: 128,
        }
    }
}

impl Validate for TraceCommand {
    fn validate(&self) -> std::result::Result<(), String> {
        self.schedule.validate().map_err(|e| e.to_string())?;
        if self.batch_size == 0 {
            return Err("batch_size must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelftestCommand {
    pub seed: u64,
    /// Random instances per property.
    pub instances: usize,
}

impl Default for SelftestCommand {
    fn default() -> Self {
        Self { seed: 0, instances: 100 }
    }
}

impl Validate for SelftestCommand {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.instances == 0 {
            return Err("instances must be positive".into());
        }
        Ok(())
    }
}
