//! `terminal-noise`: training on fixed `n`-point samples at constant noise
//! levels placed relative to the statistical level at `n`.
//!
//! Each seed draws one source and one target sample shared by every level,
//! so levels are compared through per-seed differences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use snot_core::discrete_ot::SolverOptions;
use snot_core::math;
use snot_core::measures::{mean_noise_norm, sample_with, DEFAULT_NOISE_NORM_SAMPLES};
use snot_core::metrics::d_cost_target_points;
use snot_core::nn::{predict, MlpParams};
use snot_core::rng::{derive_seed, stream_rng, streams};
use snot_core::schedule::{epsilon_stat, NoiseSchedule};
use snot_core::trainer::{Sampler, TrainConfig, Trainer};

use crate::config::{Reference, TerminalNoiseCommand};
use crate::error::Result;
use crate::io;
use crate::run::{mean_se, pool, RunDir};

const EVAL_LABEL: u64 = 0x7e3a;
const NORM_LABEL: u64 = 0x7e3b;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub multiplier: f64,
    pub eps: f64,
    pub eps_stat: f64,
    pub seed: u64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelStat {
    pub multiplier: f64,
    pub eps: f64,
    pub mean: f64,
    pub std_err: f64,
}

/// Mean and standard error of per-seed differences `error(a) - error(b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Paired {
    pub a: f64,
    pub b: f64,
    pub mean_diff: f64,
    pub std_err: f64,
}

impl Paired {
    /// Difference in standard errors; infinite when the spread is zero.
    pub fn z(&self) -> f64 {
        if self.std_err > 0.0 {
            self.mean_diff / self.std_err
        } else if self.mean_diff == 0.0 {
            0.0
        } else {
            self.mean_diff.signum() * f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalSummary {
    pub n: usize,
    pub e_abs_y: f64,
    pub eps_stat: f64,
    pub levels: Vec<LevelStat>,
    /// Each level against the smallest one.
    pub against_smallest: Vec<Paired>,
    /// Smallest level whose error exceeds the smallest level's by more than
    /// two paired standard errors.
    pub onset_eps: Option<f64>,
    pub rows: Vec<ErrorRow>,
}

impl TerminalSummary {
    /// Paired comparison of the levels at multipliers `a` and `b`.
    pub fn paired(&self, a: f64, b: f64) -> Option<Paired> {
        paired(&self.rows, a, b)
    }

    pub fn level(&self, multiplier: f64) -> Option<&LevelStat> {
        self.levels.iter().find(|l| l.multiplier == multiplier)
    }
}

fn paired(rows: &[ErrorRow], a: f64, b: f64) -> Option<Paired> {
    let errors = |m: f64| -> Vec<(u64, f64)> { rows.iter().filter(|r| r.multiplier == m).map(|r| (r.seed, r.error)).collect() };
    let (ea, eb) = (errors(a), errors(b));
    let diffs: Vec<f64> = ea
        .iter()
        .filter_map(|(s, x)| eb.iter().find(|(t, _)| t == s).map(|(_, y)| x - y))
        .filter(|d| d.is_finite())
        .collect();
    if diffs.is_empty() {
        return None;
    }
    let (mean_diff, std_err) = mean_se(&diffs);
    Some(Paired { a, b, mean_diff, std_err })
}

pub fn run(cfg: &TerminalNoiseCommand, dir: Option<&RunDir>, threads: Option<usize>) -> Result<TerminalSummary> {
    let noise = cfg.train.noise_model();
    let e_abs_y = cfg.e_abs_y.unwrap_or_else(|| mean_noise_norm(&noise, DEFAULT_NOISE_NORM_SAMPLES, derive_seed(cfg.seed, NORM_LABEL)));
    let eps_stat = epsilon_stat(cfg.n as u64, cfg.m, e_abs_y, cfg.c0)?;

    let jobs: Vec<(f64, u64)> = cfg.multipliers.iter().flat_map(|&k| (0..cfg.seeds).map(move |s| (k, s))).collect();
    let results: Vec<Result<ErrorRow>> = pool(threads).install(|| {
        jobs.par_iter()
            .map(|&(k, s)| {
                let eps = k * eps_stat;
                let error = train_one(cfg, eps, s)?;
                Ok(ErrorRow { multiplier: k, eps, eps_stat, seed: s, error })
            })
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>>>()?;

    let levels: Vec<LevelStat> = cfg
        .multipliers
        .iter()
        .map(|&k| {
            let e: Vec<f64> = rows.iter().filter(|r| r.multiplier == k && r.error.is_finite()).map(|r| r.error).collect();
            let (mean, std_err) = if e.is_empty() { (f64::NAN, f64::NAN) } else { mean_se(&e) };
            LevelStat { multiplier: k, eps: k * eps_stat, mean, std_err }
        })
        .collect();

    let mut sorted = cfg.multipliers.clone();
    sorted.sort_by(f64::total_cmp);
    let against_smallest: Vec<Paired> = sorted.iter().skip(1).filter_map(|&k| paired(&rows, k, sorted[0])).collect();
    let onset_eps = against_smallest.iter().find(|p| p.z() > 2.0).map(|p| p.a * eps_stat);

    let summary = TerminalSummary { n: cfg.n, e_abs_y, eps_stat, levels, against_smallest, onset_eps, rows };
    if let Some(dir) = dir {
        io::write_rows(io::create(&dir.path("errors.csv")?)?, &summary.rows, dir.comment())?;
        dir.json("summary.json", &summary)?;
    }
    Ok(summary)
}

/// Trains at `eps` on the samples of seed index `s` and returns the map
/// error, or NaN when training faults.
fn train_one(cfg: &TerminalNoiseCommand, eps: f64, s: u64) -> Result<f64> {
    let seed = derive_seed(cfg.seed, s);
    let mut rng = stream_rng(seed, streams::SAMPLE);
    let xs = sample_with(&cfg.source, cfg.n, &mut rng)?;
    let ys = sample_with(&cfg.target, cfg.n, &mut rng)?;
    let train = TrainConfig { schedule: NoiseSchedule::Constant { eps }, seed, ..cfg.train.clone() };
    let mut trainer = Trainer::new(train, Sampler::Empirical(xs), Sampler::Empirical(ys))?;
    match trainer.run(&mut || 0, &mut |_| {}) {
        Ok(()) => map_error(cfg, trainer.map(), seed),
        Err(snot_core::Error::TrainingFault { .. }) => Ok(f64::NAN),
        Err(e) => Err(e.into()),
    }
}

fn map_error(cfg: &TerminalNoiseCommand, t: &MlpParams, seed: u64) -> Result<f64> {
    let mut rng = stream_rng(derive_seed(seed, EVAL_LABEL), streams::EVAL);
    let mu = sample_with(&cfg.source, cfg.eval_points, &mut rng)?;
    let y = predict(t, mu.points())?;
    match cfg.reference {
        Reference::Affine { scale, shift } => {
            let sq: Vec<f64> = y
                .as_slice()
                .iter()
                .zip(mu.points().as_slice())
                .map(|(a, x)| {
                    let r = a - (scale * x + shift);
                    r * r
                })
                .collect();
            Ok(math::mean(&sq))
        }
        Reference::DTarget => {
            let nu = sample_with(&cfg.target, cfg.eval_points, &mut rng)?;
            Ok(d_cost_target_points(&y, &mu, &nu, &SolverOptions::default())?.1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(multiplier: f64, seed: u64, error: f64) -> ErrorRow {
        ErrorRow { multiplier, eps: multiplier, eps_stat: 1.0, seed, error }
    }

    #[test]
    fn paired_differences_match_seeds() {
        let rows = [row(1.0, 0, 3.0), row(1.0, 1, 5.0), row(2.0, 1, 4.0), row(2.0, 0, 1.0)];
        let p = paired(&rows, 1.0, 2.0).unwrap();
        assert_eq!(p.mean_diff, 1.5);
        assert!((p.std_err - 0.5).abs() < 1e-12);
        assert_eq!(p.z(), 3.0);
        assert!(paired(&rows, 1.0, 7.0).is_none());
    }

    #[test]
    fn eps_column_is_the_statistical_level_times_the_multiplier() {
        let cfg = TerminalNoiseCommand {
            n: 64,
            multipliers: vec![0.5, 2.0],
            seeds: 2,
            e_abs_y: Some(0.8),
            train: TrainConfig { d: 1, hidden_width: 8, k_t: 2, batch_size: 16, iterations: 30, lr: 1e-3, log_every: 0, eval_samples: 0, ..TrainConfig::default() },
            eval_points: 50,
            ..TerminalNoiseCommand::default()
        };
        let s = run(&cfg, None, Some(1)).unwrap();
        let stat = epsilon_stat(64, 1, 0.8, 1.0).unwrap();
        assert_eq!(s.eps_stat, stat);
        assert_eq!(s.rows.len(), 4);
        for r in &s.rows {
            assert_eq!(r.eps, r.multiplier * stat);
            assert!(r.error.is_finite());
        }
        assert_eq!(s.against_smallest.len(), 1);
    }
}
