//! `conditioning`: a point mass pushed onto a standard Gaussian at fixed
//! noise levels. The exact map is `x -> x / eps`, so on `x = eps z` the
//! learned map is scored by its mean squared error against `z`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use snot_core::math;
use snot_core::measures::{DatasetSpec, NoiseModel};
use snot_core::metrics::sup_jacobian_norm;
use snot_core::nn::{predict, MlpParams};
use snot_core::rng::{derive_seed, stream_rng, streams};
use snot_core::schedule::NoiseSchedule;
use snot_core::trainer::{Sampler, TrainConfig, Trainer};
use snot_core::Matrix;

use crate::config::ConditioningCommand;
use crate::error::Result;
use crate::io;
use crate::run::{pool, RunDir};

const EVAL_LABEL: u64 = 0xc0d1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub eps: f64,
    pub seed: u64,
    pub iter: u64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningRun {
    pub eps: f64,
    /// Index into the seed sweep, not the derived training seed.
    pub seed: u64,
    /// First logged iteration at or below the threshold; the iteration
    /// budget when `reached` is false.
    pub iters_to_threshold: u64,
    pub reached: bool,
    pub best_error: f64,
    pub final_error: f64,
    pub sup_jacobian: f64,
    pub fault: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelSummary {
    pub eps: f64,
    pub median_iters: f64,
    pub iters_variance: f64,
    /// Across-seed sample variance of the final map error.
    pub error_variance: f64,
    pub median_final_error: f64,
    pub median_sup_jacobian: f64,
    pub reached: usize,
    pub faults: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningSummary {
    pub threshold: f64,
    pub levels: Vec<LevelSummary>,
    pub runs: Vec<ConditioningRun>,
}

impl ConditioningSummary {
    pub fn level(&self, eps: f64) -> Option<&LevelSummary> {
        self.levels.iter().find(|l| l.eps == eps)
    }

    pub fn runs_at(&self, eps: f64) -> Vec<&ConditioningRun> {
        self.runs.iter().filter(|r| r.eps == eps).collect()
    }
}

struct Trained {
    curve: Vec<CurveRow>,
    final_error: f64,
    sup_jacobian: f64,
    fault: Option<String>,
}

pub fn run(cfg: &ConditioningCommand, dir: Option<&RunDir>, threads: Option<usize>) -> Result<ConditioningSummary> {
    let d = cfg.train.d;
    let noise = NoiseModel { kind: cfg.train.noise, dim: d };
    let mut z = Matrix::zeros(cfg.eval_points, d);
    let mut rng = stream_rng(derive_seed(cfg.seed, EVAL_LABEL), streams::EVAL);
    for i in 0..cfg.eval_points {
        noise.draw(&mut rng, z.row_mut(i));
    }

    let jobs: Vec<(f64, u64)> = cfg.eps.iter().flat_map(|&e| (0..cfg.seeds).map(move |s| (e, s))).collect();
    let trained: Vec<Result<Trained>> = pool(threads).install(|| jobs.par_iter().map(|&(eps, s)| train_one(cfg, &z, eps, s)).collect());
    let trained = trained.into_iter().collect::<Result<Vec<_>>>()?;

    let threshold = match cfg.threshold {
        Some(t) => t,
        None => {
            let largest = cfg.eps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let best: Vec<f64> = jobs
                .iter()
                .zip(&trained)
                .filter(|((e, _), t)| *e == largest && t.fault.is_none())
                .map(|(_, t)| best_error(&t.curve))
                .collect();
            cfg.threshold_factor * math::median(&best)
        }
    };

    let runs: Vec<ConditioningRun> = jobs
        .iter()
        .zip(&trained)
        .map(|(&(eps, seed), t)| {
            let hit = t.curve.iter().find(|c| c.error <= threshold);
            ConditioningRun {
                eps,
                seed,
                iters_to_threshold: hit.map_or(cfg.train.iterations, |c| c.iter),
                reached: hit.is_some(),
                best_error: best_error(&t.curve),
                final_error: t.final_error,
                sup_jacobian: t.sup_jacobian,
                fault: t.fault.clone(),
            }
        })
        .collect();

    let levels = cfg
        .eps
        .iter()
        .map(|&eps| {
            let mine: Vec<&ConditioningRun> = runs.iter().filter(|r| r.eps == eps).collect();
            let iters: Vec<f64> = mine.iter().map(|r| r.iters_to_threshold as f64).collect();
            let finals: Vec<f64> = mine.iter().map(|r| r.final_error).filter(|e| e.is_finite()).collect();
            let jac: Vec<f64> = mine.iter().map(|r| r.sup_jacobian).filter(|j| j.is_finite()).collect();
            LevelSummary {
                eps,
                median_iters: math::median(&iters),
                iters_variance: variance(&iters),
                error_variance: variance(&finals),
                median_final_error: if finals.is_empty() { f64::NAN } else { math::median(&finals) },
                median_sup_jacobian: if jac.is_empty() { f64::NAN } else { math::median(&jac) },
                reached: mine.iter().filter(|r| r.reached).count(),
                faults: mine.iter().filter(|r| r.fault.is_some()).count(),
            }
        })
        .collect();

    let summary = ConditioningSummary { threshold, levels, runs };
    if let Some(dir) = dir {
        let curve: Vec<CurveRow> = trained.iter().flat_map(|t| t.curve.iter().copied()).collect();
        io::write_rows(io::create(&dir.path("curves.csv")?)?, &curve, dir.comment())?;
        io::write_rows(io::create(&dir.path("runs.csv")?)?, &summary.runs.iter().map(RunRow::from).collect::<Vec<_>>(), dir.comment())?;
        dir.json("summary.json", &summary)?;
    }
    Ok(summary)
}

/// `runs.csv` row; the fault reason stays in `summary.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub eps: f64,
    pub seed: u64,
    pub iters_to_threshold: u64,
    pub reached: bool,
    pub final_error: f64,
    pub sup_jacobian: f64,
    pub fault: bool,
}

impl From<&ConditioningRun> for RunRow {
    fn from(r: &ConditioningRun) -> Self {
        Self {
            eps: r.eps,
            seed: r.seed,
            iters_to_threshold: r.iters_to_threshold,
            reached: r.reached,
            final_error: r.final_error,
            sup_jacobian: r.sup_jacobian,
            fault: r.fault.is_some(),
        }
    }
}

fn variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        f64::NAN
    } else {
        math::sample_variance(values)
    }
}

fn best_error(curve: &[CurveRow]) -> f64 {
    curve.iter().map(|c| c.error).fold(f64::INFINITY, f64::min)
}

/// Mean squared error of `t(eps z)` against `z`, per coordinate.
pub fn map_error(t: &MlpParams, z: &Matrix, eps: f64) -> Result<f64> {
    let mut x = z.clone();
    x.as_mut_slice().iter_mut().for_each(|v| *v *= eps);
    let y = predict(t, &x)?;
    let sq: Vec<f64> = y.as_slice().iter().zip(z.as_slice()).map(|(a, b)| (a - b) * (a - b)).collect();
    Ok(math::mean(&sq))
}

fn train_one(cfg: &ConditioningCommand, z: &Matrix, eps: f64, s: u64) -> Result<Trained> {
    let d = cfg.train.d;
    let train = TrainConfig { schedule: NoiseSchedule::Constant { eps }, seed: derive_seed(cfg.seed, s), ..cfg.train.clone() };
    let mut trainer = Trainer::new(train, Sampler::Spec(DatasetSpec::point_mass(d)), Sampler::Spec(DatasetSpec::gaussian(d)))?;
    let mut curve = Vec::new();
    let mut fault = None;
    while trainer.iteration() < cfg.train.iterations {
        match trainer.step() {
            Ok(_) => {}
            Err(e @ snot_core::Error::TrainingFault { .. }) => {
                fault = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e.into()),
        }
        let k = trainer.iteration();
        if k % cfg.eval_every == 0 || k == cfg.train.iterations {
            let error = map_error(trainer.map(), z, eps)?;
            curve.push(CurveRow { eps, seed: s, iter: k, error });
        }
    }
    if fault.is_some() {
        return Ok(Trained { curve, final_error: f64::NAN, sup_jacobian: f64::NAN, fault });
    }
    let mut probes = Matrix::zeros(cfg.probes, d);
    for i in 0..cfg.probes {
        for (p, v) in probes.row_mut(i).iter_mut().zip(z.row(i)) {
            *p = eps * v;
        }
    }
    let final_error = curve.last().map_or(f64::NAN, |c| c.error);
    Ok(Trained { curve, final_error, sup_jacobian: sup_jacobian_norm(trainer.map(), &probes)?, fault })
}
