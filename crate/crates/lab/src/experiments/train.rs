//! `train`: one or more schedules on paired seeds, with end-of-run metrics.

use rayon::prelude::*;
use serde::Serialize;
use snot_core::discrete_ot::SolverOptions;
use snot_core::measures::{sample_with, smooth_with, DatasetKind, DatasetSpec, EmpiricalMeasure, NoiseModel};
use snot_core::metrics::{d_cost_target_points, normal_error_points, tangential_error_points};
use snot_core::nn::{predict, MlpParams};
use snot_core::rng::{derive_seed, stream_rng, streams};
use snot_core::trainer::{amortization_gap, Sampler, TrainConfig, Trainer};

use crate::config::{EvalConfig, TrainCommand, Variant};
use crate::error::Result;
use crate::io;
use crate::run::{clock, mean_se, pool, RunDir};

/// Eval draws use their own seed so metrics do not depend on training draws.
const EVAL_LABEL: u64 = 0xe7a1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub variant: String,
    pub replicate: u64,
    pub seed: u64,
    pub iterations: u64,
    /// Noise level of the last completed iteration.
    pub final_eps: f64,
    /// Terminal level of the schedule; `normal_error` is measured there.
    pub eps_floor: f64,
    pub d_cost: f64,
    pub d_target: f64,
    pub tangential_error: Option<f64>,
    pub normal_error: Option<f64>,
    /// Normal error on the clean source.
    pub normal_error_clean: Option<f64>,
    /// Mean excess of the learned inner value over the batch c-transform.
    pub amortization_gap: f64,
    pub fault: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std_err: f64,
}

impl Stat {
    fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let (mean, std_err) = mean_se(values);
        Some(Stat { mean, std_err })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub name: String,
    pub runs: usize,
    pub faults: usize,
    pub d_cost: Option<Stat>,
    pub d_target: Option<Stat>,
    pub tangential_error: Option<Stat>,
    pub normal_error: Option<Stat>,
    pub normal_error_clean: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub runs: Vec<RunMetrics>,
    pub variants: Vec<VariantSummary>,
}

impl TrainSummary {
    pub fn faults(&self) -> usize {
        self.runs.iter().filter(|r| r.fault.is_some()).count()
    }

    /// Metrics of `variant`, ordered by replicate.
    pub fn variant_runs(&self, variant: &str) -> Vec<&RunMetrics> {
        self.runs.iter().filter(|r| r.variant == variant).collect()
    }
}

fn variants(cfg: &TrainCommand) -> Vec<Variant> {
    if cfg.variants.is_empty() {
        vec![Variant { name: "default".into(), schedule: cfg.train.schedule }]
    } else {
        cfg.variants.clone()
    }
}

pub fn run(cfg: &TrainCommand, dir: Option<&RunDir>, threads: Option<usize>) -> Result<TrainSummary> {
    let variants = variants(cfg);
    let jobs: Vec<(&Variant, u64)> = variants.iter().flat_map(|v| (0..cfg.replicates).map(move |r| (v, r))).collect();
    let results: Vec<Result<RunMetrics>> = pool(threads).install(|| jobs.par_iter().map(|&(v, rep)| run_one(cfg, v, rep, dir)).collect());
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    let summaries = variants
        .iter()
        .map(|v| {
            let mine: Vec<&RunMetrics> = runs.iter().filter(|r| r.variant == v.name && r.fault.is_none()).collect();
            let pick = |f: fn(&RunMetrics) -> Option<f64>| Stat::of(&mine.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            VariantSummary {
                name: v.name.clone(),
                runs: cfg.replicates as usize,
                faults: cfg.replicates as usize - mine.len(),
                d_cost: pick(|r| Some(r.d_cost)),
                d_target: pick(|r| Some(r.d_target)),
                tangential_error: pick(|r| r.tangential_error),
                normal_error: pick(|r| r.normal_error),
                normal_error_clean: pick(|r| r.normal_error_clean),
            }
        })
        .collect();
    let summary = TrainSummary { runs, variants: summaries };
    if let Some(dir) = dir {
        dir.json("summary.json", &summary)?;
    }
    Ok(summary)
}

fn run_one(cfg: &TrainCommand, variant: &Variant, rep: u64, dir: Option<&RunDir>) -> Result<RunMetrics> {
    let seed = derive_seed(cfg.seed, rep);
    let train = TrainConfig { schedule: variant.schedule, seed, ..cfg.train.clone() };
    let mut trainer = Trainer::new(train, Sampler::Spec(cfg.source), Sampler::Spec(cfg.target))?;
    let sub = format!("{}/rep{rep}", variant.name);

    let mut records = Vec::new();
    let outcome = trainer.run(&mut clock(cfg.wall_clock), &mut |r| records.push(*r));
    if let Some(dir) = dir {
        io::write_records(io::create(&dir.path(format!("{sub}/records.csv"))?)?, &records, dir.comment())?;
    }

    let mut metrics = match outcome {
        Ok(()) => evaluate(&EvalInputs { source: cfg.source, target: cfg.target, eval: cfg.eval, noise: cfg.train.noise_model(), eps_floor: variant.schedule.floor(), tau: cfg.train.tau, seed }, trainer.potential(), trainer.map())?,
        Err(e @ snot_core::Error::TrainingFault { .. }) => RunMetrics { fault: Some(e.to_string()), ..blank() },
        Err(e) => return Err(e.into()),
    };
    metrics.variant = variant.name.clone();
    metrics.replicate = rep;
    metrics.seed = seed;
    metrics.iterations = trainer.iteration();
    metrics.final_eps = match trainer.iteration() {
        0 => f64::NAN,
        k => variant.schedule.effective_eps(k - 1, cfg.train.batch_size),
    };
    metrics.eps_floor = variant.schedule.floor();

    if let Some(dir) = dir {
        dir.json(format!("{sub}/metrics.json"), &metrics)?;
        if metrics.fault.is_none() {
            io::write_checkpoint(io::create(&dir.path(format!("{sub}/map.ckpt.csv"))?)?, trainer.map(), dir.comment())?;
            io::write_checkpoint(io::create(&dir.path(format!("{sub}/potential.ckpt.csv"))?)?, trainer.potential(), dir.comment())?;
        }
    }
    Ok(metrics)
}

fn blank() -> RunMetrics {
    RunMetrics {
        variant: String::new(),
        replicate: 0,
        seed: 0,
        iterations: 0,
        final_eps: f64::NAN,
        eps_floor: f64::NAN,
        d_cost: f64::NAN,
        d_target: f64::NAN,
        tangential_error: None,
        normal_error: None,
        normal_error_clean: None,
        amortization_gap: f64::NAN,
        fault: None,
    }
}

/// What [`evaluate`] needs besides the networks.
#[derive(Debug, Clone, Copy)]
pub struct EvalInputs {
    pub source: DatasetSpec,
    pub target: DatasetSpec,
    pub eval: EvalConfig,
    pub noise: NoiseModel,
    pub eps_floor: f64,
    pub tau: f64,
    pub seed: u64,
}

/// End-of-run metrics on fresh clean samples. Tangential and normal errors
/// apply when the target is the perpendicular segment.
pub fn evaluate(inp: &EvalInputs, v: &MlpParams, t: &MlpParams) -> Result<RunMetrics> {
    let EvalInputs { source, target, eval, noise, eps_floor, tau, seed } = *inp;
    let mut rng = stream_rng(derive_seed(seed, EVAL_LABEL), streams::EVAL);
    let mu = sample_with(&source, eval.samples, &mut rng)?;
    let nu = sample_with(&target, eval.samples, &mut rng)?;
    let y = predict(t, mu.points())?;
    let (d_cost, d_target) = d_cost_target_points(&y, &mu, &nu, &SolverOptions::default())?;
    let gap = amortization_gap(v, t, mu.points(), nu.points(), tau)?;

    let (mut tangential, mut normal, mut normal_clean) = (None, None, None);
    if target.kind == DatasetKind::Perpendicular {
        let m = target.manifold_dim;
        tangential = Some(tangential_error_points(&y, mu.weights(), m)?);
        normal_clean = Some(normal_error_points(&y, mu.weights(), &target, eval.normal_atoms)?);
        let smoothed: EmpiricalMeasure = smooth_with(&mu, &noise, eps_floor, &mut rng)?;
        let ys = predict(t, smoothed.points())?;
        normal = Some(normal_error_points(&ys, smoothed.weights(), &target, eval.normal_atoms)?);
    }
    Ok(RunMetrics {
        d_cost,
        d_target,
        tangential_error: tangential,
        normal_error: normal,
        normal_error_clean: normal_clean,
        amortization_gap: gap,
        ..blank()
    })
}
