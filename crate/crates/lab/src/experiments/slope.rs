//! `slope`: expected `W_2` between a fixed grid discretization of an
//! embedded cube and smoothed samples, across sample sizes, with a log-log
//! rate fit per noise level.
//!
//! Every `(n, replicate)` pair draws one clean sample and one set of noise
//! directions, shared by all noise levels, so the levels are compared on
//! common random numbers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use snot_core::discrete_ot::{wasserstein_with, Order};
use snot_core::measures::{
    grid_cube_embedded, sample_with, DatasetKind, DatasetParams, DatasetSpec, EmpiricalMeasure, NoiseModel, Side,
};
use snot_core::metrics::{fit_rate, RateFit, RatePoint};
use snot_core::rng::{derive_seed, stream_rng, streams};
use snot_core::Matrix;

use crate::config::SlopeCommand;
use crate::error::Result;
use crate::io;
use crate::run::{pool, RunDir};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub eps: f64,
    pub n: usize,
    pub replicate: usize,
    pub w2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointRow {
    pub eps: f64,
    pub n: u64,
    pub mean: f64,
    pub std_err: f64,
    pub replicates: usize,
}

/// The rate fit for one noise level, as emitted in `fits.json`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsFit {
    pub eps: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
}

impl EpsFit {
    fn new(eps: f64, f: RateFit) -> Self {
        Self { eps, slope: f.slope, intercept: f.intercept, r2: f.r2, n_points: f.n_points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeSummary {
    pub fits: Vec<EpsFit>,
    pub points: Vec<PointRow>,
    pub reference_atoms: usize,
    /// Sample sizes skipped for capacity and levels left without a fit.
    pub warnings: Vec<String>,
}

impl SlopeSummary {
    pub fn fit(&self, eps: f64) -> Option<&EpsFit> {
        self.fits.iter().find(|f| f.eps == eps)
    }
}

pub fn run(cfg: &SlopeCommand, dir: Option<&RunDir>, threads: Option<usize>) -> Result<SlopeSummary> {
    let reference = grid_cube_embedded(cfg.m, cfg.d, cfg.per_axis, cfg.low, cfg.high)?;
    let mut warnings = Vec::new();
    let mut sizes = Vec::new();
    for &n in &cfg.n {
        let entries = n.saturating_mul(reference.len());
        if entries > cfg.max_entries {
            let msg = format!("skipping n={n}: {entries} cost entries exceed max_entries={}", cfg.max_entries);
            eprintln!("warning: {msg}");
            warnings.push(msg);
        } else {
            sizes.push(n);
        }
    }

    let jobs: Vec<(usize, usize)> = sizes.iter().flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r))).collect();
    let per_job: Vec<Result<Vec<SlopeRow>>> =
        pool(threads).install(|| jobs.par_iter().map(|&(n, rep)| replicate(cfg, &reference, n, rep)).collect());
    let mut rows = Vec::new();
    for r in per_job {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| a.eps.total_cmp(&b.eps).then(a.n.cmp(&b.n)).then(a.replicate.cmp(&b.replicate)));

    let mut points = Vec::new();
    let mut fits = Vec::new();
    for &eps in &cfg.eps {
        let mut rate_points = Vec::new();
        for &n in &sizes {
            let values: Vec<f64> = rows.iter().filter(|r| r.eps == eps && r.n == n).map(|r| r.w2).collect();
            let p = RatePoint::from_replicates(n as u64, &values)?;
            points.push(PointRow { eps, n: p.n, mean: p.value, std_err: p.std_err, replicates: p.replicates });
            rate_points.push(p);
        }
        match fit_rate(&rate_points) {
            Ok(f) => fits.push(EpsFit::new(eps, f)),
            Err(e) => {
                let msg = format!("no fit at eps={eps}: {e}");
                eprintln!("warning: {msg}");
                warnings.push(msg);
            }
        }
    }

    let summary = SlopeSummary { fits, points, reference_atoms: reference.len(), warnings };
    if let Some(dir) = dir {
        io::write_rows(io::create(&dir.path("slope.csv")?)?, &rows, dir.comment())?;
        io::write_rows(io::create(&dir.path("points.csv")?)?, &summary.points, dir.comment())?;
        dir.json("fits.json", &summary.fits)?;
        dir.json("summary.json", &summary)?;
    }
    Ok(summary)
}

fn replicate(cfg: &SlopeCommand, reference: &EmpiricalMeasure, n: usize, rep: usize) -> Result<Vec<SlopeRow>> {
    let spec = DatasetSpec::new(DatasetKind::UniformCubeEmbedded, Side::Source, cfg.d, cfg.m)
        .with_params(DatasetParams { low: cfg.low, high: cfg.high, ..DatasetParams::default() });
    let seed = derive_seed(cfg.seed, ((n as u64) << 20) | rep as u64);
    let clean = sample_with(&spec, n, &mut stream_rng(seed, streams::SAMPLE))?;
    let noise = NoiseModel { kind: cfg.noise, dim: cfg.d };
    let mut z = Matrix::zeros(n, cfg.d);
    let mut rng = stream_rng(seed, streams::NOISE);
    for i in 0..n {
        noise.draw(&mut rng, z.row_mut(i));
    }
    let opts = cfg.solver();
    cfg.eps
        .iter()
        .map(|&eps| {
            let mut pts = clean.points().clone();
            for (p, dz) in pts.as_mut_slice().iter_mut().zip(z.as_slice()) {
                *p += eps * dz;
            }
            let smoothed = EmpiricalMeasure::uniform(pts)?;
            let w2 = wasserstein_with(reference, &smoothed, Order::Two, &opts)?;
            Ok(SlopeRow { eps, n, replicate: rep, w2 })
        })
        .collect()
}
