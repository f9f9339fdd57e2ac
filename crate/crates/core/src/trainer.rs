//! Max-min training of a potential network `V` and a map network `T`.
//!
//! The empirical objective is
//!
//! ```text
//! L(V, T) = mean_x [tau/2 |x - T(x)|^2 - V(T(x))] + mean_y [V(y)] - lambda R1(V)
//! ```
//!
//! with `R1(V) = mean_y |grad V(y)|^2`. `T` descends on `L`; `V` ascends on
//! it, so the penalty discourages steep potentials. Source batches are
//! smoothed as `x + eps * z` with `eps` taken from the noise schedule.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::discrete_ot::{Cost, SolverOptions};
use crate::error::check_dim;
use crate::measures::{perturb_rows, sample_into, DatasetSpec, EmpiricalMeasure, NoiseKind, NoiseModel};
use crate::metrics::d_cost_target;
use crate::nn::{backward, forward, grad_norm_penalty, predict, AdamConfig, AdamState, MlpParams};
use crate::rng::{stream_rng, streams, SnotRng};
use crate::schedule::NoiseSchedule;
use crate::{math, Error, Matrix, Result};

/// Losses above this magnitude abort training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TrainConfig {
    /// Ambient dimension of source and target.
    pub d: usize,
    pub hidden_width: usize,
    pub batch_size: usize,
    pub iterations: u64,
    /// Map updates per potential update.
    pub k_t: usize,
    pub lr: f64,
    pub tau: f64,
    pub lambda_r1: f64,
    pub schedule: NoiseSchedule,
    pub noise: NoiseKind,
    pub seed: u64,
    /// Record cadence in iterations; 0 records only the final iteration.
    pub log_every: u64,
    /// Source and target atoms for `d_cost` / `d_target` in records; 0 skips
    /// them.
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            d: 2,
            hidden_width: 256,
            batch_size: 128,
            iterations: 20_000,
            k_t: 20,
            lr: 1e-4,
            tau: 1.0,
            lambda_r1: 0.0,
            schedule: NoiseSchedule::Constant { eps: 0.0 },
            noise: NoiseKind::GaussianIsotropic,
            seed: 0,
            log_every: 1000,
            eval_samples: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.hidden_width == 0 || self.batch_size == 0 || self.k_t == 0 {
            return Err(Error::Config("d, hidden_width, batch_size and k_t must be positive"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Config("tau must be positive"));
        }
        if !(self.lambda_r1 >= 0.0) || !self.lambda_r1.is_finite() {
            return Err(Error::Config("lambda_r1 must be nonnegative"));
        }
        self.adam().validate()?;
        self.schedule.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { learning_rate: self.lr, ..AdamConfig::default() }
    }

    pub fn noise_model(&self) -> NoiseModel {
        NoiseModel { kind: self.noise, dim: self.d }
    }
}

/// One logged training step.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainRecord {
    /// Completed iterations.
    pub iter: u64,
    pub eps: f64,
    pub loss: f64,
    pub d_cost: f64,
    pub d_target: f64,
    pub wall_ms: u64,
}

/// Which network's gradient [`loss_minimax`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Player {
    Map,
    Potential,
}

#[derive(Debug, Clone)]
pub struct LossEval {
    /// `L(V, T)` including the `-lambda R1` term.
    pub value: f64,
    /// `R1(V)` on the target batch (zero when `lambda` is zero).
    pub r1: f64,
    /// Gradient of `value` with respect to the requested network.
    pub grads: MlpParams,
}

/// Empirical objective and the exact gradient for one player.
pub fn loss_minimax(
    v: &MlpParams,
    t: &MlpParams,
    x: &Matrix,
    y: &Matrix,
    tau: f64,
    lambda_r1: f64,
    player: Player,
) -> Result<LossEval> {
    if x.rows() == 0 || y.rows() == 0 {
        return Err(Error::Empty("training batch"));
    }
    check_dim(t.d_in(), x.cols())?;
    check_dim(t.d_out(), v.d_in())?;
    check_dim(v.d_in(), y.cols())?;
    check_dim(1, v.d_out())?;
    let bx = x.rows() as f64;
    let by = y.rows() as f64;

    let (tx, cache_t) = forward(t, x)?;
    let (vt, cache_vt) = forward(v, &tx)?;
    let mut value = 0.0;
    for i in 0..x.rows() {
        value += (0.5 * tau * math::sq_dist(x.row(i), tx.row(i)) - vt[(i, 0)]) / bx;
    }

    let grads;
    let mut r1 = 0.0;
    match player {
        Player::Map => {
            value += predict(v, y)?.as_slice().iter().sum::<f64>() / by;
            if lambda_r1 != 0.0 {
                let mut scratch = v.zeros_like();
                r1 = grad_norm_penalty(v, y, 0.0, &mut scratch)?;
            }
            let ones = Matrix::from_vec(x.rows(), 1, vec![1.0; x.rows()])?;
            let grad_v = backward(v, &cache_vt, &ones)?.input;
            let mut g = Matrix::zeros(x.rows(), x.cols());
            for i in 0..x.rows() {
                let (xi, ti, gv) = (x.row(i), tx.row(i), grad_v.row(i));
                for (k, out) in g.row_mut(i).iter_mut().enumerate() {
                    *out = (tau * (ti[k] - xi[k]) - gv[k]) / bx;
                }
            }
            grads = backward(t, &cache_t, &g)?.params;
        }
        Player::Potential => {
            let (vy, cache_vy) = forward(v, y)?;
            value += vy.as_slice().iter().sum::<f64>() / by;
            let down = Matrix::from_vec(x.rows(), 1, vec![-1.0 / bx; x.rows()])?;
            let up = Matrix::from_vec(y.rows(), 1, vec![1.0 / by; y.rows()])?;
            let mut g = backward(v, &cache_vt, &down)?.params;
            g.axpy(1.0, &backward(v, &cache_vy, &up)?.params);
            if lambda_r1 != 0.0 {
                r1 = grad_norm_penalty(v, y, -lambda_r1, &mut g)?;
            }
            grads = g;
        }
    }
    value -= lambda_r1 * r1;
    Ok(LossEval { value, r1, grads })
}

/// `T` applied row-wise.
pub fn recovered_map_eval(t: &MlpParams, x: &Matrix) -> Result<Matrix> {
    predict(t, x)
}

/// Mean excess of the amortized inner value `c(x, T(x)) - V(T(x))` over the
/// discrete c-transform taken over the target batch. Negative values mean
/// `T` beats every batch candidate.
pub fn amortization_gap(v: &MlpParams, t: &MlpParams, x: &Matrix, y: &Matrix, tau: f64) -> Result<f64> {
    let tx = predict(t, x)?;
    let vt = predict(v, &tx)?;
    let vy = predict(v, y)?;
    let cost = Cost::new(crate::discrete_ot::CostKind::SqEuclideanHalf, tau)?;
    let mut total = 0.0;
    for i in 0..x.rows() {
        let xi = x.row(i);
        let amortized = cost.eval(xi, tx.row(i)) - vt[(i, 0)];
        let best = y.iter_rows().zip(vy.as_slice()).map(|(yj, v)| cost.eval(xi, yj) - v).fold(f64::INFINITY, f64::min);
        total += amortized - best;
    }
    Ok(total / x.rows() as f64)
}

/// Where batches come from.
#[derive(Debug, Clone)]
pub enum Sampler {
    /// Fresh i.i.d. draws from a synthetic law.
    Spec(DatasetSpec),
    /// Draws with replacement from a fixed weighted sample.
    Empirical(EmpiricalMeasure),
}

impl Sampler {
    pub fn dim(&self) -> usize {
        match self {
            Sampler::Spec(s) => s.ambient_dim,
            Sampler::Empirical(m) => m.dim(),
        }
    }
}

#[derive(Debug, Clone)]
struct BatchSource {
    sampler: Sampler,
    cdf: Vec<f64>,
}

impl BatchSource {
    fn new(sampler: Sampler) -> Result<Self> {
        let cdf = match &sampler {
            Sampler::Spec(s) => {
                s.validate()?;
                Vec::new()
            }
            Sampler::Empirical(m) => {
                let mut acc = 0.0;
                m.weights()
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect()
            }
        };
        Ok(Self { sampler, cdf })
    }

    fn fill(&self, rng: &mut SnotRng, out: &mut Matrix) {
        match &self.sampler {
            Sampler::Spec(s) => sample_into(s, rng, out),
            Sampler::Empirical(m) => {
                let total = *self.cdf.last().expect("nonempty measure");
                for i in 0..out.rows() {
                    let u: f64 = rng.random::<f64>() * total;
                    let j = self.cdf.partition_point(|&c| c <= u).min(m.len() - 1);
                    out.row_mut(i).copy_from_slice(m.point(j));
                }
            }
        }
    }
}

/// Fills `out` with a source batch smoothed at level `eps`: the same draws
/// as `sample_with` followed by `smooth_with` on the respective streams.
pub fn smoothed_batch(spec: &DatasetSpec, noise: &NoiseModel, eps: f64, rng_source: &mut SnotRng, rng_noise: &mut SnotRng, out: &mut Matrix) {
    sample_into(spec, rng_source, out);
    perturb_rows(out, noise, eps, rng_noise);
}

/// Per-iteration summary from [`Trainer::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// 0-based index of the iteration just run.
    pub iteration: u64,
    pub eps: f64,
    pub loss: f64,
}

/// Training state; drive it with [`Trainer::step`] or [`Trainer::run`].
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    noise: NoiseModel,
    source: BatchSource,
    target: BatchSource,
    v: MlpParams,
    t: MlpParams,
    adam_v: AdamState,
    adam_t: AdamState,
    rng_source: SnotRng,
    rng_target: SnotRng,
    rng_noise: SnotRng,
    iteration: u64,
    x: Matrix,
    y: Matrix,
}

impl Trainer {
    pub fn new(config: TrainConfig, source: Sampler, target: Sampler) -> Result<Self> {
        config.validate()?;
        check_dim(config.d, source.dim())?;
        check_dim(config.d, target.dim())?;
        let v = MlpParams::init(config.d, config.hidden_width, 1, &mut stream_rng(config.seed, streams::INIT_POTENTIAL));
        let t = MlpParams::init(config.d, config.hidden_width, config.d, &mut stream_rng(config.seed, streams::INIT_MAP));
        Self::with_params(config, source, target, v, t)
    }

    /// Starts from given networks instead of the seeded initialization.
    pub fn with_params(config: TrainConfig, source: Sampler, target: Sampler, v: MlpParams, t: MlpParams) -> Result<Self> {
        config.validate()?;
        check_dim(config.d, v.d_in())?;
        check_dim(1, v.d_out())?;
        check_dim(config.d, t.d_in())?;
        check_dim(config.d, t.d_out())?;
        let adam = config.adam();
        Ok(Self {
            noise: config.noise_model(),
            source: BatchSource::new(source)?,
            target: BatchSource::new(target)?,
            adam_v: AdamState::new(adam, &v),
            adam_t: AdamState::new(adam, &t),
            rng_source: stream_rng(config.seed, streams::TRAIN_SOURCE),
            rng_target: stream_rng(config.seed, streams::TRAIN_TARGET),
            rng_noise: stream_rng(config.seed, streams::TRAIN_NOISE),
            iteration: 0,
            x: Matrix::zeros(config.batch_size, config.d),
            y: Matrix::zeros(config.batch_size, config.d),
            v,
            t,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn potential(&self) -> &MlpParams {
        &self.v
    }

    pub fn map(&self) -> &MlpParams {
        &self.t
    }

    /// Completed iterations.
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn into_params(self) -> (MlpParams, MlpParams) {
        (self.v, self.t)
    }

    /// Noise level for the next iteration.
    pub fn current_eps(&self) -> f64 {
        self.config.schedule.effective_eps(self.iteration, self.config.batch_size)
    }

    fn draw_source(&mut self, eps: f64) {
        self.source.fill(&mut self.rng_source, &mut self.x);
        perturb_rows(&mut self.x, &self.noise, eps, &mut self.rng_noise);
    }

    fn check_loss(&self, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::TrainingFault { iteration: self.iteration, reason: "non-finite loss" });
        }
        if value.abs() > DIVERGENCE_THRESHOLD {
            return Err(Error::TrainingFault { iteration: self.iteration, reason: "loss diverged" });
        }
        Ok(())
    }

    /// `k_t` map steps on fresh smoothed batches, then one potential step.
    pub fn step(&mut self) -> Result<StepReport> {
        let eps = self.current_eps();
        let (tau, lambda) = (self.config.tau, self.config.lambda_r1);
        for _ in 0..self.config.k_t {
            self.draw_source(eps);
            let eval = loss_minimax(&self.v, &self.t, &self.x, &self.y, tau, 0.0, Player::Map)?;
            self.check_loss(eval.value)?;
            self.adam_t.step(&mut self.t, &eval.grads).map_err(|e| self.fault(e))?;
        }
        self.draw_source(eps);
        self.target.fill(&mut self.rng_target, &mut self.y);
        let mut eval = loss_minimax(&self.v, &self.t, &self.x, &self.y, tau, lambda, Player::Potential)?;
        self.check_loss(eval.value)?;
        // Ascent on L.
        eval.grads.scale(-1.0);
        self.adam_v.step(&mut self.v, &eval.grads).map_err(|e| self.fault(e))?;
        let report = StepReport { iteration: self.iteration, eps, loss: eval.value };
        self.iteration += 1;
        Ok(report)
    }

    fn fault(&self, e: Error) -> Error {
        match e {
            Error::TrainingFault { reason, .. } => Error::TrainingFault { iteration: self.iteration, reason },
            other => other,
        }
    }

    /// Runs the remaining iterations, handing a [`TrainRecord`] to `sink` at
    /// the configured cadence and after the final iteration. `clock` returns
    /// elapsed milliseconds.
    pub fn run(&mut self, clock: &mut dyn FnMut() -> u64, sink: &mut dyn FnMut(&TrainRecord)) -> Result<()> {
        let eval = EvalSet::new(&self.config, &self.source, &self.target)?;
        let total = self.config.iterations;
        while self.iteration < total {
            let report = self.step()?;
            let done = self.iteration;
            let log_now = done == total || (self.config.log_every > 0 && done % self.config.log_every == 0);
            if log_now {
                let (d_cost, d_target) = match &eval {
                    Some(e) => e.evaluate(&self.t, &self.noise, report.eps)?,
                    None => (f64::NAN, f64::NAN),
                };
                sink(&TrainRecord { iter: done, eps: report.eps, loss: report.loss, d_cost, d_target, wall_ms: clock() });
            }
        }
        Ok(())
    }
}

/// Fixed evaluation draws: clean source atoms with fixed noise directions,
/// so records at different noise levels differ only through `eps`.
struct EvalSet {
    x: Matrix,
    z: Matrix,
    nu: EmpiricalMeasure,
}

impl EvalSet {
    fn new(config: &TrainConfig, source: &BatchSource, target: &BatchSource) -> Result<Option<Self>> {
        let n = config.eval_samples;
        if n == 0 {
            return Ok(None);
        }
        let mut rng = stream_rng(config.seed, streams::EVAL);
        let mut x = Matrix::zeros(n, config.d);
        source.fill(&mut rng, &mut x);
        let mut z = Matrix::zeros(n, config.d);
        perturb_rows(&mut z, &config.noise_model(), 1.0, &mut rng);
        let mut y = Matrix::zeros(n, config.d);
        target.fill(&mut rng, &mut y);
        Ok(Some(Self { x, z, nu: EmpiricalMeasure::uniform(y)? }))
    }

    fn evaluate(&self, t: &MlpParams, _noise: &NoiseModel, eps: f64) -> Result<(f64, f64)> {
        let mut xs = self.x.clone();
        for (a, b) in xs.as_mut_slice().iter_mut().zip(self.z.as_slice()) {
            *a += eps * b;
        }
        let mu = EmpiricalMeasure::uniform(xs)?;
        d_cost_target(t, &mu, &self.nu, &SolverOptions::default())
    }
}

/// Trained networks.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub potential: MlpParams,
    pub map: MlpParams,
}

/// Seeded initialization followed by [`Trainer::run`].
pub fn train(
    config: TrainConfig,
    source: DatasetSpec,
    target: DatasetSpec,
    clock: &mut dyn FnMut() -> u64,
    sink: &mut dyn FnMut(&TrainRecord),
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config, Sampler::Spec(source), Sampler::Spec(target))?;
    trainer.run(clock, sink)?;
    let (potential, map) = trainer.into_params();
    Ok(TrainOutcome { potential, map })
}
