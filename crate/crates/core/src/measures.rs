//! Weighted point clouds, synthetic dataset samplers and additive-noise
//! smoothing.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::check_dim;
use crate::rng::{stream_rng, streams, SnotRng};
use crate::{math, Error, Matrix, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A probability measure given by `N` weighted atoms in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    points: Matrix,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Validates nonnegative weights summing to one and finite points.
    pub fn new(points: Matrix, weights: Vec<f64>) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::Empty("measure"));
        }
        check_dim(points.rows(), weights.len())?;
        if !points.is_finite() {
            return Err(Error::Config("measure points must be finite"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("weights must be finite and nonnegative"));
        }
        let total = math::compensated_sum(&weights);
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Config("weights must sum to one"));
        }
        Ok(Self { points, weights })
    }

    /// Uniform weights `1/N` on the rows of `points`.
    pub fn uniform(points: Matrix) -> Result<Self> {
        let n = points.rows();
        if n == 0 {
            return Err(Error::Empty("measure"));
        }
        Self::new(points, vec![1.0 / n as f64; n])
    }

    /// Single atom at `location`.
    pub fn dirac(location: &[f64]) -> Self {
        Self {
            points: Matrix::from_vec(1, location.len(), location.to_vec()).expect("shape"),
            weights: vec![1.0],
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    #[inline]
    pub fn points(&self) -> &Matrix {
        &self.points
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i)
    }

    pub fn into_parts(self) -> (Matrix, Vec<f64>) {
        (self.points, self.weights)
    }

    /// Weighted mean of the atoms.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (row, w) in self.points.iter_rows().zip(&self.weights) {
            for (acc, x) in m.iter_mut().zip(row) {
                *acc += w * x;
            }
        }
        m
    }

    /// Keeps coordinates `range` of every atom.
    pub fn project(&self, range: core::ops::Range<usize>) -> Result<Self> {
        if range.end > self.dim() || range.start >= range.end {
            return Err(Error::Config("projection range out of bounds"));
        }
        let k = range.end - range.start;
        let mut data = Vec::with_capacity(self.len() * k);
        for row in self.points.iter_rows() {
            data.extend_from_slice(&row[range.clone()]);
        }
        Ok(Self { points: Matrix::from_vec(self.len(), k, data)?, weights: self.weights.clone() })
    }
}

/// Which synthetic distribution to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DatasetKind {
    /// Source: `Unif([-1,1]^m) x {0}^{d-m}`. Target: `{0}^{d-m} x Unif([-1,1]^m)`.
    Perpendicular,
    /// Source as `Perpendicular`. Target: first `m` coordinates uniform,
    /// coordinate `m` equal to `+1` or `-1` with probability one half.
    OneToMany,
    /// `Unif([low, high]^m)` on the first `m` coordinates, zeros elsewhere.
    UniformCubeEmbedded,
    /// All atoms at `(center, ..., center)`.
    PointMass,
    /// `N(center, scale^2 I_d)`.
    StandardGaussian,
    /// `Unif([low, high]^d)`, the full-dimensional box.
    UniformInterval,
}

/// Source or target role; only `Perpendicular` and `OneToMany` differ by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Side {
    #[default]
    Source,
    Target,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DatasetParams {
    pub low: f64,
    pub high: f64,
    pub center: f64,
    pub scale: f64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self { low: -1.0, high: 1.0, center: 0.0, scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    #[cfg_attr(feature = "serde", serde(default))]
    pub side: Side,
    pub ambient_dim: usize,
    pub manifold_dim: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub params: DatasetParams,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind, side: Side, ambient_dim: usize, manifold_dim: usize) -> Self {
        Self { kind, side, ambient_dim, manifold_dim, params: DatasetParams::default() }
    }

    pub fn with_params(mut self, params: DatasetParams) -> Self {
        self.params = params;
        self
    }

    pub fn point_mass(d: usize) -> Self {
        Self::new(DatasetKind::PointMass, Side::Source, d, d)
    }

    pub fn gaussian(d: usize) -> Self {
        Self::new(DatasetKind::StandardGaussian, Side::Source, d, d)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.ambient_dim;
        let m = self.manifold_dim;
        if d == 0 || m == 0 {
            return Err(Error::Config("dimensions must be positive"));
        }
        if m > d {
            return Err(Error::Config("manifold dimension exceeds ambient dimension"));
        }
        let p = &self.params;
        if !(p.low.is_finite() && p.high.is_finite() && p.low <= p.high) {
            return Err(Error::Config("interval must satisfy low <= high"));
        }
        if !(p.scale.is_finite() && p.scale >= 0.0) || !p.center.is_finite() {
            return Err(Error::Config("scale and center must be finite, scale >= 0"));
        }
        if self.kind == DatasetKind::OneToMany && self.side == Side::Target && m >= d {
            return Err(Error::Config("one-to-many target needs d > m"));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut SnotRng, out: &mut [f64]) {
        let d = self.ambient_dim;
        let m = self.manifold_dim;
        let p = &self.params;
        out.fill(0.0);
        match (self.kind, self.side) {
            (DatasetKind::Perpendicular, Side::Source)
            | (DatasetKind::OneToMany, Side::Source) => {
                for x in &mut out[..m] {
                    *x = rng.random_range(-1.0..=1.0);
                }
            }
            (DatasetKind::Perpendicular, Side::Target) => {
                for x in &mut out[d - m..] {
                    *x = rng.random_range(-1.0..=1.0);
                }
            }
            (DatasetKind::OneToMany, Side::Target) => {
                for x in &mut out[..m] {
                    *x = rng.random_range(-1.0..=1.0);
                }
                out[m] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            (DatasetKind::UniformCubeEmbedded, _) => {
                for x in &mut out[..m] {
                    *x = uniform(rng, p.low, p.high);
                }
            }
            (DatasetKind::PointMass, _) => out.fill(p.center),
            (DatasetKind::StandardGaussian, _) => {
                for x in out.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *x = p.center + p.scale * z;
                }
            }
            (DatasetKind::UniformInterval, _) => {
                for x in out.iter_mut() {
                    *x = uniform(rng, p.low, p.high);
                }
            }
        }
    }
}

fn uniform(rng: &mut SnotRng, low: f64, high: f64) -> f64 {
    if low == high {
        low
    } else {
        rng.random_range(low..=high)
    }
}

/// Draws `n` i.i.d. atoms with weights `1/n`.
pub fn sample(spec: &DatasetSpec, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
    let mut rng = stream_rng(seed, streams::SAMPLE);
    sample_with(spec, n, &mut rng)
}

/// Like [`sample`] but drawing from a caller-owned stream.
pub fn sample_with(spec: &DatasetSpec, n: usize, rng: &mut SnotRng) -> Result<EmpiricalMeasure> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Empty("sample count"));
    }
    let d = spec.ambient_dim;
    let mut points = Matrix::zeros(n, d);
    for i in 0..n {
        spec.draw(rng, points.row_mut(i));
    }
    EmpiricalMeasure::uniform(points)
}

/// Fills `out` (rows = batch) with draws from `spec`.
pub fn sample_into(spec: &DatasetSpec, rng: &mut SnotRng, out: &mut Matrix) {
    for i in 0..out.rows() {
        spec.draw(rng, out.row_mut(i));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NoiseKind {
    /// `Y ~ N(0, I_d)`.
    GaussianIsotropic,
    /// `Y` uniform on the closed unit ball of `R^d`.
    CompactUniformBall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub dim: usize,
}

impl NoiseModel {
    pub fn gaussian(dim: usize) -> Self {
        Self { kind: NoiseKind::GaussianIsotropic, dim }
    }

    pub fn uniform_ball(dim: usize) -> Self {
        Self { kind: NoiseKind::CompactUniformBall, dim }
    }

    /// Writes one draw of `Y` into `out`.
    pub fn draw(&self, rng: &mut SnotRng, out: &mut [f64]) {
        for y in out.iter_mut() {
            *y = StandardNormal.sample(rng);
        }
        if self.kind == NoiseKind::CompactUniformBall {
            let r = math::norm(out);
            let u: f64 = rng.random();
            let radius = math::powf(u, 1.0 / self.dim as f64);
            if r > 0.0 {
                for y in out.iter_mut() {
                    *y *= radius / r;
                }
            }
        }
    }
}

/// Returns the atoms `X_i + epsilon * Y_i` with the original weights.
pub fn smooth(
    measure: &EmpiricalMeasure,
    noise: &NoiseModel,
    epsilon: f64,
    seed: u64,
) -> Result<EmpiricalMeasure> {
    let mut rng = stream_rng(seed, streams::NOISE);
    smooth_with(measure, noise, epsilon, &mut rng)
}

pub fn smooth_with(
    measure: &EmpiricalMeasure,
    noise: &NoiseModel,
    epsilon: f64,
    rng: &mut SnotRng,
) -> Result<EmpiricalMeasure> {
    check_dim(measure.dim(), noise.dim)?;
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::Domain("epsilon must be finite and nonnegative"));
    }
    if epsilon == 0.0 {
        return Ok(measure.clone());
    }
    let mut points = measure.points.clone();
    let mut y = vec![0.0; noise.dim];
    for i in 0..points.rows() {
        noise.draw(rng, &mut y);
        for (x, yy) in points.row_mut(i).iter_mut().zip(&y) {
            *x += epsilon * yy;
        }
    }
    Ok(EmpiricalMeasure { points, weights: measure.weights.clone() })
}

/// Adds `epsilon * Y` to every row of `batch` in place.
pub fn perturb_rows(batch: &mut Matrix, noise: &NoiseModel, epsilon: f64, rng: &mut SnotRng) {
    if epsilon == 0.0 {
        return;
    }
    let mut y = vec![0.0; batch.cols()];
    for i in 0..batch.rows() {
        noise.draw(rng, &mut y);
        for (x, yy) in batch.row_mut(i).iter_mut().zip(&y) {
            *x += epsilon * yy;
        }
    }
}

/// Monte Carlo estimate of `E|Y|`.
pub fn mean_noise_norm(noise: &NoiseModel, n_mc: usize, seed: u64) -> f64 {
    let mut rng = stream_rng(seed, streams::MONTE_CARLO);
    let mut y = vec![0.0; noise.dim];
    let n = n_mc.max(1);
    let mut total = 0.0;
    for _ in 0..n {
        noise.draw(&mut rng, &mut y);
        total += math::norm(&y);
    }
    total / n as f64
}

/// Default Monte Carlo size for `E|Y|`.
pub const DEFAULT_NOISE_NORM_SAMPLES: usize = 100_000;

/// Memoizes [`mean_noise_norm`] per noise model.
#[derive(Debug, Default, Clone)]
pub struct NoiseNormCache {
    seed: u64,
    values: BTreeMap<NoiseModel, f64>,
}

impl NoiseNormCache {
    pub fn new(seed: u64) -> Self {
        Self { seed, values: BTreeMap::new() }
    }

    pub fn get(&mut self, noise: &NoiseModel) -> f64 {
        let seed = self.seed;
        *self
            .values
            .entry(*noise)
            .or_insert_with(|| mean_noise_norm(noise, DEFAULT_NOISE_NORM_SAMPLES, seed))
    }
}

/// Cell centers of a regular `per_axis^m` grid on `[low, high]^m`, embedded
/// in the first `m` of `d` coordinates with uniform weights.
pub fn grid_cube_embedded(m: usize, d: usize, per_axis: usize, low: f64, high: f64) -> Result<EmpiricalMeasure> {
    if m == 0 || m > d || per_axis == 0 {
        return Err(Error::Config("grid needs 0 < m <= d and per_axis > 0"));
    }
    let count = per_axis
        .checked_pow(m as u32)
        .ok_or(Error::Capacity { requested: usize::MAX, limit: 1 << 24 })?;
    let width = (high - low) / per_axis as f64;
    let mut points = Matrix::zeros(count, d);
    for idx in 0..count {
        let mut rem = idx;
        let row = points.row_mut(idx);
        for x in row.iter_mut().take(m) {
            let k = rem % per_axis;
            rem /= per_axis;
            *x = low + (k as f64 + 0.5) * width;
        }
    }
    EmpiricalMeasure::uniform(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_has_zero_atoms_and_uniform_weights() {
        let mu = sample(&DatasetSpec::point_mass(2), 3, 0).unwrap();
        assert!(mu.points().as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(mu.weights(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn perpendicular_source_lies_on_segment() {
        let spec = DatasetSpec::new(DatasetKind::Perpendicular, Side::Source, 2, 1);
        let mu = sample(&spec, 100, 11).unwrap();
        for row in mu.points().iter_rows() {
            assert_eq!(row[1], 0.0);
            assert!((-1.0..=1.0).contains(&row[0]));
        }
    }

    #[test]
    fn perpendicular_target_lies_on_other_segment() {
        let spec = DatasetSpec::new(DatasetKind::Perpendicular, Side::Target, 4, 2);
        let nu = sample(&spec, 50, 3).unwrap();
        for row in nu.points().iter_rows() {
            assert_eq!(&row[..2], &[0.0, 0.0]);
        }
    }

    #[test]
    fn one_to_many_target_is_balanced() {
        let spec = DatasetSpec::new(DatasetKind::OneToMany, Side::Target, 2, 1);
        let nu = sample(&spec, 4000, 5).unwrap();
        let plus = nu.points().iter_rows().filter(|r| r[1] == 1.0).count();
        let minus = nu.points().iter_rows().filter(|r| r[1] == -1.0).count();
        assert_eq!(plus + minus, 4000);
        let frac = plus as f64 / 4000.0;
        assert!((frac - 0.5).abs() < 0.03, "frac = {frac}");
    }

    #[test]
    fn invalid_spec_is_rejected() {
        let spec = DatasetSpec::new(DatasetKind::UniformCubeEmbedded, Side::Source, 2, 3);
        assert!(matches!(sample(&spec, 5, 0), Err(Error::Config(_))));
        assert!(matches!(sample(&DatasetSpec::gaussian(2), 0, 0), Err(Error::Empty(_))));
    }

    #[test]
    fn sampling_is_reproducible() {
        let spec = DatasetSpec::new(DatasetKind::UniformCubeEmbedded, Side::Source, 10, 3);
        let a = sample(&spec, 64, 42).unwrap();
        let b = sample(&spec, 64, 42).unwrap();
        assert_eq!(a, b);
        for row in a.points().iter_rows() {
            assert!(row[3..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn cube_first_moment_converges() {
        let spec = DatasetSpec::new(DatasetKind::UniformCubeEmbedded, Side::Source, 5, 3);
        let n = 100_000;
        let mu = sample(&spec, n, 9).unwrap();
        let bound = 3.0 / (n as f64).sqrt();
        for c in &mu.mean()[..3] {
            assert!(c.abs() < bound, "mean component {c}");
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let mu = sample(&DatasetSpec::gaussian(3), 20, 1).unwrap();
        let out = smooth(&mu, &NoiseModel::gaussian(3), 0.0, 2).unwrap();
        assert_eq!(out, mu);
    }

    #[test]
    fn smoothing_preserves_weights_and_checks_dimension() {
        let mu = sample(&DatasetSpec::gaussian(3), 20, 1).unwrap();
        let out = smooth(&mu, &NoiseModel::gaussian(3), 0.3, 2).unwrap();
        assert_eq!(out.weights(), mu.weights());
        assert_eq!(out.len(), mu.len());
        assert!(smooth(&mu, &NoiseModel::gaussian(2), 0.3, 2).is_err());
    }

    #[test]
    fn smoothed_dirac_moments() {
        // Monte Carlo moments of N(0, eps^2 I).
        let d = 3;
        let mu = sample(&DatasetSpec::point_mass(d), 10_000, 0).unwrap();
        let out = smooth(&mu, &NoiseModel::gaussian(d), 0.5, 17).unwrap();
        let mean = out.mean();
        let mean_norm = math::norm(&mean);
        assert!(mean_norm < 0.02 * (d as f64).sqrt(), "mean {mean_norm}");
        for j in 0..d {
            let col = out.points().column(j);
            let var = math::sample_variance(&col);
            assert!((var - 0.25).abs() < 0.025, "var {var}");
        }
    }

    #[test]
    fn smoothed_dirac_norm_matches_chi_mean() {
        // chi mean for d = 10: sqrt(2) Gamma(11/2) / Gamma(5).
        let chi10 = 2f64.sqrt() * 52.34277778455352 / 24.0;
        let mu = sample(&DatasetSpec::point_mass(10), 10_000, 0).unwrap();
        let out = smooth(&mu, &NoiseModel::gaussian(10), 1.0, 4).unwrap();
        let avg = out.points().iter_rows().map(math::norm).sum::<f64>() / 10_000.0;
        assert!((avg / chi10 - 1.0).abs() < 0.02, "{avg} vs {chi10}");
    }

    #[test]
    fn mean_noise_norm_closed_forms() {
        let half_normal = (2.0 / core::f64::consts::PI).sqrt();
        let g1 = mean_noise_norm(&NoiseModel::gaussian(1), 100_000, 1);
        assert!((g1 / half_normal - 1.0).abs() < 0.02);
        let g = mean_noise_norm(&NoiseModel::gaussian(400), 20_000, 1);
        assert!((g / 20.0 - 1.0).abs() < 0.05);
        let b1 = mean_noise_norm(&NoiseModel::uniform_ball(1), 100_000, 1);
        assert!((b1 - 0.5).abs() < 0.01);
    }

    #[test]
    fn uniform_ball_draws_stay_inside() {
        let noise = NoiseModel::uniform_ball(4);
        let mut rng = stream_rng(3, 0);
        let mut y = [0.0; 4];
        for _ in 0..1000 {
            noise.draw(&mut rng, &mut y);
            assert!(math::norm(&y) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn cache_returns_same_value() {
        let mut cache = NoiseNormCache::new(5);
        let a = cache.get(&NoiseModel::gaussian(2));
        let b = cache.get(&NoiseModel::gaussian(2));
        assert_eq!(a, b);
    }

    #[test]
    fn grid_has_expected_layout() {
        let g = grid_cube_embedded(3, 10, 4, -1.0, 1.0).unwrap();
        assert_eq!(g.len(), 64);
        assert!(g.mean().iter().all(|c| c.abs() < 1e-15));
        assert_eq!(g.point(0)[..3], [-0.75, -0.75, -0.75]);
    }
}
