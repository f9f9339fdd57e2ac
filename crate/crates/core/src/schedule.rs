//! Noise-level schedules for training on smoothed sources.
//!
//! Iterations are 0-based. After iteration `k` the trainer has drawn
//! `n = (k + 1) * batch_size` source samples; rate-optimal levels are read
//! off that count at the start of each period and held for `period`
//! iterations.

use alloc::vec::Vec;

use crate::{math, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields))]
pub enum NoiseSchedule {
    Constant {
        eps: f64,
    },
    /// Linear interpolation from `sigma_max` to `sigma_min` over `total`
    /// iterations, updated every `period` iterations.
    StepwiseLinear {
        sigma_max: f64,
        sigma_min: f64,
        period: u64,
        total: u64,
    },
    /// `max(epsilon_stat(n), eps_min)`, updated every `period` iterations.
    RateOptimal {
        m: u32,
        e_abs_y: f64,
        c0: f64,
        eps_min: f64,
        period: u64,
    },
}

impl NoiseSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { eps } => eps >= 0.0 && eps.is_finite(),
            Self::StepwiseLinear { sigma_max, sigma_min, period, total } => {
                sigma_min >= 0.0 && sigma_max >= sigma_min && sigma_max.is_finite() && period >= 1 && total >= 1
            }
            Self::RateOptimal { m, e_abs_y, c0, eps_min, period } => {
                m >= 1 && e_abs_y > 0.0 && c0 > 0.0 && eps_min >= 0.0 && eps_min.is_finite() && period >= 1
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("invalid noise schedule parameters"))
        }
    }

    /// Noise level used at 0-based `iteration`.
    pub fn effective_eps(&self, iteration: u64, batch_size: usize) -> f64 {
        match *self {
            Self::Constant { eps } => eps,
            Self::StepwiseLinear { sigma_max, sigma_min, period, total } => {
                let k0 = iteration / period * period;
                let t = ((k0 + 1) as f64 / total as f64).min(1.0);
                (1.0 - t) * sigma_max + t * sigma_min
            }
            Self::RateOptimal { m, e_abs_y, c0, eps_min, period } => {
                let k0 = iteration / period * period;
                let n = (k0 + 1).saturating_mul(batch_size as u64);
                rate_optimal_level(n, m, e_abs_y, c0, eps_min)
            }
        }
    }

    /// Noise level as a function of samples seen, ignoring the period grid.
    /// Only meaningful for `Constant` and `RateOptimal`.
    pub fn eps_for_samples(&self, n: u64) -> f64 {
        match *self {
            Self::Constant { eps } => eps,
            Self::StepwiseLinear { sigma_max, .. } => sigma_max,
            Self::RateOptimal { m, e_abs_y, c0, eps_min, .. } => rate_optimal_level(n, m, e_abs_y, c0, eps_min),
        }
    }

    /// Smallest level the schedule can reach.
    pub fn floor(&self) -> f64 {
        match *self {
            Self::Constant { eps } => eps,
            Self::StepwiseLinear { sigma_min, .. } => sigma_min,
            Self::RateOptimal { eps_min, .. } => eps_min,
        }
    }
}

fn rate_optimal_level(n: u64, m: u32, e_abs_y: f64, c0: f64, eps_min: f64) -> f64 {
    // n >= 2 whenever batch_size >= 2; fall back to the floor otherwise.
    epsilon_stat(n, m, e_abs_y, c0).map_or(eps_min, |e| e.max(eps_min))
}

/// `c0 / E|Y|` times `N^{-1/2}` (m = 1), `sqrt(ln N / N)` (m = 2) or
/// `N^{-1/m}` (m >= 3).
pub fn epsilon_stat(n: u64, m: u32, e_abs_y: f64, c0: f64) -> Result<f64> {
    if m == 0 || !(e_abs_y > 0.0) || !(c0 > 0.0) {
        return Err(Error::Domain("epsilon_stat needs m >= 1 and positive constants"));
    }
    if n == 0 || (m == 2 && n < 2) {
        return Err(Error::Domain("epsilon_stat sample count too small"));
    }
    let nf = n as f64;
    let base = match m {
        1 => 1.0 / math::sqrt(nf),
        2 => math::sqrt(math::ln(nf) / nf),
        3 => 1.0 / math::cbrt(nf),
        _ => math::powf(nf, -1.0 / m as f64),
    };
    Ok(c0 / e_abs_y * base)
}

/// Smallest `N` with `epsilon_stat(N) <= eps`. Saturates at `u64::MAX`.
pub fn crossover_n(m: u32, e_abs_y: f64, c0: f64, eps: f64) -> Result<u64> {
    if !(eps > 0.0) {
        return Err(Error::Domain("crossover needs a positive noise level"));
    }
    let f = |n: u64| epsilon_stat(n, m, e_abs_y, c0);
    // For m = 2 the rate increases from N = 2 to N = 3 and decreases after.
    let mut lo = if m == 2 { 2 } else { 1 };
    if f(lo)? <= eps {
        return Ok(lo);
    }
    if m == 2 {
        lo = 3;
        if f(lo)? <= eps {
            return Ok(lo);
        }
    }
    // Invariant: f(lo) > eps.
    let mut hi = lo;
    loop {
        if hi >= u64::MAX / 2 {
            return Ok(u64::MAX);
        }
        hi *= 2;
        if f(hi)? <= eps {
            break;
        }
        lo = hi;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(mid)? <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// One row of a schedule trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: u64,
    /// Samples seen after this iteration.
    pub n: u64,
    pub eps: f64,
}

pub fn trace(schedule: &NoiseSchedule, iterations: u64, batch_size: usize) -> Vec<TracePoint> {
    (0..iterations)
        .map(|k| TracePoint {
            iteration: k,
            n: (k + 1) * batch_size as u64,
            eps: schedule.effective_eps(k, batch_size),
        })
        .collect()
}
