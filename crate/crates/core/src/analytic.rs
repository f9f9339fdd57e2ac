//! Closed-form transport maps used as test oracles.

use alloc::vec::Vec;

use crate::measures::EmpiricalMeasure;
use crate::{math, Error, Matrix, Result};

const SQRT_2: f64 = core::f64::consts::SQRT_2;
/// `1 / sqrt(2 pi)`.
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF, `erfc(-x / sqrt 2) / 2`.
///
/// `libm::erfc` is a port of the FreeBSD/Sun implementation (rational
/// approximations on five intervals, error below 1 ulp), which keeps relative
/// accuracy in the lower tail where `1 - erfc` would cancel.
pub fn phi_cdf(x: f64) -> f64 {
    0.5 * math::erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn phi_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * math::exp(-0.5 * x * x)
}

/// Inverse of [`phi_cdf`] on `(0, 1)`: Acklam's rational approximation
/// (relative error about 1e-9) followed by one Halley step against
/// [`phi_cdf`].
pub fn phi_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain("normal quantile needs p in (0, 1)"));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    let x = if p < P_LOW {
        let q = math::sqrt(-2.0 * math::ln(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = math::sqrt(-2.0 * math::ln(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = phi_cdf(x) - p;
    let u = e / phi_pdf(x);
    Ok(x - u / (1.0 + 0.5 * x * u))
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain("noise level must be positive"))
    }
}

/// Monotone map `2 Phi(x / eps) - 1` from `N(0, eps^2)` to `Unif(-1, 1)`.
pub fn map_gauss_to_uniform(x: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(2.0 * phi_cdf(x / eps) - 1.0)
}

/// Derivative `2 phi(x / eps) / eps` of [`map_gauss_to_uniform`].
pub fn map_gauss_to_uniform_derivative(x: f64, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(2.0 * phi_pdf(x / eps) / eps)
}

/// Pointwise limit of `Phi(x / eps)` as `eps -> 0`: a step with value one
/// half at the origin.
pub fn map_degenerate_limit(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x > 0.0 {
        1.0
    } else {
        0.5
    }
}

/// `x / eps`, the map from `delta_0` smoothed by `N(0, eps^2 I)` to `N(0, I)`.
pub fn map_delta_to_gaussian(x: &[f64], eps: f64) -> Result<Vec<f64>> {
    check_eps(eps)?;
    Ok(x.iter().map(|v| v / eps).collect())
}

/// Jacobian of [`map_delta_to_gaussian`]: `I / eps`.
pub fn map_delta_to_gaussian_jacobian(d: usize, eps: f64) -> Result<Matrix> {
    check_eps(eps)?;
    let mut j = Matrix::identity(d);
    j.as_mut_slice().iter_mut().for_each(|v| *v /= eps);
    Ok(j)
}

/// Uniform 1D measure on the midpoint quantiles `sigma Phi^{-1}((i + 1/2) / n)`
/// of `N(0, sigma^2)`.
pub fn gaussian_quantile_atoms(n: usize, sigma: f64) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::Empty("quantile atoms"));
    }
    let pts = (0..n)
        .map(|i| phi_inv((i as f64 + 0.5) / n as f64).map(|z| sigma * z))
        .collect::<Result<Vec<f64>>>()?;
    EmpiricalMeasure::uniform(Matrix::from_vec(n, 1, pts)?)
}

/// Uniform 1D measure on the midpoint quantiles of `Unif(low, high)`.
pub fn uniform_quantile_atoms(n: usize, low: f64, high: f64) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::Empty("quantile atoms"));
    }
    let pts = (0..n).map(|i| low + (high - low) * (i as f64 + 0.5) / n as f64).collect();
    EmpiricalMeasure::uniform(Matrix::from_vec(n, 1, pts)?)
}
