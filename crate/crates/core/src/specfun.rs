//! Scalar normal-distribution kernels evaluated in log space.
//!
//! Every tail quantity in the crate flows through [`log_phi_bar`] so that
//! probabilities far below the smallest positive double stay representable.

use crate::error::{Error, Result};
use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

/// ln(2π)/2.
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Above this point `erfc` would return subnormals; the Mills-ratio series
/// takes over.
const ASYMPTOTIC_CUTOFF: f64 = 37.5;

/// ln φ(x) for the standard normal density.
#[inline]
pub fn log_phi(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// ln Φ̄(x) = ln P(Z > x).
pub fn log_phi_bar(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > ASYMPTOTIC_CUTOFF {
        return log_phi_bar_asymptotic(x);
    }
    if x >= 0.0 {
        (0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln()
    } else {
        (-0.5 * libm::erfc(-x * FRAC_1_SQRT_2)).ln_1p()
    }
}

/// ln Φ(x) = ln P(Z ≤ x).
#[inline]
pub fn log_phi_cdf(x: f64) -> f64 {
    log_phi_bar(-x)
}

/// Φ̄(x), exposed only as the exponential of the log form.
#[inline]
pub fn phi_bar(x: f64) -> f64 {
    log_phi_bar(x).exp()
}

/// Φ(x).
#[inline]
pub fn phi_cdf(x: f64) -> f64 {
    log_phi_cdf(x).exp()
}

/// Inverse Mills ratio φ(x)/Φ̄(x), the derivative of −ln Φ̄.
#[inline]
pub fn hazard(x: f64) -> f64 {
    (log_phi(x) - log_phi_bar(x)).exp()
}

fn log_phi_bar_asymptotic(x: f64) -> f64 {
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    // Φ̄(x) = φ(x)/x · Σ_k (−1)^k (2k−1)!! / x^{2k}
    let t = 1.0 / (x * x);
    let mut term = 1.0;
    let mut tail = 0.0;
    for k in 1..12 {
        term *= -((2 * k - 1) as f64) * t;
        tail += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    log_phi(x) - x.ln() + tail.ln_1p()
}

/// ln(eᵃ + eᵇ).
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    if hi == f64::INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// ln Σ exp(xᵢ); −∞ for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

// Wichura's AS241 (PPND16) rational approximations.
const A: [f64; 8] = [
    3.387_132_872_796_366_5,
    133.141_667_891_784_38,
    1_971.590_950_306_551_3,
    13_731.693_765_509_461,
    45_921.953_931_549_87,
    67_265.770_927_008_7,
    33_430.575_583_588_13,
    2_509.080_928_730_122_7,
];
const B: [f64; 8] = [
    1.0,
    42.313_330_701_600_91,
    687.187_007_492_057_9,
    5_394.196_021_424_751,
    21_213.794_301_586_596,
    39_307.895_800_092_71,
    28_729.085_735_721_943,
    5_226.495_278_852_546,
];
const C: [f64; 8] = [
    1.423_437_110_749_683_6,
    4.630_337_846_156_546,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    0.241_780_725_177_450_6,
    0.022_723_844_989_269_184,
    7.745_450_142_783_414e-4,
];
const D: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    0.689_767_334_985_1,
    0.148_103_976_427_480_08,
    0.015_198_666_563_616_457,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_8e-9,
];
const E: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    0.296_560_571_828_504_9,
    0.026_532_189_526_576_124,
    0.001_242_660_947_388_078_4,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const F: [f64; 8] = [
    1.0,
    0.599_832_206_555_887_9,
    0.136_929_880_922_735_8,
    0.014_875_361_290_850_615,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

#[inline]
fn ratio(num: &[f64; 8], den: &[f64; 8], r: f64) -> f64 {
    let p = num.iter().rev().fold(0.0, |acc, &c| acc * r + c);
    let q = den.iter().rev().fold(0.0, |acc, &c| acc * r + c);
    p / q
}

/// Standard normal quantile Φ⁻¹(p) for p ∈ (0, 1).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(p));
    }
    Ok(quantile(p.ln(), (-p).ln_1p()))
}

/// Φ⁻¹(exp(log_p)) for log_p < 0, valid far below the double underflow
/// threshold.
pub fn normal_quantile_from_log(log_p: f64) -> Result<f64> {
    if !(log_p < 0.0) || log_p == f64::NEG_INFINITY {
        return Err(Error::Domain(log_p.exp()));
    }
    Ok(quantile(log_p, log_one_minus_exp(log_p)))
}

/// ln(1 − eˣ) for x < 0.
#[inline]
fn log_one_minus_exp(x: f64) -> f64 {
    if x > -LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

fn quantile(lp: f64, lq: f64) -> f64 {
    let lower = lp <= lq;
    let lmin = if lower { lp } else { lq };
    let p = lp.exp();
    let x = if (p - 0.5).abs() <= 0.425 {
        let q = p - 0.5;
        let r = 0.180_625 - q * q;
        return q * ratio(&A, &B, r);
    } else if lmin > -680.0 {
        let r = (-lmin).sqrt();
        let mag = if r <= 5.0 {
            ratio(&C, &D, r - 1.6)
        } else {
            ratio(&E, &F, r - 5.0)
        };
        if lower {
            -mag
        } else {
            mag
        }
    } else {
        // Beyond the rational fit: solve x² = 2L − ln(2πx²) by iteration.
        let big_l = -lmin;
        let mut x2 = 2.0 * big_l;
        for _ in 0..4 {
            x2 = 2.0 * big_l - (2.0 * PI * x2).ln();
        }
        if lower {
            -x2.sqrt()
        } else {
            x2.sqrt()
        }
    };
    if x.abs() > 5.0 {
        newton_polish(x, lp, lq, if lmin > -680.0 { 1 } else { 3 })
    } else {
        x
    }
}

/// Newton steps on the log tail probability of whichever side is small.
fn newton_polish(mut x: f64, lp: f64, lq: f64, steps: usize) -> f64 {
    for _ in 0..steps {
        if x < 0.0 {
            let lphi = log_phi_cdf(x);
            let slope = (log_phi(x) - lphi).exp();
            x -= (lphi - lp) / slope;
        } else {
            let lbar = log_phi_bar(x);
            let slope = -(log_phi(x) - lbar).exp();
            x -= (lbar - lq) / slope;
        }
    }
    x
}

/// u-quantile of N(mu, 1) truncated to (−∞, a).
///
/// Evaluated as `mu + Φ⁻¹(u · Φ(a − mu))` entirely in log space, so one
/// uniform maps monotonically to one draw even when Φ(a − mu) underflows.
/// The same `ln Φ(a − mu)` is returned alongside for reuse in likelihood
/// ratios.
pub fn trunc_norm_inverse_with_log_mass(mu: f64, a: f64, u: f64) -> Result<(f64, f64)> {
    if a == f64::NEG_INFINITY || a.is_nan() {
        return Err(Error::EmptyRegion);
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(u));
    }
    let log_mass = log_phi_cdf(a - mu);
    let lp = u.ln() + log_mass;
    let z = mu + quantile(lp, log_one_minus_exp(lp));
    Ok((z.min(a), log_mass))
}

/// u-quantile of N(mu, 1) truncated to (−∞, a).
pub fn trunc_norm_inverse(mu: f64, a: f64, u: f64) -> Result<f64> {
    trunc_norm_inverse_with_log_mass(mu, a, u).map(|(z, _)| z)
}
