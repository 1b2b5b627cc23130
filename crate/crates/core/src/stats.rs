//! Log-scaled moment accumulation and estimate reporting.
//!
//! Values are stored as `v = sign · exp(log_abs)`. The accumulator keeps
//! central moments of `v / exp(scale)` where `scale` is the largest
//! `log_abs` seen so far, so magnitudes far below 1e-300 keep full relative
//! precision and signed kernels need no special treatment.

use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogAccumulator {
    n: u64,
    scale: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Default for LogAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl LogAccumulator {
    pub fn new() -> Self {
        LogAccumulator { n: 0, scale: f64::NEG_INFINITY, mean: 0.0, m2: 0.0, m3: 0.0, m4: 0.0 }
    }

    #[inline]
    pub fn count(&self) -> u64 {
        self.n
    }

    fn rescale_to(&mut self, scale: f64) {
        if self.scale == f64::NEG_INFINITY {
            self.scale = scale;
            return;
        }
        let r = (self.scale - scale).exp();
        let r2 = r * r;
        self.mean *= r;
        self.m2 *= r2;
        self.m3 *= r2 * r;
        self.m4 *= r2 * r2;
        self.scale = scale;
    }

    /// Adds `sign · exp(log_abs)`. `log_abs = −∞` (or `sign = 0`) adds a zero.
    #[inline]
    pub fn push_log(&mut self, log_abs: f64, sign: f64) {
        let x = if sign == 0.0 || log_abs == f64::NEG_INFINITY {
            0.0
        } else {
            if log_abs > self.scale {
                self.rescale_to(log_abs);
            }
            sign.signum() * (log_abs - self.scale).exp()
        };
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * (n - 1.0);
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    /// Adds a plain value.
    #[inline]
    pub fn push(&mut self, v: f64) {
        if v == 0.0 {
            self.push_log(f64::NEG_INFINITY, 0.0);
        } else {
            self.push_log(v.abs().ln(), v.signum());
        }
    }

    /// Combines two accumulators as if their streams were concatenated.
    pub fn merge(&mut self, other: &LogAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let mut b = *other;
        if b.scale > self.scale {
            self.rescale_to(b.scale);
        } else if self.scale > b.scale {
            b.rescale_to(self.scale);
        }
        let (na, nb) = (self.n as f64, b.n as f64);
        let n = na + nb;
        let delta = b.mean - self.mean;
        let d2 = delta * delta;
        let m2 = self.m2 + b.m2 + d2 * na * nb / n;
        let m3 = self.m3 + b.m3 + d2 * delta * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * b.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + b.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * b.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * b.m3 - nb * self.m3) / n;
        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.n += b.n;
    }

    /// `(ln |mean|, sign)`; `(−∞, 0)` when the mean is zero.
    pub fn log_mean(&self) -> Result<(f64, f64)> {
        if self.n == 0 {
            return Err(Error::Insufficient { needed: 1, have: 0 });
        }
        if self.mean == 0.0 {
            return Ok((f64::NEG_INFINITY, 0.0));
        }
        Ok((self.mean.abs().ln() + self.scale, self.mean.signum()))
    }

    /// ln of the unbiased sample variance.
    pub fn log_var(&self) -> Result<f64> {
        if self.n < 2 {
            return Err(Error::Insufficient { needed: 2, have: self.n });
        }
        let s2 = (self.m2 / (self.n - 1) as f64).max(0.0);
        Ok(s2.ln() + 2.0 * self.scale)
    }

    /// `(ln mean, ln unbiased variance)` for nonnegative kernels.
    pub fn log_mean_var(&self) -> Result<(f64, f64)> {
        let (lm, _) = self.log_mean()?;
        Ok((lm, self.log_var()?))
    }

    /// ln of the raw second moment `(1/n) Σ v²`.
    pub fn log_second_moment(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::Insufficient { needed: 1, have: 0 });
        }
        let raw = self.m2 / self.n as f64 + self.mean * self.mean;
        Ok(raw.ln() + 2.0 * self.scale)
    }

    /// ln of the fourth central sample moment `(1/n) Σ (v − v̄)⁴`.
    pub fn log_fourth_central(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::Insufficient { needed: 1, have: 0 });
        }
        Ok((self.m4 / self.n as f64).ln() + 4.0 * self.scale)
    }

    /// Scale-free `Var̂(S²) / S⁴`, with
    /// `Var̂(S²) = (1/n)(m₄ − (n−3)/(n−1)·S⁴)`. Zero for constant samples.
    pub fn var_of_var_ratio(&self) -> Result<f64> {
        if self.n < 4 {
            return Err(Error::Insufficient { needed: 4, have: self.n });
        }
        let n = self.n as f64;
        let s2 = self.m2 / (n - 1.0);
        if s2 == 0.0 {
            return Ok(0.0);
        }
        let m4 = self.m4 / n;
        Ok((m4 - (n - 3.0) / (n - 1.0) * s2 * s2) / n / (s2 * s2))
    }

    /// ln Var̂(S²); −∞ for constant samples or a nonpositive estimate.
    pub fn log_sample_var_of_var(&self) -> Result<f64> {
        let ratio = self.var_of_var_ratio()?;
        if ratio <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(ratio.ln() + 2.0 * self.log_var()?)
    }
}

/// `100·sqrt(Var/n)/|mean|` from log quantities; 100% when the mean is zero.
pub fn relative_error(log_mean: f64, log_var: f64, n: u64) -> f64 {
    if log_mean == f64::NEG_INFINITY {
        return 100.0;
    }
    if log_var == f64::NEG_INFINITY {
        return 0.0;
    }
    100.0 * (0.5 * log_var - 0.5 * (n as f64).ln() - log_mean).exp()
}

/// Work-normalized relative variance, `(RE/100)²·seconds`.
pub fn wnrv(re_percent: f64, wall_seconds: f64) -> f64 {
    let r = re_percent / 100.0;
    r * r * wall_seconds
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EstimateFlags {
    /// A tilt optimizer did not converge; its best iterate was used.
    pub optimizer_fallback: bool,
    /// Every replication returned zero; estimate 0 and RE 100% by convention.
    pub all_zero: bool,
    /// Fewer than two replications, so no variance is available.
    pub no_variance: bool,
    /// Some stratum received no replications.
    pub empty_stratum: bool,
}

/// A Monte Carlo result held in log space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEstimate {
    /// Natural log of |estimate|; −∞ for a zero estimate.
    pub log_mean: f64,
    /// −1, 0 or 1.
    pub sign: f64,
    /// Natural log of the estimator variance Var(ℓ̂), i.e. per-replication
    /// variance divided by n.
    pub log_var_estimator: f64,
    pub n: u64,
    pub re_percent: f64,
    pub wall_seconds: f64,
    pub flags: EstimateFlags,
}

impl LogEstimate {
    /// Builds an estimate from the estimator's own log mean and log variance.
    pub fn from_parts(
        log_mean: f64,
        sign: f64,
        log_var_estimator: f64,
        n: u64,
        wall_seconds: f64,
    ) -> Self {
        let mut flags = EstimateFlags::default();
        let re_percent = if sign == 0.0 || log_mean == f64::NEG_INFINITY {
            flags.all_zero = true;
            100.0
        } else if log_var_estimator.is_nan() {
            flags.no_variance = true;
            100.0
        } else if log_var_estimator == f64::NEG_INFINITY {
            0.0
        } else {
            100.0 * (0.5 * log_var_estimator - log_mean).exp()
        };
        LogEstimate { log_mean, sign, log_var_estimator, n, re_percent, wall_seconds, flags }
    }

    /// Mean of i.i.d. replications held in `acc`.
    pub fn from_accumulator(acc: &LogAccumulator, wall_seconds: f64) -> Self {
        let n = acc.count();
        let (lm, sign) = acc.log_mean().unwrap_or((f64::NEG_INFINITY, 0.0));
        let lv = match acc.log_var() {
            Ok(v) => v - (n as f64).ln(),
            Err(_) => f64::NAN,
        };
        Self::from_parts(lm, sign, lv, n, wall_seconds)
    }

    /// `sign · exp(log_mean)`; underflows to 0 below ~1e-308, use `log10_mean` there.
    pub fn estimate(&self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.log_mean.exp()
        }
    }

    pub fn log10_mean(&self) -> f64 {
        self.log_mean / std::f64::consts::LN_10
    }

    /// Standard error as a multiple of the estimate (`RE/100`).
    pub fn rel_std_error(&self) -> f64 {
        self.re_percent / 100.0
    }

    pub fn wnrv(&self) -> f64 {
        wnrv(self.re_percent, self.wall_seconds)
    }

    /// ln of the standard error.
    pub fn log_std_error(&self) -> f64 {
        0.5 * self.log_var_estimator
    }

    /// Normal-approximation confidence interval `estimate ± z·SE` in linear scale.
    pub fn confidence_interval(&self, z: f64) -> (f64, f64) {
        let m = self.estimate();
        let se = self.log_std_error().exp();
        (m - z * se, m + z * se)
    }

    /// `|ln(value) − ln(estimate)|` expressed in standard errors, valid for
    /// positive estimates and values; uses the relative error so it works
    /// below the double range.
    pub fn z_score_log(&self, log_value: f64) -> f64 {
        let diff = (log_value - self.log_mean).exp() - 1.0;
        diff.abs() / self.rel_std_error()
    }
}

/// Format `sign·exp(log_value)` in scientific notation with three significant
/// digits, without leaving log space.
pub fn format_sci_log(log_value: f64, sign: f64) -> String {
    if sign == 0.0 || log_value == f64::NEG_INFINITY {
        return "0.00e0".to_string();
    }
    let l10 = log_value / std::f64::consts::LN_10;
    let mut exp = l10.floor();
    let mut mant = 10f64.powf(l10 - exp);
    if (mant * 100.0).round() >= 1000.0 {
        mant /= 10.0;
        exp += 1.0;
    }
    let s = if sign < 0.0 { "-" } else { "" };
    format!("{s}{mant:.2}e{}", exp as i64)
}
