//! Comparison estimators: crude Monte Carlo, variance boosting,
//! Asmussen–Kroese, ISVE and a single-tilt right-tail estimator.

use crate::error::{Error, Result};
use crate::model::{check_gamma, SlnModel};
use crate::righttail::{
    argmax_lowest, ell_as, gaussian_from_uniforms, log_marginal_tails, RightRegion, TiltedRightKernel,
};
use crate::rng_qmc::{accumulate, Kernel, UniformStream};
use crate::specfun::{log_phi_bar, normal_quantile, trunc_norm_inverse};
use crate::stats::LogEstimate;
use serde::{Deserialize, Serialize};
use std::time::Instant;

const ISVE_RESIDUAL_TAG: u64 = 0x15fe_0002;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// `P(S ≤ γ)`
    Left,
    /// `P(S > γ)`
    Right,
}

struct CrudeKernel<'a> {
    model: &'a SlnModel,
    gamma: f64,
    side: Side,
}

impl Kernel for CrudeKernel<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, u: &[f64], work: &mut Vec<f64>) -> (f64, f64) {
        let d = self.model.dim();
        work.resize(2 * d, 0.0);
        let (xi, y) = work.split_at_mut(d);
        gaussian_from_uniforms(self.model, self.model.nu(), u, xi, y);
        let s: f64 = y.iter().map(|v| v.exp()).sum();
        let hit = match self.side {
            Side::Left => s <= self.gamma,
            Side::Right => s > self.gamma,
        };
        if hit {
            (0.0, 1.0)
        } else {
            (f64::NEG_INFINITY, 0.0)
        }
    }
}

pub fn crude_mc(model: &SlnModel, gamma: f64, side: Side, n: u64, stream: &UniformStream) -> Result<LogEstimate> {
    check_gamma(gamma)?;
    let t0 = Instant::now();
    let acc = accumulate(&CrudeKernel { model, gamma, side }, stream, 0, n)?;
    Ok(LogEstimate::from_accumulator(&acc, t0.elapsed().as_secs_f64()))
}

/// `Y = ν + Lξ/√(1−θ)` reweighted back to `N(ν, Σ)`.
struct BoostedKernel<'a> {
    model: &'a SlnModel,
    gamma: f64,
    scale: f64,
    half_theta_ratio: f64,
    log_norm: f64,
    /// Also require `max X < γ`.
    below_max: bool,
}

impl<'a> BoostedKernel<'a> {
    fn new(model: &'a SlnModel, gamma: f64, theta: f64, below_max: bool) -> Result<Self> {
        check_gamma(gamma)?;
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!("theta must lie in [0, 1), got {theta}")));
        }
        let d = model.dim() as f64;
        Ok(BoostedKernel {
            model,
            gamma,
            scale: (1.0 - theta).sqrt().recip(),
            half_theta_ratio: 0.5 * theta / (1.0 - theta),
            log_norm: -0.5 * d * (1.0 - theta).ln(),
            below_max,
        })
    }
}

impl Kernel for BoostedKernel<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, u: &[f64], work: &mut Vec<f64>) -> (f64, f64) {
        let d = self.model.dim();
        work.resize(2 * d, 0.0);
        let (xi, y) = work.split_at_mut(d);
        for j in 0..d {
            xi[j] = normal_quantile(u[j]).unwrap_or(0.0) * self.scale;
        }
        let mut s = 0.0;
        let mut ymax = f64::NEG_INFINITY;
        for i in 0..d {
            let row = self.model.l_row(i);
            y[i] = self.model.nu()[i] + row.iter().zip(&xi[..=i]).map(|(a, b)| a * b).sum::<f64>();
            s += y[i].exp();
            ymax = ymax.max(y[i]);
        }
        let hit = s > self.gamma && (!self.below_max || ymax.exp() < self.gamma);
        if !hit {
            return (f64::NEG_INFINITY, 0.0);
        }
        // ‖ξ‖² of the unscaled normals
        let q: f64 = xi.iter().map(|v| v * v).sum::<f64>() / (self.scale * self.scale);
        (self.log_norm - self.half_theta_ratio * q, 1.0)
    }
}

/// Importance sampling from `N(ν, Σ/(1−θ))` for `P(S > γ)`.
pub fn variance_boosted(model: &SlnModel, gamma: f64, theta: f64, n: u64, stream: &UniformStream) -> Result<LogEstimate> {
    let t0 = Instant::now();
    let kernel = BoostedKernel::new(model, gamma, theta, false)?;
    let acc = accumulate(&kernel, stream, 0, n)?;
    Ok(LogEstimate::from_accumulator(&acc, t0.elapsed().as_secs_f64()))
}

struct AkKernel {
    d: usize,
    nu: f64,
    sd: f64,
    gamma: f64,
}

impl Kernel for AkKernel {
    fn dim(&self) -> usize {
        self.d - 1
    }

    fn eval(&self, u: &[f64], _work: &mut Vec<f64>) -> (f64, f64) {
        let mut s = 0.0;
        let mut m = 0.0f64;
        for &ui in u {
            let x = (self.nu + self.sd * normal_quantile(ui).unwrap_or(0.0)).exp();
            s += x;
            m = m.max(x);
        }
        let arg = (self.gamma - s).max(m);
        ((self.d as f64).ln() + log_phi_bar((arg.ln() - self.nu) / self.sd), 1.0)
    }
}

/// Asmussen–Kroese conditional estimator `d·Φ̄((ln max(γ − S_{−d}, M_{−d}) − ν)/σ)`
/// for i.i.d. marginals.
pub fn asmussen_kroese(model: &SlnModel, gamma: f64, n: u64, stream: &UniformStream) -> Result<LogEstimate> {
    check_gamma(gamma)?;
    if !model.is_iid() {
        return Err(Error::NotIid);
    }
    let t0 = Instant::now();
    let d = model.dim();
    let (nu, sd) = (model.nu()[0], model.marginal_sd(0));
    if d == 1 {
        let l = log_phi_bar((gamma.ln() - nu) / sd);
        return Ok(LogEstimate::from_parts(l, 1.0, f64::NEG_INFINITY, n, t0.elapsed().as_secs_f64()));
    }
    let acc = accumulate(&AkKernel { d, nu, sd, gamma }, stream, 0, n)?;
    Ok(LogEstimate::from_accumulator(&acc, t0.elapsed().as_secs_f64()))
}

/// Leading ISVE term `ℓ_as/N` with `N = #{i : X_i > γ}` under the mixture
/// that picks `k ∝ P(X_k > γ)` and then conditions on `X_k > γ`.
struct IsveLeadingKernel<'a> {
    model: &'a SlnModel,
    log_gamma: f64,
    log_ell_as: f64,
    cum: Vec<f64>,
}

impl Kernel for IsveLeadingKernel<'_> {
    fn dim(&self) -> usize {
        self.model.dim() + 2
    }

    fn eval(&self, u: &[f64], work: &mut Vec<f64>) -> (f64, f64) {
        let d = self.model.dim();
        let k = self.cum.partition_point(|c| *c <= u[0]).min(d - 1);
        let sigma = self.model.sigma();
        let var_k = sigma[(k, k)];
        let sd_k = var_k.sqrt();
        let nu_k = self.model.nu()[k];
        let b = (self.log_gamma - nu_k) / sd_k;
        // −T with T ~ N(0,1) truncated to (−∞, −b) is N(0,1) truncated to (b, ∞)
        let t = -trunc_norm_inverse(0.0, -b, u[1]).unwrap_or(-b);
        let yk = nu_k + sd_k * t;
        work.resize(2 * d, 0.0);
        let (xi, y) = work.split_at_mut(d);
        gaussian_from_uniforms(self.model, self.model.nu(), &u[2..], xi, y);
        let shift = (yk - y[k]) / var_k;
        let mut count = 0usize;
        for i in 0..d {
            if i == k {
                y[i] = yk;
            } else {
                y[i] += sigma[(i, k)] * shift;
            }
            if y[i] > self.log_gamma {
                count += 1;
            }
        }
        (self.log_ell_as - (count.max(1) as f64).ln(), 1.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IsveResult {
    pub estimate: LogEstimate,
    pub leading: LogEstimate,
    pub residual: LogEstimate,
    pub theta: f64,
}

/// Default variance-boost parameter `1 − 1/ln²γ` (γ > e).
pub fn default_isve_theta(gamma: f64) -> f64 {
    let lg = gamma.ln();
    (1.0 - 1.0 / (lg * lg)).clamp(0.0, 0.999)
}

/// ISVE: a mixture estimator for `P(S > γ, M > γ)` plus variance boosting
/// on `{S > γ, M < γ}`, with `n1` and `n2` replications respectively.
pub fn isve(
    model: &SlnModel,
    gamma: f64,
    theta: f64,
    n1: u64,
    n2: u64,
    stream: &UniformStream,
) -> Result<IsveResult> {
    check_gamma(gamma)?;
    let t0 = Instant::now();
    let d = model.dim();
    let lt = log_marginal_tails(model, gamma);
    let log_ell_as = ell_as(model, gamma)?;
    let mut cum = Vec::with_capacity(d);
    let mut c = 0.0;
    for l in &lt {
        c += (l - log_ell_as).exp();
        cum.push(c);
    }
    let leading_kernel = IsveLeadingKernel { model, log_gamma: gamma.ln(), log_ell_as, cum };
    let acc1 = accumulate(&leading_kernel, &stream.with_dim(d + 2)?, 0, n1)?;
    let t1 = t0.elapsed().as_secs_f64();
    let boosted = BoostedKernel::new(model, gamma, theta, true)?;
    let acc2 = accumulate(&boosted, &stream.fork(ISVE_RESIDUAL_TAG, d)?, 0, n2)?;
    let wall = t0.elapsed().as_secs_f64();
    let leading = LogEstimate::from_accumulator(&acc1, t1);
    let residual = LogEstimate::from_accumulator(&acc2, wall - t1);
    let lm = crate::specfun::log_add_exp(leading.log_mean, residual.log_mean);
    let lv = crate::specfun::log_add_exp(finite_or_ninf(leading.log_var_estimator), finite_or_ninf(residual.log_var_estimator));
    let sign = if lm == f64::NEG_INFINITY { 0.0 } else { 1.0 };
    let mut estimate = LogEstimate::from_parts(lm, sign, lv, n1 + n2, wall);
    estimate.flags.no_variance = leading.flags.no_variance || residual.flags.no_variance;
    Ok(IsveResult { estimate, leading, residual, theta })
}

fn finite_or_ninf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Single-tilt importance sampling for `P(S ≥ γ)` with `Y ~ N(ν + μ, Σ)`.
pub fn gt_right_tail(model: &SlnModel, gamma: f64, mu: &[f64], n: u64, stream: &UniformStream) -> Result<LogEstimate> {
    let t0 = Instant::now();
    let kernel = TiltedRightKernel::new(model, gamma, mu, RightRegion::Exceed)?;
    let acc = accumulate(&kernel, stream, 0, n)?;
    Ok(LogEstimate::from_accumulator(&acc, t0.elapsed().as_secs_f64()))
}

/// Tilt for [`gt_right_tail`]: the asymptotic tilt of the stratum with the
/// largest marginal tail.
pub fn gt_default_tilt(model: &SlnModel, gamma: f64) -> Result<Vec<f64>> {
    let lt = log_marginal_tails(model, gamma);
    let k = argmax_lowest(&lt);
    Ok(crate::optimize::asymptotic_right_tilt(model, gamma, k))
}
