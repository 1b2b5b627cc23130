//! Right tail: asymptotic approximation ℓ_as, per-stratum tilted estimators
//! stratified by the index of the largest term, and diagnostics.

use crate::error::{Error, Result};
use crate::model::{check_gamma, SlnModel};
use crate::optimize::{fallback_right_tilt, solve_right_tilt, RightTilt};
use crate::rng_qmc::{accumulate, Kernel, UniformStream};
use crate::specfun::{log_phi_bar, log_sum_exp, normal_quantile};
use crate::stats::{LogAccumulator, LogEstimate};
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

const ALLOCATION_TAG: u64 = 0xa110c;

/// ln P(X_k > γ) for each k.
pub fn log_marginal_tails(model: &SlnModel, gamma: f64) -> Vec<f64> {
    let lg = gamma.ln();
    (0..model.dim())
        .map(|k| log_phi_bar((lg - model.nu()[k]) / model.marginal_sd(k)))
        .collect()
}

/// ln ℓ_as = ln Σ_k Φ̄((ln γ − ν_k)/σ_k).
pub fn ell_as(model: &SlnModel, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(log_sum_exp(&log_marginal_tails(model, gamma)))
}

/// Fills `xi` with standard normals from `u` and `y = shift + Lξ`
/// (`shift` is ν plus any tilt).
#[inline]
pub(crate) fn gaussian_from_uniforms(model: &SlnModel, shift: &[f64], u: &[f64], xi: &mut [f64], y: &mut [f64]) {
    let d = model.dim();
    for j in 0..d {
        xi[j] = normal_quantile(u[j]).unwrap_or(0.0);
    }
    for i in 0..d {
        let row = model.l_row(i);
        y[i] = shift[i] + row.iter().zip(&xi[..=i]).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Index of the largest entry, lowest index on ties.
#[inline]
pub fn argmax_lowest(y: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in y.iter().enumerate().skip(1) {
        if *v > y[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RightRegion {
    /// `{S > γ, X_k = M}`
    MaxAt(usize),
    /// `{S ≥ γ}`
    Exceed,
}

/// Replication kernel for `exp(μᵀΣ⁻¹μ/2 − μᵀΣ⁻¹(Y − ν))·I{region}` with
/// `Y ~ N(ν + μ, Σ)`.
pub struct TiltedRightKernel<'a> {
    model: &'a SlnModel,
    gamma: f64,
    shift: Vec<f64>,
    a: Vec<f64>,
    half_a2: f64,
    region: RightRegion,
}

impl<'a> TiltedRightKernel<'a> {
    pub fn new(model: &'a SlnModel, gamma: f64, mu: &[f64], region: RightRegion) -> Result<Self> {
        check_gamma(gamma)?;
        let d = model.dim();
        if mu.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: mu.len() });
        }
        if let RightRegion::MaxAt(k) = region {
            if k >= d {
                return Err(Error::InvalidParameter(format!("stratum {k} out of range")));
            }
        }
        // μᵀΣ⁻¹(Y − ν) = aᵀ(a + ξ) with a = L⁻¹μ
        let a = model.solve_l(mu);
        let half_a2 = 0.5 * a.iter().map(|v| v * v).sum::<f64>();
        let shift = model.nu().iter().zip(mu).map(|(n, m)| n + m).collect();
        Ok(TiltedRightKernel { model, gamma, shift, a, half_a2, region })
    }
}

impl Kernel for TiltedRightKernel<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, u: &[f64], work: &mut Vec<f64>) -> (f64, f64) {
        let d = self.model.dim();
        work.resize(2 * d, 0.0);
        let (xi, y) = work.split_at_mut(d);
        gaussian_from_uniforms(self.model, &self.shift, u, xi, y);
        let s: f64 = y.iter().map(|v| v.exp()).sum();
        let hit = match self.region {
            RightRegion::MaxAt(k) => s > self.gamma && argmax_lowest(y) == k,
            RightRegion::Exceed => s >= self.gamma,
        };
        if !hit {
            return (f64::NEG_INFINITY, 0.0);
        }
        let ax: f64 = self.a.iter().zip(xi.iter()).map(|(a, x)| a * x).sum();
        (-self.half_a2 - ax, 1.0)
    }
}

/// Per-stratum moments of ĥ_k.
#[derive(Debug, Clone, Serialize)]
pub struct StratumResult {
    pub k: usize,
    pub n_k: u64,
    pub log_mean: f64,
    pub log_second_moment: f64,
    pub log_fourth_central: f64,
    /// ln of the unbiased per-replication variance; −∞ when constant, NaN when n_k < 2.
    pub log_var: f64,
}

impl StratumResult {
    fn from_acc(k: usize, acc: &LogAccumulator) -> Self {
        let n_k = acc.count();
        let nan = f64::NAN;
        StratumResult {
            k,
            n_k,
            log_mean: acc.log_mean().map(|p| p.0).unwrap_or(f64::NEG_INFINITY),
            log_second_moment: acc.log_second_moment().unwrap_or(f64::NEG_INFINITY),
            log_fourth_central: acc.log_fourth_central().unwrap_or(nan),
            log_var: acc.log_var().unwrap_or(nan),
        }
    }
}

/// Estimates ℏ_k = P(S > γ, X_k = M) from replications
/// `[start, start + n_k)` of `stream`.
pub fn estimate_hbar(
    model: &SlnModel,
    gamma: f64,
    k: usize,
    tilt: &RightTilt,
    n_k: u64,
    stream: &UniformStream,
    start: u64,
) -> Result<StratumResult> {
    Ok(StratumResult::from_acc(k, &hbar_accumulator(model, gamma, k, tilt, n_k, stream, start)?))
}

fn hbar_accumulator(
    model: &SlnModel,
    gamma: f64,
    k: usize,
    tilt: &RightTilt,
    n_k: u64,
    stream: &UniformStream,
    start: u64,
) -> Result<LogAccumulator> {
    let kernel = TiltedRightKernel::new(model, gamma, &tilt.mu, RightRegion::MaxAt(k))?;
    accumulate(&kernel, stream, start, n_k)
}

/// Randomized proportional allocation: `n_k` is `floor(r_k)` or
/// `floor(r_k) + 1` with `E[n_k] = r_k = n·p_k/Σp`, `Σ n_k = n`.
///
/// The extra units go to strata by systematic sampling on the fractional
/// parts, driven by the single uniform `u`.
pub fn allocate_from_log_weights(log_p: &[f64], n: u64, u: f64) -> Vec<u64> {
    let d = log_p.len();
    if n == 0 || d == 0 {
        return vec![0; d];
    }
    let total = log_sum_exp(log_p);
    let real: Vec<f64> = log_p.iter().map(|l| n as f64 * (l - total).exp()).collect();
    let mut counts: Vec<u64> = real.iter().map(|r| r.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let extra = n.saturating_sub(assigned);
    if extra > 0 {
        let mut cum = 0.0;
        let mut next = u;
        let mut given = 0;
        for (k, r) in real.iter().enumerate() {
            cum += r - r.floor();
            if given < extra && next < cum {
                counts[k] += 1;
                given += 1;
                next += 1.0;
            }
        }
        // fractional parts summing to slightly less than `extra` through
        // rounding: hand out the remainder by largest fractional part
        while given < extra {
            let k = (0..d)
                .filter(|&k| counts[k] == real[k].floor() as u64)
                .max_by(|&a, &b| (real[a].fract()).total_cmp(&real[b].fract()))
                .unwrap_or(0);
            counts[k] += 1;
            given += 1;
        }
    }
    counts
}

/// Allocation `n_k ∝ P(X_k > γ)` driven by the first point of `stream`.
pub fn allocate_strata(model: &SlnModel, gamma: f64, n: u64, stream: &UniformStream) -> Result<Vec<u64>> {
    check_gamma(gamma)?;
    let alloc = stream.fork(ALLOCATION_TAG, 1)?;
    let mut u = [0.0];
    alloc.cursor(0).next_point(&mut u);
    Ok(allocate_from_log_weights(&log_marginal_tails(model, gamma), n, u[0]))
}

/// Per-stratum breakdown attached to a right-tail estimate.
#[derive(Debug, Clone, Serialize)]
pub struct StratumReport {
    pub k: usize,
    pub n_k: u64,
    pub tilt: Vec<f64>,
    pub tilt_converged: bool,
    pub log10_mean: f64,
    pub log10_var: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RightTailResult {
    pub estimate: LogEstimate,
    pub log_ell_as: f64,
    pub strata: Vec<StratumReport>,
}

/// Solves the tilt program for every stratum, falling back to the
/// asymptotic tilt where the solver fails.
pub fn solve_all_right_tilts(model: &SlnModel, gamma: f64) -> Result<Vec<RightTilt>> {
    check_gamma(gamma)?;
    Ok((0..model.dim())
        .into_par_iter()
        .map(|k| solve_right_tilt(model, gamma, k).unwrap_or_else(|_| fallback_right_tilt(model, gamma, k)))
        .collect())
}

/// Stratified estimator `ℓ̂ = Σ_k (1/n_k) Σ_j ĥ_{k,j}` with allocation
/// proportional to the marginal tails.
pub fn estimate_right_tail(model: &SlnModel, gamma: f64, n: u64, stream: &UniformStream) -> Result<RightTailResult> {
    let t0 = Instant::now();
    let tilts = solve_all_right_tilts(model, gamma)?;
    let mut r = estimate_right_tail_with_tilts(model, gamma, n, stream, &tilts)?;
    r.estimate.wall_seconds = t0.elapsed().as_secs_f64();
    Ok(r)
}

/// Stratified estimator with precomputed tilts (one per stratum).
pub fn estimate_right_tail_with_tilts(
    model: &SlnModel,
    gamma: f64,
    n: u64,
    stream: &UniformStream,
    tilts: &[RightTilt],
) -> Result<RightTailResult> {
    let t0 = Instant::now();
    let d = model.dim();
    if tilts.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: tilts.len() });
    }
    let counts = allocate_strata(model, gamma, n, stream)?;
    let mut start = 0u64;
    let mut log_means = Vec::with_capacity(d);
    let mut log_vars = Vec::with_capacity(d);
    let mut strata = Vec::with_capacity(d);
    let mut empty = false;
    let mut fallback = false;
    for k in 0..d {
        let n_k = counts[k];
        let acc = hbar_accumulator(model, gamma, k, &tilts[k], n_k, stream, start)?;
        start += n_k;
        fallback |= !tilts[k].converged;
        let (lm, lv) = if n_k >= 2 {
            let lm = acc.log_mean()?.0;
            (lm, acc.log_var()? - (n_k as f64).ln())
        } else {
            empty = true;
            let lm = if n_k == 1 { acc.log_mean()?.0 } else { f64::NEG_INFINITY };
            (lm, f64::NEG_INFINITY)
        };
        log_means.push(lm);
        log_vars.push(lv);
        strata.push(StratumReport {
            k,
            n_k,
            tilt: tilts[k].mu.clone(),
            tilt_converged: tilts[k].converged,
            log10_mean: lm / std::f64::consts::LN_10,
            log10_var: lv / std::f64::consts::LN_10,
        });
    }
    let lm = log_sum_exp(&log_means);
    let lv = log_sum_exp(&log_vars);
    let sign = if lm == f64::NEG_INFINITY { 0.0 } else { 1.0 };
    let mut estimate = LogEstimate::from_parts(lm, sign, lv, n, t0.elapsed().as_secs_f64());
    estimate.flags.empty_stratum = empty;
    estimate.flags.optimizer_fallback = fallback;
    Ok(RightTailResult { estimate, log_ell_as: ell_as(model, gamma)?, strata })
}

/// ln of `d(d−1)·exp((1−ρ²)/2)·(ln γ/γ^{1−ρ})·Φ̄(ln γ)`, the second-order
/// term for standardized equicorrelated marginals. Requires γ > 1.
pub fn second_order_residual(rho: f64, d: usize, gamma: f64) -> Result<f64> {
    if !(gamma > 1.0) || d < 2 {
        return Err(Error::InvalidParameter("second-order term needs gamma > 1 and d >= 2".into()));
    }
    let lg = gamma.ln();
    Ok(((d * (d - 1)) as f64).ln() + 0.5 * (1.0 - rho * rho) + lg.ln() - (1.0 - rho) * lg + log_phi_bar(lg))
}

/// ln of the second-order term relative to `ℓ_as = dΦ̄(ln γ)`:
/// `(d−1)·exp((1−ρ²)/2)·ln γ/γ^{1−ρ}`. Increases in γ up to `ln γ = 1/(1−ρ)`.
pub fn second_order_relative(rho: f64, d: usize, gamma: f64) -> Result<f64> {
    let full = second_order_residual(rho, d, gamma)?;
    Ok(full - (d as f64).ln() - log_phi_bar(gamma.ln()))
}

/// `Var̂(S²)/S⁴` for stratum `k` from `n_k` replications (sample variance
/// of the sample variance, scaled).
pub fn variance_of_variance_diagnostic(
    model: &SlnModel,
    gamma: f64,
    k: usize,
    tilt: &RightTilt,
    n_k: u64,
    stream: &UniformStream,
) -> Result<f64> {
    if n_k < 100 {
        return Err(Error::Insufficient { needed: 100, have: n_k });
    }
    hbar_accumulator(model, gamma, k, tilt, n_k, stream, 0)?.var_of_var_ratio()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::phi_bar;

    #[test]
    fn ell_as_examples() {
        let m = SlnModel::from_rows(vec![0.0], &[vec![1.0]]).unwrap();
        let l = ell_as(&m, std::f64::consts::E).unwrap();
        assert!((l.exp() - 0.158_655_253_931_457_05).abs() < 1e-15);
        let m = SlnModel::equicorrelated(10, 0.9, 0.0625, vec![0.0; 10]).unwrap();
        let l15 = ell_as(&m, 15.0).unwrap();
        assert!((l15.exp() / 1.2113e-26 - 1.0).abs() < 1e-4);
        let l3500 = ell_as(&m, 3500.0).unwrap();
        let want = 5.1912f64.ln() - 233.0 * std::f64::consts::LN_10;
        assert!((l3500 - want).abs() < 1e-4);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax_lowest(&[5.0, 5.0]), 0);
        assert_eq!(argmax_lowest(&[-1.0]), 0);
    }

    #[test]
    fn allocation_examples() {
        assert_eq!(allocate_from_log_weights(&[0.0; 3], 0, 0.5), vec![0, 0, 0]);
        let lp = [0.9f64.ln(), 0.1f64.ln()];
        for u in [0.01, 0.3, 0.7, 0.99] {
            let c = allocate_from_log_weights(&lp, 10, u);
            assert_eq!(c.iter().sum::<u64>(), 10);
            assert!((c[0] as i64 - 9).abs() <= 1 && (c[1] as i64 - 1).abs() <= 1);
        }
        let sym = allocate_from_log_weights(&[-3.0; 7], 1000, 0.42);
        assert_eq!(sym.iter().sum::<u64>(), 1000);
        let (lo, hi) = (sym.iter().min().unwrap(), sym.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }

    #[test]
    fn allocation_is_unbiased_exactly() {
        // E[n_k] over a uniform grid of u equals r_k.
        let lp = [0.5f64.ln(), 0.3f64.ln(), 0.2f64.ln()];
        let n = 7;
        let m = 100_000;
        let mut sums = [0u64; 3];
        for i in 0..m {
            let u = (i as f64 + 0.5) / m as f64;
            let c = allocate_from_log_weights(&lp, n, u);
            assert_eq!(c.iter().sum::<u64>(), n);
            for k in 0..3 {
                sums[k] += c[k];
            }
        }
        for (k, p) in [0.5, 0.3, 0.2].iter().enumerate() {
            assert!((sums[k] as f64 / m as f64 - n as f64 * p).abs() < 1e-4);
        }
    }

    #[test]
    fn one_dimensional_hbar() {
        let (sd, gamma) = (1.3, 30.0f64);
        let m = SlnModel::from_rows(vec![0.0], &[vec![sd * sd]]).unwrap();
        let r = estimate_right_tail(&m, gamma, 20_000, &UniformStream::pseudo(4, 1)).unwrap();
        let truth = phi_bar(gamma.ln() / sd);
        assert!(r.estimate.z_score_log(truth.ln()) < 3.0);
        assert_eq!(r.strata[0].n_k, 20_000);
    }

    #[test]
    fn variance_boosted_style_region_is_exclusive() {
        // Σ_k I{S>γ, X_k = M} = I{S>γ} on the same draws.
        let m = SlnModel::equicorrelated(4, 0.3, 1.0, vec![0.0; 4]).unwrap();
        let gamma = 6.0;
        let zero = vec![0.0; 4];
        let s = UniformStream::pseudo(8, 4);
        let mut c = s.cursor(0);
        let mut u = vec![0.0; 4];
        let mut w = Vec::new();
        let all = TiltedRightKernel::new(&m, gamma, &zero, RightRegion::Exceed).unwrap();
        let parts: Vec<_> =
            (0..4).map(|k| TiltedRightKernel::new(&m, gamma, &zero, RightRegion::MaxAt(k)).unwrap()).collect();
        for _ in 0..5000 {
            c.next_point(&mut u);
            let hits: usize = parts.iter().filter(|p| p.eval(&u, &mut w).1 != 0.0).count();
            let whole = all.eval(&u, &mut w).1 != 0.0;
            assert_eq!(hits, whole as usize);
        }
    }

    #[test]
    fn second_order_examples() {
        let e = std::f64::consts::E;
        let v = second_order_residual(0.0, 5, e).unwrap();
        let want = (20.0 * 0.5f64.exp() * e.recip() * phi_bar(1.0)).ln();
        assert!((v - want).abs() < 1e-13);
        // relative term increases until ln γ = 1/(1−ρ) = 100, then decays
        let mut prev = f64::NEG_INFINITY;
        for i in 1..100 {
            let g = (i as f64).exp();
            let r = second_order_relative(0.99, 10, g).unwrap();
            assert!(r > prev, "ln γ = {i}");
            prev = r;
        }
        let after = second_order_relative(0.99, 10, 120f64.exp()).unwrap();
        assert!(after < prev);
    }
}
