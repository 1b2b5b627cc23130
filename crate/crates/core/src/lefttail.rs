//! Left tail and body: sequential truncated-normal sampling, CDF and PDF
//! estimators, and exact sampling given `{S ≤ γ}`.

use crate::error::{Error, Result};
use crate::model::{check_gamma, SlnModel};
use crate::optimize::{maximize_psi, solve_left_tilt, LeftTilt};
use crate::rng_qmc::{accumulate, par_chunks, Kernel, UniformStream};
use crate::specfun::{log_phi, log_phi_cdf, trunc_norm_inverse_with_log_mass};
use crate::stats::LogEstimate;
use serde::Serialize;
use std::io::Write;
use std::time::Instant;

/// ψ(z; μ) = ‖μ‖²/2 − zᵀμ + Σ ln Φ(α_j(z) − μ_j), optionally with its gradient.
///
/// Defined wherever every α_j is finite, i.e. `Σ_{k<d} x_k < γ`.
pub fn psi(
    model: &SlnModel,
    gamma: f64,
    mu: &[f64],
    z: &[f64],
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let d = model.dim();
    if mu.len() != d || z.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: mu.len().min(z.len()) });
    }
    let nu = model.nu();
    let mut x = vec![0.0; d];
    let mut rem = vec![0.0; d];
    let mut h = vec![0.0; d];
    let mut partial = 0.0;
    let mut value = 0.5 * mu.iter().map(|m| m * m).sum::<f64>()
        - z.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>();
    for j in 0..d {
        let alpha = model.alpha_threshold(gamma, j, &z[..j], partial);
        if alpha == f64::NEG_INFINITY {
            return Err(Error::EmptyRegion);
        }
        rem[j] = gamma - partial;
        let a = alpha - mu[j];
        let lp = log_phi_cdf(a);
        value += lp;
        h[j] = (log_phi(a) - lp).exp();
        let lz: f64 = model.l_row(j).iter().zip(z).map(|(l, zz)| l * zz).sum();
        x[j] = (nu[j] + lz).exp();
        partial += x[j];
    }
    if let Some(g) = grad {
        // c_j = h_j / (L_jj R_j); tail[i] = Σ_{j>i} c_j
        let mut tail = vec![0.0; d];
        let mut acc = 0.0;
        for i in (0..d).rev() {
            tail[i] = acc;
            acc += h[i] / (model.l(i, i) * rem[i]);
        }
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = -mu[k];
        }
        for j in 1..d {
            let f = h[j] / model.l(j, j);
            for (k, gk) in g.iter_mut().enumerate().take(j) {
                *gk -= f * model.l(j, k);
            }
        }
        for i in 0..d {
            let f = x[i] * tail[i];
            if f != 0.0 {
                for (k, gk) in g.iter_mut().enumerate().take(i + 1) {
                    *gk -= f * model.l(i, k);
                }
            }
        }
    }
    Ok(value)
}

/// One draw of the sequential truncated-normal sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialDraw {
    pub z: Vec<f64>,
    /// ψ(z; μ)
    pub log_weight: f64,
    pub x: Vec<f64>,
}

/// Fills `z` by inverse-CDF sampling of `Z_j ~ TN_(−∞, α_j)(μ_j, 1)` and
/// returns `(ψ, Σ x)`. `None` if rounding empties a truncation region.
#[inline]
fn sequential_core(
    model: &SlnModel,
    gamma: f64,
    mu: &[f64],
    half_mu2: f64,
    u: &[f64],
    z: &mut [f64],
) -> Option<(f64, f64)> {
    let d = model.dim();
    let nu = model.nu();
    let mut partial = 0.0;
    let mut log_w = half_mu2;
    for j in 0..d {
        let row = model.l_row(j);
        let shift: f64 = row[..j].iter().zip(&z[..j]).map(|(a, b)| a * b).sum();
        let rem = gamma - partial;
        if !(rem > 0.0) {
            return None;
        }
        let alpha = (rem.ln() - nu[j] - shift) / row[j];
        let (zj, log_mass) = trunc_norm_inverse_with_log_mass(mu[j], alpha, u[j]).ok()?;
        z[j] = zj;
        log_w += log_mass - zj * mu[j];
        partial += (nu[j] + shift + row[j] * zj).exp();
    }
    Some((log_w, partial))
}

/// Sequential sampler driven by `d` uniforms.
pub fn sample_sequential(model: &SlnModel, gamma: f64, mu: &[f64], u: &[f64]) -> Result<SequentialDraw> {
    check_gamma(gamma)?;
    let d = model.dim();
    if mu.len() != d || u.len() < d {
        return Err(Error::DimensionMismatch { expected: d, found: mu.len().min(u.len()) });
    }
    if let Some(&bad) = u[..d].iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Domain(bad));
    }
    let half = 0.5 * mu.iter().map(|m| m * m).sum::<f64>();
    let mut z = vec![0.0; d];
    let (log_weight, _) = sequential_core(model, gamma, mu, half, u, &mut z).ok_or(Error::EmptyRegion)?;
    let mut lz = vec![0.0; d];
    model.mul_l(&z, &mut lz);
    let x = lz.iter().zip(model.nu()).map(|(a, b)| (a + b).exp()).collect();
    Ok(SequentialDraw { z, log_weight, x })
}

/// Replication kernel for `ℓ̂ = exp(ψ(Z; μ))` under the sequential sampler.
///
/// With μ = 0 this is the product estimator `Π Φ(α_j)`.
pub struct CdfKernel<'a> {
    model: &'a SlnModel,
    gamma: f64,
    mu: Vec<f64>,
    half_mu2: f64,
}

impl<'a> CdfKernel<'a> {
    pub fn new(model: &'a SlnModel, gamma: f64, mu: Vec<f64>) -> Result<Self> {
        check_gamma(gamma)?;
        if mu.len() != model.dim() {
            return Err(Error::DimensionMismatch { expected: model.dim(), found: mu.len() });
        }
        let half_mu2 = 0.5 * mu.iter().map(|m| m * m).sum::<f64>();
        Ok(CdfKernel { model, gamma, mu, half_mu2 })
    }
}

impl Kernel for CdfKernel<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, u: &[f64], work: &mut Vec<f64>) -> (f64, f64) {
        work.resize(self.model.dim(), 0.0);
        match sequential_core(self.model, self.gamma, &self.mu, self.half_mu2, u, work) {
            Some((lw, _)) => (lw, 1.0),
            // measure-zero roundoff event; contributes a zero
            None => (f64::NEG_INFINITY, 0.0),
        }
    }
}

/// Replication kernel for the density: `exp(ψ(Z; μ))·(−Zᵀ L⁻¹1)/γ`.
pub struct PdfKernel<'a> {
    inner: CdfKernel<'a>,
    linv_one: Vec<f64>,
    log_gamma: f64,
}

impl<'a> PdfKernel<'a> {
    pub fn new(model: &'a SlnModel, gamma: f64, mu: Vec<f64>) -> Result<Self> {
        let inner = CdfKernel::new(model, gamma, mu)?;
        let linv_one = model.solve_l(&vec![1.0; model.dim()]);
        Ok(PdfKernel { inner, linv_one, log_gamma: gamma.ln() })
    }
}

impl Kernel for PdfKernel<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, u: &[f64], work: &mut Vec<f64>) -> (f64, f64) {
        let (lw, s) = self.inner.eval(u, work);
        if s == 0.0 {
            return (lw, s);
        }
        let proj: f64 = -work.iter().zip(&self.linv_one).map(|(a, b)| a * b).sum::<f64>();
        if proj == 0.0 {
            return (f64::NEG_INFINITY, 0.0);
        }
        (lw + proj.abs().ln() - self.log_gamma, proj.signum())
    }
}

fn finish(mut est: LogEstimate, t0: Instant, tilt: Option<&LeftTilt>) -> LogEstimate {
    est.wall_seconds = t0.elapsed().as_secs_f64();
    if let Some(t) = tilt {
        est.flags.optimizer_fallback = !t.converged;
    }
    est
}

/// Product estimator `ℓ̂₀ = Π Φ(α_j)` (zero tilt).
pub fn estimate_cdf_simple(model: &SlnModel, gamma: f64, n: u64, stream: &UniformStream) -> Result<LogEstimate> {
    let t0 = Instant::now();
    let k = CdfKernel::new(model, gamma, vec![0.0; model.dim()])?;
    let acc = accumulate(&k, stream, 0, n)?;
    Ok(finish(LogEstimate::from_accumulator(&acc, 0.0), t0, None))
}

/// Tilted estimator `exp(ψ(Z; μ*))` with μ* from the left-tail program.
pub fn estimate_cdf(model: &SlnModel, gamma: f64, n: u64, stream: &UniformStream) -> Result<LogEstimate> {
    let t0 = Instant::now();
    let tilt = solve_left_tilt(model, gamma)?;
    let k = CdfKernel::new(model, gamma, tilt.mu_star.clone())?;
    let acc = accumulate(&k, stream, 0, n)?;
    Ok(finish(LogEstimate::from_accumulator(&acc, 0.0), t0, Some(&tilt)))
}

/// Tilted CDF estimator with a caller-supplied tilt.
pub fn estimate_cdf_with_tilt(
    model: &SlnModel,
    gamma: f64,
    tilt: &LeftTilt,
    n: u64,
    stream: &UniformStream,
) -> Result<LogEstimate> {
    let t0 = Instant::now();
    let k = CdfKernel::new(model, gamma, tilt.mu_star.clone())?;
    let acc = accumulate(&k, stream, 0, n)?;
    Ok(finish(LogEstimate::from_accumulator(&acc, 0.0), t0, Some(tilt)))
}

/// Push-out density estimator under the CDF tilt at the same γ. Signed.
pub fn estimate_pdf(model: &SlnModel, gamma: f64, n: u64, stream: &UniformStream) -> Result<LogEstimate> {
    let t0 = Instant::now();
    let tilt = solve_left_tilt(model, gamma)?;
    let k = PdfKernel::new(model, gamma, tilt.mu_star.clone())?;
    let acc = accumulate(&k, stream, 0, n)?;
    Ok(finish(LogEstimate::from_accumulator(&acc, 0.0), t0, Some(&tilt)))
}

/// A draw of X given `{S ≤ γ}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalDraw {
    pub x: Vec<f64>,
    /// Proposals consumed since the previous acceptance, including this one.
    pub attempts: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalSample {
    pub draws: Vec<ConditionalDraw>,
    pub proposals: u64,
    pub acceptance_rate: f64,
    /// c = max ψ(z; μ*) over the support.
    pub log_bound: f64,
    pub tilt: LeftTilt,
}

/// Acceptance-rejection setup shared by the conditional sampler routines.
pub struct ConditionalSampler<'a> {
    model: &'a SlnModel,
    gamma: f64,
    tilt: LeftTilt,
    c: f64,
    half_mu2: f64,
}

impl<'a> ConditionalSampler<'a> {
    pub fn new(model: &'a SlnModel, gamma: f64) -> Result<Self> {
        check_gamma(gamma)?;
        let tilt = solve_left_tilt(model, gamma)?;
        let (_, c) = maximize_psi(model, gamma, &tilt.mu_star)?;
        let half_mu2 = 0.5 * tilt.mu_star.iter().map(|m| m * m).sum::<f64>();
        Ok(ConditionalSampler { model, gamma, tilt, c, half_mu2 })
    }

    pub fn log_bound(&self) -> f64 {
        self.c
    }

    pub fn tilt(&self) -> &LeftTilt {
        &self.tilt
    }

    /// Uniforms per proposal: d for Z plus one for the exponential variate.
    pub fn dim(&self) -> usize {
        self.model.dim() + 1
    }

    /// Runs proposals `[start, start + count)`; returns accepted
    /// `(proposal index, x)` in index order.
    pub fn propose(&self, stream: &UniformStream, start: u64, count: u64) -> Result<Vec<(u64, Vec<f64>)>> {
        if stream.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: stream.dim() });
        }
        let d = self.model.dim();
        let mu = &self.tilt.mu_star;
        let parts = par_chunks(stream, start, count, |cursor, len| {
            let mut u = vec![0.0; d + 1];
            let mut z = vec![0.0; d];
            let mut out = Vec::new();
            for i in 0..len {
                cursor.next_point(&mut u);
                let Some((lw, _)) = sequential_core(self.model, self.gamma, mu, self.half_mu2, &u, &mut z) else {
                    continue;
                };
                let e = -(-u[d]).ln_1p();
                if e > self.c - lw {
                    let mut lz = vec![0.0; d];
                    self.model.mul_l(&z, &mut lz);
                    let x: Vec<f64> = lz.iter().zip(self.model.nu()).map(|(a, b)| (a + b).exp()).collect();
                    out.push((i, x));
                }
            }
            out
        });
        let mut all = Vec::new();
        for (c, part) in parts.into_iter().enumerate() {
            let offset = start + c as u64 * crate::rng_qmc::CHUNK;
            all.extend(part.into_iter().map(|(i, x)| (offset + i, x)));
        }
        Ok(all)
    }
}

/// Exact draws from the law of X given `{ΣX_k ≤ γ}` by acceptance-rejection
/// with proposal `P_{μ*}` and bound `e^c`.
pub fn sample_conditional(model: &SlnModel, gamma: f64, n: usize, stream: &UniformStream) -> Result<ConditionalSample> {
    let sampler = ConditionalSampler::new(model, gamma)?;
    let stream = stream.with_dim(sampler.dim())?;
    let mut accepted: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut next = 0u64;
    let mut batch = crate::rng_qmc::CHUNK * 4;
    while accepted.len() < n {
        let got = sampler.propose(&stream, next, batch)?;
        accepted.extend(got);
        next += batch;
        batch = (batch * 2).min(1 << 24);
        if next > (1u64 << 40) {
            return Err(Error::NoConvergence { iterations: next as usize });
        }
    }
    accepted.truncate(n);
    let proposals = accepted.last().map_or(0, |(i, _)| i + 1);
    let mut prev = 0u64;
    let draws = accepted
        .into_iter()
        .map(|(i, x)| {
            let attempts = i + 1 - prev;
            prev = i + 1;
            ConditionalDraw { x, attempts }
        })
        .collect();
    let acceptance_rate = if proposals == 0 { f64::NAN } else { n as f64 / proposals as f64 };
    Ok(ConditionalSample { draws, proposals, acceptance_rate, log_bound: sampler.c, tilt: sampler.tilt })
}

/// Writes one path per row (`x_1..x_d`), preceded by `#`-prefixed comment lines.
pub fn write_paths_csv<W: Write>(mut w: W, d: usize, draws: &[ConditionalDraw], comments: &[String]) -> Result<()> {
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    let mut wr = csv::Writer::from_writer(w);
    let header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    wr.write_record(&header)?;
    for dr in draws {
        wr.write_record(dr.x.iter().map(|v| format!("{v:.10e}")))?;
    }
    wr.flush()?;
    Ok(())
}
