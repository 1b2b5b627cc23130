//! Tilt optimizers: the left-tail simplex/tilt program, the per-stratum
//! right-tail program, and maximization of ψ for acceptance-rejection.

use crate::error::{Error, Result};
use crate::lefttail::psi;
use crate::model::{check_gamma, SlnModel};
use crate::specfun::{hazard, log_phi_bar, log_sum_exp};
use serde::Serialize;

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop once the Euclidean gradient norm is at most this.
    pub grad_tol: f64,
    /// Longest trial step; guards the first iterations before curvature is known.
    pub max_step: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 1000, grad_tol: 1e-9, max_step: 10.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Quasi-Newton minimization with backtracking. `fg` writes the gradient
/// and returns the value, or `None` outside the function's domain.
pub fn bfgs<F>(mut fg: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> Option<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut f = match fg(&x, &mut g) {
        Some(v) if v.is_finite() => v,
        _ => return Minimum { x, f: f64::NAN, grad: g, iterations: 0, converged: false },
    };
    if n == 0 {
        return Minimum { x, f, grad: g, iterations: 0, converged: true };
    }
    let identity = |h: &mut Vec<f64>| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
    };
    let mut h = vec![0.0; n * n];
    identity(&mut h);
    let mut fresh = true;
    let mut p = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];

    for it in 0..opts.max_iter {
        let gn = norm(&g);
        if gn <= opts.grad_tol {
            return Minimum { x, f, grad: g, iterations: it, converged: true };
        }
        for i in 0..n {
            p[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            identity(&mut h);
            fresh = true;
            p.iter_mut().zip(&g).for_each(|(pi, gi)| *pi = -gi);
            slope = -gn * gn;
        }
        let pn = norm(&p);
        let mut alpha = if pn > opts.max_step { opts.max_step / pn } else { 1.0 };
        let mut accepted = None;
        for _ in 0..80 {
            for i in 0..n {
                x_new[i] = x[i] + alpha * p[i];
            }
            if let Some(fv) = fg(&x_new, &mut g_new) {
                if fv.is_finite() {
                    let armijo = fv <= f + 1e-4 * alpha * slope;
                    // Near the optimum f stops resolving progress; let the
                    // gradient decide instead.
                    let flat = (fv - f).abs() <= 1e-13 * f.abs().max(1.0) && norm(&g_new) < gn;
                    if armijo || flat {
                        accepted = Some(fv);
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some(f_new) = accepted else {
            if fresh {
                return Minimum { x, f, grad: g, iterations: it, converged: false };
            }
            identity(&mut h);
            fresh = true;
            continue;
        };
        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if fresh {
                let scale = sy / dot(&y, &y);
                identity(&mut h);
                h.iter_mut().for_each(|v| *v *= scale);
                fresh = false;
            }
            let rho = 1.0 / sy;
            for i in 0..n {
                hy[i] = (0..n).map(|j| h[i * n + j] * y[j]).sum();
            }
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
    }
    let converged = norm(&g) <= opts.grad_tol;
    Minimum { x, f, grad: g, iterations: opts.max_iter, converged }
}

// ---------------------------------------------------------------------------
// Left tail

/// Solution of the left-tail program over the simplex and tilt vector.
#[derive(Debug, Clone, Serialize)]
pub struct LeftTilt {
    pub w_star: Vec<f64>,
    pub mu_star: Vec<f64>,
    pub objective: f64,
    pub warm_start_objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `Σ w ln w` with `0 ln 0 = 0`.
fn entropy_term(w: &[f64]) -> f64 {
    w.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum()
}

fn sigma_mul(model: &SlnModel, w: &[f64]) -> Vec<f64> {
    let s = model.sigma();
    let d = model.dim();
    (0..d).map(|i| (0..d).map(|j| s[(i, j)] * w[j]).sum()).collect()
}

/// `‖μ‖² + ln Φ̄((wᵀ(ν − Lμ) − ln γ − wᵀ ln w)/√(wᵀΣw))`.
pub fn left_objective(model: &SlnModel, gamma: f64, w: &[f64], mu: &[f64]) -> f64 {
    let d = model.dim();
    let mut lmu = vec![0.0; d];
    model.mul_l(mu, &mut lmu);
    let sw = sigma_mul(model, w);
    let s = dot(w, &sw).sqrt();
    let num: f64 = (0..d).map(|i| w[i] * (model.nu()[i] - lmu[i])).sum::<f64>()
        - gamma.ln()
        - entropy_term(w);
    dot(mu, mu) + log_phi_bar(num / s)
}

/// Closed-form warm start `[(ln γ − wᵀν + wᵀ ln w)/(wᵀΣw)]·Lᵀw`.
pub fn mu_bar_warm_start(model: &SlnModel, gamma: f64, w: &[f64]) -> Vec<f64> {
    let sw = sigma_mul(model, w);
    let coef = (gamma.ln() - dot(w, model.nu()) + entropy_term(w)) / dot(w, &sw);
    model.lt_mul(w).into_iter().map(|v| coef * v).collect()
}

struct InnerSolution {
    c: f64,
    s: f64,
    t: f64,
    value: f64,
    sw: Vec<f64>,
}

/// For fixed w the best μ is `c·Lᵀw`; c minimizes the strictly convex
/// `c²s² + ln Φ̄((b − c s²)/s)`, found by Newton's method.
fn left_inner(model: &SlnModel, log_gamma: f64, w: &[f64], log_w: &[f64]) -> InnerSolution {
    let sw = sigma_mul(model, w);
    let s2 = dot(w, &sw);
    let s = s2.sqrt();
    let ent: f64 = w.iter().zip(log_w).map(|(a, b)| if *a > 0.0 { a * b } else { 0.0 }).sum();
    let b = dot(w, model.nu()) - log_gamma - ent;
    let mut c = -b / s2;
    for _ in 0..200 {
        let t = (b - c * s2) / s;
        let h = hazard(t);
        let f1 = 2.0 * c * s2 + h * s;
        let f2 = s2 * (2.0 - h * (h - t));
        let step = f1 / f2;
        c -= step;
        if step.abs() <= 1e-15 * c.abs().max(1e-300 / s) {
            break;
        }
    }
    let t = (b - c * s2) / s;
    InnerSolution { c, s, t, value: c * c * s2 + log_phi_bar(t), sw }
}

fn softmax(eta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lse = log_sum_exp(eta);
    let log_w: Vec<f64> = eta.iter().map(|e| e - lse).collect();
    (log_w.iter().map(|l| l.exp()).collect(), log_w)
}

/// Solves `min ‖μ‖² + ln Φ̄(·)` over `w` in the simplex and `μ ∈ ℝᵈ`.
///
/// The tilt is eliminated exactly for each `w`; the remaining problem is
/// minimized over softmax coordinates from the uniform `w`.
pub fn solve_left_tilt(model: &SlnModel, gamma: f64) -> Result<LeftTilt> {
    check_gamma(gamma)?;
    let d = model.dim();
    let lg = gamma.ln();
    let uniform = vec![1.0 / d as f64; d];
    let warm_mu = mu_bar_warm_start(model, gamma, &uniform);
    let warm_start_objective = left_objective(model, gamma, &uniform, &warm_mu);

    let eval = |eta: &[f64], grad: &mut [f64]| -> Option<f64> {
        let (w, log_w) = softmax(eta);
        let inner = left_inner(model, lg, &w, &log_w);
        let InnerSolution { c, s, t, value, ref sw } = inner;
        let h = hazard(t);
        let mut gw = vec![0.0; d];
        for i in 0..d {
            let dt = (model.nu()[i] - c * sw[i] - log_w[i] - 1.0) / s - t * sw[i] / (s * s);
            gw[i] = -h * dt;
        }
        let wg = dot(&w, &gw);
        for j in 0..d {
            grad[j] = w[j] * (gw[j] - wg);
        }
        value.is_finite().then_some(value)
    };

    let (eta, iterations, converged) = if d == 1 {
        (vec![0.0], 0, true)
    } else {
        let opts = BfgsOptions { max_iter: 2000, grad_tol: 1e-10, max_step: 5.0 };
        let m = bfgs(eval, &vec![0.0; d], &opts);
        // Tiny residual gradients from weights pushed towards zero still
        // leave a usable tilt; accept them as converged.
        let ok = m.converged || norm(&m.grad) <= 1e-7;
        (m.x, m.iterations, ok)
    };
    let (w, log_w) = softmax(&eta);
    let inner = left_inner(model, lg, &w, &log_w);
    let mu: Vec<f64> = model.lt_mul(&w).into_iter().map(|v| inner.c * v).collect();
    let objective = left_objective(model, gamma, &w, &mu);
    if !objective.is_finite() {
        return Err(Error::NoConvergence { iterations });
    }
    let (w_star, mu_star, objective) = if objective <= warm_start_objective {
        (w, mu, objective)
    } else {
        (uniform, warm_mu, warm_start_objective)
    };
    Ok(LeftTilt { w_star, mu_star, objective, warm_start_objective, iterations, converged })
}

/// Norm of `∇_μ` of the left objective at fixed `w`: `2μ + h(t)·Lᵀw/s`.
pub fn left_mu_gradient_norm(model: &SlnModel, gamma: f64, w: &[f64], mu: &[f64]) -> f64 {
    let d = model.dim();
    let mut lmu = vec![0.0; d];
    model.mul_l(mu, &mut lmu);
    let sw = sigma_mul(model, w);
    let s = dot(w, &sw).sqrt();
    let t = ((0..d).map(|i| w[i] * (model.nu()[i] - lmu[i])).sum::<f64>()
        - gamma.ln()
        - entropy_term(w))
        / s;
    let h = hazard(t);
    let ltw = model.lt_mul(w);
    norm(&(0..d).map(|i| 2.0 * mu[i] + h * ltw[i] / s).collect::<Vec<_>>())
}

// ---------------------------------------------------------------------------
// Right tail

/// Tilt for right-tail stratum `k` (0-based).
#[derive(Debug, Clone, Serialize)]
pub struct RightTilt {
    pub k: usize,
    pub mu: Vec<f64>,
    /// `exp(μ_k+ν_k) + Σ_{i≠k} exp(μ_i+ν_i+σ_i²/2) − γ`.
    pub g1_slack: f64,
    /// `μ_k+ν_k+σ_k²/2 − max_{j≠k}(μ_j+ν_j+σ_j²/2)`.
    pub g2_slack: f64,
    pub objective: f64,
    /// Norm of the Lagrangian gradient at the returned point.
    pub stationarity: f64,
    pub converged: bool,
}

/// `((ln γ − ν_k)/σ_k²)·Σe_k`.
pub fn asymptotic_right_tilt(model: &SlnModel, gamma: f64, k: usize) -> Vec<f64> {
    let s = model.sigma();
    let a = (gamma.ln() - model.nu()[k]) / s[(k, k)];
    (0..model.dim()).map(|i| a * s[(i, k)]).collect()
}

struct RightProblem<'a> {
    model: &'a SlnModel,
    k: usize,
    log_gamma: f64,
    // ν_i + σ_i²/2, with the k-th entry holding ν_k only (for g1)
    g1_off: Vec<f64>,
    // ν_i + σ_i²/2
    mean_off: Vec<f64>,
}

impl<'a> RightProblem<'a> {
    fn new(model: &'a SlnModel, gamma: f64, k: usize) -> Self {
        let d = model.dim();
        let mean_off: Vec<f64> =
            (0..d).map(|i| model.nu()[i] + 0.5 * model.sigma()[(i, i)]).collect();
        let mut g1_off = mean_off.clone();
        g1_off[k] = model.nu()[k];
        RightProblem { model, k, log_gamma: gamma.ln(), g1_off, mean_off }
    }

    fn objective(&self, mu: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let sm = self.model.sigma_inv_mul(mu);
        if let Some(g) = grad {
            g.copy_from_slice(&sm);
        }
        0.5 * dot(mu, &sm)
    }

    /// Log-form of g1: ln(Σ terms) − ln γ, same sign as g1.
    fn log_g1(&self, mu: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let a: Vec<f64> = mu.iter().zip(&self.g1_off).map(|(m, o)| m + o).collect();
        let lse = log_sum_exp(&a);
        if let Some(g) = grad {
            for (gi, ai) in g.iter_mut().zip(&a) {
                *gi = (ai - lse).exp();
            }
        }
        lse - self.log_gamma
    }

    /// Linear pieces of g2: `(μ_k + m_k) − (μ_j + m_j)` for each j ≠ k.
    fn g2_pieces(&self, mu: &[f64]) -> impl Iterator<Item = (usize, f64)> + '_ {
        let k = self.k;
        let top = mu[k] + self.mean_off[k];
        let mu = mu.to_vec();
        (0..self.model.dim()).filter(move |&j| j != k).map(move |j| (j, top - mu[j] - self.mean_off[j]))
    }

    fn g2(&self, mu: &[f64]) -> f64 {
        self.g2_pieces(mu).map(|p| p.1).fold(f64::INFINITY, f64::min)
    }

    fn g1(&self, mu: &[f64]) -> f64 {
        let a: Vec<f64> = mu.iter().zip(&self.g1_off).map(|(m, o)| m + o).collect();
        log_sum_exp(&a).exp() - self.log_gamma.exp()
    }

    /// Raises μ_k until both constraints hold; both are increasing in μ_k.
    fn restore(&self, mu: &mut [f64]) {
        let k = self.k;
        let g2 = self.g2(mu);
        if g2 < 0.0 {
            mu[k] -= g2;
        }
        if self.log_g1(mu, None) < 0.0 {
            // terms other than k are fixed; solve exp(μ_k+ν_k) = γ − rest
            let rest: Vec<f64> = (0..mu.len())
                .filter(|&i| i != k)
                .map(|i| mu[i] + self.g1_off[i])
                .collect();
            let lr = if rest.is_empty() { f64::NEG_INFINITY } else { log_sum_exp(&rest) };
            let gap = self.log_gamma + (-(lr - self.log_gamma).exp()).ln_1p();
            let need = gap - self.g1_off[k];
            if need > mu[k] {
                mu[k] = need;
            }
            // guard against rounding leaving a hair of infeasibility
            let mut bump = 1e-15 * mu[k].abs().max(1.0);
            while self.log_g1(mu, None) < 0.0 {
                mu[k] += bump;
                bump *= 2.0;
            }
        }
    }

    /// Constraint values (log g1 first, then the g2 pieces) and gradients.
    fn constraints(&self, mu: &[f64], vals: &mut Vec<f64>, grads: &mut Vec<Vec<f64>>) {
        let d = mu.len();
        vals.clear();
        grads.clear();
        let mut g = vec![0.0; d];
        vals.push(self.log_g1(mu, Some(&mut g)));
        grads.push(g);
        for (j, v) in self.g2_pieces(mu) {
            let mut g = vec![0.0; d];
            g[self.k] = 1.0;
            g[j] = -1.0;
            vals.push(v);
            grads.push(g);
        }
    }

    /// Augmented Lagrangian iterations from `mu0`; returns (μ, λ).
    fn solve_from(&self, mu0: &[f64]) -> (Vec<f64>, Vec<f64>, bool) {
        let d = mu0.len();
        let m = 1 + d.saturating_sub(1);
        let mut mu = mu0.to_vec();
        let mut lambda = vec![0.0; m];
        let f_scale = self.objective(&mu, None).abs().max(1.0);
        let mut rho = 10.0 * f_scale;
        let mut prev_viol = f64::INFINITY;
        let mut vals = Vec::new();
        let mut grads = Vec::new();
        let mut converged = false;
        for _outer in 0..60 {
            let lam = lambda.clone();
            let fg = |x: &[f64], grad: &mut [f64]| -> Option<f64> {
                let mut vals = Vec::new();
                let mut grads = Vec::new();
                let mut f = self.objective(x, Some(grad));
                self.constraints(x, &mut vals, &mut grads);
                for ((c, gc), l) in vals.iter().zip(&grads).zip(&lam) {
                    if c - l / rho <= 0.0 {
                        f += -l * c + 0.5 * rho * c * c;
                        let coef = -l + rho * c;
                        for (g, gi) in grad.iter_mut().zip(gc) {
                            *g += coef * gi;
                        }
                    } else {
                        f += -l * l / (2.0 * rho);
                    }
                }
                f.is_finite().then_some(f)
            };
            let opts = BfgsOptions { max_iter: 500, grad_tol: 1e-10 * f_scale, max_step: 2.0 };
            let min = bfgs(fg, &mu, &opts);
            mu = min.x;
            self.constraints(&mu, &mut vals, &mut grads);
            let mut viol: f64 = 0.0;
            for (l, c) in lambda.iter_mut().zip(&vals) {
                // infeasibility and complementarity together
                viol = viol.max(c.min(*l / rho).abs());
                *l = (*l - rho * c).max(0.0);
            }
            if viol <= 1e-11 && min.converged {
                converged = true;
                break;
            }
            if viol > 0.25 * prev_viol && rho < 1e12 {
                rho *= 10.0;
            }
            prev_viol = viol;
        }
        (mu, lambda, converged)
    }

    fn stationarity(&self, mu: &[f64], lambda: &[f64]) -> f64 {
        let d = mu.len();
        let mut g = vec![0.0; d];
        self.objective(mu, Some(&mut g));
        let mut vals = Vec::new();
        let mut grads = Vec::new();
        self.constraints(mu, &mut vals, &mut grads);
        for (gc, l) in grads.iter().zip(lambda) {
            for (gi, c) in g.iter_mut().zip(gc) {
                *gi -= l * c;
            }
        }
        norm(&g)
    }
}

/// Solves `min ½ μᵀΣ⁻¹μ` subject to `g1(μ) ≥ 0`, `g2(μ) ≥ 0` for stratum `k`.
///
/// The max in g2 is handled exactly as d−1 linear constraints. Several
/// starting points are polished by an augmented Lagrangian method, made
/// feasible by raising μ_k, and the best objective is kept.
pub fn solve_right_tilt(model: &SlnModel, gamma: f64, k: usize) -> Result<RightTilt> {
    check_gamma(gamma)?;
    let d = model.dim();
    if k >= d {
        return Err(Error::InvalidParameter(format!("stratum {k} out of range for d={d}")));
    }
    let prob = RightProblem::new(model, gamma, k);
    let zero = vec![0.0; d];
    if prob.log_g1(&zero, None) >= 0.0 && prob.g2(&zero) >= 0.0 {
        return Ok(RightTilt {
            k,
            mu: zero,
            g1_slack: prob.g1(&vec![0.0; d]),
            g2_slack: if d == 1 { f64::INFINITY } else { prob.g2(&vec![0.0; d]) },
            objective: 0.0,
            stationarity: 0.0,
            converged: true,
        });
    }

    let mut starts = Vec::new();
    starts.push(asymptotic_right_tilt(model, gamma, k));
    // common shift making g1 tight
    let shift = prob.log_gamma - log_sum_exp(&prob.g1_off);
    starts.push(vec![shift; d]);
    starts.push(zero.clone());

    let mut best: Option<RightTilt> = None;
    let mut warm_objective = f64::INFINITY;
    for (i, start) in starts.iter().enumerate() {
        let mut s = start.clone();
        prob.restore(&mut s);
        if i == 0 {
            warm_objective = prob.objective(&s, None);
        }
        let (mut mu, lambda, converged) = prob.solve_from(&s);
        prob.restore(&mut mu);
        let objective = prob.objective(&mu, None);
        let candidate = RightTilt {
            k,
            g1_slack: prob.g1(&mu),
            g2_slack: if d == 1 { f64::INFINITY } else { prob.g2(&mu) },
            stationarity: prob.stationarity(&mu, &lambda),
            objective,
            mu,
            converged,
        };
        if best.as_ref().is_none_or(|b| candidate.objective < b.objective) {
            best = Some(candidate);
        }
    }
    let mut best = best.expect("at least one start");
    if best.objective > warm_objective {
        // never worse than the projected asymptotic start
        let mut mu = starts[0].clone();
        prob.restore(&mut mu);
        best = RightTilt {
            k,
            g1_slack: prob.g1(&mu),
            g2_slack: if d == 1 { f64::INFINITY } else { prob.g2(&mu) },
            stationarity: f64::NAN,
            objective: prob.objective(&mu, None),
            mu,
            converged: false,
        };
    }
    Ok(best)
}

/// Fallback when the solver fails: the asymptotic tilt made feasible.
pub fn fallback_right_tilt(model: &SlnModel, gamma: f64, k: usize) -> RightTilt {
    let prob = RightProblem::new(model, gamma, k);
    let mut mu = asymptotic_right_tilt(model, gamma, k);
    prob.restore(&mut mu);
    RightTilt {
        k,
        g1_slack: prob.g1(&mu),
        g2_slack: if model.dim() == 1 { f64::INFINITY } else { prob.g2(&mu) },
        objective: prob.objective(&mu, None),
        stationarity: f64::NAN,
        mu,
        converged: false,
    }
}

// ---------------------------------------------------------------------------
// Acceptance-rejection bound

/// Value and gradient of ψ with the last coordinate pinned to the boundary
/// `z_d = α_d(z_<d)` (when μ_d < 0) over the first d−1 coordinates.
fn reduced_psi(
    model: &SlnModel,
    gamma: f64,
    mu: &[f64],
    zr: &[f64],
    z: &mut Vec<f64>,
    grad: Option<&mut [f64]>,
) -> Option<f64> {
    let d = model.dim();
    let e = d - 1;
    z.clear();
    z.extend_from_slice(zr);
    z.push(0.0);
    let mut partial = 0.0;
    let mut lz = vec![0.0; d];
    for i in 0..e {
        lz[i] = model.l_row(i).iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        partial += (model.nu()[i] + lz[i]).exp();
    }
    if !(partial < gamma) {
        return None;
    }
    let alpha = model.alpha_threshold(gamma, e, &z[..e], partial);
    z[e] = if mu[e] < 0.0 { alpha } else { alpha.min(0.0) };
    let mut full = vec![0.0; d];
    let value = psi(model, gamma, mu, z, Some(&mut full)).ok()?;
    if let Some(g) = grad {
        g.copy_from_slice(&full[..e]);
        if mu[e] < 0.0 {
            // d z_e/d z_k = ∂α_e/∂z_k
            let r = gamma - partial;
            let lee = model.l(e, e);
            for kk in 0..e {
                let s: f64 = (kk..e).map(|i| (model.nu()[i] + lz[i]).exp() * model.l(i, kk)).sum();
                let dalpha = -(model.l(e, kk) + s / r) / lee;
                g[kk] += full[e] * dalpha;
            }
        }
    }
    value.is_finite().then_some(value)
}

/// Maximizes ψ(·; μ) over the support `{z : Σ exp(ν + Lz) ≤ γ}`.
///
/// ψ depends on z_d only through −μ_d z_d, so for μ_d < 0 the maximizer
/// sits on z_d = α_d(z_<d) and the search runs over the remaining d−1
/// coordinates; for μ_d > 0 the supremum is infinite.
pub fn maximize_psi(model: &SlnModel, gamma: f64, mu: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_gamma(gamma)?;
    let d = model.dim();
    if mu.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: mu.len() });
    }
    if mu[d - 1] > 0.0 {
        return Err(Error::Unbounded);
    }
    let e = d - 1;
    // start from the sequential medians, strictly inside the support
    let mut z0 = vec![0.0; e];
    let mut partial = 0.0;
    for j in 0..e {
        let a = model.alpha_threshold(gamma, j, &z0[..j], partial);
        z0[j] = crate::specfun::trunc_norm_inverse(mu[j], a, 0.5)?;
        let lz: f64 = model.l_row(j).iter().zip(&z0).map(|(a, b)| a * b).sum();
        partial += (model.nu()[j] + lz).exp();
    }
    let mut zbuf = Vec::with_capacity(d);
    let opts = BfgsOptions { max_iter: 5000, grad_tol: 1e-10, max_step: 1.0 };
    let m = bfgs(
        |zr, g| {
            let v = reduced_psi(model, gamma, mu, zr, &mut zbuf, Some(g))?;
            g.iter_mut().for_each(|x| *x = -*x);
            Some(-v)
        },
        &z0,
        &opts,
    );
    if !m.f.is_finite() {
        return Err(Error::NoConvergence { iterations: m.iterations });
    }
    let gn = norm(&m.grad);
    if !m.converged && gn > 1e-8 {
        return Err(Error::NoConvergence { iterations: m.iterations });
    }
    let mut z = Vec::with_capacity(d);
    let c = reduced_psi(model, gamma, mu, &m.x, &mut z, None).ok_or(Error::EmptyRegion)?;
    Ok((z, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SlnModel;

    #[test]
    fn bfgs_rosenbrock() {
        let m = bfgs(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                Some((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
            },
            &[-1.2, 1.0],
            &BfgsOptions::default(),
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-8 && (m.x[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn mu_bar_examples() {
        let m = SlnModel::from_rows(vec![0.0], &[vec![1.0]]).unwrap();
        let mb = mu_bar_warm_start(&m, std::f64::consts::E, &[1.0]);
        assert!((mb[0] - 1.0).abs() < 1e-15);
        // Closed form: (ln ½)/(½)·(½, ½) = (ln ½, ln ½).
        let m = SlnModel::independent(vec![0.0; 2], &[1.0, 1.0]).unwrap();
        let mb = mu_bar_warm_start(&m, 1.0, &[0.5, 0.5]);
        for v in mb {
            assert!((v - 0.5f64.ln()).abs() < 1e-15, "{v}");
        }
    }

    #[test]
    fn mu_bar_minimizes_quadratic_surrogate() {
        let m = SlnModel::from_rows(vec![0.3, -0.2], &[vec![1.0, 0.4], vec![0.4, 2.0]]).unwrap();
        // argmin wᵀΣw over the 2-simplex: w1 = (Σ22 − Σ12)/(Σ11 + Σ22 − 2Σ12).
        let w1 = (2.0 - 0.4) / (1.0 + 2.0 - 0.8);
        let w = [w1, 1.0 - w1];
        let gamma: f64 = 0.05;
        let sw = sigma_mul(&m, &w);
        let s2 = dot(&w, &sw);
        let a = gamma.ln() - dot(&w, m.nu()) + entropy_term(&w);
        let ltw = m.lt_mul(&w);
        let surrogate = |mu: &[f64]| {
            let q = a + ltw[0] * mu[0] + ltw[1] * mu[1];
            dot(mu, mu) - q * q / (2.0 * s2)
        };
        let mb = mu_bar_warm_start(&m, gamma, &w);
        let best_closed = surrogate(&mb);
        let mut best_grid = f64::INFINITY;
        let mut arg = [0.0, 0.0];
        let n = 801;
        for i in 0..n {
            for j in 0..n {
                let mu = [-8.0 + 8.0 * i as f64 / (n - 1) as f64, -8.0 + 8.0 * j as f64 / (n - 1) as f64];
                let v = surrogate(&mu);
                if v < best_grid {
                    best_grid = v;
                    arg = mu;
                }
            }
        }
        assert!(best_closed <= best_grid + 1e-12);
        assert!((arg[0] - mb[0]).abs() < 0.011 && (arg[1] - mb[1]).abs() < 0.011);
    }

    #[test]
    fn left_tilt_one_dimensional() {
        let m = SlnModel::from_rows(vec![0.5], &[vec![2.0]]).unwrap();
        let t = solve_left_tilt(&m, 0.01).unwrap();
        assert_eq!(t.w_star, vec![1.0]);
        assert!(t.objective <= left_objective(&m, 0.01, &[1.0], &[0.0]));
        assert!(left_mu_gradient_norm(&m, 0.01, &t.w_star, &t.mu_star) < 1e-6);
    }

    #[test]
    fn left_tilt_improves_on_warm_start() {
        let m = SlnModel::independent(vec![0.0; 2], &[1.0, 1.0]).unwrap();
        let t = solve_left_tilt(&m, 0.1).unwrap();
        assert!(t.converged);
        assert!(t.objective <= t.warm_start_objective);
        assert!((t.w_star.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(left_mu_gradient_norm(&m, 0.1, &t.w_star, &t.mu_star) < 1e-6);

        let var: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let m = SlnModel::independent(vec![0.0; 20], &var).unwrap();
        for gamma in [12.0, 1.0] {
            let t = solve_left_tilt(&m, gamma).unwrap();
            assert!(t.objective <= t.warm_start_objective);
            assert!(left_mu_gradient_norm(&m, gamma, &t.w_star, &t.mu_star) < 1e-6);
        }
    }

    #[test]
    fn left_tilt_softmax_gradient_matches_differences() {
        let m = SlnModel::from_rows(vec![0.1, -0.3, 0.2], &[
            vec![1.0, 0.3, 0.1],
            vec![0.3, 2.0, 0.5],
            vec![0.1, 0.5, 1.5],
        ])
        .unwrap();
        let lg = 0.2f64.ln();
        let g_of = |eta: &[f64]| {
            let (w, lw) = softmax(eta);
            left_inner(&m, lg, &w, &lw).value
        };
        let eta = [0.3, -0.5, 0.1];
        let (w, log_w) = softmax(&eta);
        let inner = left_inner(&m, lg, &w, &log_w);
        let h = hazard(inner.t);
        let gw: Vec<f64> = (0..3)
            .map(|i| {
                let dt = (m.nu()[i] - inner.c * inner.sw[i] - log_w[i] - 1.0) / inner.s
                    - inner.t * inner.sw[i] / (inner.s * inner.s);
                -h * dt
            })
            .collect();
        let wg = dot(&w, &gw);
        for j in 0..3 {
            let an = w[j] * (gw[j] - wg);
            let mut p = eta;
            let mut q = eta;
            p[j] += 1e-6;
            q[j] -= 1e-6;
            let fd = (g_of(&p) - g_of(&q)) / 2e-6;
            assert!((an - fd).abs() < 1e-6 * an.abs().max(1e-3), "{j}: {an} {fd}");
        }
    }

    #[test]
    fn asymptotic_right_tilt_examples() {
        let m = SlnModel::independent(vec![0.0; 3], &[1.0; 3]).unwrap();
        let mu = asymptotic_right_tilt(&m, 100.0, 1);
        assert_eq!(mu, vec![0.0, 100f64.ln(), 0.0]);
        let m = SlnModel::equicorrelated(10, 0.9, 0.0625, vec![0.0; 10]).unwrap();
        let mu = asymptotic_right_tilt(&m, 15.0, 0);
        assert!((mu[0] - 15f64.ln()).abs() < 1e-14);
        for v in &mu[1..] {
            assert!((v - 0.9 * 15f64.ln()).abs() < 1e-14);
        }
        let prob = RightProblem::new(&m, 1e6, 0);
        let mu = asymptotic_right_tilt(&m, 1e6, 0);
        assert!(prob.g2(&mu) >= 0.0);
    }

    #[test]
    fn right_tilt_one_dimensional() {
        let m = SlnModel::from_rows(vec![0.0], &[vec![0.7]]).unwrap();
        let t = solve_right_tilt(&m, 20.0, 0).unwrap();
        assert!((t.mu[0] - 20f64.ln()).abs() < 1e-10, "{:?}", t.mu);
        assert!(t.g1_slack >= -1e-8);
    }

    #[test]
    fn right_tilt_large_gamma_matches_asymptotic() {
        let m = SlnModel::independent(vec![0.0; 3], &[0.25; 3]).unwrap();
        let t = solve_right_tilt(&m, 1e4, 2).unwrap();
        let a = asymptotic_right_tilt(&m, 1e4, 2);
        assert!(((t.mu[2] - a[2]) / a[2]).abs() < 0.01, "{:?}", t.mu);
        for i in 0..2 {
            assert!(t.mu[i].abs() < 0.01 * a[2], "{:?}", t.mu);
        }
        assert!(t.g1_slack >= -1e-8 && t.g2_slack >= -1e-8);
    }

    /// Exact d=2 reduction: for fixed μ_other the best μ_k is the larger of
    /// the unconstrained minimizer and the two constraint bounds.
    fn d2_oracle(m: &SlnModel, gamma: f64, k: usize) -> f64 {
        let o = 1 - k;
        let s = m.sigma();
        let det = s[(0, 0)] * s[(1, 1)] - s[(0, 1)] * s[(1, 0)];
        let (pkk, pko) = (s[(o, o)] / det, -s[(0, 1)] / det);
        let poo = s[(k, k)] / det;
        let mk_off = m.nu()[k] + 0.5 * s[(k, k)];
        let mo_off = m.nu()[o] + 0.5 * s[(o, o)];
        let f = |x: f64| {
            let free = -pko / pkk * x;
            let lo2 = x + mo_off - mk_off;
            let rest = (x + mo_off).exp();
            let lo1 = if rest < gamma { (gamma - rest).ln() - m.nu()[k] } else { f64::NEG_INFINITY };
            let mk = free.max(lo2).max(lo1);
            0.5 * (pkk * mk * mk + 2.0 * pko * mk * x + poo * x * x)
        };
        let (mut lo, mut hi) = (-20.0, 20.0);
        let mut best = f64::INFINITY;
        let mut arg = 0.0;
        let n = 40_001;
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let v = f(x);
            if v < best {
                best = v;
                arg = x;
            }
        }
        for _ in 0..8 {
            let step = (hi - lo) / (n - 1) as f64;
            lo = arg - 2.0 * step;
            hi = arg + 2.0 * step;
            for i in 0..2001 {
                let x = lo + (hi - lo) * i as f64 / 2000.0;
                let v = f(x);
                if v < best {
                    best = v;
                    arg = x;
                }
            }
        }
        best
    }

    #[test]
    fn right_tilt_matches_grid_oracle_in_two_dimensions() {
        let cases = [
            (vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]], 5.0),
            (vec![0.2, -0.1], vec![vec![1.0, 0.5], vec![0.5, 2.0]], 8.0),
            (vec![0.0, 0.0], vec![vec![0.0625, 0.05625], vec![0.05625, 0.0625]], 4.0),
            (vec![1.0, 0.0], vec![vec![0.5, -0.2], vec![-0.2, 0.3]], 30.0),
        ];
        for (nu, rows, gamma) in cases {
            let m = SlnModel::from_rows(nu, &rows).unwrap();
            for k in 0..2 {
                let t = solve_right_tilt(&m, gamma, k).unwrap();
                let oracle = d2_oracle(&m, gamma, k);
                assert!(t.g1_slack >= -1e-8 && t.g2_slack >= -1e-8);
                assert!(
                    (t.objective - oracle).abs() <= 1e-6 * oracle.max(1.0),
                    "k={k} gamma={gamma}: {} vs {oracle}",
                    t.objective
                );
            }
        }
    }

    #[test]
    fn right_tilt_not_worse_than_asymptotic_start_and_stationary() {
        let m = SlnModel::independent(vec![0.0; 30], &[0.0625; 30]).unwrap();
        let t = solve_right_tilt(&m, 42.0, 0).unwrap();
        let prob = RightProblem::new(&m, 42.0, 0);
        let mut a = asymptotic_right_tilt(&m, 42.0, 0);
        prob.restore(&mut a);
        assert!(t.objective <= prob.objective(&a, None));
        assert!(t.g1_slack >= -1e-8 && t.g2_slack >= -1e-8);
        assert!(t.stationarity <= 1e-6, "stationarity {}", t.stationarity);
    }

    #[test]
    fn psi_maximization_one_dimensional() {
        let m = SlnModel::from_rows(vec![0.0], &[vec![1.0]]).unwrap();
        let (z, c) = maximize_psi(&m, 1e6, &[0.0]).unwrap();
        assert_eq!(z, vec![0.0]);
        assert!(c.abs() < 1e-15);
        let (z, c) = maximize_psi(&m, 0.5, &[-1.0]).unwrap();
        assert!((z[0] - 0.5f64.ln()).abs() < 1e-15);
        assert!((c - psi(&m, 0.5, &[-1.0], &z, None).unwrap()).abs() < 1e-15);
        assert!(matches!(maximize_psi(&m, 0.5, &[0.3]), Err(Error::Unbounded)));
    }
}
