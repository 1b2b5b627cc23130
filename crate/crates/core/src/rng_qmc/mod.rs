//! Uniform streams (pseudorandom or randomly shifted Sobol), the parallel
//! replication runner, and RQMC replication helpers.

pub mod sobol;

use crate::error::{Error, Result};
use crate::stats::{LogAccumulator, LogEstimate};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;
use std::time::Instant;

pub use sobol::SobolDirections;

const U_MIN: f64 = 1.0 / 9_007_199_254_740_992.0; // 2^-53
const U_MAX: f64 = 1.0 - U_MIN;
const SHIFT_SALT: u64 = 0x5eed_5b1f_7a11_c0de;

/// Replications per work unit. Fixed so results do not depend on the
/// number of worker threads.
pub const CHUNK: u64 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Pseudo,
    SobolShifted,
}

/// A deterministic source of `dim` uniforms per replication, addressable by
/// replication index.
#[derive(Debug, Clone)]
pub struct UniformStream {
    kind: StreamKind,
    dim: usize,
    seed: u64,
    stream_id: u64,
    shift: Vec<f64>,
    sobol: Option<Arc<SobolDirections>>,
}

impl UniformStream {
    /// Counter-based ChaCha8 stream; `stream_id` selects an independent
    /// substream for the same seed.
    pub fn pseudo(seed: u64, dim: usize) -> Self {
        Self::pseudo_substream(seed, 0, dim)
    }

    pub fn pseudo_substream(seed: u64, stream_id: u64, dim: usize) -> Self {
        UniformStream {
            kind: StreamKind::Pseudo,
            dim,
            seed,
            stream_id,
            shift: Vec::new(),
            sobol: None,
        }
    }

    /// Sobol points with a Cranley–Patterson shift drawn from
    /// `(shift_seed, replicate)`.
    pub fn sobol(dim: usize, shift_seed: u64, replicate: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(shift_seed ^ SHIFT_SALT);
        rng.set_stream(replicate);
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        Self::sobol_with_shift(shift, shift_seed, replicate)
    }

    pub fn sobol_with_shift(shift: Vec<f64>, seed: u64, replicate: u64) -> Result<Self> {
        let dim = shift.len();
        let dirs = SobolDirections::new(dim)?;
        Ok(UniformStream {
            kind: StreamKind::SobolShifted,
            dim,
            seed,
            stream_id: replicate,
            shift,
            sobol: Some(Arc::new(dirs)),
        })
    }

    /// Same kind and seed with a different per-replication dimension.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        match self.kind {
            StreamKind::Pseudo => Ok(Self::pseudo_substream(self.seed, self.stream_id, dim)),
            StreamKind::SobolShifted => Self::sobol(dim, self.seed, self.stream_id),
        }
    }

    /// An independent stream of the same kind, for a second estimator stage.
    pub fn fork(&self, tag: u64, dim: usize) -> Result<Self> {
        let stream_id = self.stream_id ^ (tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        match self.kind {
            StreamKind::Pseudo => Ok(Self::pseudo_substream(self.seed, stream_id, dim)),
            StreamKind::SobolShifted => Self::sobol(dim, self.seed, stream_id),
        }
    }

    pub fn kind(&self) -> StreamKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// Cursor positioned at replication `start`.
    pub fn cursor(&self, start: u64) -> StreamCursor<'_> {
        let inner = match self.kind {
            StreamKind::Pseudo => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(self.stream_id);
                // two 32-bit words per uniform
                rng.set_word_pos(start as u128 * self.dim as u128 * 2);
                CursorInner::Pseudo(Box::new(rng))
            }
            StreamKind::SobolShifted => {
                let dirs = self.sobol.as_ref().expect("sobol stream without directions");
                let mut state = vec![0u32; self.dim];
                dirs.point(start, &mut state);
                CursorInner::Sobol { index: start, state }
            }
        };
        StreamCursor { stream: self, inner }
    }
}

enum CursorInner {
    Pseudo(Box<ChaCha8Rng>),
    Sobol { index: u64, state: Vec<u32> },
}

pub struct StreamCursor<'a> {
    stream: &'a UniformStream,
    inner: CursorInner,
}

impl StreamCursor<'_> {
    /// Writes the next replication's uniforms into `out[..dim]`.
    #[inline]
    pub fn next_point(&mut self, out: &mut [f64]) {
        let dim = self.stream.dim;
        match &mut self.inner {
            CursorInner::Pseudo(rng) => {
                for o in out.iter_mut().take(dim) {
                    *o = ((rng.next_u64() >> 11) as f64 + 0.5) * U_MIN;
                }
            }
            CursorInner::Sobol { index, state } => {
                let dirs = self.stream.sobol.as_ref().expect("sobol directions");
                const SCALE: f64 = 1.0 / 4_294_967_296.0;
                for ((o, &x), &s) in out.iter_mut().zip(state.iter()).zip(&self.stream.shift) {
                    let u = x as f64 * SCALE + s;
                    let u = if u >= 1.0 { u - 1.0 } else { u };
                    *o = u.clamp(U_MIN, U_MAX);
                }
                dirs.advance(*index, state);
                *index += 1;
            }
        }
    }
}

/// One replication of an estimator: maps `dim()` uniforms to a value held
/// as `(ln |v|, sign)`.
pub trait Kernel: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, u: &[f64], work: &mut Vec<f64>) -> (f64, f64);
}

/// Runs `f(cursor, count)` over fixed-size chunks of replications
/// `[start, start + n)` in parallel; results come back in chunk order.
pub fn par_chunks<T, F>(stream: &UniformStream, start: u64, n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamCursor<'_>, u64) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let len = CHUNK.min(n - lo);
            let mut cursor = stream.cursor(start + lo);
            f(&mut cursor, len)
        })
        .collect()
}

/// Accumulates `n` replications of `kernel` starting at replication `start`.
pub fn accumulate<K: Kernel + ?Sized>(
    kernel: &K,
    stream: &UniformStream,
    start: u64,
    n: u64,
) -> Result<LogAccumulator> {
    if stream.dim() != kernel.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), found: stream.dim() });
    }
    let parts = par_chunks(stream, start, n, |cursor, len| {
        let mut acc = LogAccumulator::new();
        let mut u = vec![0.0; kernel.dim()];
        let mut work = Vec::new();
        for _ in 0..len {
            cursor.next_point(&mut u);
            let (l, s) = kernel.eval(&u, &mut work);
            acc.push_log(l, s);
        }
        acc
    });
    let mut total = LogAccumulator::new();
    for p in &parts {
        total.merge(p);
    }
    Ok(total)
}

/// Plain Monte Carlo estimate from `n` replications.
pub fn mc_estimate<K: Kernel + ?Sized>(
    kernel: &K,
    stream: &UniformStream,
    n: u64,
) -> Result<LogEstimate> {
    let t0 = Instant::now();
    let acc = accumulate(kernel, stream, 0, n)?;
    Ok(LogEstimate::from_accumulator(&acc, t0.elapsed().as_secs_f64()))
}

/// Mean of `replicates` independent estimates of `n` points each (shifted
/// Sobol or independent pseudorandom substreams); the error comes from the
/// spread across replicates.
pub fn replicated_estimate<K: Kernel + ?Sized>(
    kernel: &K,
    kind: StreamKind,
    n: u64,
    replicates: u64,
    seed: u64,
) -> Result<LogEstimate> {
    if replicates < 2 {
        return Err(Error::Insufficient { needed: 2, have: replicates });
    }
    let t0 = Instant::now();
    let mut outer = LogAccumulator::new();
    for r in 0..replicates {
        let stream = match kind {
            StreamKind::Pseudo => UniformStream::pseudo_substream(seed, r, kernel.dim()),
            StreamKind::SobolShifted => UniformStream::sobol(kernel.dim(), seed, r)?,
        };
        let acc = accumulate(kernel, &stream, 0, n)?;
        let (lm, sign) = acc.log_mean()?;
        outer.push_log(lm, sign);
    }
    let mut est = LogEstimate::from_accumulator(&outer, t0.elapsed().as_secs_f64());
    est.n = n * replicates;
    Ok(est)
}

/// RQMC estimate: `shifts` independent random shifts of an `n`-point Sobol set.
pub fn rqmc_estimate<K: Kernel + ?Sized>(
    kernel: &K,
    n: u64,
    shifts: u64,
    seed: u64,
) -> Result<LogEstimate> {
    replicated_estimate(kernel, StreamKind::SobolShifted, n, shifts, seed)
}

/// `(n, RE%)` over `n_grid` and the least-squares slope of ln RE on ln n.
pub fn convergence_slope<K: Kernel + ?Sized>(
    kernel: &K,
    kind: StreamKind,
    n_grid: &[u64],
    replicates: u64,
    seed: u64,
) -> Result<(Vec<(u64, f64)>, f64)> {
    if n_grid.len() < 2 {
        return Err(Error::Insufficient { needed: 2, have: n_grid.len() as u64 });
    }
    let mut points = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let est = replicated_estimate(kernel, kind, n, replicates, seed)?;
        points.push((n, est.re_percent));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(n, re)| ((n as f64).ln(), re.ln())).collect();
    Ok((points, least_squares_slope(&xy)))
}

/// Ordinary least-squares slope of y on x.
pub fn least_squares_slope(xy: &[(f64, f64)]) -> f64 {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Geometric grid `2^lo, …, 2^hi`.
pub fn pow2_grid(lo: u32, hi: u32) -> Vec<u64> {
    (lo..=hi).map(|k| 1u64 << k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn take(stream: &UniformStream, start: u64, n: u64) -> Vec<f64> {
        let mut c = stream.cursor(start);
        let mut out = vec![0.0; stream.dim() * n as usize];
        for row in out.chunks_mut(stream.dim()) {
            c.next_point(row);
        }
        out
    }

    #[test]
    fn pseudo_is_reproducible_and_splittable() {
        let s = UniformStream::pseudo(42, 3);
        let a = take(&s, 0, 1000);
        let b = take(&UniformStream::pseudo(42, 3), 0, 1000);
        assert_eq!(a, b);
        let mut parts = take(&s, 0, 500);
        parts.extend(take(&s, 500, 500));
        assert_eq!(a, parts);
        assert_ne!(a, take(&UniformStream::pseudo(43, 3), 0, 1000));
        assert_ne!(a, take(&UniformStream::pseudo_substream(42, 1, 3), 0, 1000));
    }

    #[test]
    fn pseudo_coordinate_means() {
        let n = 1_000_000u64;
        let s = UniformStream::pseudo(7, 4);
        let u = take(&s, 0, n);
        for j in 0..4 {
            let m: f64 = u.iter().skip(j).step_by(4).sum::<f64>() / n as f64;
            assert!((m - 0.5).abs() < 3.0 / (12.0 * n as f64).sqrt(), "coord {j}: {m}");
        }
        assert!(u.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn sobol_zero_shift_first_point_is_guarded() {
        let s = UniformStream::sobol_with_shift(vec![0.0; 5], 0, 0).unwrap();
        let p = take(&s, 0, 2);
        assert!(p[..5].iter().all(|&x| x == U_MIN));
        assert!(p[5..].iter().all(|&x| x == 0.5));
    }

    #[test]
    fn sobol_cursor_offsets_agree() {
        let s = UniformStream::sobol(17, 3, 2).unwrap();
        let all = take(&s, 0, 5000);
        let tail = take(&s, 3001, 1999);
        assert_eq!(&all[3001 * 17..], &tail[..]);
    }

    #[test]
    fn sobol_too_many_dims() {
        assert!(matches!(UniformStream::sobol(30_000, 1, 0), Err(Error::DimTooLarge { .. })));
    }

    struct ConstKernel;
    impl Kernel for ConstKernel {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, _u: &[f64], _w: &mut Vec<f64>) -> (f64, f64) {
            (0.25f64.ln(), 1.0)
        }
    }

    struct QuadKernel(usize);
    impl Kernel for QuadKernel {
        fn dim(&self) -> usize {
            self.0
        }
        // Π 3u², mean 1.
        fn eval(&self, u: &[f64], _w: &mut Vec<f64>) -> (f64, f64) {
            (u.iter().map(|x| (3.0 * x * x).ln()).sum(), 1.0)
        }
    }

    struct BernoulliKernel;
    impl Kernel for BernoulliKernel {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, u: &[f64], _w: &mut Vec<f64>) -> (f64, f64) {
            if u[0] < 0.3 { (0.0, 1.0) } else { (f64::NEG_INFINITY, 0.0) }
        }
    }

    #[test]
    fn constant_kernel_has_zero_rqmc_variance() {
        let e = rqmc_estimate(&ConstKernel, 256, 8, 1).unwrap();
        assert_eq!(e.re_percent, 0.0);
        assert!((e.estimate() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn results_independent_of_thread_count() {
        let s = UniformStream::pseudo(9, 3);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| accumulate(&QuadKernel(3), &s, 0, 20_000).unwrap());
        let b = four.install(|| accumulate(&QuadKernel(3), &s, 0, 20_000).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_must_match() {
        let s = UniformStream::pseudo(1, 2);
        assert!(accumulate(&QuadKernel(3), &s, 0, 10).is_err());
    }

    #[test]
    fn smooth_integrand_rqmc_slope() {
        let grid = pow2_grid(10, 16);
        let (_, slope) =
            convergence_slope(&QuadKernel(1), StreamKind::SobolShifted, &grid, 30, 5).unwrap();
        assert!(slope < -0.9, "slope {slope}");
        // Shifted nets carry a (ln n)^(d-1) factor, worth about +0.1 per extra
        // dimension in the fitted slope over this range.
        let (_, slope) =
            convergence_slope(&QuadKernel(3), StreamKind::SobolShifted, &grid, 30, 5).unwrap();
        assert!(slope < -0.8, "slope {slope}");
    }

    #[test]
    fn bernoulli_pseudo_slope_is_half() {
        let grid = pow2_grid(10, 16);
        let (_, slope) = convergence_slope(&BernoulliKernel, StreamKind::Pseudo, &grid, 30, 5).unwrap();
        assert!((slope + 0.5).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn shifted_sobol_is_unbiased() {
        let k = QuadKernel(3);
        let rq = rqmc_estimate(&k, 1024, 50, 77).unwrap();
        let mc = mc_estimate(&k, &UniformStream::pseudo(3, 3), 200_000).unwrap();
        let se = (rq.log_var_estimator.exp() + mc.log_var_estimator.exp()).sqrt();
        assert!((rq.estimate() - mc.estimate()).abs() < 3.0 * se);
        assert!((rq.estimate() - 1.0).abs() < 3.0 * rq.log_var_estimator.exp().sqrt());
    }

    #[test]
    fn slope_fit() {
        let xy: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 - 0.7 * i as f64)).collect();
        assert!((least_squares_slope(&xy) + 0.7).abs() < 1e-14);
    }
}
