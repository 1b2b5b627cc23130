//! Sobol points from Joe–Kuo direction numbers (new-joe-kuo-6.21201).

use crate::error::{Error, Result};
use std::sync::OnceLock;

const BITS: usize = 32;
const EMBEDDED: &str = include_str!("../../data/new-joe-kuo-6.21201");

/// Environment variable naming an alternative direction-number file.
pub const DIRECTIONS_ENV: &str = "SLN_SOBOL_DIRECTIONS";

struct Primitive {
    s: usize,
    a: u32,
    m: Vec<u32>,
}

fn parse(text: &str) -> Result<Vec<Primitive>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let bad = || Error::Config(format!("direction numbers line {}: malformed", lineno + 1));
        let nums: Vec<u32> = fields
            .iter()
            .map(|f| f.parse::<u32>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        if nums.len() < 3 {
            return Err(bad());
        }
        let s = nums[1] as usize;
        if nums.len() != 3 + s {
            return Err(bad());
        }
        out.push(Primitive { s, a: nums[2], m: nums[3..].to_vec() });
    }
    Ok(out)
}

fn table() -> Result<&'static [Primitive]> {
    static TABLE: OnceLock<std::result::Result<Vec<Primitive>, Error>> = OnceLock::new();
    let t = TABLE.get_or_init(|| match std::env::var_os(DIRECTIONS_ENV) {
        Some(path) => std::fs::read_to_string(&path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.to_string_lossy())))
            .and_then(|s| parse(&s)),
        None => parse(EMBEDDED),
    });
    t.as_deref().map_err(Clone::clone)
}

/// Largest supported dimension (first coordinate is van der Corput).
pub fn max_dim() -> Result<usize> {
    Ok(table()?.len() + 1)
}

/// Direction numbers `v[j][k]` for the first `dim` coordinates.
#[derive(Debug, Clone)]
pub struct SobolDirections {
    v: Vec<[u32; BITS]>,
}

impl SobolDirections {
    pub fn new(dim: usize) -> Result<Self> {
        let prims = table()?;
        if dim > prims.len() + 1 {
            return Err(Error::DimTooLarge { requested: dim, supported: prims.len() + 1 });
        }
        let mut v = Vec::with_capacity(dim);
        if dim >= 1 {
            let mut first = [0u32; BITS];
            for (k, x) in first.iter_mut().enumerate() {
                *x = 1u32 << (BITS - 1 - k);
            }
            v.push(first);
        }
        for p in prims.iter().take(dim.saturating_sub(1)) {
            let mut dir = [0u32; BITS];
            let s = p.s;
            for k in 0..s.min(BITS) {
                dir[k] = p.m[k] << (BITS - 1 - k);
            }
            for k in s..BITS {
                let mut x = dir[k - s] ^ (dir[k - s] >> s);
                for i in 1..s {
                    if (p.a >> (s - 1 - i)) & 1 == 1 {
                        x ^= dir[k - i];
                    }
                }
                dir[k] = x;
            }
            v.push(dir);
        }
        Ok(SobolDirections { v })
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    /// Integer coordinates of point `index` (gray-code order).
    pub fn point(&self, index: u64, out: &mut [u32]) {
        let g = index ^ (index >> 1);
        for (o, dir) in out.iter_mut().zip(&self.v) {
            let mut x = 0u32;
            let mut bits = g;
            let mut k = 0;
            while bits != 0 {
                if bits & 1 == 1 {
                    x ^= dir[k];
                }
                bits >>= 1;
                k += 1;
            }
            *o = x;
        }
    }

    /// Advances integer state from point `index` to point `index + 1`.
    #[inline]
    pub fn advance(&self, index: u64, state: &mut [u32]) {
        let c = (index + 1).trailing_zeros() as usize;
        for (s, dir) in state.iter_mut().zip(&self.v) {
            *s ^= dir[c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_points() {
        let s = SobolDirections::new(3).unwrap();
        let mut x = [0u32; 3];
        let scale = 1.0 / 4294967296.0;
        let want = [[0.0, 0.0, 0.0], [0.5, 0.5, 0.5], [0.75, 0.25, 0.25], [0.25, 0.75, 0.75]];
        for (i, w) in want.iter().enumerate() {
            s.point(i as u64, &mut x);
            for j in 0..3 {
                assert_eq!(x[j] as f64 * scale, w[j], "point {i} coord {j}");
            }
        }
    }

    #[test]
    fn advance_matches_random_access() {
        let s = SobolDirections::new(50).unwrap();
        let mut state = vec![0u32; 50];
        let mut direct = vec![0u32; 50];
        for i in 0..3000u64 {
            s.point(i, &mut direct);
            assert_eq!(state, direct);
            s.advance(i, &mut state);
        }
    }

    #[test]
    fn one_dimensional_projections_are_stratified() {
        let dim = 120;
        let s = SobolDirections::new(dim).unwrap();
        let k = 10;
        let n = 1usize << k;
        let mut seen = vec![vec![false; n]; dim];
        let mut x = vec![0u32; dim];
        for i in 0..n as u64 {
            s.point(i, &mut x);
            for j in 0..dim {
                let cell = (x[j] >> (32 - k)) as usize;
                assert!(!seen[j][cell], "dim {j} cell {cell} hit twice");
                seen[j][cell] = true;
            }
        }
    }

    #[test]
    fn full_table_and_limit() {
        assert_eq!(max_dim().unwrap(), 21201);
        assert!(SobolDirections::new(21201).is_ok());
        assert!(matches!(
            SobolDirections::new(21202),
            Err(Error::DimTooLarge { requested: 21202, supported: 21201 })
        ));
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(parse("d s a m\n2 1 0\n").is_err());
        assert!(parse("d s a m\n2 x 0 1\n").is_err());
        assert_eq!(parse("d s a m\n2 1 0 1\n3 2 1 1 3\n").unwrap().len(), 2);
    }
}
