//! Counter-keyed pairwise Wiener increments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::geometry::PairSet;

/// Per half-pair Wiener increments for one step. Entry `k` belongs to the
/// canonical pair `(i, j)` with `i < j`; the mirrored pair sees the same
/// `dw` and the negated `dv`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairNoise {
    pub dim: usize,
    /// D×D matrices stored in 3×3 row-major slots.
    pub dw: Vec<[f64; 9]>,
    pub dv: Vec<f64>,
}

impl PairNoise {
    pub fn len(&self) -> usize {
        self.dv.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dv.is_empty()
    }

    pub fn trace(&self, k: usize) -> f64 {
        trace(&self.dw[k], self.dim)
    }

    /// Symmetric traceless part ½(dW + dWᵀ) − (I/D) tr dW.
    pub fn dwbar(&self, k: usize) -> [f64; 9] {
        dwbar(&self.dw[k], self.dim)
    }

    /// Noise as seen from the ordered pair; `reversed` selects (j, i).
    pub fn oriented(&self, k: usize, reversed: bool) -> (&[f64; 9], f64) {
        let s = if reversed { -1.0 } else { 1.0 };
        (&self.dw[k], s * self.dv[k])
    }
}

#[inline]
pub fn trace(m: &[f64; 9], dim: usize) -> f64 {
    (0..dim).map(|a| m[a * 4]).sum()
}

pub fn dwbar(m: &[f64; 9], dim: usize) -> [f64; 9] {
    let tr = trace(m, dim) / dim as f64;
    let mut out = [0.0; 9];
    for a in 0..dim {
        for b in 0..dim {
            out[a * 3 + b] = 0.5 * (m[a * 3 + b] + m[b * 3 + a]);
        }
        out[a * 4] -= tr;
    }
    out
}

/// Generator keyed by (seed, step, i, j) with the pair in canonical order.
pub fn pair_rng(seed: u64, step: u64, i: usize, j: usize) -> ChaCha8Rng {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&step.to_le_bytes());
    key[16..24].copy_from_slice(&(a as u64).to_le_bytes());
    key[24..].copy_from_slice(&(b as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Draw (dW, dV) for the pair, each entry N(0, dt). Order of `i`, `j` only
/// flips the sign of dV.
pub fn draw_pair(seed: u64, step: u64, i: usize, j: usize, dim: usize, dt: f64) -> ([f64; 9], f64) {
    let mut rng = pair_rng(seed, step, i, j);
    let sd = dt.sqrt();
    let mut dw = [0.0; 9];
    for a in 0..dim {
        for b in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            dw[a * 3 + b] = sd * z;
        }
    }
    let z: f64 = StandardNormal.sample(&mut rng);
    let dv = if i < j { sd * z } else { -sd * z };
    (dw, dv)
}

pub fn sample_noise(pairs: &PairSet, dt: f64, seed: u64, step: u64) -> PairNoise {
    let dim = pairs.dim;
    let (dw, dv) = pairs
        .ij
        .par_iter()
        .map(|&(i, j)| draw_pair(seed, step, i, j, dim, dt))
        .unzip();
    PairNoise { dim, dw, dv }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_are_deterministic_and_mirrored() {
        let a = draw_pair(11, 3, 4, 9, 3, 0.01);
        let b = draw_pair(11, 3, 4, 9, 3, 0.01);
        let c = draw_pair(11, 3, 9, 4, 3, 0.01);
        assert_eq!(a, b);
        assert_eq!(a.0, c.0);
        assert_eq!(a.1, -c.1);
        assert_ne!(a, draw_pair(11, 4, 4, 9, 3, 0.01));
    }

    #[test]
    fn dwbar_is_symmetric_and_traceless() {
        let (dw, _) = draw_pair(1, 2, 0, 1, 3, 1.0);
        let w = dwbar(&dw, 3);
        assert!(trace(&w, 3).abs() < 1e-14);
        for a in 0..3 {
            for b in 0..3 {
                assert_eq!(w[a * 3 + b], w[b * 3 + a]);
            }
        }
    }

    #[test]
    fn entry_moments() {
        let dt = 0.01;
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|s| draw_pair(5, s, 0, 1, 2, dt).0[1]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 4.0 * (dt / n as f64).sqrt());
        assert!((var / dt - 1.0).abs() < 0.05);
    }
}
