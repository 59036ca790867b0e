//! Fixed-grid histograms on `[-1, 1]` and Wasserstein-1 distances.

use crate::error::{Error, Result};

/// Default bin count: centers `-1, -0.99, ..., 1`.
pub const DEFAULT_BINS: usize = 201;

/// Counts on the bin centers `-1 + i w`, `w = 2/(B-1)`; a value goes to the
/// nearest center.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Histogram {
    counts: Vec<u64>,
}

impl Histogram {
    pub fn new(bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Domain("a histogram needs at least two bins".into()));
        }
        Ok(Self { counts: vec![0; bins] })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn width(&self) -> f64 {
        2.0 / (self.counts.len() - 1) as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.width()
    }

    pub fn index_of(&self, m: f64) -> usize {
        let i = ((m.clamp(-1.0, 1.0) + 1.0) / self.width()).round() as usize;
        i.min(self.counts.len() - 1)
    }

    #[inline]
    pub fn add(&mut self, m: f64) {
        let i = self.index_of(m);
        self.counts[i] += 1;
    }

    pub fn add_count(&mut self, bin: usize, n: u64) {
        self.counts[bin] += n;
    }

    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if other.bins() != self.bins() {
            return Err(Error::Domain("histograms have different bin grids".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Normalized masses (all zero for an empty histogram).
    pub fn masses(&self) -> Vec<f64> {
        let t = self.total();
        if t == 0 {
            return vec![0.0; self.bins()];
        }
        self.counts.iter().map(|&c| c as f64 / t as f64).collect()
    }

    pub fn mean(&self) -> f64 {
        self.masses()
            .iter()
            .enumerate()
            .map(|(i, m)| m * self.center(i))
            .sum()
    }

    /// `Σ_i mass_i g(center_i)`.
    pub fn expectation(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.masses()
            .iter()
            .enumerate()
            .map(|(i, m)| m * g(self.center(i)))
            .sum()
    }

    /// Normalized atoms at bin centers, zero bins dropped.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        self.masses()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(i, &m)| (self.center(i), m))
            .collect()
    }
}

/// `W₁` between two atomic probability measures on the line, as the `L¹`
/// distance between their distribution functions.
pub fn wasserstein1(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = a
        .iter()
        .map(|&(x, w)| (x, w))
        .chain(b.iter().map(|&(x, w)| (x, -w)))
        .collect();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for k in 0..pts.len() {
        diff += pts[k].1;
        if k + 1 < pts.len() {
            total += diff.abs() * (pts[k + 1].0 - pts[k].0);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning() {
        let mut h = Histogram::new(DEFAULT_BINS).unwrap();
        assert!((h.width() - 0.01).abs() < 1e-15);
        assert_eq!(h.index_of(-1.0), 0);
        assert_eq!(h.index_of(1.0), 200);
        assert_eq!(h.index_of(0.0), 100);
        assert_eq!(h.index_of(0.2), 120);
        assert_eq!(h.index_of(0.004), 100);
        assert_eq!(h.index_of(0.006), 101);
        h.add(0.2);
        h.add(-0.2);
        assert_eq!(h.total(), 2);
        assert!(h.mean().abs() < 1e-15);
    }

    #[test]
    fn w1_basics() {
        assert_eq!(wasserstein1(&[(0.3, 1.0)], &[(0.3, 1.0)]), 0.0);
        assert!((wasserstein1(&[(0.1, 1.0)], &[(-0.4, 1.0)]) - 0.5).abs() < 1e-15);
        let a = [(-0.5, 0.5), (0.5, 0.5)];
        let b = [(0.0, 1.0)];
        assert!((wasserstein1(&a, &b) - 0.5).abs() < 1e-15);
        assert!((wasserstein1(&a, &b) - wasserstein1(&b, &a)).abs() < 1e-15);
    }

    #[test]
    fn binned_mixture_close_to_exact() {
        let m = 0.9993;
        let exact = [(-m, 0.3), (m, 0.7)];
        let mut h = Histogram::new(DEFAULT_BINS).unwrap();
        h.add_count(h.index_of(-m), 3000);
        h.add_count(h.index_of(m), 7000);
        assert!(wasserstein1(&h.atoms(), &exact) <= h.width());
    }
}
