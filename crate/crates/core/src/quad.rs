//! Small numerical helpers: Gauss–Legendre quadrature, bisection and
//! stable log-sum-exp accumulation.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre rule of `order` nodes on each of `panels` equal
/// sub-intervals of `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        total += x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * f(mid + 0.5 * h * xi))
            .sum::<f64>()
            * 0.5
            * h;
    }
    total
}

/// Root of an increasing function on `[lo, hi]` by bisection.
pub fn bisect_increasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    for _ in 0..300 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Running `log Σ exp(x_i)` with one exponential per term.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSumExp {
    #[inline]
    pub fn add(&mut self, x: f64) {
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if self.max == f64::NEG_INFINITY {
            *self = *other;
            return;
        }
        if other.max <= self.max {
            self.scaled += other.scaled * (other.max - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - other.max).exp() + other.scaled;
            self.max = other.max;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// `log Σ exp(x_i)` over a slice, via a pairwise tree so the result does not
/// depend on accumulation order beyond the fixed tree shape.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => f64::NEG_INFINITY,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            log_add(log_sum_exp(a), log_sum_exp(b))
        }
    }
}

#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        // exact through degree 9
        let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(8)).sum();
        assert!((s - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_rule() {
        let v = integrate(|x| x.sin(), 0.0, PI, 4, 10);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs = [0.1, -3.0, 2.5, 700.0, 699.0];
        let mut acc = LogSumExp::default();
        xs.iter().for_each(|&x| acc.add(x));
        let direct = 700.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((acc.value() - direct).abs() < 1e-12);
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-12);
    }

    #[test]
    fn bisection_finds_root() {
        let r = bisect_increasing(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
    }
}
