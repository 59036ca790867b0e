//! Kac interaction `J_γ(x, y) = γ^d φ(γ(x - y))` on the torus, its coarse-grained
//! block version, and summary diagnostics.

use std::fmt;

use crate::error::{Error, Result};
use crate::lattice::{SpinConfig, TorusLattice};
use crate::quad;

/// The normalized cubic bump `c_d (1 - |r|^2)^3` on the open unit ball.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mollifier {
    dim: usize,
    normalizer: f64,
}

impl Mollifier {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Kernel("dimension must be positive".into()));
        }
        // ∫_{|r|<1} (1-|r|^2)^3 dr = S_{d-1} ∫_0^1 (1-r^2)^3 r^{d-1} dr
        let radial = quad::integrate(
            |r| (1.0 - r * r).powi(3) * r.powi(dim as i32 - 1),
            0.0,
            1.0,
            1,
            (dim + 8) / 2 + 4,
        );
        let normalizer = 1.0 / (sphere_area(dim) * radial);
        Ok(Self { dim, normalizer })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// `φ` as a function of `|r|^2`.
    #[inline]
    pub fn at_norm2(&self, r2: f64) -> f64 {
        if r2 < 1.0 {
            let t = 1.0 - r2;
            self.normalizer * t * t * t
        } else {
            0.0
        }
    }

    pub fn at(&self, r: &[f64]) -> f64 {
        self.at_norm2(r.iter().map(|v| v * v).sum())
    }
}

/// Surface area of the unit sphere in `R^d` (`2` for `d = 1`).
fn sphere_area(dim: usize) -> f64 {
    use std::f64::consts::PI;
    // S_{d-1} = 2π S_{d-3} / (d - 2), S_0 = 2, S_1 = 2π
    let mut a = [2.0, 2.0 * PI];
    let mut k = 2;
    while k < dim {
        let next = 2.0 * PI * a[(k - 2) % 2] / (k - 1) as f64;
        a[k % 2] = next;
        k += 1;
    }
    a[(dim - 1) % 2]
}

#[derive(Clone, Debug)]
struct Run {
    start: usize,
    len: usize,
    /// Offsets of the run's first entry.
    first: Vec<i64>,
}

/// Tabulated Kac weights on the integer offsets `z` with `|γ z| < 1`.
#[derive(Clone, Debug)]
pub struct KacKernel {
    gamma: f64,
    lattice: TorusLattice,
    dim: usize,
    reach: i64,
    offsets: Vec<i64>,
    linear: Vec<isize>,
    weights: Vec<f64>,
    /// Maximal stretches of `weights` along axis 0, for wrapped sites.
    runs: Vec<Run>,
    /// Weight by torus displacement index (`lattice.shift(0, z)`).
    dense: Vec<f64>,
    normalized: bool,
    raw_row_sum: f64,
    row_sum: f64,
    sum_sq: f64,
}

impl KacKernel {
    pub fn build(gamma: f64, lattice: TorusLattice, normalized: bool) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Kernel(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        let dim = lattice.dim();
        let n = lattice.side();
        let inv = 1.0 / gamma;
        // largest integer strictly below 1/γ
        let mut reach = inv.ceil() as i64 - 1;
        if (reach + 1) as f64 * gamma < 1.0 {
            reach += 1;
        }
        if 2 * reach >= n as i64 {
            return Err(Error::Kernel(format!(
                "kernel support wraps onto itself: range 1/gamma = {inv} needs side > {}, got {n}",
                2 * reach
            )));
        }
        let phi = Mollifier::new(dim)?;
        let scale = gamma.powi(dim as i32);
        let width = (2 * reach + 1) as usize;
        let mut offsets = Vec::new();
        let mut linear = Vec::new();
        let mut weights = Vec::new();
        let mut dense = vec![0.0; lattice.site_count()];
        let mut z = vec![0i64; dim];
        for k in 0..width.pow(dim as u32) {
            let mut rest = k;
            for zi in z.iter_mut() {
                *zi = (rest % width) as i64 - reach;
                rest /= width;
            }
            let r2: f64 = z.iter().map(|&v| (v as f64 * gamma).powi(2)).sum();
            if r2 >= 1.0 {
                continue;
            }
            let w = scale * phi.at_norm2(r2);
            offsets.extend_from_slice(&z);
            let lin = z
                .iter()
                .rev()
                .fold(0isize, |acc, &v| acc * n as isize + v as isize);
            linear.push(lin);
            weights.push(w);
            dense[lattice.shift(0, &z)] = w;
        }
        let mut runs: Vec<Run> = Vec::new();
        for k in 0..weights.len() {
            let z = &offsets[k * dim..(k + 1) * dim];
            match runs.last_mut() {
                Some(run) if run.first[1..] == z[1..] && run.first[0] + run.len as i64 == z[0] => run.len += 1,
                _ => runs.push(Run {
                    start: k,
                    len: 1,
                    first: z.to_vec(),
                }),
            }
        }
        let raw_row_sum: f64 = weights.iter().sum();
        if normalized {
            weights.iter_mut().for_each(|w| *w /= raw_row_sum);
            dense.iter_mut().for_each(|w| *w /= raw_row_sum);
        }
        let row_sum = weights.iter().sum();
        let sum_sq = weights.iter().map(|w| w * w).sum();
        Ok(Self {
            gamma,
            lattice,
            dim,
            reach,
            offsets,
            linear,
            weights,
            runs,
            dense,
            normalized,
            raw_row_sum,
            row_sum,
            sum_sq,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn support_size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn offset(&self, k: usize) -> &[i64] {
        &self.offsets[k * self.dim..(k + 1) * self.dim]
    }

    /// Σ_y J(x, y) for the stored (possibly normalized) weights.
    pub fn row_sum(&self) -> f64 {
        self.row_sum
    }

    /// Σ_y γ^d φ(γ(x - y)) before normalization, i.e. `1 + s(γ)`.
    pub fn raw_row_sum(&self) -> f64 {
        self.raw_row_sum
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.sum_sq
    }

    /// `J(x, y)`; zero outside the support.
    pub fn weight(&self, x: usize, y: usize) -> f64 {
        let cx = self.lattice.coords(x);
        let cy = self.lattice.coords(y);
        let n = self.lattice.side();
        let d: Vec<usize> = cx.iter().zip(&cy).map(|(&a, &b)| (b + n - a) % n).collect();
        self.dense[self.lattice.index(&d)]
    }

    /// Calls `f(y, J(x, y))` for every `y` in the support around `site`.
    #[inline]
    pub fn for_each_in_support(&self, site: usize, mut f: impl FnMut(usize, f64)) {
        let n = self.lattice.side();
        let r = self.reach as usize;
        let mut rest = site;
        let mut interior = true;
        for _ in 0..self.dim {
            let c = rest % n;
            rest /= n;
            if c < r || c + r >= n {
                interior = false;
                break;
            }
        }
        if interior {
            let base = site as isize;
            for (&lin, &w) in self.linear.iter().zip(&self.weights) {
                f((base + lin) as usize, w);
            }
        } else {
            let n64 = n as i64;
            let c0 = (site % n) as i64;
            for run in &self.runs {
                let mut base = 0usize;
                let mut stride = n;
                let mut rest = site / n;
                for &z in &run.first[1..] {
                    base += ((rest % n) as i64 + z).rem_euclid(n64) as usize * stride;
                    rest /= n;
                    stride *= n;
                }
                let x = (c0 + run.first[0]).rem_euclid(n64) as usize;
                let ws = &self.weights[run.start..run.start + run.len];
                let head = run.len.min(n - x);
                for (j, &w) in ws[..head].iter().enumerate() {
                    f(base + x + j, w);
                }
                for (j, &w) in ws[head..].iter().enumerate() {
                    f(base + j, w);
                }
            }
        }
    }

    pub fn summary(&self) -> KernelSummary {
        KernelSummary {
            gamma: self.gamma,
            dim: self.dim,
            support: self.support_size(),
            normalized: self.normalized,
            raw_row_sum: self.raw_row_sum,
            row_sum_error: (self.row_sum - 1.0).abs(),
        }
    }
}

pub fn build_kernel(gamma: f64, lattice: TorusLattice, normalized: bool) -> Result<KacKernel> {
    KacKernel::build(gamma, lattice, normalized)
}

/// `I^γ_x(σ) = Σ_y J_γ(x, y) σ(y)` at every site.
pub fn kac_field(config: &SpinConfig, kernel: &KacKernel) -> Result<Vec<f64>> {
    if config.lattice() != kernel.lattice() {
        return Err(Error::Kernel("configuration and kernel live on different lattices".into()));
    }
    let spins = config.spins();
    Ok((0..spins.len())
        .map(|x| {
            let mut acc = 0.0;
            kernel.for_each_in_support(x, |y, w| acc += w * spins[y] as f64);
            acc
        })
        .collect())
}

/// Keyed one-line record of a kernel for experiment logs.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelSummary {
    pub gamma: f64,
    pub dim: usize,
    pub support: usize,
    pub normalized: bool,
    pub raw_row_sum: f64,
    pub row_sum_error: f64,
}

impl fmt::Display for KernelSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "kernel gamma={} dim={} support={} normalized={} raw_row_sum={} row_sum_error={:e}",
            self.gamma, self.dim, self.support, self.normalized, self.raw_row_sum, self.row_sum_error
        )
    }
}

/// Block-pair averaged kernel `J̄^(L)(k, k') = L^d J^(L)(x, y)` on the torus of
/// blocks of side `L`.
#[derive(Clone, Debug)]
pub struct CoarseKernel {
    gamma: f64,
    block_side: usize,
    lattice: TorusLattice,
    blocks_per_axis: usize,
    /// `J̄` indexed by the block displacement on the torus of blocks.
    table: Vec<f64>,
    subdivisions: usize,
}

impl CoarseKernel {
    pub fn build(gamma: f64, block_side: usize, lattice: TorusLattice) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Kernel(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if block_side == 0 || lattice.side() % block_side != 0 {
            return Err(Error::Kernel(format!(
                "block side {block_side} does not divide side {}",
                lattice.side()
            )));
        }
        if gamma * block_side as f64 >= 1.0 {
            return Err(Error::Kernel(format!(
                "coarse scale exceeds interaction range: gamma * L = {} >= 1",
                gamma * block_side as f64
            )));
        }
        let reach = (1.0 / gamma).ceil() as i64;
        if 2 * (reach + block_side as i64) >= lattice.side() as i64 {
            return Err(Error::Kernel(format!(
                "coarse kernel support wraps onto itself on side {}",
                lattice.side()
            )));
        }
        let per_axis = lattice.side() / block_side;
        let mut m = 4;
        let mut table = coarse_table(gamma, block_side, lattice.dim(), per_axis, reach, m);
        while m < 256 {
            let finer = coarse_table(gamma, block_side, lattice.dim(), per_axis, reach, 2 * m);
            let change = table
                .iter()
                .zip(&finer)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let row_change = (table.iter().sum::<f64>() - finer.iter().sum::<f64>()).abs();
            table = finer;
            m *= 2;
            if change < 1e-12 && row_change < 1e-11 {
                break;
            }
        }
        Ok(Self {
            gamma,
            block_side,
            lattice,
            blocks_per_axis: per_axis,
            table,
            subdivisions: m,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn block_count(&self) -> usize {
        self.table.len()
    }

    /// Quadrature points per unit length the refinement settled on.
    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }

    fn block_coords(&self, k: usize) -> Vec<usize> {
        let mut rest = k;
        (0..self.lattice.dim())
            .map(|_| {
                let c = rest % self.blocks_per_axis;
                rest /= self.blocks_per_axis;
                c
            })
            .collect()
    }

    /// `J̄^(L)(k, k')` for block indices in the partition's ordering.
    pub fn block_weight(&self, k: usize, kp: usize) -> f64 {
        let a = self.block_coords(k);
        let b = self.block_coords(kp);
        let p = self.blocks_per_axis;
        let idx = a
            .iter()
            .zip(&b)
            .rev()
            .fold(0usize, |acc, (&x, &y)| acc * p + (y + p - x) % p);
        self.table[idx]
    }

    /// `J^(L)(x, y)` for lattice sites.
    pub fn site_weight(&self, x: usize, y: usize) -> f64 {
        let bs = self.block_side;
        let p = self.blocks_per_axis;
        let cx = self.lattice.coords(x);
        let cy = self.lattice.coords(y);
        let idx = cx
            .iter()
            .zip(&cy)
            .rev()
            .fold(0usize, |acc, (&a, &b)| acc * p + (b / bs + p - a / bs) % p);
        self.table[idx] / (bs.pow(self.lattice.dim() as u32)) as f64
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.block_count())
            .map(|k| (0..self.block_count()).map(|kp| self.block_weight(k, kp)).sum())
            .collect()
    }
}

pub fn build_coarse_kernel(gamma: f64, block_side: usize, lattice: TorusLattice) -> Result<CoarseKernel> {
    CoarseKernel::build(gamma, block_side, lattice)
}

/// Midpoint quadrature of `L^{-d} ∫ Π_i tent_L(s_i - L Δk_i) γ^d φ(γ s) ds`, which is
/// the block-pair double integral rewritten over the difference `s = r - r'`.
fn coarse_table(gamma: f64, l: usize, dim: usize, per_axis: usize, reach: i64, m: usize) -> Vec<f64> {
    let phi = Mollifier::new(dim).expect("dim > 0");
    let lf = l as f64;
    let h = 1.0 / m as f64;
    let pts = (2 * reach as usize) * m;
    let coords: Vec<f64> = (0..pts).map(|i| -(reach as f64) + (i as f64 + 0.5) * h).collect();
    // per axis: the two block displacements whose tents cover s, and their tent heights / L
    let split: Vec<[(i64, f64); 2]> = coords
        .iter()
        .map(|&s| {
            let t = s / lf;
            let j = t.floor();
            let frac = t - j;
            [(j as i64, 1.0 - frac), (j as i64 + 1, frac)]
        })
        .collect();
    let mut table = vec![0.0; per_axis.pow(dim as u32)];
    let scale = gamma.powi(dim as i32) * h.powi(dim as i32);
    let total = pts.pow(dim as u32);
    let mut idx = vec![0usize; dim];
    for k in 0..total {
        let mut rest = k;
        let mut r2 = 0.0;
        for slot in idx.iter_mut() {
            *slot = rest % pts;
            rest /= pts;
            r2 += (coords[*slot] * gamma).powi(2);
        }
        if r2 >= 1.0 {
            continue;
        }
        let w = scale * phi.at_norm2(r2);
        for corner in 0..(1usize << dim) {
            let mut frac = 1.0;
            let mut cell = 0usize;
            for axis in (0..dim).rev() {
                let (j, f) = split[idx[axis]][(corner >> axis) & 1];
                frac *= f;
                cell = cell * per_axis + j.rem_euclid(per_axis as i64) as usize;
            }
            if frac > 0.0 {
                table[cell] += w * frac;
            }
        }
    }
    table
}

/// `max_{x in block 0, y} |J_γ(x, y) - J^(L)(x, y)|` against the raw kernel.
pub fn coarse_kernel_error(raw: &KacKernel, coarse: &CoarseKernel) -> f64 {
    let lat = raw.lattice();
    let partition_sites: Vec<usize> = (0..lat.site_count())
        .filter(|&x| lat.coords(x).iter().all(|&c| c < coarse.block_side))
        .collect();
    let mut worst: f64 = 0.0;
    for &x in &partition_sites {
        for y in 0..lat.site_count() {
            worst = worst.max((raw.weight(x, y) - coarse.site_weight(x, y)).abs());
        }
    }
    worst
}
