//! Torus geometry: site indexing, neighbours, Euclidean balls, block partitions
//! and the discrete magnetization grids `I_n`.
//!
//! Sites are indexed with the first coordinate running fastest, so in two
//! dimensions `site = x + side * y`.

use rand::Rng;

use crate::error::{Error, Result};

/// A `dim`-dimensional periodic cube of side `side`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TorusLattice {
    dim: usize,
    side: usize,
    site_count: usize,
}

impl TorusLattice {
    pub fn new(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Lattice("dimension must be positive".into()));
        }
        if side < 2 {
            return Err(Error::Lattice(format!("side must be at least 2, got {side}")));
        }
        let site_count = (0..dim)
            .try_fold(1usize, |acc, _| acc.checked_mul(side))
            .ok_or_else(|| Error::Lattice("site count overflows".into()))?;
        Ok(Self {
            dim,
            side,
            site_count,
        })
    }

    /// Same as [`TorusLattice::new`] but also requires a power-of-two side.
    pub fn dyadic(dim: usize, side: usize) -> Result<Self> {
        if !side.is_power_of_two() {
            return Err(Error::Lattice(format!(
                "side must be a power of 2, got {side}"
            )));
        }
        Self::new(dim, side)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn site_count(&self) -> usize {
        self.site_count
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.dim);
        let mut rest = site;
        for _ in 0..self.dim {
            out.push(rest % self.side);
            rest /= self.side;
        }
        out
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.dim);
        coords
            .iter()
            .rev()
            .fold(0usize, |acc, &c| acc * self.side + (c % self.side))
    }

    /// Site reached from `site` by the integer displacement `offset`, modulo the torus.
    pub fn shift(&self, site: usize, offset: &[i64]) -> usize {
        let n = self.side as i64;
        let mut rest = site;
        let mut stride = 1usize;
        let mut out = 0usize;
        for &z in offset.iter().take(self.dim) {
            let c = (rest % self.side) as i64;
            rest /= self.side;
            out += (c + z).rem_euclid(n) as usize * stride;
            stride *= self.side;
        }
        out
    }

    /// Nearest neighbours of `site` with multiplicities. For `side == 2` the
    /// `+e_i` and `-e_i` neighbours coincide and are reported once with
    /// multiplicity 2, so the multiplicities always add up to `2 * dim`.
    pub fn neighbors(&self, site: usize) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::with_capacity(2 * self.dim);
        let mut offset = vec![0i64; self.dim];
        for axis in 0..self.dim {
            for step in [1i64, -1] {
                offset[axis] = step;
                let y = self.shift(site, &offset);
                match out.iter_mut().find(|(s, _)| *s == y) {
                    Some((_, m)) => *m += 1,
                    None => out.push((y, 1)),
                }
            }
            offset[axis] = 0;
        }
        out
    }

    /// Macroscopic position of a site in the unit torus `[-1/2, 1/2)^d`.
    pub fn position(&self, site: usize) -> Vec<f64> {
        let n = self.side as f64;
        self.coords(site)
            .into_iter()
            .map(|c| c as f64 / n - 0.5)
            .collect()
    }

    /// Integer offsets `z` with `|z|_2 <= radius`, one representative per
    /// distinct torus displacement. `radius = 0` gives only the origin.
    pub fn ball_offsets(&self, radius: f64) -> Result<Vec<Vec<i64>>> {
        if !(radius >= 0.0) || radius > self.side as f64 / 2.0 {
            return Err(Error::Lattice(format!(
                "ball radius {radius} outside [0, side/2 = {}]",
                self.side as f64 / 2.0
            )));
        }
        let reach = radius.floor() as i64;
        let r2 = radius * radius;
        let mut seen = vec![false; self.site_count];
        let mut out = Vec::new();
        let width = (2 * reach + 1) as usize;
        let total = width.pow(self.dim as u32);
        let mut z = vec![0i64; self.dim];
        for k in 0..total {
            let mut rest = k;
            for zi in z.iter_mut() {
                *zi = (rest % width) as i64 - reach;
                rest /= width;
            }
            let norm2: f64 = z.iter().map(|&v| (v * v) as f64).sum();
            if norm2 <= r2 + 1e-12 {
                let s = self.shift(0, &z);
                if !seen[s] {
                    seen[s] = true;
                    out.push(z.clone());
                }
            }
        }
        Ok(out)
    }

    /// Sites of the Euclidean ball `B_R(center)` on the torus, without repeats.
    /// `radius = 0` is the single site `center`.
    pub fn ball_sites(&self, center: usize, radius: f64) -> Result<Vec<usize>> {
        if center >= self.site_count {
            return Err(Error::Lattice(format!("site {center} out of range")));
        }
        Ok(self
            .ball_offsets(radius)?
            .iter()
            .map(|z| self.shift(center, z))
            .collect())
    }
}

/// A `±1` spin configuration on a torus lattice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinConfig {
    lattice: TorusLattice,
    spins: Vec<i8>,
}

impl SpinConfig {
    pub fn from_spins(lattice: TorusLattice, spins: Vec<i8>) -> Result<Self> {
        if spins.len() != lattice.site_count() {
            return Err(Error::Lattice(format!(
                "expected {} spins, got {}",
                lattice.site_count(),
                spins.len()
            )));
        }
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::Lattice(format!("spin value {bad} is not ±1")));
        }
        Ok(Self { lattice, spins })
    }

    pub fn constant(lattice: TorusLattice, sign: i8) -> Self {
        let s = if sign >= 0 { 1 } else { -1 };
        Self {
            lattice,
            spins: vec![s; lattice.site_count()],
        }
    }

    pub fn all_plus(lattice: TorusLattice) -> Self {
        Self::constant(lattice, 1)
    }

    pub fn all_minus(lattice: TorusLattice) -> Self {
        Self::constant(lattice, -1)
    }

    /// `(-1)^(sum of coordinates)`.
    pub fn checkerboard(lattice: TorusLattice) -> Self {
        let spins = (0..lattice.site_count())
            .map(|x| {
                if lattice.coords(x).iter().sum::<usize>() % 2 == 0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        Self { lattice, spins }
    }

    pub fn random<R: Rng + ?Sized>(lattice: TorusLattice, rng: &mut R) -> Self {
        let spins = (0..lattice.site_count())
            .map(|_| if rng.gen::<bool>() { 1 } else { -1 })
            .collect();
        Self { lattice, spins }
    }

    /// Configuration whose site `i` is `+1` iff bit `i` of `bits` is set.
    pub fn from_bits(lattice: TorusLattice, bits: u64) -> Self {
        let spins = (0..lattice.site_count())
            .map(|i| if (bits >> i) & 1 == 1 { 1 } else { -1 })
            .collect();
        Self { lattice, spins }
    }

    pub fn to_bits(&self) -> u64 {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .fold(0u64, |acc, (i, _)| acc | (1u64 << i))
    }

    #[inline]
    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    #[inline]
    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    #[inline]
    pub fn get(&self, site: usize) -> i8 {
        self.spins[site]
    }

    #[inline]
    pub fn flip(&mut self, site: usize) {
        self.spins[site] = -self.spins[site];
    }

    #[inline]
    pub fn set(&mut self, site: usize, value: i8) {
        debug_assert!(value == 1 || value == -1);
        self.spins[site] = value;
    }

    pub fn sum(&self) -> i64 {
        self.spins.iter().map(|&s| s as i64).sum()
    }

    pub fn magnetization(&self) -> f64 {
        self.sum() as f64 / self.spins.len() as f64
    }

    pub fn negated(&self) -> Self {
        Self {
            lattice: self.lattice,
            spins: self.spins.iter().map(|&s| -s).collect(),
        }
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| s as f64).collect()
    }
}

/// Tiling of the torus into cubes of side `block_side`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPartition {
    lattice: TorusLattice,
    block_side: usize,
    per_axis: usize,
    block_of_site: Vec<usize>,
    sites_of_block: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn new(lattice: TorusLattice, block_side: usize) -> Result<Self> {
        if block_side == 0 || lattice.side() % block_side != 0 {
            return Err(Error::Lattice(format!(
                "block side {block_side} does not divide lattice side {}",
                lattice.side()
            )));
        }
        let per_axis = lattice.side() / block_side;
        let block_count = per_axis.pow(lattice.dim() as u32);
        let mut block_of_site = vec![0; lattice.site_count()];
        let mut sites_of_block = vec![Vec::with_capacity(block_side.pow(lattice.dim() as u32)); block_count];
        for (x, slot) in block_of_site.iter_mut().enumerate() {
            let b = lattice
                .coords(x)
                .iter()
                .rev()
                .fold(0usize, |acc, &c| acc * per_axis + c / block_side);
            *slot = b;
            sites_of_block[b].push(x);
        }
        Ok(Self {
            lattice,
            block_side,
            per_axis,
            block_of_site,
            sites_of_block,
        })
    }

    /// Partition into `cells_per_axis^d` macro cells.
    pub fn with_cells(lattice: TorusLattice, cells_per_axis: usize) -> Result<Self> {
        if cells_per_axis == 0 || lattice.side() % cells_per_axis != 0 {
            return Err(Error::Lattice(format!(
                "{cells_per_axis} cells per axis do not divide side {}",
                lattice.side()
            )));
        }
        Self::new(lattice, lattice.side() / cells_per_axis)
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn blocks_per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn block_count(&self) -> usize {
        self.sites_of_block.len()
    }

    pub fn block_volume(&self) -> usize {
        self.block_side.pow(self.lattice.dim() as u32)
    }

    #[inline]
    pub fn block_of(&self, site: usize) -> usize {
        self.block_of_site[site]
    }

    pub fn sites(&self, block: usize) -> &[usize] {
        &self.sites_of_block[block]
    }

    /// Macroscopic centre of a block in `[-1/2, 1/2)^d`.
    pub fn block_center(&self, block: usize) -> Vec<f64> {
        let cell = 1.0 / self.per_axis as f64;
        let mut rest = block;
        (0..self.lattice.dim())
            .map(|_| {
                let c = rest % self.per_axis;
                rest /= self.per_axis;
                -0.5 + (c as f64 + 0.5) * cell
            })
            .collect()
    }

    /// Samples `profile` at every block centre.
    pub fn sample_centers(&self, profile: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.block_count())
            .map(|b| profile(&self.block_center(b)))
            .collect()
    }
}

/// The grid `I_n = {(2i - n)/n : i = 0..=n}` of attainable block magnetizations.
#[derive(Clone, Debug, PartialEq)]
pub struct MagGrid {
    n: usize,
    values: Vec<f64>,
}

impl MagGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("magnetization grid needs n >= 1".into()));
        }
        let values = (0..=n).map(|i| grid_value(i, n)).collect();
        Ok(Self { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn mag_grid(n: usize) -> Result<MagGrid> {
    MagGrid::new(n)
}

#[inline]
pub fn grid_value(level: usize, n: usize) -> f64 {
    (2.0 * level as f64 - n as f64) / n as f64
}

/// Index `i` of `ceil_n(t) = (2i - n)/n`, i.e. the number of plus spins a block
/// of `n` sites needs to sit at the grid ceiling of `t`.
pub fn ceil_level(t: f64, n: usize) -> Result<usize> {
    if !(-1.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("{t} is outside [-1, 1]")));
    }
    if n == 0 {
        return Err(Error::Domain("magnetization grid needs n >= 1".into()));
    }
    let mut i = (((t + 1.0) * n as f64) / 2.0).ceil().clamp(0.0, n as f64) as usize;
    // guard against rounding on either side of a grid point
    while i > 0 && grid_value(i - 1, n) >= t {
        i -= 1;
    }
    while i < n && grid_value(i, n) < t {
        i += 1;
    }
    Ok(i)
}

/// `min { t' in I_n : t' >= t }`.
pub fn ceil_to_grid(t: f64, n: usize) -> Result<f64> {
    Ok(grid_value(ceil_level(t, n)?, n))
}

/// Per-block averages of a site field.
pub fn block_average<T: Copy + Into<f64>>(field: &[T], partition: &BlockPartition) -> Result<Vec<f64>> {
    if field.len() != partition.lattice().site_count() {
        return Err(Error::Lattice(format!(
            "field has {} entries, lattice has {} sites",
            field.len(),
            partition.lattice().site_count()
        )));
    }
    Ok((0..partition.block_count())
        .map(|b| {
            let sites = partition.sites(b);
            sites.iter().map(|&x| field[x].into()).sum::<f64>() / sites.len() as f64
        })
        .collect())
}

/// Tests `config ∈ Ω_{Λ,l}(u)`: each block magnetization equals the grid
/// ceiling of the block target `u_blocks[i]`.
pub fn constraint_set_membership(
    config: &SpinConfig,
    partition: &BlockPartition,
    u_blocks: &[f64],
) -> Result<bool> {
    let targets = constraint_levels(partition, u_blocks)?;
    Ok((0..partition.block_count()).all(|b| {
        let plus = partition
            .sites(b)
            .iter()
            .filter(|&&x| config.get(x) == 1)
            .count();
        plus == targets[b]
    }))
}

/// Required number of plus spins per block for `Ω_{Λ,l}(u)`.
pub fn constraint_levels(partition: &BlockPartition, u_blocks: &[f64]) -> Result<Vec<usize>> {
    if u_blocks.len() != partition.block_count() {
        return Err(Error::Lattice(format!(
            "profile has {} cells, partition has {} blocks",
            u_blocks.len(),
            partition.block_count()
        )));
    }
    let vol = partition.block_volume();
    u_blocks.iter().map(|&u| ceil_level(u, vol)).collect()
}
