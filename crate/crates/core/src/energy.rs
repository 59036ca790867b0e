//! Energies `H = H^nn + K` and their O(support) single-flip updates.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::{kac_field, KacKernel};
use crate::lattice::{SpinConfig, TorusLattice};

/// Boundary condition of the nearest-neighbour part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    /// Torus: every site has `2d` neighbours.
    Periodic,
    /// Free box surrounded by frozen `+1` spins.
    Plus,
    /// Free box surrounded by frozen `-1` spins.
    Minus,
    /// Free box, no coupling across the boundary.
    Free,
}

impl Boundary {
    /// Sign of the frozen outer layer, zero when there is none.
    pub fn sign(self) -> i8 {
        match self {
            Boundary::Plus => 1,
            Boundary::Minus => -1,
            Boundary::Periodic | Boundary::Free => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Boundary::Periodic => "periodic",
            Boundary::Plus => "plus",
            Boundary::Minus => "minus",
            Boundary::Free => "free",
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "plus" => Ok(Boundary::Plus),
            "minus" => Ok(Boundary::Minus),
            "free" => Ok(Boundary::Free),
            other => Err(Error::Model(format!("unknown boundary condition {other:?}"))),
        }
    }
}

/// Nearest-neighbour bond structure of a lattice under a boundary condition.
///
/// Edges are unordered pairs listed once; on a torus of side 2 the two
/// bonds between a pair of sites are both kept.
#[derive(Clone, Debug)]
pub struct Bonds {
    lattice: TorusLattice,
    boundary: Boundary,
    edges: Vec<(usize, usize)>,
    adj_start: Vec<usize>,
    adj: Vec<(usize, i32)>,
    outside: Vec<u8>,
}

impl Bonds {
    pub fn new(lattice: TorusLattice, boundary: Boundary) -> Self {
        let n = lattice.side();
        let d = lattice.dim();
        let mut edges = Vec::with_capacity(d * lattice.site_count());
        let mut outside = vec![0u8; lattice.site_count()];
        let mut stride = 1usize;
        for _axis in 0..d {
            for x in 0..lattice.site_count() {
                let c = (x / stride) % n;
                if c + 1 < n {
                    edges.push((x, x + stride));
                } else if boundary == Boundary::Periodic {
                    edges.push((x, x + stride - n * stride));
                } else {
                    outside[x] += 1;
                }
                if c == 0 && boundary != Boundary::Periodic {
                    outside[x] += 1;
                }
            }
            stride *= n;
        }
        let mut counts = vec![0usize; lattice.site_count()];
        let mut pairs: Vec<Vec<(usize, i32)>> = vec![Vec::new(); lattice.site_count()];
        for &(a, b) in &edges {
            for (p, q) in [(a, b), (b, a)] {
                match pairs[p].iter_mut().find(|(s, _)| *s == q) {
                    Some((_, m)) => *m += 1,
                    None => pairs[p].push((q, 1)),
                }
                counts[p] += 1;
            }
        }
        let mut adj_start = Vec::with_capacity(lattice.site_count() + 1);
        let mut adj = Vec::new();
        for p in pairs {
            adj_start.push(adj.len());
            adj.extend(p);
        }
        adj_start.push(adj.len());
        Self {
            lattice,
            boundary,
            edges,
            adj_start,
            adj,
            outside,
        }
    }

    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbours of `x` with bond multiplicities.
    #[inline]
    pub fn neighbors(&self, x: usize) -> &[(usize, i32)] {
        &self.adj[self.adj_start[x]..self.adj_start[x + 1]]
    }

    /// Number of bonds from `x` to the frozen outer layer.
    #[inline]
    pub fn outside_bonds(&self, x: usize) -> u8 {
        self.outside[x]
    }

    /// `H^nn(σ)` including couplings to a frozen boundary layer.
    pub fn energy(&self, config: &SpinConfig) -> f64 {
        let s = config.spins();
        let bulk: i64 = self
            .edges
            .iter()
            .map(|&(a, b)| (s[a] * s[b]) as i64)
            .sum();
        let tau = self.boundary.sign() as i64;
        let wall: i64 = if tau == 0 {
            0
        } else {
            s.iter()
                .zip(&self.outside)
                .map(|(&v, &m)| tau * v as i64 * m as i64)
                .sum()
        };
        -(bulk + wall) as f64
    }

    /// Local field `Σ_{y∼x} σ(y) + τ·(outside bonds)`.
    #[inline]
    pub fn local_field(&self, spins: &[i8], x: usize) -> i32 {
        let mut acc: i32 = self
            .neighbors(x)
            .iter()
            .map(|&(y, m)| m * spins[y] as i32)
            .sum();
        acc += self.boundary.sign() as i32 * self.outside[x] as i32;
        acc
    }
}

/// `H^nn(σ)` for a configuration under the given boundary condition.
pub fn nn_energy(config: &SpinConfig, boundary: Boundary) -> f64 {
    Bonds::new(*config.lattice(), boundary).energy(config)
}

/// `K(σ) = Σ_x (I^γ_x(σ) - α_x)^2`.
pub fn kac_penalty(config: &SpinConfig, kernel: &KacKernel, alpha: &[f64]) -> Result<f64> {
    if alpha.len() != config.lattice().site_count() {
        return Err(Error::Model(format!(
            "alpha field has {} entries for {} sites",
            alpha.len(),
            config.lattice().site_count()
        )));
    }
    let field = kac_field(config, kernel)?;
    Ok(field
        .iter()
        .zip(alpha)
        .map(|(i, a)| (i - a) * (i - a))
        .sum())
}

/// Kac part of a model: the kernel and the target field `α(εx)` per site.
#[derive(Clone, Debug)]
pub struct KacTerm {
    pub kernel: Arc<KacKernel>,
    pub alpha: Vec<f64>,
}

/// Everything that defines the Gibbs measure `exp(-β H) / Z`.
#[derive(Clone, Debug)]
pub struct ModelParams {
    beta: f64,
    bonds: Bonds,
    kac: Option<KacTerm>,
    field: f64,
}

impl ModelParams {
    /// Pure nearest-neighbour model with a homogeneous field `h`.
    pub fn nearest_neighbour(lattice: TorusLattice, beta: f64, boundary: Boundary, field: f64) -> Result<Self> {
        check_beta(beta)?;
        if !field.is_finite() {
            return Err(Error::Model("field must be finite".into()));
        }
        Ok(Self {
            beta,
            bonds: Bonds::new(lattice, boundary),
            kac: None,
            field,
        })
    }

    /// Ising model with the Kac penalty on the torus.
    pub fn kac(beta: f64, kernel: Arc<KacKernel>, alpha: Vec<f64>) -> Result<Self> {
        check_beta(beta)?;
        let lattice = *kernel.lattice();
        if alpha.len() != lattice.site_count() {
            return Err(Error::Model(format!(
                "alpha field has {} entries for {} sites",
                alpha.len(),
                lattice.site_count()
            )));
        }
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(Error::Model("alpha field must be finite".into()));
        }
        Ok(Self {
            beta,
            bonds: Bonds::new(lattice, Boundary::Periodic),
            kac: Some(KacTerm { kernel, alpha }),
            field: 0.0,
        })
    }

    /// Kac model with a constant target `α`.
    pub fn kac_constant(beta: f64, kernel: Arc<KacKernel>, alpha: f64) -> Result<Self> {
        let n = kernel.lattice().site_count();
        Self::kac(beta, kernel, vec![alpha; n])
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let mut out = self.clone();
        out.beta = beta;
        Ok(out)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lattice(&self) -> &TorusLattice {
        self.bonds.lattice()
    }

    pub fn bonds(&self) -> &Bonds {
        &self.bonds
    }

    pub fn boundary(&self) -> Boundary {
        self.bonds.boundary()
    }

    pub fn kac_term(&self) -> Option<&KacTerm> {
        self.kac.as_ref()
    }

    pub fn field(&self) -> f64 {
        self.field
    }

    /// Full energy evaluated from scratch.
    pub fn energy(&self, config: &SpinConfig) -> Result<f64> {
        let mut e = self.bonds.energy(config) - self.field * config.sum() as f64;
        if let Some(k) = &self.kac {
            e += kac_penalty(config, &k.kernel, &k.alpha)?;
        }
        Ok(e)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Model(format!("beta must be a finite non-negative number, got {beta}")));
    }
    Ok(())
}

/// A configuration with cached Kac field and energy parts.
#[derive(Clone, Debug)]
pub struct EnergyState {
    params: Arc<ModelParams>,
    config: SpinConfig,
    kac_field: Vec<f64>,
    nn: f64,
    kac: f64,
}

impl EnergyState {
    pub fn new(params: Arc<ModelParams>, config: SpinConfig) -> Result<Self> {
        if config.lattice() != params.lattice() {
            return Err(Error::Model("configuration lattice does not match the model".into()));
        }
        let mut state = Self {
            params,
            config,
            kac_field: Vec::new(),
            nn: 0.0,
            kac: 0.0,
        };
        state.resync()?;
        Ok(state)
    }

    /// Recomputes every cache from the configuration.
    pub fn resync(&mut self) -> Result<()> {
        let p = &self.params;
        self.nn = p.bonds.energy(&self.config) - p.field * self.config.sum() as f64;
        if let Some(k) = &p.kac {
            self.kac_field = kac_field(&self.config, &k.kernel)?;
            self.kac = self
                .kac_field
                .iter()
                .zip(&k.alpha)
                .map(|(i, a)| (i - a) * (i - a))
                .sum();
        } else {
            self.kac_field.clear();
            self.kac = 0.0;
        }
        Ok(())
    }

    pub fn params(&self) -> &Arc<ModelParams> {
        &self.params
    }

    pub fn config(&self) -> &SpinConfig {
        &self.config
    }

    pub fn into_config(self) -> SpinConfig {
        self.config
    }

    /// Cached `I^γ` (empty for the pure nearest-neighbour model).
    pub fn kac_field(&self) -> &[f64] {
        &self.kac_field
    }

    /// Nearest-neighbour part, including boundary and field terms.
    pub fn nn_energy(&self) -> f64 {
        self.nn
    }

    pub fn kac_energy(&self) -> f64 {
        self.kac
    }

    pub fn total_energy(&self) -> f64 {
        self.nn + self.kac
    }

    #[inline]
    fn nn_delta(&self, x: usize) -> f64 {
        let s = self.config.spins();
        let sx = s[x] as f64;
        2.0 * sx * (self.params.bonds.local_field(s, x) as f64 + self.params.field)
    }

    #[inline]
    fn kac_delta(&self, x: usize) -> f64 {
        match &self.params.kac {
            None => 0.0,
            Some(k) => {
                let sx = self.config.get(x) as f64;
                let field = &self.kac_field;
                let alpha = &k.alpha;
                let mut cross = 0.0;
                k.kernel
                    .for_each_in_support(x, |y, w| cross += w * (field[y] - alpha[y]));
                4.0 * k.kernel.sum_of_squares() - 4.0 * sx * cross
            }
        }
    }

    /// `H(σ^x) - H(σ)` for the configuration with spin `x` flipped.
    #[inline]
    pub fn flip_delta(&self, x: usize) -> f64 {
        self.nn_delta(x) + self.kac_delta(x)
    }

    /// Flips spin `x` and updates the caches in O(kernel support).
    pub fn apply_flip(&mut self, x: usize) {
        let dn = self.nn_delta(x);
        let dk = self.kac_delta(x);
        self.apply_flip_with(x, dn, dk);
    }

    /// Flip with precomputed deltas, as returned by [`EnergyState::flip_parts`].
    pub(crate) fn apply_flip_with(&mut self, x: usize, dn: f64, dk: f64) {
        let sx = self.config.get(x) as f64;
        if let Some(k) = &self.params.kac {
            let field = &mut self.kac_field;
            k.kernel
                .for_each_in_support(x, |y, w| field[y] -= 2.0 * sx * w);
        }
        self.config.flip(x);
        self.nn += dn;
        self.kac += dk;
    }

    pub(crate) fn flip_parts(&self, x: usize) -> (f64, f64) {
        (self.nn_delta(x), self.kac_delta(x))
    }

    /// Sets spin `x` (no-op when already equal).
    pub fn set_spin(&mut self, x: usize, value: i8) {
        if self.config.get(x) != value {
            self.apply_flip(x);
        }
    }

    /// Compares caches against a full recomputation; fails on a relative
    /// discrepancy above `tol`.
    pub fn audit(&self, tol: f64) -> Result<()> {
        let fresh = self.params.energy(&self.config)?;
        let cached = self.total_energy();
        if (fresh - cached).abs() > tol * fresh.abs().max(1.0) {
            return Err(Error::CacheMismatch {
                cached,
                recomputed: fresh,
            });
        }
        if let Some(k) = &self.params.kac {
            let f = kac_field(&self.config, &k.kernel)?;
            for (a, b) in f.iter().zip(&self.kac_field) {
                if (a - b).abs() > tol * a.abs().max(1.0) {
                    return Err(Error::CacheMismatch {
                        cached: *b,
                        recomputed: *a,
                    });
                }
            }
        }
        Ok(())
    }
}

/// `H` re-centred around a profile `u`:
/// `H = H^nn + Σ (I - u)^2 + 2 Σ (u - α) I + Σ [(α - u)^2 - 2(u - α) u]`.
///
/// With constant `u`, `α` and a normalized kernel the linear term equals
/// `-h Σ σ` with `h = 2(α - u)`, i.e. the nearest-neighbour model in a field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecenteredEnergy {
    pub nn: f64,
    pub recentered_kac: f64,
    pub linear: f64,
    pub constant: f64,
}

impl RecenteredEnergy {
    pub fn total(&self) -> f64 {
        self.nn + self.recentered_kac + self.linear + self.constant
    }

    /// Total without the configuration-independent part.
    pub fn without_constant(&self) -> f64 {
        self.nn + self.recentered_kac + self.linear
    }
}

pub fn recentered_energy(config: &SpinConfig, kernel: &KacKernel, alpha: &[f64], u: &[f64]) -> Result<RecenteredEnergy> {
    let n = config.lattice().site_count();
    if alpha.len() != n || u.len() != n {
        return Err(Error::Model("alpha and u fields must have one entry per site".into()));
    }
    let field = kac_field(config, kernel)?;
    let mut recentered_kac = 0.0;
    let mut linear = 0.0;
    let mut constant = 0.0;
    for x in 0..n {
        let d = u[x] - alpha[x];
        recentered_kac += (field[x] - u[x]).powi(2);
        linear += 2.0 * d * field[x];
        constant += d * d - 2.0 * d * u[x];
    }
    Ok(RecenteredEnergy {
        nn: nn_energy(config, Boundary::Periodic),
        recentered_kac,
        linear,
        constant,
    })
}
