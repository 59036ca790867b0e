//! Brute-force enumeration of spin and random-cluster configurations on
//! tiny systems.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::energy::{EnergyState, ModelParams};
use crate::error::{Error, Result};
use crate::lattice::{constraint_levels, grid_value, BlockPartition, SpinConfig};
use crate::quad::{log_sum_exp, LogSumExp};
use crate::unionfind::UnionFind;

/// Largest spin system [`enumerate`] accepts.
pub const MAX_SITES: usize = 24;
/// Largest system for which the full probability vector is stored.
pub const MAX_PROBABILITY_SITES: usize = 20;
/// Largest edge set [`enumerate_fk`] accepts.
pub const MAX_EDGES: usize = 20;

const RESYNC_EVERY: u64 = 1 << 14;

/// Partition function and canonical sums of a finite system.
#[derive(Clone, Debug)]
pub struct ExactResult {
    site_count: usize,
    log_z: f64,
    /// `log Σ_{σ: #plus = k} e^{-βH}` for `k = 0..=N`.
    level_log_sums: Vec<f64>,
    probabilities: Option<Vec<f64>>,
}

impl ExactResult {
    pub fn site_count(&self) -> usize {
        self.site_count
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// Log canonical sums indexed by the number of plus spins.
    pub fn level_log_sums(&self) -> &[f64] {
        &self.level_log_sums
    }

    /// Magnetization `(2k - N)/N` of level `k`.
    pub fn level_magnetization(&self, level: usize) -> f64 {
        grid_value(level, self.site_count)
    }

    /// `log Σ_levels` of the canonical sums; equals `log_z` up to rounding.
    pub fn log_z_from_levels(&self) -> f64 {
        log_sum_exp(&self.level_log_sums)
    }

    /// Gibbs probability of each configuration, indexed by
    /// [`SpinConfig::to_bits`].
    pub fn probabilities(&self) -> Option<&[f64]> {
        self.probabilities.as_deref()
    }

    /// Per-level rows `plus_count,magnetization,log_canonical_sum`.
    pub fn write_levels_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "plus_count,magnetization,log_canonical_sum")?;
        for (k, v) in self.level_log_sums.iter().enumerate() {
            writeln!(w, "{},{},{}", k, self.level_magnetization(k), v)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EnumerateOptions {
    /// Keep the normalized probability of every configuration.
    pub probabilities: bool,
}

fn check_size(n: usize) -> Result<()> {
    if n > MAX_SITES {
        return Err(Error::TooLarge {
            size: n,
            cap: MAX_SITES,
            unit: "sites",
        });
    }
    Ok(())
}

/// Splits the `2^n` configurations into chunks keyed by a prefix of the
/// highest sites.
fn chunk_bits(n: usize) -> usize {
    if n >= 14 {
        (n - 10).min(6)
    } else {
        0
    }
}

/// Gray-code walk over the configurations whose top `n - low` sites are
/// fixed by `prefix`. The visitor sees the flipped site (`None` first) and
/// the state after the flip.
fn walk_chunk(
    params: &Arc<ModelParams>,
    low: usize,
    prefix: u64,
    mut visit: impl FnMut(Option<usize>, &EnergyState),
) -> Result<()> {
    let lattice = *params.lattice();
    let start = SpinConfig::from_bits(lattice, prefix << low);
    let mut state = EnergyState::new(params.clone(), start)?;
    let kac = params.kac_term().is_some();
    visit(None, &state);
    for i in 1u64..(1u64 << low) {
        let site = i.trailing_zeros() as usize;
        state.apply_flip(site);
        if kac && i % RESYNC_EVERY == 0 {
            state.resync()?;
        }
        visit(Some(site), &state);
    }
    Ok(())
}

/// Runs `walk_chunk` over every prefix in parallel; accumulators come back
/// in prefix order.
fn par_walk<A: Send>(
    params: &Arc<ModelParams>,
    init: impl Fn(&SpinConfig) -> A + Sync,
    step: impl Fn(&mut A, Option<usize>, &EnergyState) + Sync,
) -> Result<Vec<A>> {
    let n = params.lattice().site_count();
    check_size(n)?;
    let hi = chunk_bits(n);
    let low = n - hi;
    (0..1u64 << hi)
        .into_par_iter()
        .map(|prefix| {
            let start = SpinConfig::from_bits(*params.lattice(), prefix << low);
            let mut acc = init(&start);
            walk_chunk(params, low, prefix, |site, st| step(&mut acc, site, st))?;
            Ok(acc)
        })
        .collect()
}

struct ChunkSums {
    total: LogSumExp,
    levels: Vec<LogSumExp>,
    plus: usize,
    log_weights: Vec<f64>,
}

/// Exact partition function and per-level canonical sums.
pub fn enumerate(params: &Arc<ModelParams>, options: EnumerateOptions) -> Result<ExactResult> {
    let n = params.lattice().site_count();
    check_size(n)?;
    if options.probabilities && n > MAX_PROBABILITY_SITES {
        return Err(Error::TooLarge {
            size: n,
            cap: MAX_PROBABILITY_SITES,
            unit: "sites for a stored probability vector",
        });
    }
    let beta = params.beta();
    let chunks = par_walk(
        params,
        |start| ChunkSums {
            total: LogSumExp::default(),
            levels: vec![LogSumExp::default(); n + 1],
            plus: start.spins().iter().filter(|&&s| s == 1).count(),
            log_weights: Vec::new(),
        },
        |acc, site, st| {
            if let Some(x) = site {
                if st.config().get(x) == 1 {
                    acc.plus += 1;
                } else {
                    acc.plus -= 1;
                }
            }
            let lw = -beta * st.total_energy();
            acc.total.add(lw);
            acc.levels[acc.plus].add(lw);
            if options.probabilities {
                acc.log_weights.push(lw);
            }
        },
    )?;
    let log_z = log_sum_exp(&chunks.iter().map(|c| c.total.value()).collect::<Vec<_>>());
    let level_log_sums = (0..=n)
        .map(|k| log_sum_exp(&chunks.iter().map(|c| c.levels[k].value()).collect::<Vec<_>>()))
        .collect();
    let probabilities = options.probabilities.then(|| {
        let low = n - chunk_bits(n);
        let mut p = vec![0.0; 1 << n];
        for (prefix, c) in chunks.iter().enumerate() {
            for (i, lw) in c.log_weights.iter().enumerate() {
                let gray = (i ^ (i >> 1)) as u64;
                p[((prefix as u64) << low | gray) as usize] = (lw - log_z).exp();
            }
        }
        p
    });
    Ok(ExactResult {
        site_count: n,
        log_z,
        level_log_sums,
        probabilities,
    })
}

/// Canonical free energy `f_Λ(t) = -(β|Λ|)^{-1} log Σ_{σ: m(σ) = t} e^{-βH(σ)}`
/// on the grid `I_{|Λ|}`, linearly interpolated in between.
#[derive(Clone, Debug)]
pub struct CanonicalFreeEnergy {
    site_count: usize,
    values: Vec<f64>,
}

impl CanonicalFreeEnergy {
    pub fn from_result(result: &ExactResult, beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::Domain("canonical free energy needs beta > 0".into()));
        }
        let n = result.site_count();
        let values = result
            .level_log_sums()
            .iter()
            .map(|&s| -s / (beta * n as f64))
            .collect();
        Ok(Self { site_count: n, values })
    }

    /// Values at the grid levels `k = 0..=N`.
    pub fn grid_values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, u: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("magnetization {u} is outside [-1, 1]")));
        }
        let n = self.site_count as f64;
        let pos = (u + 1.0) * n / 2.0;
        let k = (pos.floor() as usize).min(self.site_count - 1);
        let t = pos - k as f64;
        Ok((1.0 - t) * self.values[k] + t * self.values[k + 1])
    }
}

/// `f_Λ(u)` for a nearest-neighbour model (no Kac term).
pub fn finite_free_energy(params: &Arc<ModelParams>, u: f64) -> Result<f64> {
    if params.kac_term().is_some() {
        return Err(Error::Model("finite free energy is defined for the nearest-neighbour model".into()));
    }
    let res = enumerate(params, EnumerateOptions::default())?;
    CanonicalFreeEnergy::from_result(&res, params.beta())?.at(u)
}

/// Exact `μ(Ω_{Λ,l}(u))` for block targets `u_blocks`.
pub fn ld_probability(params: &Arc<ModelParams>, partition: &BlockPartition, u_blocks: &[f64]) -> Result<f64> {
    if partition.lattice() != params.lattice() {
        return Err(Error::Lattice("partition lattice does not match the model".into()));
    }
    let targets = constraint_levels(partition, u_blocks)?;
    let block_of: Vec<usize> = (0..params.lattice().site_count())
        .map(|x| partition.block_of(x))
        .collect();
    let beta = params.beta();
    struct Acc {
        plus: Vec<usize>,
        off: usize,
        total: LogSumExp,
        inside: LogSumExp,
    }
    let chunks = par_walk(
        params,
        |start| {
            let mut plus = vec![0usize; targets.len()];
            for (x, &s) in start.spins().iter().enumerate() {
                if s == 1 {
                    plus[block_of[x]] += 1;
                }
            }
            let off = plus.iter().zip(&targets).filter(|(a, b)| a != b).count();
            Acc {
                plus,
                off,
                total: LogSumExp::default(),
                inside: LogSumExp::default(),
            }
        },
        |acc, site, st| {
            if let Some(x) = site {
                let b = block_of[x];
                let was = acc.plus[b] == targets[b];
                if st.config().get(x) == 1 {
                    acc.plus[b] += 1;
                } else {
                    acc.plus[b] -= 1;
                }
                let is = acc.plus[b] == targets[b];
                match (was, is) {
                    (true, false) => acc.off += 1,
                    (false, true) => acc.off -= 1,
                    _ => {}
                }
            }
            let lw = -beta * st.total_energy();
            acc.total.add(lw);
            if acc.off == 0 {
                acc.inside.add(lw);
            }
        },
    )?;
    let log_z = log_sum_exp(&chunks.iter().map(|c| c.total.value()).collect::<Vec<_>>());
    let log_in = log_sum_exp(&chunks.iter().map(|c| c.inside.value()).collect::<Vec<_>>());
    Ok((log_in - log_z).exp())
}

/// `-(β|Λ|)^{-1} log μ(Ω_{Λ,l}(u))`.
pub fn ld_rate(params: &Arc<ModelParams>, partition: &BlockPartition, u_blocks: &[f64]) -> Result<f64> {
    let p = ld_probability(params, partition, u_blocks)?;
    let n = params.lattice().site_count() as f64;
    Ok(-p.ln() / (params.beta() * n))
}

/// A finite graph for random-cluster enumeration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeGraph {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
}

impl EdgeGraph {
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= vertex_count || b >= vertex_count) {
            return Err(Error::Domain(format!("edge ({a}, {b}) leaves the vertex set")));
        }
        Ok(Self { vertex_count, edges })
    }

    pub fn single_edge() -> Self {
        Self {
            vertex_count: 2,
            edges: vec![(0, 1)],
        }
    }

    /// Nearest-neighbour edges of a `side^dim` box without wraparound.
    pub fn free_box(dim: usize, side: usize) -> Result<Self> {
        let lattice = crate::lattice::TorusLattice::new(dim, side)?;
        let bonds = crate::energy::Bonds::new(lattice, crate::energy::Boundary::Free);
        Self::new(lattice.site_count(), bonds.edges().to_vec())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Number of connected components of the open subgraph; bit `e` of
    /// `mask` set means edge `e` is open.
    pub fn clusters(&self, mask: u64, uf: &mut UnionFind) -> usize {
        uf.reset(self.vertex_count);
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            if (mask >> e) & 1 == 1 {
                uf.union(a, b);
            }
        }
        uf.components()
    }
}

/// Exact random-cluster law `φ(ω) ∝ p^{#open}(1-p)^{#closed} 2^{Cl(ω)}`.
#[derive(Clone, Debug)]
pub struct FkTable {
    p: f64,
    edge_count: usize,
    probabilities: Vec<f64>,
    clusters: Vec<u32>,
}

pub fn enumerate_fk(graph: &EdgeGraph, p: f64) -> Result<FkTable> {
    let m = graph.edge_count();
    if m > MAX_EDGES {
        return Err(Error::TooLarge {
            size: m,
            cap: MAX_EDGES,
            unit: "edges",
        });
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("edge probability {p} is outside [0, 1]")));
    }
    let mut uf = UnionFind::new(graph.vertex_count());
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut clusters = Vec::with_capacity(1 << m);
    let mut log_w = Vec::with_capacity(1 << m);
    for mask in 0u64..(1u64 << m) {
        let open = mask.count_ones() as usize;
        let closed = m - open;
        let cl = graph.clusters(mask, &mut uf);
        let mut lw = cl as f64 * std::f64::consts::LN_2;
        if open > 0 {
            lw += open as f64 * lp;
        }
        if closed > 0 {
            lw += closed as f64 * lq;
        }
        clusters.push(cl as u32);
        log_w.push(lw);
    }
    let log_z = log_sum_exp(&log_w);
    Ok(FkTable {
        p,
        edge_count: m,
        probabilities: log_w.iter().map(|lw| (lw - log_z).exp()).collect(),
        clusters,
    })
}

impl FkTable {
    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Probability of each edge configuration, indexed by open-edge bitmask.
    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn cluster_count(&self, mask: u64) -> usize {
        self.clusters[mask as usize] as usize
    }

    pub fn event_probability(&self, event: impl Fn(u64) -> bool) -> f64 {
        let terms: Vec<f64> = self
            .probabilities
            .iter()
            .enumerate()
            .filter(|(mask, _)| event(*mask as u64))
            .map(|(_, &q)| q)
            .collect();
        pairwise_sum(&terms)
    }

    pub fn edge_marginal(&self, edge: usize) -> f64 {
        self.event_probability(|mask| (mask >> edge) & 1 == 1)
    }

    /// Spin marginal of the Edwards–Sokal coupling built on this table:
    /// given `ω`, each open cluster receives an independent uniform sign.
    /// Indexed by the spin bitmask (bit set means `+1`).
    pub fn edwards_sokal_spin_law(&self, graph: &EdgeGraph) -> Result<Vec<f64>> {
        let v = graph.vertex_count();
        check_size(v)?;
        let mut law = vec![0.0; 1 << v];
        let mut uf = UnionFind::new(v);
        let mut root_sign = vec![0usize; v];
        for (mask, &q) in self.probabilities.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            graph.clusters(mask as u64, &mut uf);
            let roots: Vec<usize> = (0..v).map(|x| uf.find(x)).collect();
            let mut cluster_ids = vec![usize::MAX; v];
            let mut k = 0;
            for &r in &roots {
                if cluster_ids[r] == usize::MAX {
                    cluster_ids[r] = k;
                    k += 1;
                }
            }
            let share = q / (1u64 << k) as f64;
            for signs in 0u64..(1u64 << k) {
                let mut bits = 0u64;
                for x in 0..v {
                    root_sign[x] = ((signs >> cluster_ids[roots[x]]) & 1) as usize;
                    bits |= (root_sign[x] as u64) << x;
                }
                law[bits as usize] += share;
            }
        }
        Ok(law)
    }
}

/// Zero-field Ising law `∝ exp(β Σ_{edges} σ_a σ_b)` on a graph, by direct
/// enumeration. Indexed by spin bitmask.
pub fn graph_ising_law(graph: &EdgeGraph, beta: f64) -> Result<Vec<f64>> {
    let v = graph.vertex_count();
    check_size(v)?;
    let log_w: Vec<f64> = (0u64..(1u64 << v))
        .map(|bits| {
            let s: i64 = graph
                .edges()
                .iter()
                .map(|&(a, b)| if ((bits >> a) ^ (bits >> b)) & 1 == 0 { 1 } else { -1 })
                .sum();
            beta * s as f64
        })
        .collect();
    let log_z = log_sum_exp(&log_w);
    Ok(log_w.iter().map(|lw| (lw - log_z).exp()).collect())
}

/// Probability of an edge event under the product measure with open
/// probability `rho` on `edge_count` edges.
pub fn bernoulli_event_probability(edge_count: usize, rho: f64, event: impl Fn(u64) -> bool) -> Result<f64> {
    if edge_count > MAX_EDGES {
        return Err(Error::TooLarge {
            size: edge_count,
            cap: MAX_EDGES,
            unit: "edges",
        });
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("edge probability {rho} is outside [0, 1]")));
    }
    let terms: Vec<f64> = (0u64..(1u64 << edge_count))
        .filter(|&mask| event(mask))
        .map(|mask| {
            let open = mask.count_ones() as i32;
            rho.powi(open) * (1.0 - rho).powi(edge_count as i32 - open)
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Total-variation distance between two laws on the same finite space.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "laws live on different spaces");
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}
