//! Markov chains targeting the finite-volume Gibbs measures.
//!
//! Single-flip Metropolis and heat-bath (Glauber) dynamics work for every
//! model. Swendsen–Wang is available for the pure nearest-neighbour model
//! at zero field; frozen `±` boundary layers are handled with a ghost vertex
//! whose cluster keeps the boundary sign.

use std::io::{Read, Write};
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::energy::{Boundary, EnergyState, ModelParams};
use crate::error::{Error, Result};
use crate::exact::MAX_PROBABILITY_SITES;
use crate::hist::{Histogram, DEFAULT_BINS};
use crate::lattice::{SpinConfig, TorusLattice};
use crate::rng::{stream_rng, ChainRng};
use crate::stats::{integrated_autocorrelation, RunningStats};
use crate::unionfind::UnionFind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dynamics {
    Metropolis,
    Glauber,
    SwendsenWang,
}

impl Dynamics {
    pub fn name(self) -> &'static str {
        match self {
            Dynamics::Metropolis => "metropolis",
            Dynamics::Glauber => "glauber",
            Dynamics::SwendsenWang => "swendsen-wang",
        }
    }
}

impl std::str::FromStr for Dynamics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metropolis" => Ok(Dynamics::Metropolis),
            "glauber" => Ok(Dynamics::Glauber),
            "swendsen-wang" | "sw" => Ok(Dynamics::SwendsenWang),
            other => Err(Error::Sampler(format!("unknown dynamics {other:?}"))),
        }
    }
}

/// Site visiting order of a single-flip sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SweepOrder {
    #[default]
    Raster,
    /// `N` uniformly chosen sites per sweep.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BurnIn {
    Fixed(u64),
    /// Run `pilot` sweeps, then `ceil(10 τ_int)` more, with `τ_int` the
    /// magnetization autocorrelation time measured on the pilot.
    Auto { pilot: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialState {
    Plus,
    Minus,
    Random,
    Given(SpinConfig),
}

#[derive(Clone, Debug)]
pub struct ChainSpec {
    pub params: Arc<ModelParams>,
    pub dynamics: Dynamics,
    /// Production sweeps after burn-in.
    pub sweeps: u64,
    pub burn_in: BurnIn,
    pub thinning: u64,
    pub seed: u64,
    pub replicas: u64,
    pub order: SweepOrder,
    pub initial: InitialState,
    /// Keep a copy of the configuration every this many production sweeps.
    pub snapshot_every: Option<u64>,
}

impl ChainSpec {
    pub fn new(params: Arc<ModelParams>, dynamics: Dynamics, sweeps: u64, seed: u64) -> Self {
        Self {
            params,
            dynamics,
            sweeps,
            burn_in: BurnIn::Fixed(0),
            thinning: 1,
            seed,
            replicas: 1,
            order: SweepOrder::Raster,
            initial: InitialState::Random,
            snapshot_every: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thinning == 0 {
            return Err(Error::Sampler("thinning must be positive".into()));
        }
        if self.replicas == 0 {
            return Err(Error::Sampler("replicas must be positive".into()));
        }
        if self.snapshot_every == Some(0) {
            return Err(Error::Sampler("snapshot interval must be positive".into()));
        }
        if let BurnIn::Auto { pilot } = self.burn_in {
            if pilot < 4 {
                return Err(Error::Sampler("automatic burn-in needs a pilot of at least 4 sweeps".into()));
            }
        }
        if self.dynamics == Dynamics::SwendsenWang {
            check_sw(&self.params)?;
        }
        if let InitialState::Given(c) = &self.initial {
            if c.lattice() != self.params.lattice() {
                return Err(Error::Sampler("initial configuration is on a different lattice".into()));
            }
        }
        Ok(())
    }
}

fn check_sw(params: &ModelParams) -> Result<()> {
    if params.kac_term().is_some() {
        return Err(Error::Sampler(
            "Swendsen-Wang is only available without a Kac kernel".into(),
        ));
    }
    if params.field() != 0.0 {
        return Err(Error::Sampler("Swendsen-Wang requires zero field".into()));
    }
    Ok(())
}

/// One single-site update at `x`; returns whether the spin flipped.
#[inline]
pub fn single_site_update<R: Rng + ?Sized>(state: &mut EnergyState, x: usize, dynamics: Dynamics, rng: &mut R) -> bool {
    let (dn, dk) = state.flip_parts(x);
    let bd = state.params().beta() * (dn + dk);
    let accept = match dynamics {
        Dynamics::Metropolis => bd <= 0.0 || rng.gen::<f64>() < (-bd).exp(),
        Dynamics::Glauber => rng.gen::<f64>() * (1.0 + bd.exp()) < 1.0,
        Dynamics::SwendsenWang => unreachable!("cluster dynamics has no single-site update"),
    };
    if accept {
        state.apply_flip_with(x, dn, dk);
    }
    accept
}

/// One sweep of `N` single-site updates; returns the number of accepted flips.
pub fn mcmc_sweep<R: Rng + ?Sized>(state: &mut EnergyState, dynamics: Dynamics, order: SweepOrder, rng: &mut R) -> Result<u64> {
    if dynamics == Dynamics::SwendsenWang {
        return Err(Error::Sampler("mcmc_sweep takes a single-flip dynamics".into()));
    }
    let n = state.config().lattice().site_count();
    let mut accepted = 0;
    for i in 0..n {
        let x = match order {
            SweepOrder::Raster => i,
            SweepOrder::Random => rng.gen_range(0..n),
        };
        accepted += single_site_update(state, x, dynamics, rng) as u64;
    }
    Ok(accepted)
}

/// Scratch space for Swendsen–Wang sweeps; one extra vertex stands for the
/// frozen boundary layer.
#[derive(Clone, Debug)]
pub struct SwWorkspace {
    uf: UnionFind,
    open: Vec<bool>,
    ghost_open: Vec<bool>,
    sign: Vec<i8>,
}

impl SwWorkspace {
    pub fn new(params: &ModelParams) -> Self {
        let n = params.lattice().site_count();
        Self {
            uf: UnionFind::new(n + 1),
            open: vec![false; params.bonds().edges().len()],
            ghost_open: vec![false; n],
            sign: vec![0; n + 1],
        }
    }

    /// Bond occupations of the last sweep, indexed like `Bonds::edges`.
    pub fn open_bonds(&self) -> &[bool] {
        &self.open
    }
}

/// One Swendsen–Wang update of `config`.
///
/// Aligned bonds open with probability `1 - e^{-2β}`; a site with `k`
/// aligned bonds to a frozen `τ` layer joins the ghost with probability
/// `1 - e^{-2βk}`. The ghost cluster takes `τ`, every other cluster gets an
/// independent fair sign, drawn in order of its smallest site. Afterwards
/// every open bond is checked to join equal spins.
pub fn sw_sweep<R: Rng + ?Sized>(config: &mut SpinConfig, params: &ModelParams, ws: &mut SwWorkspace, rng: &mut R) -> Result<()> {
    check_sw(params)?;
    if config.lattice() != params.lattice() {
        return Err(Error::Sampler("configuration lattice does not match the model".into()));
    }
    let bonds = params.bonds();
    let n = config.lattice().site_count();
    let ghost = n;
    let q = (-2.0 * params.beta()).exp();
    let tau = bonds.boundary().sign();
    ws.uf.reset(n + 1);
    {
        let s = config.spins();
        for (k, &(a, b)) in bonds.edges().iter().enumerate() {
            let open = s[a] == s[b] && rng.gen::<f64>() >= q;
            ws.open[k] = open;
            if open {
                ws.uf.union(a, b);
            }
        }
        for x in 0..n {
            let m = bonds.outside_bonds(x);
            let open = tau != 0 && m > 0 && s[x] == tau && rng.gen::<f64>() >= q.powi(m as i32);
            ws.ghost_open[x] = open;
            if open {
                ws.uf.union(x, ghost);
            }
        }
    }
    ws.sign.iter_mut().for_each(|v| *v = 0);
    if tau != 0 {
        let g = ws.uf.find(ghost);
        ws.sign[g] = tau;
    }
    for x in 0..n {
        let r = ws.uf.find(x);
        if ws.sign[r] == 0 {
            ws.sign[r] = if rng.gen::<bool>() { 1 } else { -1 };
        }
        config.set(x, ws.sign[r]);
    }
    let s = config.spins();
    for (k, &(a, b)) in bonds.edges().iter().enumerate() {
        if ws.open[k] && s[a] != s[b] {
            return Err(Error::Sampler(format!("open bond ({a}, {b}) joins unequal spins")));
        }
    }
    for x in 0..n {
        if ws.ghost_open[x] && s[x] != tau {
            return Err(Error::Sampler(format!("site {x} is wired to the boundary with the wrong sign")));
        }
    }
    Ok(())
}

/// Quantities recorded on every kept sample.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable {
    Magnetization,
    /// Total energy `H`.
    Energy,
    /// Kac penalty `K`; requires a kernel.
    KacEnergy,
    Site(usize),
    /// `m_{B_R(center)}`.
    BallAverage { center: usize, radius: f64 },
    /// Visit counts of every configuration; at most
    /// [`MAX_PROBABILITY_SITES`] sites.
    ConfigurationLaw,
}

impl Observable {
    pub fn label(&self) -> String {
        match self {
            Observable::Magnetization => "magnetization".into(),
            Observable::Energy => "energy".into(),
            Observable::KacEnergy => "kac_energy".into(),
            Observable::Site(x) => format!("site_{x}"),
            Observable::BallAverage { center, radius } => format!("ball_{center}_r{radius}"),
            Observable::ConfigurationLaw => "configuration_law".into(),
        }
    }
}

enum Probe {
    Magnetization,
    Energy,
    KacEnergy,
    Site(usize),
    Ball(Vec<usize>),
    Law,
}

fn compile(observables: &[Observable], params: &ModelParams) -> Result<Vec<Probe>> {
    let lattice = params.lattice();
    observables
        .iter()
        .map(|o| {
            Ok(match o {
                Observable::Magnetization => Probe::Magnetization,
                Observable::Energy => Probe::Energy,
                Observable::KacEnergy => {
                    if params.kac_term().is_none() {
                        return Err(Error::Sampler("kac_energy requested for a model without a Kac kernel".into()));
                    }
                    Probe::KacEnergy
                }
                Observable::Site(x) => {
                    if *x >= lattice.site_count() {
                        return Err(Error::Sampler(format!("site {x} is outside the lattice")));
                    }
                    Probe::Site(*x)
                }
                Observable::BallAverage { center, radius } => {
                    if *center >= lattice.site_count() {
                        return Err(Error::Sampler(format!("ball center {center} is outside the lattice")));
                    }
                    Probe::Ball(lattice.ball_sites(*center, *radius)?)
                }
                Observable::ConfigurationLaw => {
                    if lattice.site_count() > MAX_PROBABILITY_SITES {
                        return Err(Error::TooLarge {
                            size: lattice.site_count(),
                            cap: MAX_PROBABILITY_SITES,
                            unit: "sites",
                        });
                    }
                    Probe::Law
                }
            })
        })
        .collect()
}

/// Stored configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    /// Sweep index counted from the start of the chain, burn-in included.
    pub sweep: u64,
    pub seed: u64,
    pub config: SpinConfig,
}

/// Results of one or more replicas of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainStats {
    pub samples: u64,
    /// Burn-in actually used (sum over replicas).
    pub burn_in_used: u64,
    /// Integrated autocorrelation time of the magnetization on the kept
    /// samples; for merged replicas the largest replica value.
    pub tau_int: f64,
    /// Fraction of accepted single-site proposals (`1` for cluster dynamics).
    pub acceptance: f64,
    pub observables: Vec<(String, RunningStats)>,
    pub config_counts: Option<Vec<u64>>,
    pub snapshots: Vec<Snapshot>,
    /// Number of replicas merged into these statistics.
    pub replicas: u64,
}

impl ChainStats {
    /// Explicit marker for runs without any kept sample.
    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn get(&self, label: &str) -> Option<&RunningStats> {
        self.observables.iter().find(|(l, _)| l == label).map(|(_, s)| s)
    }

    /// Empirical configuration law indexed by `SpinConfig::to_bits`.
    pub fn empirical_law(&self) -> Option<Vec<f64>> {
        let counts = self.config_counts.as_ref()?;
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return None;
        }
        Some(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }
}

/// One running chain; [`Chain::sweep`] advances by a single sweep.
pub struct Chain {
    params: Arc<ModelParams>,
    dynamics: Dynamics,
    order: SweepOrder,
    state: Option<EnergyState>,
    config: SpinConfig,
    sw: Option<SwWorkspace>,
    rng: ChainRng,
    sweeps_done: u64,
    accepted: u64,
    proposed: u64,
}

impl Chain {
    pub fn new(spec: &ChainSpec, replica: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream_rng(spec.seed, replica);
        let lattice = *spec.params.lattice();
        let config = match &spec.initial {
            InitialState::Plus => SpinConfig::all_plus(lattice),
            InitialState::Minus => SpinConfig::all_minus(lattice),
            InitialState::Random => SpinConfig::random(lattice, &mut rng),
            InitialState::Given(c) => c.clone(),
        };
        let (state, sw) = if spec.dynamics == Dynamics::SwendsenWang {
            (None, Some(SwWorkspace::new(&spec.params)))
        } else {
            (Some(EnergyState::new(spec.params.clone(), config.clone())?), None)
        };
        Ok(Self {
            params: spec.params.clone(),
            dynamics: spec.dynamics,
            order: spec.order,
            state,
            config,
            sw,
            rng,
            sweeps_done: 0,
            accepted: 0,
            proposed: 0,
        })
    }

    pub fn sweep(&mut self) -> Result<()> {
        match (&mut self.state, &mut self.sw) {
            (Some(state), _) => {
                self.accepted += mcmc_sweep(state, self.dynamics, self.order, &mut self.rng)?;
                self.proposed += state.config().lattice().site_count() as u64;
            }
            (None, Some(ws)) => sw_sweep(&mut self.config, &self.params, ws, &mut self.rng)?,
            (None, None) => unreachable!("chain without a state"),
        }
        self.sweeps_done += 1;
        Ok(())
    }

    pub fn config(&self) -> &SpinConfig {
        match &self.state {
            Some(s) => s.config(),
            None => &self.config,
        }
    }

    /// Total energy of the current configuration.
    pub fn energy(&self) -> Result<f64> {
        match &self.state {
            Some(s) => Ok(s.total_energy()),
            None => self.params.energy(&self.config),
        }
    }

    pub fn kac_energy(&self) -> Result<f64> {
        match &self.state {
            Some(s) => Ok(s.kac_energy()),
            None => Ok(0.0),
        }
    }

    pub fn sweeps_done(&self) -> u64 {
        self.sweeps_done
    }

    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            1.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    /// Runs the burn-in of `spec` and returns the number of sweeps used.
    pub fn burn_in(&mut self, burn_in: BurnIn) -> Result<u64> {
        match burn_in {
            BurnIn::Fixed(k) => {
                for _ in 0..k {
                    self.sweep()?;
                }
                Ok(k)
            }
            BurnIn::Auto { pilot } => {
                let mut series = Vec::with_capacity(pilot as usize);
                for _ in 0..pilot {
                    self.sweep()?;
                    series.push(self.config().magnetization());
                }
                let extra = (10.0 * integrated_autocorrelation(&series)).ceil() as u64;
                for _ in 0..extra {
                    self.sweep()?;
                }
                Ok(pilot + extra)
            }
        }
    }
}

/// Runs one replica, calling `visit` on every kept sample.
pub fn run_replica_with(
    spec: &ChainSpec,
    replica: u64,
    observables: &[Observable],
    mut visit: impl FnMut(&SpinConfig) -> Result<()>,
) -> Result<ChainStats> {
    let probes = compile(observables, &spec.params)?;
    let mut chain = Chain::new(spec, replica)?;
    let burn = chain.burn_in(spec.burn_in)?;
    let (acc0, prop0) = (chain.accepted, chain.proposed);
    let mut stats = vec![RunningStats::default(); probes.len()];
    let mut counts = probes
        .iter()
        .any(|p| matches!(p, Probe::Law))
        .then(|| vec![0u64; 1usize << spec.params.lattice().site_count()]);
    let mut snapshots = Vec::new();
    let mut mags = Vec::new();
    let mut samples = 0;
    for k in 1..=spec.sweeps {
        chain.sweep()?;
        if let Some(every) = spec.snapshot_every {
            if k % every == 0 {
                snapshots.push(Snapshot {
                    sweep: chain.sweeps_done(),
                    seed: spec.seed,
                    config: chain.config().clone(),
                });
            }
        }
        if k % spec.thinning != 0 {
            continue;
        }
        samples += 1;
        let c = chain.config();
        mags.push(c.magnetization());
        for (p, s) in probes.iter().zip(stats.iter_mut()) {
            let v = match p {
                Probe::Magnetization => c.magnetization(),
                Probe::Energy => chain.energy()?,
                Probe::KacEnergy => chain.kac_energy()?,
                Probe::Site(x) => c.get(*x) as f64,
                Probe::Ball(sites) => ball_mean(c.spins(), sites),
                Probe::Law => {
                    if let Some(counts) = counts.as_mut() {
                        counts[c.to_bits() as usize] += 1;
                    }
                    continue;
                }
            };
            s.push(v);
        }
        visit(c)?;
    }
    let proposed = chain.proposed - prop0;
    Ok(ChainStats {
        samples,
        burn_in_used: burn,
        tau_int: integrated_autocorrelation(&mags),
        acceptance: if proposed == 0 {
            1.0
        } else {
            (chain.accepted - acc0) as f64 / proposed as f64
        },
        observables: observables
            .iter()
            .zip(&probes)
            .filter(|(_, p)| !matches!(p, Probe::Law))
            .zip(stats)
            .map(|((o, _), s)| (o.label(), s))
            .collect(),
        config_counts: counts,
        snapshots,
        replicas: 1,
    })
}

fn ball_mean(spins: &[i8], sites: &[usize]) -> f64 {
    sites.iter().map(|&y| spins[y] as i64).sum::<i64>() as f64 / sites.len() as f64
}

/// Merges per-replica results in increasing key order, so the output does
/// not depend on completion or submission order.
pub fn merge_replicas(mut parts: Vec<(u64, ChainStats)>) -> Result<ChainStats> {
    parts.sort_by_key(|(k, _)| *k);
    let mut iter = parts.into_iter();
    let (_, mut out) = iter
        .next()
        .ok_or_else(|| Error::Sampler("no replicas to merge".into()))?;
    let mut weighted_acc = out.acceptance * out.samples.max(1) as f64;
    let mut weight = out.samples.max(1) as f64;
    for (_, s) in iter {
        if s.observables.len() != out.observables.len() {
            return Err(Error::Sampler("replicas recorded different observables".into()));
        }
        for ((la, a), (lb, b)) in out.observables.iter_mut().zip(&s.observables) {
            if la != lb {
                return Err(Error::Sampler("replicas recorded different observables".into()));
            }
            a.merge(b);
        }
        match (&mut out.config_counts, &s.config_counts) {
            (Some(a), Some(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x += y),
            (None, None) => {}
            _ => return Err(Error::Sampler("replicas disagree on configuration counts".into())),
        }
        weighted_acc += s.acceptance * s.samples.max(1) as f64;
        weight += s.samples.max(1) as f64;
        out.samples += s.samples;
        out.burn_in_used += s.burn_in_used;
        out.tau_int = out.tau_int.max(s.tau_int);
        out.snapshots.extend(s.snapshots);
        out.replicas += s.replicas;
    }
    out.acceptance = weighted_acc / weight;
    Ok(out)
}

/// Runs all replicas of `spec` in parallel (stream = replica index) and
/// merges them deterministically.
pub fn run_experiment(spec: &ChainSpec, observables: &[Observable]) -> Result<ChainStats> {
    spec.validate()?;
    compile(observables, &spec.params)?;
    let parts: Vec<(u64, ChainStats)> = (0..spec.replicas)
        .into_par_iter()
        .map(|r| run_replica_with(spec, r, observables, |_| Ok(())).map(|s| (r, s)))
        .collect::<Result<_>>()?;
    merge_replicas(parts)
}

/// Law of a ball average under a finite-box pure phase.
#[derive(Clone, Debug)]
pub struct PhaseLaw {
    /// Histogram of `m_{B_R(center)}`.
    pub histogram: Histogram,
    /// Running moments of `g(m_{B_R(center)})`.
    pub g_stats: RunningStats,
    pub samples: u64,
}

/// Samples `m_{B_R}` at the center of a free `box_side^2` box whose outer
/// layer is frozen to `tau` and a homogeneous field `h` (Swendsen–Wang at
/// `h = 0`, heat bath otherwise), starting from all-`tau`.
pub fn sample_phase_law(
    beta: f64,
    tau: i8,
    h: f64,
    radius: f64,
    g: impl Fn(f64) -> f64,
    box_side: usize,
    sweeps: u64,
    seed: u64,
) -> Result<PhaseLaw> {
    if tau != 1 && tau != -1 {
        return Err(Error::Sampler(format!("boundary sign must be +1 or -1, got {tau}")));
    }
    if !(radius >= 0.0) || (box_side as f64) < 4.0 * radius || box_side < 4 {
        return Err(Error::Sampler(format!(
            "box side {box_side} is too small for radius {radius} (need side >= 4R and >= 4)"
        )));
    }
    if sweeps == 0 {
        return Err(Error::Sampler("pure-phase sampling needs at least one sweep".into()));
    }
    let lattice = TorusLattice::new(2, box_side)?;
    let boundary = if tau > 0 { Boundary::Plus } else { Boundary::Minus };
    let params = Arc::new(ModelParams::nearest_neighbour(lattice, beta, boundary, h)?);
    let center = lattice.index(&[box_side / 2, box_side / 2]);
    let sites = lattice.ball_sites(center, radius)?;
    let dynamics = if h == 0.0 { Dynamics::SwendsenWang } else { Dynamics::Glauber };
    let mut spec = ChainSpec::new(params, dynamics, sweeps, seed);
    spec.burn_in = BurnIn::Fixed((sweeps / 10).max(10));
    spec.initial = InitialState::constant(tau);
    let mut histogram = Histogram::new(DEFAULT_BINS)?;
    let mut g_stats = RunningStats::default();
    let stats = run_replica_with(&spec, 0, &[], |c| {
        let m = ball_mean(c.spins(), &sites);
        histogram.add(m);
        g_stats.push(g(m));
        Ok(())
    })?;
    Ok(PhaseLaw {
        histogram,
        g_stats,
        samples: stats.samples,
    })
}

/// [`sample_phase_law`] at zero field: the finite-box approximation of the
/// pure phase `μ_{0,τ}`.
pub fn sample_pure_phase_law(
    beta: f64,
    tau: i8,
    radius: f64,
    g: impl Fn(f64) -> f64,
    box_side: usize,
    sweeps: u64,
    seed: u64,
) -> Result<PhaseLaw> {
    sample_phase_law(beta, tau, 0.0, radius, g, box_side, sweeps, seed)
}

impl InitialState {
    pub fn constant(sign: i8) -> Self {
        if sign > 0 {
            InitialState::Plus
        } else {
            InitialState::Minus
        }
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"KSNP";

/// Writes `KSNP`, dimension and side (u32 LE), sweep and seed (u64 LE), then
/// the spins as bits (1 = `+`), least significant bit first.
pub fn write_snapshot<W: Write>(w: &mut W, snap: &Snapshot) -> Result<()> {
    let l = snap.config.lattice();
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&(l.dim() as u32).to_le_bytes())?;
    w.write_all(&(l.side() as u32).to_le_bytes())?;
    w.write_all(&snap.sweep.to_le_bytes())?;
    w.write_all(&snap.seed.to_le_bytes())?;
    let mut bytes = vec![0u8; l.site_count().div_ceil(8)];
    for (i, &s) in snap.config.spins().iter().enumerate() {
        if s > 0 {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Snapshot> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Format("not a snapshot file (bad magic)".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b4)?;
    let dim = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b4)?;
    let side = u32::from_le_bytes(b4) as usize;
    r.read_exact(&mut b8)?;
    let sweep = u64::from_le_bytes(b8);
    r.read_exact(&mut b8)?;
    let seed = u64::from_le_bytes(b8);
    let lattice = TorusLattice::new(dim, side).map_err(|e| Error::Format(format!("snapshot header: {e}")))?;
    let mut bytes = vec![0u8; lattice.site_count().div_ceil(8)];
    r.read_exact(&mut bytes)?;
    let spins = (0..lattice.site_count())
        .map(|i| if (bytes[i / 8] >> (i % 8)) & 1 == 1 { 1 } else { -1 })
        .collect();
    Ok(Snapshot {
        sweep,
        seed,
        config: SpinConfig::from_spins(lattice, spins)?,
    })
}
