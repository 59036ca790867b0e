//! Empirical Young measures of ball averages, the test functional
//! `L_{ω,g}`, distances to reference measures and the regime experiment.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;

use crate::energy::ModelParams;
use crate::error::{Error, Result};
use crate::hist::{wasserstein1, Histogram, DEFAULT_BINS};
use crate::kernel::KacKernel;
use crate::lattice::{BlockPartition, SpinConfig, TorusLattice};
use crate::sampler::{run_replica_with, sample_phase_law, BurnIn, ChainSpec, Dynamics, InitialState};
use crate::thermo::{el_alpha_profile, lambda_mix, theoretical_young, Atoms, FreeEnergyCurve, PhaseLawSource, ProfileField};

/// `m_{B_R(x)}` for every site `x`.
///
/// In one and two dimensions this uses cyclic row prefix sums
/// (`O(N R)`); otherwise each ball is summed directly.
pub fn ball_averages(config: &SpinConfig, radius: f64) -> Result<Vec<f64>> {
    let lattice = config.lattice();
    let offsets = lattice.ball_offsets(radius)?;
    let volume = offsets.len() as f64;
    let n = lattice.side();
    let reach = radius.floor() as usize;
    let s = config.spins();
    if lattice.dim() > 2 || 2 * reach + 1 > n {
        return Ok((0..lattice.site_count())
            .map(|x| {
                offsets
                    .iter()
                    .map(|z| s[lattice.shift(x, z)] as i64)
                    .sum::<i64>() as f64
                    / volume
            })
            .collect());
    }
    let r2 = radius * radius;
    let half_width = |dy: usize| {
        let mut w = 0usize;
        while ((w + 1) * (w + 1) + dy * dy) as f64 <= r2 + 1e-12 {
            w += 1;
        }
        w
    };
    let rows = if lattice.dim() == 1 { 1 } else { n };
    // cum[y][k] = Σ_{x < k} σ(x, y)
    let mut cum = vec![0i64; rows * (n + 1)];
    for y in 0..rows {
        for x in 0..n {
            cum[y * (n + 1) + x + 1] = cum[y * (n + 1) + x] + s[x + n * y] as i64;
        }
    }
    let row_sum = |y: usize, x: usize, w: usize| -> i64 {
        let c = &cum[y * (n + 1)..(y + 1) * (n + 1)];
        let lo = x as i64 - w as i64;
        let hi = x + w + 1;
        let mut acc = 0;
        if lo < 0 {
            acc += c[n] - c[(lo + n as i64) as usize];
            acc += c[hi.min(n)];
        } else if hi > n {
            acc += c[n] - c[lo as usize] + c[hi - n];
        } else {
            acc += c[hi] - c[lo as usize];
        }
        acc
    };
    let widths: Vec<usize> = (0..=reach).map(half_width).collect();
    let dy_reach = if lattice.dim() == 1 { 0 } else { reach };
    let mut out = vec![0.0; lattice.site_count()];
    for y in 0..rows {
        for x in 0..n {
            let mut acc = row_sum(y, x, widths[0]);
            for dy in 1..=dy_reach {
                let w = widths[dy];
                acc += row_sum((y + dy) % n, x, w) + row_sum((y + n - dy) % n, x, w);
            }
            out[x + n * y] = acc as f64 / volume;
        }
    }
    Ok(out)
}

/// Per-cell histograms of `m_{B_R(x)}` pooled over the sites of each macro
/// cell and over samples.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalYoungMeasure {
    partition: BlockPartition,
    radius: f64,
    histograms: Vec<Histogram>,
    /// Exact sums of the ball averages per cell.
    sums: Vec<f64>,
    samples: u64,
}

impl EmpiricalYoungMeasure {
    pub fn new(partition: BlockPartition, radius: f64, bins: usize) -> Result<Self> {
        partition.lattice().ball_offsets(radius)?;
        let cells = partition.block_count();
        Ok(Self {
            partition,
            radius,
            histograms: vec![Histogram::new(bins)?; cells],
            sums: vec![0.0; cells],
            samples: 0,
        })
    }

    /// Adds one configuration.
    pub fn add(&mut self, config: &SpinConfig) -> Result<()> {
        if config.lattice() != self.partition.lattice() {
            return Err(Error::Domain("sample lives on a different lattice".into()));
        }
        let m = ball_averages(config, self.radius)?;
        self.add_field(&m);
        Ok(())
    }

    /// Adds precomputed ball averages `m_{B_R(x)}`.
    pub fn add_field(&mut self, m: &[f64]) {
        for (x, &v) in m.iter().enumerate() {
            let c = self.partition.block_of(x);
            self.histograms[c].add(v);
            self.sums[c] += v;
        }
        self.samples += 1;
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.partition.lattice() != self.partition.lattice()
            || other.partition.block_side() != self.partition.block_side()
            || other.radius != self.radius
        {
            return Err(Error::Domain("Young measures use different partitions or radii".into()));
        }
        for (a, b) in self.histograms.iter_mut().zip(&other.histograms) {
            a.merge(b)?;
        }
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        self.samples += other.samples;
        Ok(())
    }

    pub fn partition(&self) -> &BlockPartition {
        &self.partition
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn cell_count(&self) -> usize {
        self.histograms.len()
    }

    pub fn cells_per_axis(&self) -> usize {
        self.partition.blocks_per_axis()
    }

    pub fn histogram(&self, cell: usize) -> &Histogram {
        &self.histograms[cell]
    }

    /// Exact mean of the ball averages in a cell.
    pub fn cell_mean(&self, cell: usize) -> f64 {
        let count = self.histograms[cell].total();
        if count == 0 {
            f64::NAN
        } else {
            self.sums[cell] / count as f64
        }
    }

    /// `⟨ν(r), g⟩` on the bin grid.
    pub fn cell_expectation(&self, cell: usize, g: impl Fn(f64) -> f64) -> f64 {
        self.histograms[cell].expectation(g)
    }

    /// Sum of all cell histograms.
    pub fn pooled(&self) -> Histogram {
        let mut h = Histogram::new(self.histograms[0].bins()).expect("bin count checked at construction");
        for c in &self.histograms {
            h.merge(c).expect("same grid");
        }
        h
    }

    /// CSV rows `cell,bin_center,mass`, zero-mass bins omitted.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "cell,bin_center,mass")?;
        for (c, h) in self.histograms.iter().enumerate() {
            for (x, m) in h.atoms() {
                writeln!(w, "{c},{x:.4},{m:.12e}")?;
            }
        }
        Ok(())
    }
}

/// Histograms of `m_{B_R}` over a set of samples.
pub fn estimate_young(samples: &[SpinConfig], radius: f64, partition: &BlockPartition) -> Result<EmpiricalYoungMeasure> {
    if samples.is_empty() {
        return Err(Error::Domain("no samples to estimate a Young measure from".into()));
    }
    let mut y = EmpiricalYoungMeasure::new(partition.clone(), radius, DEFAULT_BINS)?;
    for s in samples {
        y.add(s)?;
    }
    Ok(y)
}

/// What `L_{ω,g}` is applied to.
#[derive(Clone, Copy, Debug)]
pub enum LTarget<'a> {
    /// A field on lattice sites, position `εx`.
    Sites { lattice: &'a TorusLattice, values: &'a [f64] },
    Profile(&'a ProfileField),
    Young(&'a EmpiricalYoungMeasure),
}

/// Cell index at resolution `fine` of the cell `k` at the coarser
/// resolution `coarse` containing fine cell `k`.
fn coarse_cell(k: usize, dim: usize, fine: usize, coarse: usize) -> usize {
    let ratio = fine / coarse;
    let mut rest = k;
    let mut out = 0;
    let mut stride = 1;
    for _ in 0..dim {
        out += (rest % fine) / ratio * stride;
        rest /= fine;
        stride *= coarse;
    }
    out
}

fn common_resolution(a: usize, b: usize) -> Result<usize> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if lo == 0 || hi % lo != 0 {
        return Err(Error::Domain(format!("resolutions {a} and {b} are not nested")));
    }
    Ok(hi)
}

/// `L_{ω,g}(target) = ∫ ω(r) g(u(r)) dr`, or `∫ ω(r) ⟨ν(r), g⟩ dr` for a
/// Young measure. Piecewise-constant inputs are evaluated exactly on the
/// finer of the two (nested) grids.
pub fn eval_l(omega: &ProfileField, g: impl Fn(f64) -> f64, target: LTarget<'_>) -> Result<f64> {
    let d = omega.dim();
    let (cells, dim) = match target {
        LTarget::Sites { lattice, values } => {
            if values.len() != lattice.site_count() {
                return Err(Error::Domain("site field does not match its lattice".into()));
            }
            (lattice.side(), lattice.dim())
        }
        LTarget::Profile(p) => (p.cells(), p.dim()),
        LTarget::Young(y) => (y.cells_per_axis(), y.partition().lattice().dim()),
    };
    if dim != d {
        return Err(Error::Domain(format!("weight of dimension {d} against a target of dimension {dim}")));
    }
    let fine = common_resolution(omega.cells(), cells)?;
    let count = fine.pow(d as u32);
    let mut acc = 0.0;
    let mut per_cell: Vec<f64> = Vec::new();
    if let LTarget::Young(y) = target {
        per_cell = (0..y.cell_count()).map(|c| y.cell_expectation(c, &g)).collect();
    }
    for k in 0..count {
        let w = omega.values()[coarse_cell(k, d, fine, omega.cells())];
        let t = coarse_cell(k, d, fine, cells);
        let v = match target {
            LTarget::Sites { values, .. } => g(values[t]),
            LTarget::Profile(p) => g(p.values()[t]),
            LTarget::Young(_) => per_cell[t],
        };
        acc += w * v;
    }
    Ok(acc / count as f64)
}

/// `‖ω‖_∞ Lip(g) · mean_x |m_x - u(εx)|`, the bound on
/// `|L_{ω,g}(m) - L_{ω,g}(u)|` for a site field `m`.
pub fn lipschitz_bound(omega: &ProfileField, lipschitz: f64, lattice: &TorusLattice, m: &[f64], u: &ProfileField) -> Result<f64> {
    if m.len() != lattice.site_count() || u.dim() != lattice.dim() || lattice.side() % u.cells() != 0 {
        return Err(Error::Domain("site field and profile do not match the lattice".into()));
    }
    let sup = omega.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let n = lattice.side();
    let mean = m
        .iter()
        .enumerate()
        .map(|(x, v)| (v - u.values()[coarse_cell(x, lattice.dim(), n, u.cells())]).abs())
        .sum::<f64>()
        / m.len() as f64;
    Ok(sup * lipschitz * mean)
}

/// Per-cell `W₁` distances between an empirical Young measure and
/// reference atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureComparison {
    pub per_cell: Vec<f64>,
    pub worst_cell: usize,
    pub worst: f64,
    pub mean: f64,
}

pub fn compare_measures(empirical: &EmpiricalYoungMeasure, reference: &[Atoms]) -> Result<MeasureComparison> {
    if reference.len() != empirical.cell_count() {
        return Err(Error::Domain(format!(
            "{} reference cells for {} empirical cells",
            reference.len(),
            empirical.cell_count()
        )));
    }
    let per_cell: Vec<f64> = (0..empirical.cell_count())
        .map(|c| wasserstein1(&empirical.histogram(c).atoms(), &reference[c]))
        .collect();
    summarize(per_cell)
}

/// Cellwise `W₁` between two empirical measures on the same bin grid.
pub fn compare_empirical(a: &EmpiricalYoungMeasure, b: &EmpiricalYoungMeasure) -> Result<MeasureComparison> {
    if a.cell_count() != b.cell_count() {
        return Err(Error::Domain("measures have different cell counts".into()));
    }
    let per_cell = (0..a.cell_count())
        .map(|c| {
            if a.histogram(c).bins() != b.histogram(c).bins() {
                return Err(Error::Domain("histograms use different bin grids".into()));
            }
            Ok(wasserstein1(&a.histogram(c).atoms(), &b.histogram(c).atoms()))
        })
        .collect::<Result<Vec<_>>>()?;
    summarize(per_cell)
}

fn summarize(per_cell: Vec<f64>) -> Result<MeasureComparison> {
    let (worst_cell, worst) = per_cell
        .iter()
        .cloned()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Domain("no cells to compare".into()))?;
    let mean = per_cell.iter().sum::<f64>() / per_cell.len() as f64;
    Ok(MeasureComparison {
        per_cell,
        worst_cell,
        worst,
        mean,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitRule {
    /// Split at `m = 0`.
    Zero,
    /// Split at the smoothed histogram's minimum between its two highest
    /// peaks (at 0 when there is a single peak).
    Minimum,
}

impl SplitRule {
    pub fn name(self) -> &'static str {
        match self {
            SplitRule::Zero => "zero",
            SplitRule::Minimum => "minimum",
        }
    }
}

/// Peak structure of a histogram on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeAnalysis {
    pub rule: SplitRule,
    pub split: f64,
    /// Some peak is separated from the highest one by a valley below half
    /// the lower of the two.
    pub bimodal: bool,
    /// Peak locations of the smoothed histogram above 10% of its maximum.
    pub peaks: Vec<f64>,
    /// Most populated bin center above / below the split.
    pub plus_mode: Option<f64>,
    pub minus_mode: Option<f64>,
    /// Mass above the split; a bin exactly at the split counts half.
    pub positive_mass: f64,
    pub mean: f64,
}

/// Peaks are read off a moving average over `2 halfwidth + 1` bins, which
/// should cover the spacing `2/|B_R|` of attainable ball averages.
pub fn analyze_modes(h: &Histogram, rule: SplitRule, halfwidth: usize) -> Result<ModeAnalysis> {
    if h.total() == 0 {
        return Err(Error::Domain("cannot analyze an empty histogram".into()));
    }
    let mass = h.masses();
    let b = mass.len();
    let smooth: Vec<f64> = (0..b)
        .map(|i| {
            let lo = i.saturating_sub(halfwidth);
            let hi = (i + halfwidth).min(b - 1);
            mass[lo..=hi].iter().sum::<f64>() / (2 * halfwidth + 1) as f64
        })
        .collect();
    let top = smooth.iter().cloned().fold(0.0, f64::max);
    // local maxima; plateaus report their left end
    let mut peaks: Vec<usize> = Vec::new();
    for i in 0..b {
        let left = if i == 0 { f64::NEG_INFINITY } else { smooth[i - 1] };
        let mut j = i;
        while j + 1 < b && smooth[j + 1] == smooth[i] {
            j += 1;
        }
        let right = if j + 1 == b { f64::NEG_INFINITY } else { smooth[j + 1] };
        if smooth[i] > left && smooth[i] > right && smooth[i] >= 0.1 * top {
            peaks.push(i);
        }
    }
    let mut by_height = peaks.clone();
    by_height.sort_by(|&x, &y| smooth[y].total_cmp(&smooth[x]).then(x.cmp(&y)));
    // the highest peak separated from the top one by a deep enough valley;
    // shallower maxima belong to the same mode
    let valley_between = |p: usize, q: usize| {
        let (p, q) = (p.min(q), p.max(q));
        (p..=q).min_by(|&x, &y| smooth[x].total_cmp(&smooth[y]).then(x.cmp(&y))).expect("non-empty range")
    };
    let valley = by_height.first().and_then(|&top| {
        by_height[1..]
            .iter()
            .map(|&q| valley_between(top, q))
            .zip(&by_height[1..])
            .find(|&(v, &q)| smooth[v] <= 0.5 * smooth[q].min(smooth[top]))
            .map(|(v, _)| v)
    });
    let bimodal = valley.is_some();
    let split = match (rule, valley) {
        (SplitRule::Zero, _) | (SplitRule::Minimum, None) => 0.0,
        (SplitRule::Minimum, Some(v)) => h.center(v),
    };
    let mut positive_mass = 0.0;
    let mut plus: Option<usize> = None;
    let mut minus: Option<usize> = None;
    for i in 0..b {
        let x = h.center(i);
        if (x - split).abs() < 1e-12 {
            positive_mass += 0.5 * mass[i];
        } else if x > split {
            positive_mass += mass[i];
            if mass[i] > 0.0 && plus.is_none_or(|p| mass[i] > mass[p]) {
                plus = Some(i);
            }
        } else if mass[i] > 0.0 && minus.is_none_or(|p| mass[i] > mass[p]) {
            minus = Some(i);
        }
    }
    Ok(ModeAnalysis {
        rule,
        split,
        bimodal,
        peaks: peaks.iter().map(|&i| h.center(i)).collect(),
        plus_mode: plus.map(|i| h.center(i)),
        minus_mode: minus.map(|i| h.center(i)),
        positive_mass,
        mean: h.mean(),
    })
}

/// Smoothing half-width covering the value spacing of `m_{B_R}`.
pub fn default_halfwidth(lattice: &TorusLattice, radius: f64, bins: usize) -> Result<usize> {
    let volume = lattice.ball_offsets(radius)?.len() as f64;
    let width = 2.0 / (bins - 1) as f64;
    Ok(((2.0 / volume) / width).ceil().max(2.0) as usize)
}

/// Pure-phase and field laws of `m_{B_R}` estimated by the sampler in a
/// box of side `max(box_side, 4R)` rounded up to even.
#[derive(Clone, Copy, Debug)]
pub struct SampledPhaseLaws {
    pub beta: f64,
    pub box_side: usize,
    pub sweeps: u64,
    pub seed: u64,
}

impl SampledPhaseLaws {
    fn side_for(&self, radius: f64) -> usize {
        let s = self.box_side.max((4.0 * radius).ceil() as usize).max(4);
        s + s % 2
    }
}

impl PhaseLawSource for SampledPhaseLaws {
    fn pure_phase(&self, sign: i8, radius: f64) -> Result<Atoms> {
        let seed = self.seed ^ if sign > 0 { 0x5eed_0001 } else { 0x5eed_0002 };
        let law = sample_phase_law(self.beta, sign, 0.0, radius, |m| m, self.side_for(radius), self.sweeps, seed)?;
        Ok(law.histogram.atoms())
    }

    fn with_field(&self, h: f64, radius: f64) -> Result<Atoms> {
        let sign = if h >= 0.0 { 1 } else { -1 };
        let law = sample_phase_law(self.beta, sign, h, radius, |m| m, self.side_for(radius), self.sweeps, self.seed ^ 0x5eed_0003)?;
        Ok(law.histogram.atoms())
    }
}

/// Parameters of the regime experiment on a `side^d` torus.
#[derive(Clone, Debug)]
pub struct RegimeSpec {
    pub dim: usize,
    pub side: usize,
    pub beta: f64,
    pub gamma: f64,
    pub radii: Vec<f64>,
    pub dynamics: Dynamics,
    pub sweeps: u64,
    pub burn_in: BurnIn,
    pub thinning: u64,
    pub seed: u64,
    pub bins: usize,
    /// Number of final recorded configurations to return.
    pub keep: usize,
    /// Sampler settings for the finite-radius references `ν_{u,R}`; `None`
    /// skips them.
    pub phase_laws: Option<SampledPhaseLaws>,
}

#[derive(Clone, Debug)]
pub struct RadiusReport {
    pub radius: f64,
    pub young: EmpiricalYoungMeasure,
    pub modes: ModeAnalysis,
    /// Distances to `δ_{u(r)}`.
    pub to_dirac: MeasureComparison,
    /// Distances to the limit `ν_u`.
    pub to_limit: MeasureComparison,
    /// Distances to `ν_{u,R}`, when phase laws were sampled.
    pub to_finite: Option<MeasureComparison>,
    /// Cell average of `λ_{u(r)}` over cells on the plateau.
    pub lambda_target: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RegimeReport {
    pub m_beta: f64,
    pub alpha: ProfileField,
    pub acceptance: f64,
    pub burn_in_used: u64,
    pub samples: u64,
    /// The last `keep` recorded configurations, oldest first.
    pub kept: Vec<SpinConfig>,
    pub radii: Vec<RadiusReport>,
}

impl RegimeReport {
    /// Keyed text summary.
    pub fn write_summary<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "m_beta = {:.12}", self.m_beta)?;
        writeln!(w, "samples = {}", self.samples)?;
        writeln!(w, "burn_in = {}", self.burn_in_used)?;
        writeln!(w, "acceptance = {:.6}", self.acceptance)?;
        for r in &self.radii {
            let m = &r.modes;
            writeln!(w, "[R = {}]", r.radius)?;
            writeln!(w, "split_rule = {}", m.rule.name())?;
            writeln!(w, "split = {:.4}", m.split)?;
            writeln!(w, "bimodal = {}", m.bimodal)?;
            let peaks: Vec<String> = m.peaks.iter().map(|p| format!("{p:.4}")).collect();
            writeln!(w, "peaks = {}", peaks.join(" "))?;
            writeln!(w, "plus_mode = {}", opt(m.plus_mode))?;
            writeln!(w, "minus_mode = {}", opt(m.minus_mode))?;
            writeln!(w, "positive_mass = {:.6}", m.positive_mass)?;
            writeln!(w, "mean = {:.6}", m.mean)?;
            writeln!(w, "lambda_target = {}", opt(r.lambda_target))?;
            writeln!(w, "w1_dirac_mean = {:.6}", r.to_dirac.mean)?;
            writeln!(w, "w1_limit_mean = {:.6}", r.to_limit.mean)?;
            if let Some(f) = &r.to_finite {
                writeln!(w, "w1_finite_mean = {:.6}", f.mean)?;
            }
        }
        Ok(())
    }

    /// CSV rows `radius,cell,w1_dirac,w1_limit,w1_finite`.
    pub fn write_distances_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "radius,cell,w1_dirac,w1_limit,w1_finite")?;
        for r in &self.radii {
            for c in 0..r.young.cell_count() {
                let fin = r.to_finite.as_ref().map_or(String::new(), |f| format!("{:.12e}", f.per_cell[c]));
                writeln!(
                    w,
                    "{},{c},{:.12e},{:.12e},{fin}",
                    r.radius, r.to_dirac.per_cell[c], r.to_limit.per_cell[c]
                )?;
            }
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |x| format!("{x:.6}"))
}

/// Samples the Kac model with `α = α̃∘u` and compares the Young measures of
/// `m_{B_R}` for each radius with `δ_{u(r)}`, `ν_{u,R}` and `ν_u`.
pub fn regime_experiment(u: &ProfileField, spec: &RegimeSpec) -> Result<RegimeReport> {
    if spec.radii.is_empty() {
        return Err(Error::Domain("regime experiment needs at least one radius".into()));
    }
    if spec.dynamics == Dynamics::SwendsenWang {
        return Err(Error::Sampler("the Kac model is sampled with single-flip dynamics".into()));
    }
    if u.dim() != spec.dim {
        return Err(Error::Domain("profile dimension differs from the lattice".into()));
    }
    let lattice = TorusLattice::dyadic(spec.dim, spec.side)?;
    let partition = BlockPartition::with_cells(lattice, u.cells())?;
    let curve = FreeEnergyCurve::build(spec.beta, spec.dim)?;
    let alpha = el_alpha_profile(u, &curve)?;
    let site_alpha: Vec<f64> = (0..lattice.site_count())
        .map(|x| alpha.values()[partition.block_of(x)])
        .collect();
    let kernel = Arc::new(KacKernel::build(spec.gamma, lattice, true)?);
    let params = Arc::new(ModelParams::kac(spec.beta, kernel, site_alpha)?);
    let mut chain = ChainSpec::new(params, spec.dynamics, spec.sweeps, spec.seed);
    chain.burn_in = spec.burn_in;
    chain.thinning = spec.thinning;
    chain.initial = InitialState::Random;
    let mut youngs = spec
        .radii
        .iter()
        .map(|&r| EmpiricalYoungMeasure::new(partition.clone(), r, spec.bins))
        .collect::<Result<Vec<_>>>()?;
    let mut kept: VecDeque<SpinConfig> = VecDeque::with_capacity(spec.keep + 1);
    let stats = run_replica_with(&chain, 0, &[], |c| {
        for y in youngs.iter_mut() {
            y.add(c)?;
        }
        if spec.keep > 0 {
            if kept.len() == spec.keep {
                kept.pop_front();
            }
            kept.push_back(c.clone());
        }
        Ok(())
    })?;
    if stats.is_empty() {
        return Err(Error::Domain("regime experiment kept no samples".into()));
    }
    let m_beta = curve.m_beta();
    let symmetric = u.values().iter().all(|v| v.abs() < 1e-12);
    let rule = if symmetric { SplitRule::Zero } else { SplitRule::Minimum };
    let dirac: Vec<Atoms> = u.values().iter().map(|&v| vec![(v, 1.0)]).collect();
    let limit: Vec<Atoms> = u
        .values()
        .iter()
        .map(|&v| theoretical_young(v, None, &curve, None))
        .collect::<Result<_>>()?;
    let lambdas: Vec<f64> = u
        .values()
        .iter()
        .filter(|v| m_beta > 0.0 && v.abs() <= m_beta)
        .map(|&v| lambda_mix(v, m_beta))
        .collect::<Result<_>>()?;
    let lambda_target = (!lambdas.is_empty()).then(|| lambdas.iter().sum::<f64>() / lambdas.len() as f64);
    let mut radii = Vec::new();
    for young in youngs {
        let r = young.radius();
        let to_finite = match &spec.phase_laws {
            None => None,
            Some(src) => {
                // one reference per distinct cell value
                let mut cache: Vec<(f64, Atoms)> = Vec::new();
                let mut refs = Vec::with_capacity(u.values().len());
                for &v in u.values() {
                    let atoms = match cache.iter().find(|(k, _)| *k == v) {
                        Some((_, a)) => a.clone(),
                        None => {
                            let a = theoretical_young(v, Some(r), &curve, Some(src))?;
                            cache.push((v, a.clone()));
                            a
                        }
                    };
                    refs.push(atoms);
                }
                Some(compare_measures(&young, &refs)?)
            }
        };
        let halfwidth = default_halfwidth(&lattice, r, spec.bins)?;
        radii.push(RadiusReport {
            radius: r,
            modes: analyze_modes(&young.pooled(), rule, halfwidth)?,
            to_dirac: compare_measures(&young, &dirac)?,
            to_limit: compare_measures(&young, &limit)?,
            to_finite,
            lambda_target,
            young,
        });
    }
    Ok(RegimeReport {
        m_beta,
        alpha,
        acceptance: stats.acceptance,
        burn_in_used: stats.burn_in_used,
        samples: stats.samples,
        kept: kept.into(),
        radii,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::block_average;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn brute_ball(config: &SpinConfig, radius: f64) -> Vec<f64> {
        let l = config.lattice();
        (0..l.site_count())
            .map(|x| {
                let b = l.ball_sites(x, radius).unwrap();
                b.iter().map(|&y| config.get(y) as f64).sum::<f64>() / b.len() as f64
            })
            .collect()
    }

    #[test]
    fn ball_averages_match_direct_sums() {
        let mut rng = stream_rng(40, 0);
        for (dim, side, radii) in [
            (2, 16, vec![0.0, 1.0, 1.5, 2.3, 4.0, 7.9]),
            (2, 8, vec![3.0, 4.0]),
            (1, 32, vec![0.0, 3.0, 15.5]),
            (3, 6, vec![1.0, 1.8]),
        ] {
            let lat = TorusLattice::new(dim, side).unwrap();
            let c = SpinConfig::random(lat, &mut rng);
            for r in radii {
                let fast = ball_averages(&c, r).unwrap();
                let slow = brute_ball(&c, r);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-14, "d={dim} side={side} r={r}");
                }
            }
        }
    }

    #[test]
    fn deterministic_samples() {
        let lat = TorusLattice::new(2, 16).unwrap();
        let part = BlockPartition::with_cells(lat, 4).unwrap();
        let y = estimate_young(&[SpinConfig::all_plus(lat)], 3.0, &part).unwrap();
        for c in 0..y.cell_count() {
            assert_eq!(y.histogram(c).atoms(), vec![(1.0, 1.0)]);
        }
        let y = estimate_young(&[SpinConfig::checkerboard(lat)], 1.0, &part).unwrap();
        let atoms = y.pooled().atoms();
        assert_eq!(atoms.len(), 2);
        // centre plus four opposite neighbours
        assert!((atoms[0].0 + 0.6).abs() < 1e-12 && (atoms[1].0 - 0.6).abs() < 1e-12);
        assert!((atoms[0].1 - 0.5).abs() < 1e-15);
        assert!(estimate_young(&[], 1.0, &part).is_err());
    }

    #[test]
    fn pooled_equals_merged_per_sample() {
        let lat = TorusLattice::new(2, 16).unwrap();
        let part = BlockPartition::with_cells(lat, 2).unwrap();
        let mut rng = stream_rng(41, 0);
        let samples: Vec<SpinConfig> = (0..5).map(|_| SpinConfig::random(lat, &mut rng)).collect();
        let pooled = estimate_young(&samples, 2.5, &part).unwrap();
        let mut merged = estimate_young(&samples[..1], 2.5, &part).unwrap();
        for s in &samples[1..] {
            merged.merge(&estimate_young(std::slice::from_ref(s), 2.5, &part).unwrap()).unwrap();
        }
        for c in 0..pooled.cell_count() {
            assert_eq!(pooled.histogram(c), merged.histogram(c));
            // equal counts per sample: pooled masses are the average of
            // per-sample masses
            let avg: Vec<f64> = (0..pooled.histogram(c).bins())
                .map(|i| {
                    samples
                        .iter()
                        .map(|s| estimate_young(std::slice::from_ref(s), 2.5, &part).unwrap().histogram(c).masses()[i])
                        .sum::<f64>()
                        / 5.0
                })
                .collect();
            for (a, b) in pooled.histogram(c).masses().iter().zip(&avg) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cell_means_are_block_averages() {
        let lat = TorusLattice::new(2, 16).unwrap();
        let part = BlockPartition::with_cells(lat, 4).unwrap();
        let mut rng = stream_rng(42, 0);
        let c = SpinConfig::random(lat, &mut rng);
        let y0 = estimate_young(std::slice::from_ref(&c), 0.0, &part).unwrap();
        let mags = block_average(c.spins(), &part).unwrap();
        let y3 = estimate_young(std::slice::from_ref(&c), 3.0, &part).unwrap();
        let balls = block_average(&ball_averages(&c, 3.0).unwrap(), &part).unwrap();
        for k in 0..part.block_count() {
            assert!((y0.cell_mean(k) - mags[k]).abs() < 1e-14);
            assert!((y3.cell_mean(k) - balls[k]).abs() < 1e-12);
            assert!((y3.histogram(k).mean() - balls[k]).abs() <= 0.005 + 1e-12);
        }
    }

    #[test]
    fn eval_l_examples() {
        let one = ProfileField::constant(2, 4, 1.0).unwrap();
        let u = ProfileField::constant(2, 4, 0.3).unwrap();
        assert!((eval_l(&one, |m| m, LTarget::Profile(&u)).unwrap() - 0.3).abs() < 1e-15);
        // Dirac Young measure on bin centers
        let lat = TorusLattice::new(2, 16).unwrap();
        let part = BlockPartition::with_cells(lat, 4).unwrap();
        let prof = ProfileField::from_fn(2, 4, |r| if r[0] < 0.0 { 0.3 } else { -0.5 }).unwrap();
        let mut y = EmpiricalYoungMeasure::new(part.clone(), 1.0, DEFAULT_BINS).unwrap();
        let field: Vec<f64> = (0..lat.site_count()).map(|x| prof.values()[part.block_of(x)]).collect();
        y.add_field(&field);
        let omega = ProfileField::from_fn(2, 2, |r| 1.0 + r[1]).unwrap();
        let g = |m: f64| m * m * m - 0.2 * m;
        let a = eval_l(&omega, g, LTarget::Young(&y)).unwrap();
        let b = eval_l(&omega, g, LTarget::Profile(&prof)).unwrap();
        let c = eval_l(&omega, g, LTarget::Sites { lattice: &lat, values: &field }).unwrap();
        assert!((a - b).abs() < 1e-15 && (b - c).abs() < 1e-15);
        // mixture signature
        let m = 0.97;
        let mut mix = EmpiricalYoungMeasure::new(BlockPartition::with_cells(lat, 1).unwrap(), 1.0, DEFAULT_BINS).unwrap();
        mix.add_field(&(0..256).map(|x| if x % 2 == 0 { m } else { -m }).collect::<Vec<_>>());
        let one1 = ProfileField::constant(2, 1, 1.0).unwrap();
        assert!((eval_l(&one1, |v| v * v, LTarget::Young(&mix)).unwrap() - m * m).abs() < 1e-12);
        assert!(eval_l(&one1, |v| v, LTarget::Young(&mix)).unwrap().abs() < 1e-12);
        // resolution and dimension checks
        let lat10 = TorusLattice::new(2, 10).unwrap();
        let zeros = vec![0.0; 100];
        let omega4 = ProfileField::constant(2, 4, 1.0).unwrap();
        assert!(eval_l(&omega4, |v| v, LTarget::Sites { lattice: &lat10, values: &zeros }).is_err());
        let one1d = ProfileField::constant(1, 4, 1.0).unwrap();
        assert!(eval_l(&one1d, |v| v, LTarget::Profile(&u)).is_err());
    }

    #[test]
    fn lipschitz_reduction_holds_per_sample() {
        let lat = TorusLattice::new(2, 32).unwrap();
        let u = ProfileField::from_fn(2, 4, |r| 0.5 * (std::f64::consts::TAU * r[0]).cos()).unwrap();
        let omega = ProfileField::from_fn(2, 2, |r| r[0] - 2.0 * r[1]).unwrap();
        let g = |m: f64| (2.0 * m).sin();
        let mut rng = stream_rng(43, 0);
        for _ in 0..20 {
            let c = SpinConfig::random(lat, &mut rng);
            let m = ball_averages(&c, 3.0).unwrap();
            let lhs = (eval_l(&omega, g, LTarget::Sites { lattice: &lat, values: &m }).unwrap()
                - eval_l(&omega, g, LTarget::Profile(&u)).unwrap())
            .abs();
            assert!(lhs <= lipschitz_bound(&omega, 2.0, &lat, &m, &u).unwrap() + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn eval_l_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..1000) {
            let mut rng = stream_rng(seed, 0);
            let vals = |rng: &mut crate::rng::ChainRng| (0..16).map(|_| rand::Rng::gen_range(rng, -1.0..1.0)).collect::<Vec<f64>>();
            let u = ProfileField::new(2, 4, vals(&mut rng)).unwrap();
            let w1 = ProfileField::new(2, 4, vals(&mut rng)).unwrap();
            let w2 = ProfileField::new(2, 4, vals(&mut rng)).unwrap();
            let g1 = |m: f64| m * m;
            let g2 = |m: f64| m.cos();
            let combo_g = eval_l(&w1, |m| a * g1(m) + b * g2(m), LTarget::Profile(&u)).unwrap();
            let split_g = a * eval_l(&w1, g1, LTarget::Profile(&u)).unwrap() + b * eval_l(&w1, g2, LTarget::Profile(&u)).unwrap();
            prop_assert!((combo_g - split_g).abs() < 1e-12);
            let wsum = ProfileField::new(2, 4, w1.values().iter().zip(w2.values()).map(|(x, y)| a * x + b * y).collect()).unwrap();
            let combo_w = eval_l(&wsum, g1, LTarget::Profile(&u)).unwrap();
            let split_w = a * eval_l(&w1, g1, LTarget::Profile(&u)).unwrap() + b * eval_l(&w2, g1, LTarget::Profile(&u)).unwrap();
            prop_assert!((combo_w - split_w).abs() < 1e-12);
        }
    }

    #[test]
    fn comparisons() {
        let lat = TorusLattice::new(2, 8).unwrap();
        let part = BlockPartition::with_cells(lat, 2).unwrap();
        let mut rng = stream_rng(44, 0);
        let y = estimate_young(&[SpinConfig::random(lat, &mut rng)], 1.0, &part).unwrap();
        assert_eq!(compare_empirical(&y, &y).unwrap().worst, 0.0);
        let mut d = EmpiricalYoungMeasure::new(part.clone(), 1.0, DEFAULT_BINS).unwrap();
        d.add_field(&vec![0.5; 64]);
        let refs = vec![vec![(-0.25, 1.0)]; 4];
        let cmp = compare_measures(&d, &refs).unwrap();
        assert!(cmp.per_cell.iter().all(|v| (v - 0.75).abs() < 1e-12));
        assert!(compare_measures(&d, &refs[..2]).is_err());
    }

    #[test]
    fn mode_analysis() {
        let mut h = Histogram::new(DEFAULT_BINS).unwrap();
        // discrete values on a 2/49 lattice, two phases with weights 0.3 / 0.7
        for k in 0..=49 {
            let m = -1.0 + 2.0 * k as f64 / 49.0;
            let w = (-(m - 0.95).powi(2) / 0.002).exp() * 700.0 + (-(m + 0.95).powi(2) / 0.002).exp() * 300.0;
            h.add_count(h.index_of(m), (w * 100.0) as u64);
        }
        let a = analyze_modes(&h, SplitRule::Minimum, 5).unwrap();
        assert!(a.bimodal, "{a:?}");
        assert!(a.split.abs() < 0.8);
        assert!((a.positive_mass - 0.7).abs() < 0.01);
        assert!((a.plus_mode.unwrap() - 0.96).abs() < 0.05);
        assert!((a.minus_mode.unwrap() + 0.96).abs() < 0.05);
        let z = analyze_modes(&h, SplitRule::Zero, 5).unwrap();
        assert_eq!(z.split, 0.0);
        let mut u = Histogram::new(DEFAULT_BINS).unwrap();
        for i in 0..2000 {
            let m = 0.1 * ((i as f64 + 0.5) / 2000.0 * std::f64::consts::PI).cos();
            u.add(m);
        }
        let b = analyze_modes(&u, SplitRule::Zero, 2).unwrap();
        assert!(!b.bimodal, "{b:?}");
        assert!(b.mean.abs() < 0.01);
        assert!(analyze_modes(&Histogram::new(11).unwrap(), SplitRule::Zero, 2).is_err());
    }

    #[test]
    fn regime_experiment_smoke() {
        let u = ProfileField::constant(2, 2, 0.0).unwrap();
        let spec = RegimeSpec {
            dim: 2,
            side: 16,
            beta: 1.0,
            gamma: 0.25,
            radii: vec![1.0, 4.0],
            dynamics: Dynamics::Glauber,
            sweeps: 40,
            burn_in: BurnIn::Fixed(10),
            thinning: 2,
            seed: 3,
            bins: DEFAULT_BINS,
            keep: 2,
            phase_laws: Some(SampledPhaseLaws {
                beta: 1.0,
                box_side: 8,
                sweeps: 40,
                seed: 4,
            }),
        };
        let rep = regime_experiment(&u, &spec).unwrap();
        assert_eq!(rep.samples, 20);
        assert_eq!(rep.kept.len(), 2);
        assert_eq!(rep.alpha.values(), &[0.0; 4]);
        for r in &rep.radii {
            assert_eq!(r.young.samples(), 20);
            assert_eq!(r.modes.rule, SplitRule::Zero);
            assert_eq!(r.lambda_target, Some(0.5));
            assert_eq!(r.to_finite.as_ref().unwrap().per_cell.len(), 4);
        }
        let again = regime_experiment(&u, &spec).unwrap();
        assert_eq!(again.kept, rep.kept);
        let mut a = Vec::new();
        let mut b = Vec::new();
        rep.write_distances_csv(&mut a).unwrap();
        again.write_distances_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let bad = RegimeSpec {
            dynamics: Dynamics::SwendsenWang,
            ..spec.clone()
        };
        assert!(regime_experiment(&u, &bad).is_err());
    }
}
