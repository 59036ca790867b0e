//! Box diagnostics on spin and random-cluster configurations: spin circuits,
//! bad/good box classification, bad Kac averages, dual-lattice circuits of
//! open edges and Bernoulli domination.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{Error, Result};
use crate::exact::{enumerate_fk, EdgeGraph, FkTable};
use crate::kernel::KacKernel;
use crate::lattice::{SpinConfig, TorusLattice};
use crate::unionfind::UnionFind;

/// Cube `Δ_K` of side `K` at `origin`, with the concentric inner cube `Δ_K⁰`
/// at distance `margin` from the complement and optionally `Δ_K⁰⁰` a further
/// `inner_margin` inside.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxFrame {
    origin: Vec<usize>,
    side: usize,
    margin: usize,
    inner_margin: Option<usize>,
}

/// `⌈√K⌉`, computed in integers.
pub fn default_margin(side: usize) -> usize {
    let mut m = (side as f64).sqrt() as usize;
    while m * m < side {
        m += 1;
    }
    while m > 0 && (m - 1) * (m - 1) >= side {
        m -= 1;
    }
    m
}

impl BoxFrame {
    /// Frame with the default margin `⌈√K⌉`.
    pub fn new(origin: Vec<usize>, side: usize) -> Result<Self> {
        Self::with_margin(origin, side, default_margin(side))
    }

    pub fn with_margin(origin: Vec<usize>, side: usize, margin: usize) -> Result<Self> {
        if origin.is_empty() {
            return Err(Error::Domain("box origin needs at least one coordinate".into()));
        }
        if margin == 0 {
            return Err(Error::Domain("box margin must be positive".into()));
        }
        if side <= 2 * margin {
            return Err(Error::Domain(format!(
                "box side {side} leaves no inner box at margin {margin}"
            )));
        }
        Ok(Self {
            origin,
            side,
            margin,
            inner_margin: None,
        })
    }

    /// Adds `Δ_K⁰⁰` at distance `m2` inside `Δ_K⁰`.
    pub fn with_inner(mut self, m2: usize) -> Result<Self> {
        if m2 == 0 || self.side <= 2 * (self.margin + m2) {
            return Err(Error::Domain(format!(
                "inner margin {m2} does not fit in a box of side {} with margin {}",
                self.side, self.margin
            )));
        }
        self.inner_margin = Some(m2);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn margin(&self) -> usize {
        self.margin
    }

    pub fn inner_margin(&self) -> Option<usize> {
        self.inner_margin
    }

    pub fn volume(&self) -> usize {
        self.side.pow(self.dim() as u32)
    }

    fn local_coords(&self, k: usize) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.dim());
        let mut rest = k;
        for _ in 0..self.dim() {
            c.push(rest % self.side);
            rest /= self.side;
        }
        c
    }

    fn local_index(&self, c: &[usize]) -> usize {
        c.iter().rev().fold(0, |acc, &v| acc * self.side + v)
    }

    /// Whether local coordinates lie in `Δ_K⁰`.
    pub fn in_inner(&self, local: &[usize]) -> bool {
        let m = self.margin;
        local.iter().all(|&v| v >= m && v < self.side - m)
    }

    /// Whether local coordinates lie in `Δ_K⁰⁰` (false when it is absent).
    pub fn in_inner2(&self, local: &[usize]) -> bool {
        match self.inner_margin {
            None => false,
            Some(m2) => {
                let m = self.margin + m2;
                local.iter().all(|&v| v >= m && v < self.side - m)
            }
        }
    }

    fn check_window(&self, lattice: &TorusLattice) -> Result<()> {
        if lattice.dim() != self.dim() {
            return Err(Error::Domain(format!(
                "frame of dimension {} on a lattice of dimension {}",
                self.dim(),
                lattice.dim()
            )));
        }
        if self.side > lattice.side() {
            return Err(Error::Domain(format!(
                "frame of side {} exceeds the window of side {}",
                self.side,
                lattice.side()
            )));
        }
        Ok(())
    }

    /// Lattice sites of `Δ_K` in local raster order, wrapping on the torus.
    pub fn sites(&self, lattice: &TorusLattice) -> Result<Vec<usize>> {
        self.check_window(lattice)?;
        Ok((0..self.volume())
            .map(|k| {
                let c: Vec<usize> = self
                    .local_coords(k)
                    .iter()
                    .zip(&self.origin)
                    .map(|(l, o)| l + o)
                    .collect();
                lattice.index(&c)
            })
            .collect())
    }
}

/// Whether `config` has a `τ`-circuit in the frame: false iff some path of
/// `-τ` sites inside `Δ_K ∖ Δ_K⁰` runs from the boundary layer of `Δ_K` to a
/// site adjacent to `Δ_K⁰`.
pub fn has_spin_circuit(config: &SpinConfig, frame: &BoxFrame, tau: i8) -> Result<bool> {
    if tau != 1 && tau != -1 {
        return Err(Error::Domain(format!("circuit sign must be +1 or -1, got {tau}")));
    }
    let sites = frame.sites(config.lattice())?;
    let s = config.spins();
    let k = frame.side;
    let d = frame.dim();
    let vol = frame.volume();
    let coords: Vec<Vec<usize>> = (0..vol).map(|i| frame.local_coords(i)).collect();
    let in_annulus = |i: usize| !frame.in_inner(&coords[i]) && s[sites[i]] == -tau;
    let on_boundary = |c: &[usize]| c.iter().any(|&v| v == 0 || v == k - 1);
    let touches_inner = |c: &[usize]| {
        let mut n = c.to_vec();
        for a in 0..d {
            for step in [-1i64, 1] {
                let v = c[a] as i64 + step;
                if v < 0 || v >= k as i64 {
                    continue;
                }
                n[a] = v as usize;
                if frame.in_inner(&n) {
                    return true;
                }
                n[a] = c[a];
            }
        }
        false
    };
    let mut seen = vec![false; vol];
    let mut queue = VecDeque::new();
    for i in 0..vol {
        if in_annulus(i) && on_boundary(&coords[i]) {
            seen[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let c = &coords[i];
        if touches_inner(c) {
            return Ok(false);
        }
        let mut n = c.clone();
        for a in 0..d {
            for step in [-1i64, 1] {
                let v = c[a] as i64 + step;
                if v < 0 || v >= k as i64 {
                    continue;
                }
                n[a] = v as usize;
                let j = frame.local_index(&n);
                if !seen[j] && in_annulus(j) {
                    seen[j] = true;
                    queue.push_back(j);
                }
                n[a] = c[a];
            }
        }
    }
    Ok(true)
}

/// `τ`-circuit of either sign.
pub fn has_any_circuit(config: &SpinConfig, frame: &BoxFrame) -> Result<bool> {
    Ok(has_spin_circuit(config, frame, 1)? || has_spin_circuit(config, frame, -1)?)
}

/// Expectations `E_{μ_{0,±}}(f)` of the local observable in the two pure
/// phases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseReferences {
    pub plus: f64,
    pub minus: f64,
}

impl PhaseReferences {
    pub fn new(plus: f64, minus: f64) -> Result<Self> {
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Domain("pure-phase reference expectations are missing".into()));
        }
        Ok(Self { plus, minus })
    }

    /// `±m_β` for the spin observable.
    pub fn symmetric(m: f64) -> Result<Self> {
        Self::new(m, -m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoxLabel {
    Bad,
    GoodPlus,
    GoodMinus,
}

impl BoxLabel {
    pub fn name(self) -> &'static str {
        match self {
            BoxLabel::Bad => "bad",
            BoxLabel::GoodPlus => "good+",
            BoxLabel::GoodMinus => "good-",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxVerdict {
    pub label: BoxLabel,
    pub has_circuit: bool,
    /// `|mean f_x - E_+(f)|` over the box.
    pub dev_plus: f64,
    pub dev_minus: f64,
}

/// Local observable `f_x`, evaluated on the full configuration.
pub type LocalObservable<'a> = &'a (dyn Fn(&SpinConfig, usize) -> f64 + Sync);

/// `f_x = σ_x`.
pub fn spin_observable(config: &SpinConfig, x: usize) -> f64 {
    config.get(x) as f64
}

/// A box is bad when it has no circuit or both deviations exceed `ζ`.
/// Otherwise it is good with the sign of the smaller deviation, `+` on a tie.
pub fn classify_box(
    config: &SpinConfig,
    frame: &BoxFrame,
    zeta: f64,
    f: LocalObservable<'_>,
    refs: &PhaseReferences,
) -> Result<BoxVerdict> {
    if !(zeta > 0.0) {
        return Err(Error::Domain(format!("precision zeta must be positive, got {zeta}")));
    }
    let refs = PhaseReferences::new(refs.plus, refs.minus)?;
    let sites = frame.sites(config.lattice())?;
    let mean = sites.iter().map(|&x| f(config, x)).sum::<f64>() / sites.len() as f64;
    let dev_plus = (mean - refs.plus).abs();
    let dev_minus = (mean - refs.minus).abs();
    let has_circuit = has_any_circuit(config, frame)?;
    let label = if !has_circuit || (dev_plus > zeta && dev_minus > zeta) {
        BoxLabel::Bad
    } else if dev_plus <= dev_minus {
        BoxLabel::GoodPlus
    } else {
        BoxLabel::GoodMinus
    };
    Ok(BoxVerdict {
        label,
        has_circuit,
        dev_plus,
        dev_minus,
    })
}

/// Classification of every box of a `K`-partition of the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxReport {
    pub box_side: usize,
    pub verdicts: Vec<BoxVerdict>,
}

impl BoxReport {
    pub fn count(&self, label: BoxLabel) -> usize {
        self.verdicts.iter().filter(|v| v.label == label).count()
    }

    pub fn bad_fraction(&self) -> f64 {
        self.count(BoxLabel::Bad) as f64 / self.verdicts.len() as f64
    }

    pub fn good_plus_fraction(&self) -> f64 {
        self.count(BoxLabel::GoodPlus) as f64 / self.verdicts.len() as f64
    }

    /// CSV with header `box,label,has_circuit,dev_plus,dev_minus`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "box,label,has_circuit,dev_plus,dev_minus")?;
        for (i, v) in self.verdicts.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{:.12e},{:.12e}",
                v.label.name(),
                v.has_circuit as u8,
                v.dev_plus,
                v.dev_minus
            )?;
        }
        Ok(())
    }
}

/// Classifies the `(side/K)^d` boxes tiling the torus, in raster order of
/// their corners, each with the default margin.
pub fn classify_boxes(
    config: &SpinConfig,
    box_side: usize,
    zeta: f64,
    f: LocalObservable<'_>,
    refs: &PhaseReferences,
) -> Result<BoxReport> {
    let lattice = config.lattice();
    if box_side == 0 || lattice.side() % box_side != 0 {
        return Err(Error::Domain(format!(
            "box side {box_side} does not divide the lattice side {}",
            lattice.side()
        )));
    }
    let per_axis = lattice.side() / box_side;
    let count = per_axis.pow(lattice.dim() as u32);
    let verdicts = (0..count)
        .map(|b| {
            let mut rest = b;
            let origin = (0..lattice.dim())
                .map(|_| {
                    let c = rest % per_axis;
                    rest /= per_axis;
                    c * box_side
                })
                .collect();
            classify_box(config, &BoxFrame::new(origin, box_side)?, zeta, f, refs)
        })
        .collect::<Result<_>>()?;
    Ok(BoxReport { box_side, verdicts })
}

/// Fraction of sites with `|I^γ_x(σ) - u_x| > ζ`.
pub fn bad_kac_density(config: &SpinConfig, kernel: &KacKernel, u: &[f64], zeta: f64) -> Result<f64> {
    if u.len() != config.lattice().site_count() {
        return Err(Error::Domain(format!(
            "profile has {} entries for {} sites",
            u.len(),
            config.lattice().site_count()
        )));
    }
    let field = crate::kernel::kac_field(config, kernel)?;
    let bad = field.iter().zip(u).filter(|(i, u)| (*i - *u).abs() > zeta).count();
    Ok(bad as f64 / field.len() as f64)
}

/// Edge occupations `ω` on the free `side × side` box; bit order follows
/// [`EdgeGraph::free_box`]: horizontal edges `(x,y)-(x+1,y)` at
/// `y (side-1) + x`, then vertical edges `(x,y)-(x,y+1)` at
/// `side (side-1) + x + side y`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FkConfig {
    side: usize,
    open: Vec<bool>,
}

impl FkConfig {
    pub fn new(side: usize, open: Vec<bool>) -> Result<Self> {
        if side < 2 {
            return Err(Error::Domain("free box side must be at least 2".into()));
        }
        let m = 2 * side * (side - 1);
        if open.len() != m {
            return Err(Error::Domain(format!("{} occupations for {m} edges", open.len())));
        }
        Ok(Self { side, open })
    }

    pub fn from_mask(side: usize, mask: u64) -> Result<Self> {
        let m = 2 * side * (side - 1);
        if m > 64 {
            return Err(Error::TooLarge {
                size: m,
                cap: 64,
                unit: "edges in a bitmask",
            });
        }
        Self::new(side, (0..m).map(|e| (mask >> e) & 1 == 1).collect())
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn open(&self) -> &[bool] {
        &self.open
    }

    pub fn edge_count(&self) -> usize {
        self.open.len()
    }

    pub fn horizontal(&self, x: usize, y: usize) -> usize {
        y * (self.side - 1) + x
    }

    pub fn vertical(&self, x: usize, y: usize) -> usize {
        self.side * (self.side - 1) + x + self.side * y
    }

    /// `ω*` with `ω*_{e*} = 1 - ω_e`, stored under the primal edge index.
    pub fn dual(&self) -> Self {
        Self {
            side: self.side,
            open: self.open.iter().map(|&o| !o).collect(),
        }
    }

    /// Number of open clusters `Cl(ω)`, isolated vertices included.
    pub fn cluster_count(&self) -> usize {
        let g = EdgeGraph::free_box(2, self.side).expect("side checked at construction");
        let mut uf = UnionFind::new(self.side * self.side);
        for (e, &(a, b)) in g.edges().iter().enumerate() {
            if self.open[e] {
                uf.union(a, b);
            }
        }
        uf.components()
    }
}

/// Whether `ω` lacks a circuit of open edges of `E(Δ_K)` around `Δ_K⁰`.
///
/// Dual vertices are the plaquette centers `(i+½, j+½)`; those of `Δ_K*`
/// form a `(K+1)²` grid without its corners, and `∂°Δ_K*` is its outer
/// ring. The set of dual-open edges connected to `∂°Δ_K*` by dual-open paths
/// is grown by breadth-first search over `E(Δ_K)*`; the circuit is absent
/// iff that set touches a plaquette center at a corner of a `Δ_K⁰` site.
pub fn dual_circuit_absent(fk: &FkConfig, frame: &BoxFrame) -> Result<bool> {
    if frame.dim() != 2 {
        return Err(Error::Domain("dual circuits are defined on planar boxes".into()));
    }
    let (a, b, k, m) = (frame.origin[0], frame.origin[1], frame.side, frame.margin);
    if a + k > fk.side || b + k > fk.side {
        return Err(Error::Domain(format!(
            "frame at ({a}, {b}) of side {k} leaves the free box of side {}",
            fk.side
        )));
    }
    // local dual index (p, q), p, q in 0..=k, is the plaquette center
    // (a + p - ½, b + q - ½)
    let w = k + 1;
    let id = |p: usize, q: usize| p + w * q;
    let corner = |p: usize, q: usize| (p == 0 || p == k) && (q == 0 || q == k);
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); w * w];
    for y in 0..k {
        for x in 0..k {
            // horizontal primal (x,y)-(x+1,y) crosses dual (x+1, y)-(x+1, y+1)
            if x + 1 < k && !fk.open[fk.horizontal(a + x, b + y)] {
                let (u, v) = (id(x + 1, y), id(x + 1, y + 1));
                adj[u].push(v);
                adj[v].push(u);
            }
            // vertical primal (x,y)-(x,y+1) crosses dual (x, y+1)-(x+1, y+1)
            if y + 1 < k && !fk.open[fk.vertical(a + x, b + y)] {
                let (u, v) = (id(x, y + 1), id(x + 1, y + 1));
                adj[u].push(v);
                adj[v].push(u);
            }
        }
    }
    // plaquette centers touching a Δ⁰ site (local m..k-m) have local indices
    // m..=k-m in both coordinates
    let target = |p: usize, q: usize| (m..=k - m).contains(&p) && (m..=k - m).contains(&q);
    let mut seen = vec![false; w * w];
    let mut queue = VecDeque::new();
    for q in 0..w {
        for p in 0..w {
            if (p == 0 || p == k || q == 0 || q == k) && !corner(p, q) {
                seen[id(p, q)] = true;
                queue.push_back(id(p, q));
            }
        }
    }
    while let Some(u) = queue.pop_front() {
        let (p, q) = (u % w, u / w);
        if target(p, q) {
            return Ok(true);
        }
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    Ok(false)
}

/// `ρ(β) = (1 - e^{-2β}) / (1 + e^{-2β}) = tanh β`.
pub fn bernoulli_rho(beta: f64) -> f64 {
    let q = (-2.0 * beta).exp();
    (1.0 - q) / (1.0 + q)
}

/// `3 (1 - ρ(β)) < 1`, the percolation condition for the dual circuits.
pub fn beta_threshold(beta: f64) -> bool {
    3.0 * (1.0 - bernoulli_rho(beta)) < 1.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct DominationReport {
    pub beta: f64,
    /// Random-cluster edge parameter `p = 1 - e^{-2β}`.
    pub p: f64,
    pub rho: f64,
    /// `φ(A)`.
    pub fk_probability: f64,
    /// `B_ρ(A)`.
    pub bernoulli_probability: f64,
    /// `(ω, ω ∪ {e})` pairs where the event holds on the larger
    /// configuration but not the smaller one.
    pub monotonicity_violations: usize,
}

impl DominationReport {
    /// `φ(A) ≤ B_ρ(A)` up to summation rounding.
    pub fn dominated(&self) -> bool {
        self.fk_probability <= self.bernoulli_probability + 1e-12
    }

    /// Keyed text record.
    pub fn write_record<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "beta = {}", self.beta)?;
        writeln!(w, "p = {:.15e}", self.p)?;
        writeln!(w, "rho = {:.15e}", self.rho)?;
        writeln!(w, "fk_probability = {:.15e}", self.fk_probability)?;
        writeln!(w, "bernoulli_probability = {:.15e}", self.bernoulli_probability)?;
        writeln!(w, "dominated = {}", self.dominated())?;
        writeln!(w, "monotonicity_violations = {}", self.monotonicity_violations)?;
        Ok(())
    }
}

/// Exact `φ(A)` and `B_ρ(A)` for a decreasing event `A` on a graph with at
/// most 20 edges; every covering pair is checked for monotonicity.
pub fn domination_test(beta: f64, graph: &EdgeGraph, event: impl Fn(u64) -> bool) -> Result<DominationReport> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be non-negative, got {beta}")));
    }
    let p = 1.0 - (-2.0 * beta).exp();
    let table: FkTable = enumerate_fk(graph, p)?;
    let rho = bernoulli_rho(beta);
    let m = graph.edge_count();
    let holds: Vec<bool> = (0u64..1 << m).map(&event).collect();
    let mut violations = 0;
    for mask in 0u64..1 << m {
        for e in 0..m {
            let bigger = mask | (1 << e);
            if bigger != mask && holds[bigger as usize] && !holds[mask as usize] {
                violations += 1;
            }
        }
    }
    Ok(DominationReport {
        beta,
        p,
        rho,
        fk_probability: table.event_probability(|mask| holds[mask as usize]),
        bernoulli_probability: crate::exact::bernoulli_event_probability(m, rho, |mask| holds[mask as usize])?,
        monotonicity_violations: violations,
    })
}
