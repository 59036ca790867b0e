//! Command implementations. Every command writes `manifest.txt` plus its own
//! tables into the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use kacmix::exact::{enumerate, total_variation, EdgeGraph, EnumerateOptions, MAX_PROBABILITY_SITES};
use kacmix::fk::{
    bad_kac_density, classify_boxes, default_margin, domination_test, dual_circuit_absent, spin_observable, BoxFrame,
    BoxLabel, FkConfig, PhaseReferences,
};
use kacmix::sampler::{run_experiment, write_snapshot, ChainSpec};
use kacmix::thermo::{duality_check, el_alpha_profile, FreeEnergyCurve, ProfileField};
use kacmix::young::{regime_experiment, RegimeReport, RegimeSpec, SampledPhaseLaws};
use kacmix::{BlockPartition, KacKernel, ModelParams, TorusLattice};

use crate::config::{Command, ExperimentConfig};

/// Runs the configured command on a pool of `workers` threads.
pub fn run_with_workers(cfg: &ExperimentConfig, workers: usize) -> Result<PathBuf> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .context("cannot build the worker pool")?;
    pool.install(|| run(cfg, workers.max(1)))
}

/// Runs the configured command on the current rayon pool and returns the
/// output directory.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<PathBuf> {
    cfg.validate()?;
    let out = cfg.output.dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
    let start = Instant::now();
    match cfg.command {
        Command::Exact => exact(cfg, &out)?,
        Command::Thermo => thermo(cfg, &out)?,
        Command::Sample => sample(cfg, &out)?,
        Command::Young => young(cfg, &out)?,
        Command::FkDiagnose => fk_diagnose(cfg, &out)?,
        Command::Equivalence => equivalence(cfg, &out)?,
    }
    write_manifest(cfg, &out, workers, start.elapsed().as_secs_f64())?;
    Ok(out)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_manifest(cfg: &ExperimentConfig, out: &Path, workers: usize, wall: f64) -> Result<()> {
    let mut w = create(out, "manifest.txt")?;
    writeln!(w, "kacmix {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(w, "command = {}", cfg.command.name())?;
    writeln!(w, "seed = {}", cfg.run.seed)?;
    writeln!(w, "rng = chacha8, stream r for replica r")?;
    writeln!(w, "workers = {workers}")?;
    writeln!(w, "wall_time_s = {wall:.3}")?;
    writeln!(w, "[config]")?;
    writeln!(w, "{}", cfg.to_json())?;
    w.flush()?;
    Ok(())
}

fn lattice(cfg: &ExperimentConfig) -> Result<TorusLattice> {
    Ok(TorusLattice::new(cfg.model.dim, cfg.model.side)?)
}

/// Per-site values of a cell profile.
fn sites_of(profile: &ProfileField, lattice: TorusLattice) -> Result<Vec<f64>> {
    let part = BlockPartition::with_cells(lattice, profile.cells())?;
    Ok((0..lattice.site_count())
        .map(|x| profile.values()[part.block_of(x)])
        .collect())
}

/// Model parameters from the `model` block: the Kac model on the torus when
/// `gamma` is set, the nearest-neighbour model otherwise.
pub fn build_params(cfg: &ExperimentConfig) -> Result<Arc<ModelParams>> {
    let m = &cfg.model;
    let lat = lattice(cfg)?;
    let params = match m.gamma {
        None => ModelParams::nearest_neighbour(lat, m.beta, cfg.boundary()?, m.field)?,
        Some(g) => {
            let kernel = Arc::new(KacKernel::build(g, lat, m.normalized_kernel)?);
            let alpha = match (cfg.alpha_profile()?, cfg.u_profile()?) {
                (Some(a), _) => sites_of(&a, lat)?,
                (None, Some(u)) => {
                    let curve = FreeEnergyCurve::build(m.beta, m.dim)?;
                    sites_of(&el_alpha_profile(&u, &curve)?, lat)?
                }
                (None, None) => vec![0.0; lat.site_count()],
            };
            ModelParams::kac(m.beta, kernel, alpha)?
        }
    };
    Ok(Arc::new(params))
}

fn exact(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let params = build_params(cfg)?;
    let n = params.lattice().site_count();
    let res = enumerate(&params, EnumerateOptions::default())?;
    let mut w = create(out, "summary.txt")?;
    writeln!(w, "sites = {n}")?;
    writeln!(w, "log_z = {}", res.log_z())?;
    writeln!(w, "log_z_from_levels = {}", res.log_z_from_levels())?;
    writeln!(w, "free_energy_per_site = {}", -res.log_z() / (params.beta() * n as f64))?;
    w.flush()?;
    let mut c = create(out, "levels.csv")?;
    res.write_levels_csv(&mut c)?;
    c.flush()?;
    Ok(())
}

fn thermo(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let m = &cfg.model;
    let r = &cfg.run;
    let curve = FreeEnergyCurve::build(m.beta, m.dim)?;
    let mut w = create(out, "summary.txt")?;
    writeln!(w, "beta = {}", m.beta)?;
    writeln!(w, "dim = {}", m.dim)?;
    writeln!(w, "m_beta = {}", curve.m_beta())?;
    writeln!(w, "provenance = {}", curve.provenance())?;
    writeln!(w, "strip_shift = {}", curve.response().strip_shift())?;
    writeln!(w, "low_accuracy = {}", curve.low_accuracy())?;
    w.flush()?;
    let mut c = create(out, "curve.csv")?;
    curve.write_curve_csv(&mut c, r.grid_points)?;
    c.flush()?;
    let mut p = create(out, "pressure.csv")?;
    curve.write_pressure_csv(&mut p, r.h_max, 2 * r.grid_points + 1)?;
    p.flush()?;
    write_el_table(&curve, cfg, out)?;
    Ok(())
}

/// `u, α̃(u), ũ(α̃(u)), |ũ(α̃(u)) - u|` on the magnetization grid; points on
/// the plateau are skipped since `ũ` is multivalued there.
fn write_el_table(curve: &FreeEnergyCurve, cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let r = &cfg.run;
    let mut w = create(out, "el_roundtrip.csv")?;
    writeln!(w, "u,alpha,u_back,error")?;
    for u in grid(r.u_max, r.grid_points) {
        if curve.m_beta() > 0.0 && u.abs() <= curve.m_beta() {
            continue;
        }
        let a = curve.el_alpha_of_u(u)?;
        let back = curve.el_solve_u(a)?;
        writeln!(w, "{u},{a},{back},{}", (back - u).abs())?;
    }
    w.flush()?;
    Ok(())
}

/// `points` values equally spaced on `[-max, max]`.
pub fn grid(max: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| -max + 2.0 * max * i as f64 / (points - 1) as f64)
        .collect()
}

fn sample(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let r = &cfg.run;
    let params = build_params(cfg)?;
    let observables = r
        .observables
        .iter()
        .map(|o| cfg.observable(o))
        .collect::<Result<Vec<_>, _>>()?;
    let mut spec = ChainSpec::new(params.clone(), cfg.dynamics()?, r.sweeps, r.seed);
    spec.burn_in = cfg.burn_in();
    spec.thinning = r.thinning;
    spec.replicas = r.replicas;
    spec.order = cfg.order()?;
    spec.initial = cfg.initial()?;
    spec.snapshot_every = r.snapshot_every;
    let stats = run_experiment(&spec, &observables)?;
    let mut w = create(out, "summary.txt")?;
    writeln!(w, "dynamics = {}", spec.dynamics.name())?;
    writeln!(w, "replicas = {}", stats.replicas)?;
    writeln!(w, "samples = {}", stats.samples)?;
    writeln!(w, "burn_in = {}", stats.burn_in_used)?;
    writeln!(w, "tau_int = {}", stats.tau_int)?;
    writeln!(w, "acceptance = {}", stats.acceptance)?;
    if let Some(law) = stats.empirical_law() {
        let n = params.lattice().site_count();
        if n <= MAX_PROBABILITY_SITES {
            let exact = enumerate(&params, EnumerateOptions { probabilities: true })?;
            let p = exact.probabilities().expect("requested");
            writeln!(w, "tv_to_exact = {}", total_variation(&law, p))?;
            let mut c = create(out, "law.csv")?;
            writeln!(c, "config,empirical,exact")?;
            for (i, (a, b)) in law.iter().zip(p).enumerate() {
                writeln!(c, "{i},{a},{b}")?;
            }
            c.flush()?;
        }
    }
    w.flush()?;
    let mut c = create(out, "observables.csv")?;
    writeln!(c, "observable,count,mean,variance,std_error")?;
    for (label, s) in &stats.observables {
        writeln!(c, "{label},{},{},{},{}", s.count(), s.mean(), s.variance(), s.std_error())?;
    }
    c.flush()?;
    if cfg.output.snapshots && !stats.snapshots.is_empty() {
        let dir = out.join("snapshots");
        fs::create_dir_all(&dir)?;
        for (i, snap) in stats.snapshots.iter().enumerate() {
            let mut f = create(&dir, &format!("snapshot_{i:05}.ksnp"))?;
            write_snapshot(&mut f, snap)?;
            f.flush()?;
        }
    }
    Ok(())
}

fn regime_spec(cfg: &ExperimentConfig) -> Result<RegimeSpec> {
    let m = &cfg.model;
    let r = &cfg.run;
    Ok(RegimeSpec {
        dim: m.dim,
        side: m.side,
        beta: m.beta,
        gamma: m.gamma.context("model.gamma is required")?,
        radii: r.radii.clone(),
        dynamics: cfg.dynamics()?,
        sweeps: r.sweeps,
        burn_in: cfg.burn_in(),
        thinning: r.thinning,
        seed: r.seed,
        bins: r.bins,
        keep: r.keep,
        phase_laws: r.phase_laws.as_ref().map(|p| SampledPhaseLaws {
            beta: m.beta,
            box_side: p.box_side,
            sweeps: p.sweeps,
            seed: r.seed,
        }),
    })
}

fn regime(cfg: &ExperimentConfig) -> Result<(ProfileField, RegimeReport)> {
    let u = cfg.u_profile()?.context("model.u is required")?;
    let report = regime_experiment(&u, &regime_spec(cfg)?)?;
    Ok((u, report))
}

fn write_regime(report: &RegimeReport, out: &Path) -> Result<()> {
    let mut w = create(out, "summary.txt")?;
    report.write_summary(&mut w)?;
    w.flush()?;
    let mut d = create(out, "distances.csv")?;
    report.write_distances_csv(&mut d)?;
    d.flush()?;
    let mut a = create(out, "alpha.csv")?;
    writeln!(a, "cell,alpha")?;
    for (i, v) in report.alpha.values().iter().enumerate() {
        writeln!(a, "{i},{v}")?;
    }
    a.flush()?;
    for r in &report.radii {
        let mut h = create(out, &format!("young_r{}.csv", r.radius))?;
        r.young.write_csv(&mut h)?;
        h.flush()?;
    }
    Ok(())
}

fn young(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let (_, report) = regime(cfg)?;
    write_regime(&report, out)
}

fn fk_diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let r = &cfg.run;
    let (u, report) = regime(cfg)?;
    write_regime(&report, out)?;
    let refs = PhaseReferences::symmetric(report.m_beta)?;
    let mut fr = create(out, "box_fractions.csv")?;
    writeln!(fr, "box_side,sample,bad,good_plus,good_minus")?;
    let mut s = create(out, "fk_summary.txt")?;
    for &k in &r.box_sides {
        let mut mean_bad = 0.0;
        for (i, c) in report.kept.iter().enumerate() {
            let rep = classify_boxes(c, k, r.zeta, &spin_observable, &refs)?;
            let n = rep.verdicts.len() as f64;
            writeln!(
                fr,
                "{k},{i},{},{},{}",
                rep.bad_fraction(),
                rep.good_plus_fraction(),
                rep.count(BoxLabel::GoodMinus) as f64 / n
            )?;
            mean_bad += rep.bad_fraction() / report.kept.len() as f64;
            if i + 1 == report.kept.len() {
                let mut b = create(out, &format!("boxes_k{k}.csv"))?;
                rep.write_csv(&mut b)?;
                b.flush()?;
            }
        }
        writeln!(s, "bad_fraction_k{k} = {mean_bad}")?;
    }
    fr.flush()?;
    let lat = lattice(cfg)?;
    let kernel = KacKernel::build(cfg.model.gamma.context("model.gamma is required")?, lat, true)?;
    let u_sites = sites_of(&u, lat)?;
    let mut bk = create(out, "bad_kac.csv")?;
    writeln!(bk, "sample,density")?;
    for (i, c) in report.kept.iter().enumerate() {
        writeln!(bk, "{i},{}", bad_kac_density(c, &kernel, &u_sites, r.zeta)?)?;
    }
    bk.flush()?;
    if !r.domination_betas.is_empty() {
        let side = r.domination_side;
        let graph = EdgeGraph::free_box(2, side)?;
        let frame = BoxFrame::with_margin(vec![0, 0], side, default_margin(side).min((side - 1) / 2))?;
        let mut d = create(out, "domination.csv")?;
        writeln!(d, "beta,p,rho,fk_probability,bernoulli_probability,dominated,monotonicity_violations")?;
        for &beta in &r.domination_betas {
            let rep = domination_test(beta, &graph, |mask| {
                FkConfig::from_mask(side, mask)
                    .and_then(|fk| dual_circuit_absent(&fk, &frame))
                    .expect("mask and frame fit the free box")
            })?;
            writeln!(
                d,
                "{},{},{},{},{},{},{}",
                rep.beta,
                rep.p,
                rep.rho,
                rep.fk_probability,
                rep.bernoulli_probability,
                rep.dominated(),
                rep.monotonicity_violations
            )?;
        }
        d.flush()?;
    }
    s.flush()?;
    Ok(())
}

fn equivalence(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let m = &cfg.model;
    let r = &cfg.run;
    let curve = FreeEnergyCurve::build(m.beta, m.dim)?;
    let mut w = create(out, "duality.csv")?;
    writeln!(w, "u,lhs,rhs_at_optimum,residual,max_perturbed_excess,perturbations,non_decreasing")?;
    for u in grid(r.u_max, r.grid_points) {
        let field = ProfileField::constant(m.dim, m.cells, u)?;
        let rep = duality_check(&field, &curve, &r.amplitudes)?;
        writeln!(
            w,
            "{u},{},{},{},{},{},{}",
            rep.lhs,
            rep.rhs_at_optimum,
            rep.residual(),
            rep.max_perturbed_excess,
            rep.perturbations,
            rep.non_decreasing
        )?;
    }
    w.flush()?;
    write_el_table(&curve, cfg, out)?;
    if let Some(u) = cfg.u_profile()? {
        let rep = duality_check(&u, &curve, &r.amplitudes)?;
        let mut s = create(out, "summary.txt")?;
        writeln!(s, "profile_lhs = {}", rep.lhs)?;
        writeln!(s, "profile_rhs_at_optimum = {}", rep.rhs_at_optimum)?;
        writeln!(s, "profile_residual = {}", rep.residual())?;
        writeln!(s, "profile_max_perturbed_excess = {}", rep.max_perturbed_excess)?;
        writeln!(s, "profile_perturbations = {}", rep.perturbations)?;
        writeln!(s, "profile_non_decreasing = {}", rep.non_decreasing)?;
        s.flush()?;
    }
    Ok(())
}

