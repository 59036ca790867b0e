//! Experiment configuration: JSON file, flag overrides, validation.

use std::fmt;
use std::path::{Path, PathBuf};

use kacmix::exact::MAX_SITES;
use kacmix::sampler::{Dynamics, SweepOrder};
use kacmix::thermo::ProfileField;
use kacmix::Boundary;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::profile::ProfileSpec;

/// A validation failure tied to one configuration key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: &str, message: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Exact,
    Thermo,
    Sample,
    Young,
    FkDiagnose,
    Equivalence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Exact => "exact",
            Command::Thermo => "thermo",
            Command::Sample => "sample",
            Command::Young => "young",
            Command::FkDiagnose => "fk-diagnose",
            Command::Equivalence => "equivalence",
        }
    }
}

impl std::str::FromStr for Command {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        serde_json::from_value(Value::String(s.to_string()))
            .map_err(|_| ConfigError::new("command", format!("unknown command {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub side: usize,
    pub beta: f64,
    /// Kac range parameter; absent for the pure nearest-neighbour model.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "default_true")]
    pub normalized_kernel: bool,
    #[serde(default = "default_boundary")]
    pub boundary: String,
    #[serde(default)]
    pub field: f64,
    /// Target field of the Kac term. Defaults to `α̃∘u` when `u` is given and
    /// to zero otherwise.
    #[serde(default)]
    pub alpha: Option<ProfileSpec>,
    /// Macroscopic magnetization profile.
    #[serde(default)]
    pub u: Option<ProfileSpec>,
    /// Profile resolution per axis.
    #[serde(default = "default_one")]
    pub cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BurnInSpec {
    Sweeps(u64),
    Keyword(String),
}

impl Default for BurnInSpec {
    fn default() -> Self {
        BurnInSpec::Sweeps(0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseLawConfig {
    pub box_side: usize,
    pub sweeps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub sweeps: u64,
    /// A sweep count or `"auto"`.
    pub burn_in: BurnInSpec,
    /// Pilot length for automatic burn-in.
    pub pilot: u64,
    pub thinning: u64,
    pub replicas: u64,
    pub dynamics: String,
    pub order: String,
    /// `"random"`, `"plus"` or `"minus"`.
    pub initial: String,
    pub observables: Vec<String>,
    pub snapshot_every: Option<u64>,
    /// Ball radii of the Young-measure estimator.
    pub radii: Vec<f64>,
    pub bins: usize,
    /// Final configurations kept for box diagnostics.
    pub keep: usize,
    pub phase_laws: Option<PhaseLawConfig>,
    /// Box sides `K` of the classification.
    pub box_sides: Vec<usize>,
    pub zeta: f64,
    /// Inverse temperatures of the exact domination test.
    pub domination_betas: Vec<f64>,
    /// Side of the free box of the domination test.
    pub domination_side: usize,
    /// Points of the magnetization grid in `thermo` and `equivalence`.
    pub grid_points: usize,
    pub u_max: f64,
    /// Largest field of the pressure table.
    pub h_max: f64,
    /// Perturbation amplitudes of the duality check.
    pub amplitudes: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sweeps: 10_000,
            burn_in: BurnInSpec::default(),
            pilot: 1_000,
            thinning: 1,
            replicas: 1,
            dynamics: "glauber".into(),
            order: "raster".into(),
            initial: "random".into(),
            observables: vec!["magnetization".into(), "energy".into()],
            snapshot_every: None,
            radii: vec![4.0],
            bins: kacmix::hist::DEFAULT_BINS,
            keep: 1,
            phase_laws: None,
            box_sides: vec![16],
            zeta: 0.2,
            domination_betas: Vec::new(),
            domination_side: 3,
            grid_points: 50,
            u_max: 0.95,
            h_max: 2.0,
            amplitudes: vec![1e-3, 1e-2, 1e-1],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Write packed snapshot files in `sample`.
    pub snapshots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshots: false,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

fn default_boundary() -> String {
    "periodic".into()
}

/// Flag overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// `key.path=json` assignments; values that do not parse as JSON are
    /// taken as strings.
    pub set: Vec<String>,
}

/// Reads the JSON config at `path` (or starts from an empty object), applies
/// the overrides and validates.
pub fn parse_config(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig, ConfigError> {
    let mut tree = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| ConfigError::new("config", format!("invalid JSON: {e}")))?
        }
        None => Value::Object(Default::default()),
    };
    if !tree.is_object() {
        return Err(ConfigError::new("config", "top level must be an object"));
    }
    if let Some(c) = overrides.command {
        tree["command"] = Value::String(c.name().into());
    }
    if let Some(s) = overrides.seed {
        set_path(&mut tree, "run.seed", Value::from(s))?;
    }
    if let Some(o) = &overrides.out {
        set_path(&mut tree, "output.dir", Value::String(o.display().to_string()))?;
    }
    for item in &overrides.set {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| ConfigError::new(item, "expected key=value"))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut tree, key.trim(), value)?;
    }
    from_value(tree)
}

/// Deserializes and validates a JSON tree.
pub fn from_value(tree: Value) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = serde_path_error(tree)?;
    cfg.validate()?;
    Ok(cfg)
}

fn serde_path_error(tree: Value) -> Result<ExperimentConfig, ConfigError> {
    // report the block the error came from
    for block in ["model", "run", "output"] {
        if let Some(v) = tree.get(block) {
            let err = match block {
                "model" => serde_json::from_value::<ModelConfig>(v.clone()).err(),
                "run" => serde_json::from_value::<RunConfig>(v.clone()).err(),
                _ => serde_json::from_value::<OutputConfig>(v.clone()).err(),
            };
            if let Some(e) = err {
                return Err(ConfigError::new(block, e.to_string()));
            }
        }
    }
    serde_json::from_value(tree).map_err(|e| ConfigError::new("config", e.to_string()))
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(ConfigError::new(key, "empty key segment"));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| ConfigError::new(key, "cannot descend into a non-object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one segment")
}

fn check(ok: bool, key: &str, message: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(key, message()))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.model;
        let r = &self.run;
        let cmd = self.command;
        check((1..=3).contains(&m.dim), "model.dim", || format!("must be 1, 2 or 3, got {}", m.dim))?;
        check(m.side >= 2 && m.side.is_power_of_two(), "model.side", || {
            format!("must be a power of two, got {}", m.side)
        })?;
        check(m.cells >= 1 && m.cells.is_power_of_two(), "model.cells", || {
            format!("must be a power of two, got {}", m.cells)
        })?;
        check(m.cells <= m.side, "model.cells", || {
            format!("{} cells do not fit on side {}", m.cells, m.side)
        })?;
        check(m.beta.is_finite() && m.beta >= 0.0, "model.beta", || {
            format!("must be finite and non-negative, got {}", m.beta)
        })?;
        check(m.field.is_finite(), "model.field", || "must be finite".into())?;
        let boundary = self.boundary()?;
        if let Some(g) = m.gamma {
            check(g > 0.0 && g < 1.0, "model.gamma", || format!("must lie in (0, 1), got {g}"))?;
            check(boundary == Boundary::Periodic, "model.boundary", || {
                "the Kac model lives on the torus; use \"periodic\"".into()
            })?;
            check(m.field == 0.0, "model.field", || "the Kac model takes no homogeneous field".into())?;
            let reach = kac_reach(g);
            check(2 * reach < m.side as u64, "model.gamma", || {
                format!("kernel range 1/gamma needs side > {}, got {}", 2 * reach, m.side)
            })?;
        }
        self.u_profile()?;
        self.alpha_profile_spec()?;
        let dynamics = self.dynamics()?;
        self.order()?;
        self.initial()?;
        if dynamics == Dynamics::SwendsenWang {
            check(m.gamma.is_none(), "run.dynamics", || {
                "Swendsen-Wang needs the pure nearest-neighbour model (no gamma)".into()
            })?;
            check(m.field == 0.0, "run.dynamics", || "Swendsen-Wang needs zero field".into())?;
        }
        check(r.thinning >= 1, "run.thinning", || "must be at least 1".into())?;
        check(r.replicas >= 1, "run.replicas", || "must be at least 1".into())?;
        check(r.snapshot_every != Some(0), "run.snapshot_every", || "must be positive".into())?;
        check(r.bins >= 2, "run.bins", || format!("needs at least 2 bins, got {}", r.bins))?;
        match &r.burn_in {
            BurnInSpec::Sweeps(_) => {}
            BurnInSpec::Keyword(k) => {
                check(k == "auto", "run.burn_in", || format!("expected a sweep count or \"auto\", got {k:?}"))?;
                check(r.pilot >= 4, "run.pilot", || format!("must be at least 4, got {}", r.pilot))?;
            }
        }
        for o in &r.observables {
            self.observable(o)?;
        }
        match cmd {
            Command::Exact => {
                let n = m.side.pow(m.dim as u32);
                check(n <= MAX_SITES, "model.side", || {
                    format!("exact enumeration is capped at {MAX_SITES} sites, side^dim = {n}")
                })?;
            }
            Command::Thermo | Command::Equivalence => {
                check(m.dim <= 2, "model.dim", || "thermodynamics is provided for d = 1, 2".into())?;
                check(m.beta > 0.0, "model.beta", || "must be positive".into())?;
                check(r.grid_points >= 2, "run.grid_points", || "must be at least 2".into())?;
                check(r.u_max > 0.0 && r.u_max < 1.0, "run.u_max", || {
                    format!("must lie in (0, 1), got {}", r.u_max)
                })?;
                check(r.h_max > 0.0 && r.h_max.is_finite(), "run.h_max", || "must be positive".into())?;
                check(r.amplitudes.iter().all(|a| a.is_finite()), "run.amplitudes", || {
                    "must be finite".into()
                })?;
            }
            Command::Sample => {
                check(r.sweeps >= 1, "run.sweeps", || "must be at least 1".into())?;
            }
            Command::Young | Command::FkDiagnose => {
                check(m.dim <= 2, "model.dim", || "the regime experiment needs d = 1 or 2".into())?;
                check(m.beta > 0.0, "model.beta", || "must be positive".into())?;
                check(m.gamma.is_some(), "model.gamma", || "required by this command".into())?;
                check(m.alpha.is_none(), "model.alpha", || {
                    "the regime experiment sets alpha from u; give model.u instead".into()
                })?;
                check(dynamics != Dynamics::SwendsenWang, "run.dynamics", || {
                    "the Kac model is sampled with single-flip dynamics".into()
                })?;
                check(r.sweeps >= 1, "run.sweeps", || "must be at least 1".into())?;
                check(!r.radii.is_empty(), "run.radii", || "needs at least one radius".into())?;
                check(r.radii.iter().all(|v| v.is_finite() && *v >= 0.0), "run.radii", || {
                    "radii must be finite and non-negative".into()
                })?;
                if let Some(p) = &r.phase_laws {
                    check(p.box_side >= 4, "run.phase_laws.box_side", || "must be at least 4".into())?;
                    check(p.sweeps >= 1, "run.phase_laws.sweeps", || "must be at least 1".into())?;
                }
                if cmd == Command::FkDiagnose {
                    check(m.dim == 2, "model.dim", || "box diagnostics need d = 2".into())?;
                    check(r.keep >= 1, "run.keep", || "must be at least 1".into())?;
                    check(!r.box_sides.is_empty(), "run.box_sides", || "needs at least one box side".into())?;
                    for &k in &r.box_sides {
                        check(k >= 3 && m.side % k == 0, "run.box_sides", || {
                            format!("box side {k} must be at least 3 and divide side {}", m.side)
                        })?;
                    }
                    check(r.zeta > 0.0 && r.zeta.is_finite(), "run.zeta", || "must be positive".into())?;
                    check(
                        r.domination_betas.iter().all(|b| *b > 0.0 && b.is_finite()),
                        "run.domination_betas",
                        || "must be positive".into(),
                    )?;
                    let edges = 2 * r.domination_side * r.domination_side.saturating_sub(1);
                    check(
                        r.domination_side >= 3 && edges <= kacmix::exact::MAX_EDGES,
                        "run.domination_side",
                        || {
                            format!(
                                "needs side >= 3 and at most {} edges, got {edges}",
                                kacmix::exact::MAX_EDGES
                            )
                        },
                    )?;
                }
            }
        }
        if matches!(cmd, Command::Young | Command::FkDiagnose | Command::Equivalence) {
            check(m.u.is_some() || cmd == Command::Equivalence, "model.u", || "required by this command".into())?;
        }
        Ok(())
    }

    pub fn boundary(&self) -> Result<Boundary, ConfigError> {
        self.model
            .boundary
            .parse()
            .map_err(|_| ConfigError::new("model.boundary", format!("unknown boundary {:?}", self.model.boundary)))
    }

    pub fn dynamics(&self) -> Result<Dynamics, ConfigError> {
        self.run
            .dynamics
            .parse()
            .map_err(|_| ConfigError::new("run.dynamics", format!("unknown dynamics {:?}", self.run.dynamics)))
    }

    pub fn order(&self) -> Result<SweepOrder, ConfigError> {
        match self.run.order.as_str() {
            "raster" => Ok(SweepOrder::Raster),
            "random" => Ok(SweepOrder::Random),
            other => Err(ConfigError::new("run.order", format!("expected \"raster\" or \"random\", got {other:?}"))),
        }
    }

    pub fn initial(&self) -> Result<kacmix::sampler::InitialState, ConfigError> {
        use kacmix::sampler::InitialState;
        match self.run.initial.as_str() {
            "random" => Ok(InitialState::Random),
            "plus" => Ok(InitialState::Plus),
            "minus" => Ok(InitialState::Minus),
            other => Err(ConfigError::new(
                "run.initial",
                format!("expected \"random\", \"plus\" or \"minus\", got {other:?}"),
            )),
        }
    }

    pub fn burn_in(&self) -> kacmix::sampler::BurnIn {
        use kacmix::sampler::BurnIn;
        match &self.run.burn_in {
            BurnInSpec::Sweeps(n) => BurnIn::Fixed(*n),
            BurnInSpec::Keyword(_) => BurnIn::Auto { pilot: self.run.pilot },
        }
    }

    pub fn observable(&self, name: &str) -> Result<kacmix::sampler::Observable, ConfigError> {
        use kacmix::sampler::Observable;
        let key = "run.observables";
        let n = self.model.side.pow(self.model.dim as u32);
        let site = |s: &str| -> Result<usize, ConfigError> {
            let x: usize = s.parse().map_err(|_| ConfigError::new(key, format!("bad site index in {name:?}")))?;
            check(x < n, key, || format!("site {x} is outside the lattice of {n} sites"))?;
            Ok(x)
        };
        match name {
            "magnetization" => Ok(Observable::Magnetization),
            "energy" => Ok(Observable::Energy),
            "kac_energy" => {
                check(self.model.gamma.is_some(), key, || "kac_energy needs model.gamma".into())?;
                Ok(Observable::KacEnergy)
            }
            "configuration_law" => {
                let cap = kacmix::exact::MAX_PROBABILITY_SITES;
                check(n <= cap, key, || format!("the configuration law is capped at {cap} sites, got {n}"))?;
                Ok(Observable::ConfigurationLaw)
            }
            other => {
                if let Some(x) = other.strip_prefix("site_") {
                    return Ok(Observable::Site(site(x)?));
                }
                if let Some(rest) = other.strip_prefix("ball_") {
                    // ball_<center>_r<radius>
                    let (c, r) = rest
                        .split_once("_r")
                        .ok_or_else(|| ConfigError::new(key, format!("expected ball_<site>_r<radius>, got {other:?}")))?;
                    let radius: f64 = r
                        .parse()
                        .map_err(|_| ConfigError::new(key, format!("bad radius in {other:?}")))?;
                    check(radius.is_finite() && radius >= 0.0, key, || format!("bad radius in {other:?}"))?;
                    return Ok(Observable::BallAverage {
                        center: site(c)?,
                        radius,
                    });
                }
                Err(ConfigError::new(key, format!("unknown observable {other:?}")))
            }
        }
    }

    /// The `u` profile on the configured grid, if any.
    pub fn u_profile(&self) -> Result<Option<ProfileField>, ConfigError> {
        self.model
            .u
            .as_ref()
            .map(|spec| spec.resolve(self.model.dim, self.model.cells, "model.u"))
            .transpose()
    }

    fn alpha_profile_spec(&self) -> Result<Option<ProfileField>, ConfigError> {
        self.model
            .alpha
            .as_ref()
            .map(|spec| spec.resolve(self.model.dim, self.model.cells, "model.alpha"))
            .transpose()
    }

    /// Explicit `α` profile, if any.
    pub fn alpha_profile(&self) -> Result<Option<ProfileField>, ConfigError> {
        self.alpha_profile_spec()
    }

    /// Pretty JSON echo of the resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Largest integer strictly below `1/γ` (the kernel reach).
fn kac_reach(gamma: f64) -> u64 {
    let inv = 1.0 / gamma;
    let mut reach = inv.ceil() as u64 - 1;
    if (reach + 1) as f64 * gamma < 1.0 {
        reach += 1;
    }
    reach
}
