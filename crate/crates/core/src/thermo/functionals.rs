//! Macroscopic functionals on piecewise-constant profiles over the unit torus.

use crate::error::{Error, Result};

use super::curve::{lambda_mix, FreeEnergyCurve};

/// A profile constant on each of `cells^d` cubes of the unit torus.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileField {
    dim: usize,
    cells: usize,
    values: Vec<f64>,
}

impl ProfileField {
    pub fn new(dim: usize, cells: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("profile dimension must be positive".into()));
        }
        if cells == 0 || !cells.is_power_of_two() {
            return Err(Error::Domain(format!("profile resolution {cells} is not a power of two")));
        }
        if values.len() != cells.pow(dim as u32) {
            return Err(Error::Domain(format!(
                "profile has {} values, expected {}",
                values.len(),
                cells.pow(dim as u32)
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("profile values must be finite".into()));
        }
        Ok(Self { dim, cells, values })
    }

    pub fn constant(dim: usize, cells: usize, value: f64) -> Result<Self> {
        Self::new(dim, cells, vec![value; cells.pow(dim as u32)])
    }

    /// Samples `profile(r)` at cell centers `r_i = (c_i + ½)/cells - ½`.
    pub fn from_fn(dim: usize, cells: usize, profile: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let count = cells.pow(dim as u32);
        let mut r = vec![0.0; dim];
        let values = (0..count)
            .map(|k| {
                let mut rest = k;
                for slot in r.iter_mut() {
                    *slot = ((rest % cells) as f64 + 0.5) / cells as f64 - 0.5;
                    rest /= cells;
                }
                profile(&r)
            })
            .collect();
        Self::new(dim, cells, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.dim, self.cells, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn try_map(&self, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        let values = self.values.iter().map(|&v| f(v)).collect::<Result<Vec<_>>>()?;
        Self::new(self.dim, self.cells, values)
    }

    /// Cellwise exact integral over the unit torus.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.cells != other.cells {
            return Err(Error::Domain("profiles live on different grids".into()));
        }
        Ok(())
    }

    fn check_magnetization(&self) -> Result<()> {
        if let Some(v) = self.values.iter().find(|v| !(v.abs() < 1.0)) {
            return Err(Error::Domain(format!("magnetization profile touches ±1: {v}")));
        }
        Ok(())
    }
}

/// `ũ∘α` cellwise.
pub fn el_profile(alpha: &ProfileField, curve: &FreeEnergyCurve) -> Result<ProfileField> {
    alpha.try_map(|a| curve.el_solve_u(a))
}

/// `α̃∘u` cellwise.
pub fn el_alpha_profile(u: &ProfileField, curve: &FreeEnergyCurve) -> Result<ProfileField> {
    u.check_magnetization()?;
    u.try_map(|v| curve.el_alpha_of_u(v))
}

/// `F_α(u) = ∫ f_β(u) + (u - α)²`.
pub fn functional_f(u: &ProfileField, alpha: &ProfileField, curve: &FreeEnergyCurve) -> Result<f64> {
    u.check_same_grid(alpha)?;
    u.check_magnetization()?;
    let mut acc = 0.0;
    for (&v, &a) in u.values.iter().zip(&alpha.values) {
        acc += curve.f(v)? + (v - a) * (v - a);
    }
    Ok(acc / u.values.len() as f64)
}

/// `P(α) = -min_u F_α(u)`, using the cellwise minimizer `ũ(α)`.
pub fn pressure_p(alpha: &ProfileField, curve: &FreeEnergyCurve) -> Result<f64> {
    let mut acc = 0.0;
    for &a in &alpha.values {
        let v = curve.el_solve_u(a)?;
        acc += curve.f(v)? + (v - a) * (v - a);
    }
    Ok(-acc / alpha.values.len() as f64)
}

/// `I_α(u) = F_α(u) - min F_α`.
pub fn rate_i(u: &ProfileField, alpha: &ProfileField, curve: &FreeEnergyCurve) -> Result<f64> {
    Ok(functional_f(u, alpha, curve)? + pressure_p(alpha, curve)?)
}

/// Outcome of checking `∫ f_β(u) = max_α {-P(α) - ∫(u - α)²}`.
#[derive(Clone, Debug)]
pub struct DualityReport {
    /// `∫ f_β(u)`.
    pub lhs: f64,
    /// Right side at `α = α̃∘u`.
    pub rhs_at_optimum: f64,
    /// Largest right side over the perturbations, minus `lhs`.
    pub max_perturbed_excess: f64,
    /// Number of perturbations evaluated.
    pub perturbations: usize,
    /// Perturbations that failed to decrease the right side strictly.
    pub non_decreasing: usize,
}

impl DualityReport {
    pub fn residual(&self) -> f64 {
        (self.rhs_at_optimum - self.lhs).abs()
    }
}

/// `-P(α) - ∫ (u - α)²`.
pub fn duality_rhs(u: &ProfileField, alpha: &ProfileField, curve: &FreeEnergyCurve) -> Result<f64> {
    u.check_same_grid(alpha)?;
    let mut acc = 0.0;
    for (&v, &a) in u.values.iter().zip(&alpha.values) {
        let w = curve.el_solve_u(a)?;
        acc += curve.f(w)? + (w - a) * (w - a) - (v - a) * (v - a);
    }
    Ok(acc / u.values.len() as f64)
}

/// Evaluates both sides of the duality at `α̃∘u` and at `α̃∘u + δ·ψ` for
/// every amplitude `δ` and every mode `ψ` (constant, and `cos`, `sin` of
/// `2π r_i` along each axis).
pub fn duality_check(u: &ProfileField, curve: &FreeEnergyCurve, amplitudes: &[f64]) -> Result<DualityReport> {
    u.check_magnetization()?;
    let lhs = u.try_map(|v| curve.f(v))?.integral();
    let star = el_alpha_profile(u, curve)?;
    let rhs_at_optimum = duality_rhs(u, &star, curve)?;
    let mut modes = vec![ProfileField::constant(u.dim, u.cells, 1.0)?];
    for axis in 0..u.dim {
        let tau = 2.0 * std::f64::consts::PI;
        modes.push(ProfileField::from_fn(u.dim, u.cells, |r| (tau * r[axis]).cos())?);
        modes.push(ProfileField::from_fn(u.dim, u.cells, |r| (tau * r[axis]).sin())?);
    }
    // on coarse grids some modes vanish at every cell center
    modes.retain(|m| m.values.iter().any(|v| v.abs() > 1e-9));
    let mut max_excess = f64::NEG_INFINITY;
    let mut count = 0;
    let mut non_decreasing = 0;
    for mode in &modes {
        for &delta in amplitudes {
            if delta == 0.0 {
                continue;
            }
            let values = star
                .values
                .iter()
                .zip(&mode.values)
                .map(|(a, m)| a + delta * m)
                .collect();
            let alpha = ProfileField::new(u.dim, u.cells, values)?;
            let rhs = duality_rhs(u, &alpha, curve)?;
            max_excess = max_excess.max(rhs - lhs);
            if !(rhs < rhs_at_optimum) {
                non_decreasing += 1;
            }
            count += 1;
        }
    }
    Ok(DualityReport {
        lhs,
        rhs_at_optimum,
        max_perturbed_excess: max_excess,
        perturbations: count,
        non_decreasing,
    })
}

/// A probability measure on `[-1, 1]` given by weighted atoms.
pub type Atoms = Vec<(f64, f64)>;

/// Laws of the ball average `m_{B_R(0)}` under homogeneous infinite-volume
/// states, typically estimated by simulation.
pub trait PhaseLawSource {
    /// Law under the pure phase of the given sign (`+1` or `-1`) at `h = 0`.
    fn pure_phase(&self, sign: i8, radius: f64) -> Result<Atoms>;
    /// Law under the unique state with field `h`.
    fn with_field(&self, h: f64, radius: f64) -> Result<Atoms>;
}

/// Reference Young measure at macro value `u`.
///
/// With `radius = None` this is the limit object: `λ_u δ_{m_β} + (1-λ_u) δ_{-m_β}`
/// on the plateau and `δ_u` outside. With a finite radius the pure-phase
/// (or field) laws of the ball average come from `source`.
pub fn theoretical_young(
    u: f64,
    radius: Option<f64>,
    curve: &FreeEnergyCurve,
    source: Option<&dyn PhaseLawSource>,
) -> Result<Atoms> {
    if !(u.abs() < 1.0) {
        return Err(Error::Domain(format!("macro value {u} is outside (-1, 1)")));
    }
    let m = curve.m_beta();
    let on_plateau = m > 0.0 && u.abs() <= m;
    let mut atoms = match (radius, on_plateau) {
        (None, true) => {
            let l = lambda_mix(u, m)?;
            vec![(m, l), (-m, 1.0 - l)]
        }
        (None, false) => vec![(u, 1.0)],
        (Some(r), plateau) => {
            let src = source.ok_or_else(|| {
                Error::Domain("finite-radius reference needs pure-phase law estimates".into())
            })?;
            if plateau {
                let l = lambda_mix(u, m)?;
                let mut out: Atoms = src.pure_phase(1, r)?.into_iter().map(|(x, w)| (x, l * w)).collect();
                out.extend(src.pure_phase(-1, r)?.into_iter().map(|(x, w)| (x, (1.0 - l) * w)));
                out
            } else {
                let h = curve.h_of_m(u)?;
                src.with_field(h, r)?
            }
        }
    };
    atoms.retain(|&(_, w)| w > 0.0);
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Atoms = Vec::with_capacity(atoms.len());
    for (x, w) in atoms {
        match merged.last_mut() {
            Some(last) if last.0 == x => last.1 += w,
            _ => merged.push((x, w)),
        }
    }
    Ok(merged)
}
