//! Homogeneous thermodynamics and the macroscopic functionals built on it.

mod curve;
mod functionals;
mod onsager;
mod response;
mod strip;

pub use curve::{lambda_mix, CurveOptions, FreeEnergyCurve, Provenance};
pub use functionals::{
    duality_check, duality_rhs, el_alpha_profile, el_profile, functional_f, pressure_p, rate_i,
    theoretical_young, Atoms, DualityReport, PhaseLawSource, ProfileField,
};
pub use onsager::{
    beta_critical, log_partition_per_site, log_partition_per_site_double, pressure_zero_field,
    spontaneous_magnetization,
};
pub use response::{
    field_of_magnetization_1d, magnetization_1d, pressure_1d, FieldResponse, DEFAULT_STRIP_WIDTH,
    NEAR_CRITICAL,
};
pub use strip::{StripPoint, StripTransfer};

use crate::error::Result;

/// `p_β(h)`: closed form for `d = 1`, the exact integral for `d = 2` at
/// `h = 0`, and the anchored strip pressure otherwise.
pub fn pressure_hom(beta: f64, h: f64, dim: usize) -> Result<f64> {
    if dim == 2 && h == 0.0 {
        FieldResponse::with_width(beta, 2, 3)?;
        return Ok(pressure_zero_field(beta));
    }
    Ok(FieldResponse::new(beta, dim)?.pressure(h))
}

/// The field response `h ↦ φ(h)` together with `m_β`.
pub fn magnetization_curve(beta: f64, dim: usize) -> Result<FieldResponse> {
    FieldResponse::new(beta, dim)
}
