//! Homogeneous pressure `p_β(h)` and magnetization `φ(h)`.

use crate::error::{Error, Result};
use crate::quad::bisect_increasing;

use super::onsager::{beta_critical, pressure_zero_field, spontaneous_magnetization};
use super::strip::StripTransfer;

/// Default strip width for two-dimensional field response.
pub const DEFAULT_STRIP_WIDTH: usize = 8;

/// Distance to `β_c` below which two-dimensional results are flagged.
pub const NEAR_CRITICAL: f64 = 0.02;

/// One-dimensional pressure
/// `β^{-1} log(e^β cosh βh + sqrt(e^{2β} sinh²βh + e^{-2β}))`.
pub fn pressure_1d(beta: f64, h: f64) -> f64 {
    // factor e^β out of the eigenvalue to stay finite for large β|h|
    let bh = beta * h.abs();
    let e4 = (-4.0 * beta).exp();
    // cosh(bh) + sqrt(sinh²(bh) + e^{-4β}) = e^{bh} * (½(1 + e^{-2bh}) + sqrt(¼(1 - e^{-2bh})² + e^{-4β - 2bh}))
    let x = (-2.0 * bh).exp();
    let inner = 0.5 * (1.0 + x) + (0.25 * (1.0 - x).powi(2) + e4 * x).sqrt();
    (beta + bh + inner.ln()) / beta
}

/// One-dimensional magnetization `sinh βh / sqrt(sinh²βh + e^{-4β})`.
pub fn magnetization_1d(beta: f64, h: f64) -> f64 {
    let s = (beta * h).sinh();
    if !s.is_finite() {
        return h.signum();
    }
    s / (s * s + (-4.0 * beta).exp()).sqrt()
}

/// Inverse of [`magnetization_1d`]: `asinh(u e^{-2β} / sqrt(1 - u²)) / β`.
pub fn field_of_magnetization_1d(beta: f64, u: f64) -> f64 {
    (u * (-2.0 * beta).exp() / (1.0 - u * u).sqrt()).asinh() / beta
}

/// `p_β(h)` and `φ(h)` for `d = 1` (closed form) or `d = 2` (strip transfer
/// matrix anchored to the exact zero-field pressure).
///
/// In `d = 2` the strip field is shifted by `h₀`, where the strip
/// magnetization equals `m_β`: `φ(h) = sign(h) φ_W(h₀ + |h|)` and
/// `p(h) = p(0) + p_W(h₀ + |h|) - p_W(h₀)`.
#[derive(Clone, Debug)]
pub struct FieldResponse {
    beta: f64,
    dim: usize,
    m_beta: f64,
    p0: f64,
    strip: Option<StripShift>,
}

#[derive(Clone, Debug)]
struct StripShift {
    transfer: StripTransfer,
    h0: f64,
    p_h0: f64,
}

impl FieldResponse {
    pub fn new(beta: f64, dim: usize) -> Result<Self> {
        Self::with_width(beta, dim, DEFAULT_STRIP_WIDTH)
    }

    pub fn with_width(beta: f64, dim: usize, width: usize) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        match dim {
            1 => Ok(Self {
                beta,
                dim,
                m_beta: 0.0,
                p0: pressure_1d(beta, 0.0),
                strip: None,
            }),
            2 => {
                let m = spontaneous_magnetization(beta);
                let transfer = StripTransfer::new(beta, width)?;
                let h0 = if m > 0.0 {
                    let mut hi = 1e-3;
                    while transfer.magnetization(hi) < m {
                        hi *= 2.0;
                        if hi > 1e3 {
                            return Err(Error::Domain(format!(
                                "strip magnetization never reaches m_beta = {m}"
                            )));
                        }
                    }
                    bisect_increasing(|h| transfer.magnetization(h) - m, 0.0, hi, 1e-15)
                } else {
                    0.0
                };
                let p_h0 = transfer.pressure(h0);
                Ok(Self {
                    beta,
                    dim,
                    m_beta: m,
                    p0: pressure_zero_field(beta),
                    strip: Some(StripShift { transfer, h0, p_h0 }),
                })
            }
            _ => Err(Error::Domain(format!("thermodynamics is provided for d = 1, 2, got {dim}"))),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m_beta(&self) -> f64 {
        self.m_beta
    }

    /// Strip width, `None` for `d = 1`.
    pub fn strip_width(&self) -> Option<usize> {
        self.strip.as_ref().map(|s| s.transfer.width())
    }

    /// Field shift `h₀` of the strip, zero for `d = 1`.
    pub fn strip_shift(&self) -> f64 {
        self.strip.as_ref().map_or(0.0, |s| s.h0)
    }

    /// True for `d = 2` within [`NEAR_CRITICAL`] of `β_c`.
    pub fn low_accuracy(&self) -> bool {
        self.dim == 2 && (self.beta - beta_critical()).abs() < NEAR_CRITICAL
    }

    pub fn zero_field_pressure(&self) -> f64 {
        self.p0
    }

    pub fn pressure(&self, h: f64) -> f64 {
        match &self.strip {
            None => pressure_1d(self.beta, h),
            Some(s) => self.p0 + s.transfer.pressure(s.h0 + h.abs()) - s.p_h0,
        }
    }

    /// `φ(h)`, odd with `φ(0) = 0`.
    pub fn magnetization(&self, h: f64) -> f64 {
        match &self.strip {
            None => magnetization_1d(self.beta, h),
            Some(_) if h == 0.0 => 0.0,
            Some(s) => h.signum() * s.transfer.magnetization(s.h0 + h.abs()),
        }
    }

    /// Pressure and magnetization at `h ≥ 0` with one eigen-solve.
    pub(crate) fn evaluate_nonneg(&self, h: f64) -> (f64, f64) {
        match &self.strip {
            None => (pressure_1d(self.beta, h), magnetization_1d(self.beta, h)),
            Some(s) => {
                let pt = s.transfer.evaluate(s.h0 + h);
                (self.p0 + pt.pressure - s.p_h0, if h == 0.0 { self.m_beta } else { pt.magnetization })
            }
        }
    }

    /// The unique `h` with `φ(h) = m`, by bisection.
    pub fn h_of_m(&self, m: f64) -> Result<f64> {
        if !(m.abs() < 1.0) {
            return Err(Error::Domain(format!("magnetization {m} must lie in (-1, 1)")));
        }
        if self.m_beta > 0.0 && m.abs() <= self.m_beta {
            return Err(Error::Domain(format!(
                "magnetization {m} lies on the plateau [-{0}, {0}]",
                self.m_beta
            )));
        }
        if m == 0.0 {
            return Ok(0.0);
        }
        let target = m.abs();
        let mut hi = 1.0;
        while self.magnetization(hi) < target {
            hi *= 2.0;
            if hi > 1e4 {
                return Err(Error::Domain(format!("no field reaches magnetization {m}")));
            }
        }
        let h = bisect_increasing(|h| self.magnetization(h) - target, 0.0, hi, 1e-14);
        Ok(m.signum() * h)
    }
}
