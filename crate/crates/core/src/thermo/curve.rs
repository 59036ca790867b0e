//! Tabulated free energy `f_β(u)` as the Legendre conjugate of `p_β(h)`.
//!
//! The positive branch is stored in the variable `t = atanh(u)` from the
//! plateau edge `atanh(m_β)` to `t_max`, parametrized by the field
//! `η = f'_β(u)`: each node is `u = φ(η)`, `f = uη - p(η)`. Values between
//! nodes come from cubic Hermite interpolation of both `f` and `f'`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::quad::bisect_increasing;

use super::response::{field_of_magnetization_1d, FieldResponse, DEFAULT_STRIP_WIDTH};

/// How the curve was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Conjugate of the exact one-dimensional pressure.
    TransferMatrix,
    /// Conjugate of the strip pressure anchored at the exact `h = 0` value.
    StripApproximation { width: usize },
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::TransferMatrix => write!(f, "transfer-matrix"),
            Provenance::StripApproximation { width } => write!(f, "strip-approximation(width={width})"),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CurveOptions {
    pub strip_width: usize,
    pub nodes: usize,
    pub t_max: f64,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            strip_width: DEFAULT_STRIP_WIDTH,
            nodes: 4096,
            t_max: 10.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FreeEnergyCurve {
    response: FieldResponse,
    provenance: Provenance,
    t: Vec<f64>,
    f: Vec<f64>,
    fp: Vec<f64>,
    /// `df/dt` and `df'/dt` at the nodes.
    df: Vec<f64>,
    dfp: Vec<f64>,
}

impl FreeEnergyCurve {
    pub fn build(beta: f64, dim: usize) -> Result<Self> {
        Self::with_options(beta, dim, CurveOptions::default())
    }

    pub fn with_options(beta: f64, dim: usize, opts: CurveOptions) -> Result<Self> {
        if opts.nodes < 16 || !(opts.t_max > 1.0) {
            return Err(Error::Domain("curve needs at least 16 nodes and t_max > 1".into()));
        }
        let response = FieldResponse::with_width(beta, dim, opts.strip_width)?;
        match dim {
            1 => Ok(Self::tabulate_1d(response, opts)),
            _ => Self::tabulate_strip(response, opts),
        }
    }

    fn tabulate_1d(response: FieldResponse, opts: CurveOptions) -> Self {
        let beta = response.beta();
        let n = opts.nodes;
        let e2 = (-2.0 * beta).exp();
        let mut c = Columns::with_capacity(n);
        for i in 0..n {
            let t = opts.t_max * i as f64 / (n - 1) as f64;
            let u = t.tanh();
            let sech2 = 1.0 / t.cosh().powi(2);
            let h = field_of_magnetization_1d(beta, u);
            let g = u * e2 / (1.0 - u * u).sqrt();
            // h'(u) (1 - u²) = e^{-2β} (1 - u²)^{-1/2} / (β sqrt(1 + g²)), and 1/sqrt(1-u²) = cosh t
            let dh_dt = e2 * t.cosh() / (beta * (1.0 + g * g).sqrt());
            c.push(t, u * h - response.pressure(h), h, h * sech2, dh_dt);
        }
        c.into_curve(response, Provenance::TransferMatrix)
    }

    fn tabulate_strip(response: FieldResponse, opts: CurveOptions) -> Result<Self> {
        let m = response.m_beta();
        let p0 = response.zero_field_pressure();
        let t_of = |eta: f64| response.evaluate_nonneg(eta).1.atanh();
        let mut eta_max = 1.0;
        while !(t_of(eta_max) >= opts.t_max) {
            eta_max *= 1.5;
            if eta_max > 1e4 {
                return Err(Error::Domain("strip magnetization does not approach 1".into()));
            }
        }
        let mut c = Columns::with_capacity(opts.nodes);
        let t0 = m.atanh();
        c.push(t0, -p0, 0.0, 0.0, 0.0);
        for i in 1..opts.nodes {
            let eta = eta_max * i as f64 / (opts.nodes - 1) as f64;
            let (p, u) = response.evaluate_nonneg(eta);
            if !(u < 1.0) {
                break;
            }
            let t = u.atanh();
            if t <= *c.t.last().unwrap() {
                continue;
            }
            c.push(t, u * eta - p, eta, eta * (1.0 - u * u), 0.0);
        }
        if c.t.len() < 16 {
            return Err(Error::Domain("strip tabulation collapsed to too few nodes".into()));
        }
        c.dfp = monotone_slopes(&c.t, &c.fp);
        let width = response.strip_width().unwrap_or(0);
        Ok(c.into_curve(response, Provenance::StripApproximation { width }))
    }

    pub fn beta(&self) -> f64 {
        self.response.beta()
    }

    pub fn dim(&self) -> usize {
        self.response.dim()
    }

    /// Plateau edge `m_β`.
    pub fn m_beta(&self) -> f64 {
        self.response.m_beta()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn low_accuracy(&self) -> bool {
        self.response.low_accuracy()
    }

    pub fn response(&self) -> &FieldResponse {
        &self.response
    }

    pub fn node_count(&self) -> usize {
        self.t.len()
    }

    /// Largest tabulated `t = atanh(u)`.
    pub fn t_max(&self) -> f64 {
        *self.t.last().unwrap()
    }

    fn locate(&self, t: f64) -> (usize, f64, f64) {
        let k = match self.t.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => i.min(self.t.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.t.len() - 2),
        };
        let h = self.t[k + 1] - self.t[k];
        (k, h, (t - self.t[k]) / h)
    }

    fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, s: f64) -> f64 {
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * h * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * h * d1
    }

    fn branch_f(&self, t: f64) -> f64 {
        let last = self.t.len() - 1;
        if t >= self.t[last] {
            return self.f[last] + self.df[last] * (t - self.t[last]);
        }
        let (k, h, s) = self.locate(t.max(self.t[0]));
        Self::hermite(self.f[k], self.f[k + 1], self.df[k], self.df[k + 1], h, s)
    }

    fn branch_fp(&self, t: f64) -> f64 {
        let last = self.t.len() - 1;
        if t >= self.t[last] {
            return self.fp[last] + self.dfp[last] * (t - self.t[last]);
        }
        let (k, h, s) = self.locate(t.max(self.t[0]));
        Self::hermite(self.fp[k], self.fp[k + 1], self.dfp[k], self.dfp[k + 1], h, s)
    }

    /// `f_β(u)` for `u ∈ [-1, 1]`; `f_β(±1) = -d`.
    pub fn f(&self, u: f64) -> Result<f64> {
        check_closed(u)?;
        let a = u.abs();
        if a == 1.0 {
            return Ok(-(self.dim() as f64));
        }
        if a <= self.m_beta() {
            return Ok(self.f[0]);
        }
        Ok(self.branch_f(a.atanh()))
    }

    /// `f'_β(u)`, zero on the plateau and `±∞` at `±1`.
    pub fn f_prime(&self, u: f64) -> Result<f64> {
        check_closed(u)?;
        let a = u.abs();
        if a == 1.0 {
            return Ok(u.signum() * f64::INFINITY);
        }
        if a <= self.m_beta() {
            return Ok(0.0);
        }
        Ok(u.signum() * self.branch_fp(a.atanh()))
    }

    /// `f'` as a function of `t = atanh(u)` on the whole line.
    fn fp_of_t(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= self.t[0] {
            0.0
        } else {
            t.signum() * self.branch_fp(a)
        }
    }

    /// `α̃(u) = u + ½ f'_β(u)`.
    pub fn el_alpha_of_u(&self, u: f64) -> Result<f64> {
        check_open(u)?;
        Ok(u + 0.5 * self.f_prime(u)?)
    }

    /// `ũ(α)`: the root of `u + ½ f'_β(u) = α`, by bisection in `atanh(u)`.
    pub fn el_solve_u(&self, alpha: f64) -> Result<f64> {
        if !alpha.is_finite() {
            return Err(Error::Domain(format!("alpha must be finite, got {alpha}")));
        }
        let g = |t: f64| t.tanh() + 0.5 * self.fp_of_t(t) - alpha;
        let mut span = self.t_max();
        while g(span) < 0.0 || g(-span) > 0.0 {
            span *= 2.0;
            if span > 1e6 {
                return Err(Error::Domain(format!("alpha {alpha} is out of reach of the tabulation")));
            }
        }
        let (mut lo, mut hi) = (-span, span);
        for _ in 0..400 {
            if hi.tanh() - lo.tanh() <= 1e-13 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((0.5 * (lo + hi)).tanh())
    }

    /// `sup_u (u h - f_β(u))` evaluated on the tabulation.
    pub fn conjugate_pressure(&self, h: f64) -> Result<f64> {
        if !h.is_finite() {
            return Err(Error::Domain(format!("field must be finite, got {h}")));
        }
        if h == 0.0 {
            return Ok(-self.f[0]);
        }
        let target = h.abs();
        let mut hi = self.t_max();
        while self.branch_fp(hi) < target {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::Domain(format!("field {h} is out of reach of the tabulation")));
            }
        }
        let t = bisect_increasing(|t| self.branch_fp(t) - target, self.t[0], hi, 1e-14);
        let u = t.tanh();
        Ok(u * target - self.branch_f(t))
    }

    /// `λ_u = (u + m_β) / (2 m_β)`.
    pub fn lambda_mix(&self, u: f64) -> Result<f64> {
        lambda_mix(u, self.m_beta())
    }

    /// `h(m)` from the field response.
    pub fn h_of_m(&self, m: f64) -> Result<f64> {
        self.response.h_of_m(m)
    }

    /// Rows `u,f,f_prime` on `points` equally spaced values inside `(-1, 1)`.
    pub fn write_curve_csv<W: Write>(&self, mut w: W, points: usize) -> Result<()> {
        writeln!(w, "u,f,f_prime")?;
        for i in 0..points {
            let u = -1.0 + 2.0 * (i as f64 + 0.5) / points as f64;
            writeln!(w, "{},{},{}", u, self.f(u)?, self.f_prime(u)?)?;
        }
        Ok(())
    }

    /// Rows `h,p,phi` for `h` equally spaced in `[-h_max, h_max]`.
    pub fn write_pressure_csv<W: Write>(&self, mut w: W, h_max: f64, points: usize) -> Result<()> {
        writeln!(w, "h,p,phi")?;
        for i in 0..points {
            let h = if points == 1 {
                0.0
            } else {
                -h_max + 2.0 * h_max * i as f64 / (points - 1) as f64
            };
            writeln!(w, "{},{},{}", h, self.response.pressure(h), self.response.magnetization(h))?;
        }
        Ok(())
    }
}

/// `λ_u = (u + m_β) / (2 m_β)`, the weight of the plus phase in the
/// decomposition `u = λ m_β - (1 - λ) m_β`.
pub fn lambda_mix(u: f64, m_beta: f64) -> Result<f64> {
    if !(m_beta > 0.0) {
        return Err(Error::Domain("phase mixture is undefined without a plateau (m_beta = 0)".into()));
    }
    if u.abs() > m_beta {
        return Err(Error::Domain(format!("|u| = {} exceeds m_beta = {m_beta}", u.abs())));
    }
    Ok((u + m_beta) / (2.0 * m_beta))
}

fn check_closed(u: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&u) {
        return Err(Error::Domain(format!("magnetization {u} is outside [-1, 1]")));
    }
    Ok(())
}

fn check_open(u: f64) -> Result<()> {
    if !(u.abs() < 1.0) {
        return Err(Error::Domain(format!("magnetization {u} is outside (-1, 1)")));
    }
    Ok(())
}

struct Columns {
    t: Vec<f64>,
    f: Vec<f64>,
    fp: Vec<f64>,
    df: Vec<f64>,
    dfp: Vec<f64>,
}

impl Columns {
    fn with_capacity(n: usize) -> Self {
        Self {
            t: Vec::with_capacity(n),
            f: Vec::with_capacity(n),
            fp: Vec::with_capacity(n),
            df: Vec::with_capacity(n),
            dfp: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, f: f64, fp: f64, df: f64, dfp: f64) {
        self.t.push(t);
        self.f.push(f);
        self.fp.push(fp);
        self.df.push(df);
        self.dfp.push(dfp);
    }

    fn into_curve(self, response: FieldResponse, provenance: Provenance) -> FreeEnergyCurve {
        FreeEnergyCurve {
            response,
            provenance,
            t: self.t,
            f: self.f,
            fp: self.fp,
            df: self.df,
            dfp: self.dfp,
        }
    }
}

/// Node slopes for a monotone cubic Hermite interpolant (Fritsch–Carlson
/// limiter on three-point nonuniform estimates).
fn monotone_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut d = vec![0.0; n];
    d[0] = delta[0];
    d[n - 1] = delta[n - 2];
    for k in 1..n - 1 {
        d[k] = if delta[k - 1] * delta[k] <= 0.0 {
            0.0
        } else {
            (h[k] * delta[k - 1] + h[k - 1] * delta[k]) / (h[k - 1] + h[k])
        };
    }
    for k in 0..n - 1 {
        if delta[k] == 0.0 {
            d[k] = 0.0;
            d[k + 1] = 0.0;
            continue;
        }
        let a = d[k] / delta[k];
        let b = d[k + 1] / delta[k];
        let r = a * a + b * b;
        if r > 9.0 {
            let tau = 3.0 / r.sqrt();
            d[k] = tau * a * delta[k];
            d[k + 1] = tau * b * delta[k];
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermo::response::{magnetization_1d, pressure_1d};

    fn small(dim: usize, beta: f64) -> FreeEnergyCurve {
        FreeEnergyCurve::with_options(
            beta,
            dim,
            CurveOptions {
                strip_width: 6,
                nodes: 1024,
                t_max: 10.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn one_dimensional_values() {
        let c = FreeEnergyCurve::build(0.7, 1).unwrap();
        assert_eq!(c.provenance(), Provenance::TransferMatrix);
        assert_eq!(c.m_beta(), 0.0);
        for u in [-0.9, -0.5, 0.0, 0.2, 0.5, 0.99] {
            let h = field_of_magnetization_1d(0.7, u);
            let exact = u * h - pressure_1d(0.7, h);
            assert!((c.f(u).unwrap() - exact).abs() < 1e-10, "u {u}");
            assert!((c.f_prime(u).unwrap() - h).abs() < 1e-9, "u {u}");
        }
        assert!((c.f(0.0).unwrap() + pressure_1d(0.7, 0.0)).abs() < 1e-14);
        assert_eq!(c.f(1.0).unwrap(), -1.0);
    }

    #[test]
    fn convex_even_and_divergent() {
        for c in [small(1, 0.7), small(2, 0.6), small(2, 0.35)] {
            let n = 2001;
            let us: Vec<f64> = (0..n).map(|i| -0.999 + 1.998 * i as f64 / (n - 1) as f64).collect();
            let fs: Vec<f64> = us.iter().map(|&u| c.f(u).unwrap()).collect();
            for w in fs.windows(3) {
                assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-9);
            }
            for &u in &us {
                assert!((c.f(u).unwrap() - c.f(-u).unwrap()).abs() < 1e-12);
                assert!((c.f_prime(u).unwrap() + c.f_prime(-u).unwrap()).abs() < 1e-12);
            }
            assert!(c.f_prime(1.0 - 1e-12).unwrap() > 10.0);
            assert!(c.f_prime(-1.0 + 1e-12).unwrap() < -10.0);
        }
    }

    #[test]
    fn plateau_in_two_dimensions() {
        let c = small(2, 0.6);
        let m = c.m_beta();
        assert!(m > 0.97);
        for u in [-m, -0.5, 0.0, 0.3, m] {
            assert_eq!(c.f_prime(u).unwrap(), 0.0);
            assert!((c.f(u).unwrap() - c.f(0.0).unwrap()).abs() < 1e-15);
        }
        // strictly increasing outside
        let mut prev = 0.0;
        for i in 1..200 {
            let u = m + (1.0 - m) * i as f64 / 200.0;
            let d = c.f_prime(u).unwrap();
            assert!(d > prev);
            prev = d;
        }
    }

    #[test]
    fn el_roundtrip() {
        for c in [small(1, 0.7), small(2, 0.6)] {
            for i in 0..50 {
                let u = -0.95 + 1.9 * i as f64 / 49.0;
                let a = c.el_alpha_of_u(u).unwrap();
                assert!((c.el_solve_u(a).unwrap() - u).abs() < 1e-8);
            }
            assert_eq!(c.el_alpha_of_u(0.0).unwrap(), 0.0);
        }
        let c = small(2, 0.6);
        assert!((c.el_solve_u(0.4).unwrap() - 0.4).abs() < 1e-12);
        let c1 = small(1, 0.7);
        assert!(c1.el_solve_u(5.0).unwrap() < 1.0);
        assert!(c1.el_solve_u(1e3).unwrap() <= 1.0);
    }

    #[test]
    fn fenchel_young() {
        let c = small(1, 0.7);
        for i in 0..41 {
            let u = -0.95 + 1.9 * i as f64 / 40.0;
            for j in 0..41 {
                let h = -3.0 + 6.0 * j as f64 / 40.0;
                assert!(u * h <= c.f(u).unwrap() + pressure_1d(0.7, h) + 1e-12);
            }
            let h = c.f_prime(u).unwrap();
            assert!((u * h - c.f(u).unwrap() - pressure_1d(0.7, h)).abs() < 1e-9);
        }
    }

    #[test]
    fn conjugate_pressure_matches_closed_form() {
        let c = small(1, 0.7);
        for h in [-2.0, -0.4, 0.0, 0.1, 1.5] {
            let a = c.conjugate_pressure(h).unwrap();
            assert!((a - pressure_1d(0.7, h)).abs() < 1e-9, "h {h}");
        }
        let c2 = small(2, 0.6);
        for h in [0.0, 0.2, -0.7] {
            let a = c2.conjugate_pressure(h).unwrap();
            assert!((a - c2.response().pressure(h)).abs() < 1e-7, "h {h}");
        }
    }

    #[test]
    fn double_conjugate_recovers_f() {
        // numeric sup over h of (u h - p(h)), p itself the numeric conjugate of the table
        let c = small(1, 0.7);
        for u in [-0.8, -0.3, 0.0, 0.45, 0.9] {
            let obj = |h: f64| u * h - c.conjugate_pressure(h).unwrap();
            let (mut lo, mut hi) = (-20.0f64, 20.0f64);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..120 {
                let a = hi - g * (hi - lo);
                let b = lo + g * (hi - lo);
                if obj(a) < obj(b) {
                    lo = a;
                } else {
                    hi = b;
                }
            }
            let fstar = obj(0.5 * (lo + hi));
            assert!((fstar - c.f(u).unwrap()).abs() < 1e-6, "u {u}");
        }
    }

    #[test]
    fn magnetization_consistency() {
        let c = small(1, 0.7);
        for h in [-0.5, 0.0, 0.25] {
            assert!((c.response().magnetization(h) - magnetization_1d(0.7, h)).abs() < 1e-15);
        }
        let c2 = small(2, 0.6);
        // f' inverts φ outside the plateau
        for u in [0.98, 0.99, 0.999] {
            let h = c2.f_prime(u).unwrap();
            assert!((c2.response().magnetization(h) - u).abs() < 1e-7, "u {u}");
        }
    }

    #[test]
    fn lambda_values() {
        assert_eq!(lambda_mix(0.0, 0.9).unwrap(), 0.5);
        assert_eq!(lambda_mix(0.9, 0.9).unwrap(), 1.0);
        assert_eq!(lambda_mix(-0.9, 0.9).unwrap(), 0.0);
        assert!(lambda_mix(0.1, 0.0).is_err());
        assert!(lambda_mix(0.95, 0.9).is_err());
    }

    #[test]
    fn monotone_slopes_preserve_order() {
        let x = [0.0, 1.0, 1.5, 4.0, 4.2];
        let y = [0.0, 0.1, 2.0, 2.1, 5.0];
        let d = monotone_slopes(&x, &y);
        for k in 0..4 {
            let h = x[k + 1] - x[k];
            let mut prev = y[k];
            for j in 1..=50 {
                let v = FreeEnergyCurve::hermite(y[k], y[k + 1], d[k], d[k + 1], h, j as f64 / 50.0);
                assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
    }
}
