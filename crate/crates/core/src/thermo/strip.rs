//! Transfer matrix of an infinitely long strip of width `W` with periodic
//! transverse boundary, restricted to the translation-invariant sector.
//!
//! `T` commutes with cyclic shifts of a row, so its Perron vector is
//! shift invariant. In the basis of normalized orbit indicators
//! `|O> = |O|^{-1/2} Σ_{s∈O} |s>` the sector block is
//! `T_{OO'} = |O|^{1/2} |O'|^{-1/2} Σ_{s'∈O'} T(r_O, s')`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub const MIN_WIDTH: usize = 3;
pub const MAX_WIDTH: usize = 12;

#[derive(Clone, Debug)]
struct Orbit {
    size: usize,
    /// Σ_i s_i.
    mag: i32,
    /// Σ_i s_i s_{i+1} with periodic wrap.
    row: i32,
}

/// Leading eigenpair data of the strip transfer matrix at one field value.
#[derive(Clone, Copy, Debug)]
pub struct StripPoint {
    /// `log λ_max / (β W)`.
    pub pressure: f64,
    /// Magnetization per site `(1/W) Σ_s v_s² Σ_i s_i`.
    pub magnetization: f64,
}

#[derive(Clone, Debug)]
pub struct StripTransfer {
    beta: f64,
    width: usize,
    orbits: Vec<Orbit>,
    /// `log` of the symmetric inter-row coupling block, row major.
    log_coupling: Vec<f64>,
}

impl StripTransfer {
    pub fn new(beta: f64, width: usize) -> Result<Self> {
        if !(MIN_WIDTH..=MAX_WIDTH).contains(&width) {
            return Err(Error::Domain(format!(
                "strip width must lie in {MIN_WIDTH}..={MAX_WIDTH}, got {width}"
            )));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("beta must be positive, got {beta}")));
        }
        let states = 1u32 << width;
        let mask = states - 1;
        let rotate = |s: u32| ((s << 1) | (s >> (width - 1))) & mask;
        let spin = |s: u32, i: usize| if (s >> i) & 1 == 1 { 1i32 } else { -1 };
        let mut orbit_of = vec![usize::MAX; states as usize];
        let mut members: Vec<Vec<u32>> = Vec::new();
        let mut orbits = Vec::new();
        for s in 0..states {
            if orbit_of[s as usize] != usize::MAX {
                continue;
            }
            let id = orbits.len();
            let mut list = Vec::new();
            let mut t = s;
            loop {
                if orbit_of[t as usize] == usize::MAX {
                    orbit_of[t as usize] = id;
                    list.push(t);
                }
                t = rotate(t);
                if t == s {
                    break;
                }
            }
            let mag = (0..width).map(|i| spin(s, i)).sum();
            let row = (0..width).map(|i| spin(s, i) * spin(s, (i + 1) % width)).sum();
            orbits.push(Orbit {
                size: list.len(),
                mag,
                row,
            });
            members.push(list);
        }
        let k = orbits.len();
        let w = width as i32;
        let mut log_coupling = vec![0.0; k * k];
        for a in 0..k {
            let r = members[a][0];
            for b in 0..k {
                // Σ_{s'∈O'} exp(β Σ_i r_i s'_i) in log space
                let exps: Vec<f64> = members[b]
                    .iter()
                    .map(|&s| beta * (w - 2 * (r ^ s).count_ones() as i32) as f64)
                    .collect();
                let m = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = exps.iter().map(|e| (e - m).exp()).sum();
                log_coupling[a * k + b] = m
                    + sum.ln()
                    + 0.5 * ((orbits[a].size as f64).ln() - (orbits[b].size as f64).ln());
            }
        }
        // symmetrize against rounding
        for a in 0..k {
            for b in 0..a {
                let v = 0.5 * (log_coupling[a * k + b] + log_coupling[b * k + a]);
                log_coupling[a * k + b] = v;
                log_coupling[b * k + a] = v;
            }
        }
        Ok(Self {
            beta,
            width,
            orbits,
            log_coupling,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Dimension of the translation-invariant sector.
    pub fn sector_dim(&self) -> usize {
        self.orbits.len()
    }

    pub fn evaluate(&self, h: f64) -> StripPoint {
        let k = self.orbits.len();
        let b = self.beta;
        let diag: Vec<f64> = self
            .orbits
            .iter()
            .map(|o| 0.5 * b * (o.row as f64 + h * o.mag as f64))
            .collect();
        let mut shift = f64::NEG_INFINITY;
        for a in 0..k {
            for c in 0..k {
                shift = shift.max(self.log_coupling[a * k + c] + diag[a] + diag[c]);
            }
        }
        let m = DMatrix::from_fn(k, k, |a, c| (self.log_coupling[a * k + c] + diag[a] + diag[c] - shift).exp());
        let eig = SymmetricEigen::new(m);
        let (top, &lambda) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty sector");
        let v = eig.eigenvectors.column(top);
        let norm: f64 = v.iter().map(|x| x * x).sum();
        let mag: f64 = v
            .iter()
            .zip(&self.orbits)
            .map(|(x, o)| x * x * o.mag as f64)
            .sum::<f64>()
            / norm;
        StripPoint {
            pressure: (lambda.ln() + shift) / (b * self.width as f64),
            magnetization: mag / self.width as f64,
        }
    }

    pub fn pressure(&self, h: f64) -> f64 {
        self.evaluate(h).pressure
    }

    pub fn magnetization(&self, h: f64) -> f64 {
        self.evaluate(h).magnetization
    }
}
