//! Bilinear frequency symbols: the Bochner-Riesz symbol of complex order, the
//! square-function symbol, the pieces of both dyadic decompositions and their
//! `z`-derivatives.
//!
//! Everything is radial in each block, so the evaluators take the normalized
//! squares `a = |xi|^2 / R^2`, `b = |eta|^2 / R^2`; the vector entry points
//! just form these.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::GridSpec;
use crate::special::{psi, psi0, psi0_1, psi0_2, stein_constant};

/// Complex order `z = alpha + i tau` with the Stein split `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub z: Complex64,
    pub beta: f64,
}

impl Order {
    pub fn new(alpha: f64, tau: f64, beta: f64) -> Self {
        Order {
            z: Complex64::new(alpha, tau),
            beta,
        }
    }

    /// Real order with the default split `beta = (alpha + 1) / 2` clamped above 1/2.
    pub fn real(alpha: f64) -> Self {
        Order::new(alpha, 0.0, f64::max(0.5 * (alpha + 1.0), 0.55))
    }

    pub fn alpha(&self) -> f64 {
        self.z.re
    }

    pub fn delta(&self) -> Complex64 {
        self.z - self.beta
    }

    pub fn with_z(&self, z: Complex64) -> Self {
        Order { z, ..*self }
    }

    /// Checks `beta > 1/2` and `Re z - beta > -1/2`.
    pub fn check_split(&self) -> Result<()> {
        crate::special::check_stein(self.z, self.beta)
    }

    pub fn stein_constant(&self) -> Result<Complex64> {
        stein_constant(self.z, self.beta)
    }
}

/// `(base)_+^z` on the principal branch; 0 when the base is not positive.
pub fn cpow_plus(base: f64, z: Complex64) -> Complex64 {
    if base <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if z.im == 0.0 {
        return Complex64::new(base.powf(z.re), 0.0);
    }
    (z * base.ln()).exp()
}

/// `log(base)_+`, set to 0 where the base is not positive.
pub fn log_plus(base: f64) -> f64 {
    if base <= 0.0 {
        0.0
    } else {
        base.ln()
    }
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `(1 - (|xi|^2 + |eta|^2)/R^2)_+^z`.
pub fn br_symbol(z: Complex64, r: f64, xi: &[f64], eta: &[f64]) -> Complex64 {
    let r2 = r * r;
    br_ab(z, norm_sq(xi) / r2, norm_sq(eta) / r2)
}

pub fn br_ab(z: Complex64, a: f64, b: f64) -> Complex64 {
    cpow_plus(1.0 - a - b, z)
}

/// `2 (alpha + 1) s (1 - s)_+^alpha` with `s = (|xi|^2 + |eta|^2)/R^2`.
pub fn sq_symbol(alpha: Complex64, r: f64, xi: &[f64], eta: &[f64]) -> Complex64 {
    let r2 = r * r;
    sq_ab(alpha, norm_sq(xi) / r2, norm_sq(eta) / r2)
}

pub fn sq_ab(alpha: Complex64, a: f64, b: f64) -> Complex64 {
    let s = a + b;
    2.0 * (alpha + 1.0) * s * cpow_plus(1.0 - s, alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// The whole symbol.
    Full,
    /// `m_j`, `j >= 2`: split in `xi`.
    MJ,
    /// `m_0`: the `psi0(|xi|^2/R^2)` remainder.
    M0,
    /// `m~_j`, `j >= 0`: split of `m_0` in `eta`.
    MTilde,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolPiece {
    pub family: Family,
    pub j: u32,
    pub order: Order,
    pub r: f64,
    /// Multiply by `(|xi|^2 + |eta|^2)/R^2` (square-function decomposition).
    pub square: bool,
    /// Multiply by `log(1 - s)_+` (the `z`-derivative).
    pub dz: bool,
}

impl SymbolPiece {
    pub fn new(family: Family, j: u32, order: Order, r: f64) -> Result<Self> {
        let p = SymbolPiece {
            family,
            j,
            order,
            r,
            square: false,
            dz: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn squared(mut self) -> Self {
        self.square = true;
        self
    }

    pub fn derivative(mut self) -> Self {
        self.dz = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return domain(format!("dilation R = {} must be positive", self.r));
        }
        match self.family {
            Family::MJ if self.j < 2 => Err(Error::Piece(format!("m_j needs j >= 2, got {}", self.j))),
            Family::Full | Family::M0 if self.j != 0 => Err(Error::Piece(format!(
                "{:?} takes no index, got j = {}",
                self.family, self.j
            ))),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, xi: &[f64], eta: &[f64]) -> Complex64 {
        let r2 = self.r * self.r;
        self.eval_ab(norm_sq(xi) / r2, norm_sq(eta) / r2)
    }

    /// Value at normalized squares `a = |xi|^2/R^2`, `b = |eta|^2/R^2`.
    pub fn eval_ab(&self, a: f64, b: f64) -> Complex64 {
        let z = self.order.z;
        let s = a + b;
        let mut v = match self.family {
            Family::Full => cpow_plus(1.0 - s, z),
            Family::M0 => psi0(a) * cpow_plus(1.0 - s, z),
            Family::MJ => slab(self.j, a, b, z),
            Family::MTilde => match self.j {
                0 => psi0(a) * psi0_1(b) * cpow_plus(1.0 - s, z),
                1 => psi0(a) * psi0_2(b) * cpow_plus(1.0 - s, z),
                j => psi0(a) * slab(j, b, a, z),
            },
        };
        if v == Complex64::new(0.0, 0.0) {
            return v;
        }
        if self.square {
            v *= s;
        }
        if self.dz {
            v *= log_plus(1.0 - s);
        }
        v
    }
}

/// `psi(2^j (1 - u)) (1 - u)_+^z (1 - w / (1 - u))_+^z`, the literal slab form.
fn slab(j: u32, u: f64, w: f64, z: Complex64) -> Complex64 {
    let c = 1.0 - u;
    let bump = psi(2f64.powi(j as i32) * c);
    if bump == 0.0 || c <= 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    bump * cpow_plus(c, z) * cpow_plus(1.0 - w / c, z)
}

/// Derivative of any symbol in `z`: the same piece times the log factor.
pub fn dz_symbol(piece: &SymbolPiece, xi: &[f64], eta: &[f64]) -> Complex64 {
    piece.derivative().eval(xi, eta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    /// `m = sum_{j>=2} m_j + m_0`.
    Xi,
    /// `m_0 = sum_{j>=0} m~_j`.
    Eta,
}

/// Largest reconstruction error over lattice pairs with `1 - s >= 2^{-J}`.
///
/// For the `xi` split the target is the full symbol, for the `eta` split it is
/// `m_0`; `square` switches to the decomposition with the quadratic factor.
pub fn reconstruct_defect(
    order: Order,
    r: f64,
    spec: &GridSpec,
    j_max: u32,
    split: Split,
    square: bool,
) -> Result<f64> {
    if j_max < 2 {
        return domain(format!("truncation J = {j_max} must be at least 2"));
    }
    let q = spec.frequency_norms_sq();
    let r2 = r * r;
    let make = |family, j| -> Result<SymbolPiece> {
        let p = SymbolPiece::new(family, j, order, r)?;
        Ok(if square { p.squared() } else { p })
    };
    let (target, pieces) = match split {
        Split::Xi => {
            let mut p = vec![make(Family::M0, 0)?];
            for j in 2..=j_max {
                p.push(make(Family::MJ, j)?);
            }
            (make(Family::Full, 0)?, p)
        }
        Split::Eta => {
            let mut p = Vec::new();
            for j in 0..=j_max {
                p.push(make(Family::MTilde, j)?);
            }
            (make(Family::M0, 0)?, p)
        }
    };
    let threshold = 2f64.powi(-(j_max as i32));
    let rows = crate::par::map_slice(&q, |&qa| {
        let a = qa / r2;
        let mut worst = 0.0f64;
        for &qb in &q {
            let b = qb / r2;
            if 1.0 - a - b < threshold {
                continue;
            }
            let sum: Complex64 = pieces.iter().map(|p| p.eval_ab(a, b)).sum();
            worst = worst.max((target.eval_ab(a, b) - sum).norm());
        }
        worst
    });
    Ok(rows.into_iter().fold(0.0, f64::max))
}

/// First `j >= 2` from which the `xi`-support of `m~_j` lies in `|xi| <= R/8` on
/// the grid lattice. Pieces below it carry a nontrivial `B^{psi0}_R` factor.
pub fn resolve_k(spec: &GridSpec, r: f64, j_cap: u32) -> u32 {
    let mut q = spec.frequency_norms_sq();
    q.sort_by(f64::total_cmp);
    q.dedup();
    let r2 = r * r;
    let limit = r2 / 64.0;
    for j in 2..=j_cap {
        let scale = 2f64.powi(j as i32);
        let inside = q.iter().all(|&qb| {
            let c = 1.0 - qb / r2;
            if psi(scale * c) == 0.0 {
                return true;
            }
            // largest |xi|^2 with a < 1 - b
            let k = q.partition_point(|&qa| qa < r2 * c);
            k == 0 || q[k - 1] <= limit
        });
        if inside {
            return j;
        }
    }
    j_cap
}

/// Analytic value of the index above: `a <= 2^{1-j}` on the support, so
/// containment in `a <= 1/64` starts at `j = 7`.
pub const K_ANALYTIC: u32 = 7;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_and_sphere() {
        let z = Complex64::new(0.7, 0.3);
        assert_eq!(br_symbol(z, 2.0, &[0.0], &[0.0]), Complex64::new(1.0, 0.0));
        assert_eq!(br_symbol(z, 2.0, &[2.0], &[0.0]), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn invalid_pieces_rejected() {
        let o = Order::new(0.5, 0.0, 0.6);
        assert!(SymbolPiece::new(Family::MJ, 1, o, 1.0).is_err());
        assert!(SymbolPiece::new(Family::M0, 3, o, 1.0).is_err());
        assert!(SymbolPiece::new(Family::Full, 0, o, -1.0).is_err());
    }
}
