//! Linear radial multipliers used by the factorizations, the Hardy-Littlewood
//! maximal function and the sliding square means.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::grid::{dft, idft, ComplexField, GridSpec, Spectrum};
use crate::par;
use crate::special::{psi, psi0, psi0_2};
use crate::symbols::{cpow_plus, log_plus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearFamily {
    /// `(1 - |eta|^2/t^2)_+^delta`
    B,
    /// `|eta|^2/t^2 (1 - |eta|^2/t^2)_+^delta`
    A,
    /// `B` times `log(1 - |eta|^2/t^2)_+`
    BTilde,
    /// `A` times the same log
    ATilde,
    /// `psi(2^j (1 - |xi|^2/R^2)) (1 - |xi|^2/R^2 - t^2)_+^{beta-1}`
    S,
    /// `S` times `|xi|^2/R^2`
    STilde,
    /// `psi0^2(|eta|^2/R^2) (1 - t^2 - |eta|^2/R^2)_+^{beta-1}`
    H,
    /// `H` times `|eta|^2/R^2`
    HTilde,
    /// `psi0(|xi|^2/R^2)`
    BPsi0,
}

/// One linear operator. For the `B`/`A` families `t` is the dilation itself;
/// for `S`/`H` the pair `(R, t)` enters as in the slab symbols.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearOp {
    pub family: LinearFamily,
    pub delta: Complex64,
    pub beta: f64,
    pub r: f64,
    pub t: f64,
    pub j: u32,
}

impl LinearOp {
    pub fn bochner_riesz(delta: Complex64, t: f64) -> Self {
        LinearOp {
            family: LinearFamily::B,
            delta,
            beta: 1.0,
            r: 1.0,
            t,
            j: 0,
        }
    }

    pub fn with_family(mut self, family: LinearFamily) -> Self {
        self.family = family;
        self
    }

    pub fn slab(family: LinearFamily, j: u32, beta: f64, r: f64, t: f64) -> Self {
        LinearOp {
            family,
            delta: Complex64::new(0.0, 0.0),
            beta,
            r,
            t,
            j,
        }
    }

    pub fn cutoff(r: f64) -> Self {
        LinearOp::slab(LinearFamily::BPsi0, 0, 1.0, r, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        use LinearFamily::*;
        match self.family {
            B | A | BTilde | ATilde => {
                if !(self.t > 0.0) {
                    return domain(format!("dilation t = {} must be positive", self.t));
                }
                if !(self.delta.re > -0.5) {
                    return domain(format!("Re delta = {} must exceed -1/2", self.delta.re));
                }
            }
            S | STilde | H | HTilde => {
                if !(self.beta > 0.5) {
                    return domain(format!("beta = {} must exceed 1/2", self.beta));
                }
                if !(self.r > 0.0) || !(self.t >= 0.0) {
                    return domain(format!("need R > 0, t >= 0, got R = {}, t = {}", self.r, self.t));
                }
                if matches!(self.family, S | STilde) {
                    if self.j < 2 {
                        return domain(format!("slab index j = {} must be at least 2", self.j));
                    }
                    let top = 2f64.powi(1 - self.j as i32).sqrt();
                    if self.t > top {
                        return domain(format!("t = {} outside (0, {top}] for j = {}", self.t, self.j));
                    }
                }
            }
            BPsi0 => {
                if !(self.r > 0.0) {
                    return domain(format!("dilation R = {} must be positive", self.r));
                }
            }
        }
        Ok(())
    }

    /// Multiplier at `q = |xi|^2`.
    pub fn multiplier(&self, q: f64) -> Complex64 {
        use LinearFamily::*;
        match self.family {
            B | A | BTilde | ATilde => {
                let u = q / (self.t * self.t);
                let mut v = cpow_plus(1.0 - u, self.delta);
                if matches!(self.family, A | ATilde) {
                    v *= u;
                }
                if matches!(self.family, BTilde | ATilde) {
                    v *= log_plus(1.0 - u);
                }
                v
            }
            S | STilde => {
                let a = q / (self.r * self.r);
                let bump = psi(2f64.powi(self.j as i32) * (1.0 - a));
                if bump == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let mut v = bump * pow_plus(1.0 - a - self.t * self.t, self.beta - 1.0);
                if self.family == STilde {
                    v *= a;
                }
                Complex64::new(v, 0.0)
            }
            H | HTilde => {
                let b = q / (self.r * self.r);
                let bump = psi0_2(b);
                if bump == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let mut v = bump * pow_plus(1.0 - self.t * self.t - b, self.beta - 1.0);
                if self.family == HTilde {
                    v *= b;
                }
                Complex64::new(v, 0.0)
            }
            BPsi0 => Complex64::new(psi0(q / (self.r * self.r)), 0.0),
        }
    }

    pub fn apply_spectrum(&self, s: &Spectrum) -> Spectrum {
        s.multiplied_radial(|q| self.multiplier(q))
    }
}

pub(crate) fn pow_plus(base: f64, p: f64) -> f64 {
    if base <= 0.0 {
        0.0
    } else {
        base.powf(p)
    }
}

pub fn apply_linear(op: &LinearOp, f: &ComplexField) -> Result<ComplexField> {
    op.validate()?;
    Ok(idft(&op.apply_spectrum(&dft(f))))
}

/// Dyadic radii `L 2^{-k}` down to one cell.
pub fn dyadic_radii(spec: &GridSpec) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = 0.5 * spec.period;
    while r >= spec.spacing() * (1.0 - 1e-12) {
        out.push(r);
        r *= 0.5;
    }
    out
}

/// Offsets of all cells whose centre lies within `radius` of the origin cell
/// (wrap-around distance), as per-axis shifts reduced mod `N`.
fn ball_offsets(spec: &GridSpec, radius: f64) -> Vec<Vec<i64>> {
    let h = spec.spacing();
    let reach = (radius / h + 1e-9).floor() as i64;
    let mut out = Vec::new();
    let mut d = vec![-reach; spec.n];
    loop {
        let r2: f64 = d.iter().map(|&k| (k as f64 * h).powi(2)).sum();
        if r2.sqrt() <= radius * (1.0 + 1e-12) {
            let wrapped: Vec<i64> = d.iter().map(|&k| k.rem_euclid(spec.points as i64)).collect();
            if !out.contains(&wrapped) {
                out.push(wrapped);
            }
        }
        let mut axis = 0;
        loop {
            if axis == spec.n {
                return out;
            }
            d[axis] += 1;
            if d[axis] <= reach {
                break;
            }
            d[axis] = -reach;
            axis += 1;
        }
    }
}

/// Average of `|f|` over the periodic ball of each radius, per node.
pub fn ball_averages(f: &ComplexField, radius: f64) -> Result<Vec<f64>> {
    let spec = f.spec;
    if !(radius > 0.0) || radius > 0.5 * spec.period {
        return domain(format!("radius {radius} must lie in (0, L/2]"));
    }
    let offsets = ball_offsets(&spec, radius);
    let count = offsets.len() as f64;
    let abs: Vec<f64> = f.values.iter().map(|v| v.norm()).collect();
    let n_ax = spec.points as i64;
    Ok(par::map_range(spec.len(), |idx| {
        let mut m = vec![0usize; spec.n];
        spec.multi_index(idx, &mut m);
        let mut acc = 0.0;
        let mut shifted = vec![0usize; spec.n];
        for d in &offsets {
            for a in 0..spec.n {
                shifted[a] = (m[a] as i64 + d[a]).rem_euclid(n_ax) as usize;
            }
            acc += abs[spec.flat_index(&shifted)];
        }
        acc / count
    }))
}

/// `Mf(x) = max_r avg_{B(x, r)} |f|` over the given radii.
pub fn hl_maximal(f: &ComplexField, radii: &[f64]) -> Result<ComplexField> {
    if radii.is_empty() {
        return domain("radius list is empty");
    }
    let mut best = vec![0.0f64; f.spec.len()];
    for &r in radii {
        for (b, v) in best.iter_mut().zip(ball_averages(f, r)?) {
            *b = b.max(v);
        }
    }
    ComplexField::new(f.spec, best.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
}

/// Normalized nodes `u = t/R` on (0, 1] with weights summing to 1: a uniform
/// midpoint patch on (0, u0] followed by log-uniform midpoints on [u0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MeanRule {
    pub fn new(linear: usize, log: usize, u0: f64) -> Result<Self> {
        if linear + log == 0 || !(u0 > 0.0 && u0 <= 1.0) {
            return domain("mean rule needs nodes and a patch end in (0, 1]");
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let h = u0 / linear.max(1) as f64;
        for k in 0..linear {
            nodes.push((k as f64 + 0.5) * h);
            weights.push(h);
        }
        if log > 0 {
            let dl = -u0.ln() / log as f64;
            for k in 0..log {
                let lo = u0.ln() + k as f64 * dl;
                nodes.push((lo + 0.5 * dl).exp());
                weights.push((lo + dl).exp() - lo.exp());
            }
        }
        Ok(MeanRule { nodes, weights })
    }

    /// One node at `u` with unit weight.
    pub fn single(u: f64) -> Self {
        MeanRule {
            nodes: vec![u],
            weights: vec![1.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlidingFamily {
    B,
    BTilde,
    /// `B^{psi0}_R` applied after `B~_t`.
    Psi0BTilde,
}

/// `max_R (R^{-1} int_0^R |T_t f(x)|^2 dt)^{1/2}` with the integral replaced by
/// the normalized rule.
pub fn sliding_square_mean(
    family: SlidingFamily,
    delta: Complex64,
    f: &ComplexField,
    r_grid: &[f64],
    rule: &MeanRule,
) -> Result<ComplexField> {
    if r_grid.is_empty() || rule.nodes.is_empty() {
        return domain("sliding mean needs a nonempty R grid and rule");
    }
    if !(delta.re > -0.5) {
        return domain(format!("Re delta = {} must exceed -1/2", delta.re));
    }
    let spec = f.spec;
    let fh = dft(f);
    let norms = spec.frequency_norms_sq();
    let per_r: Vec<Vec<f64>> = par::map_slice(r_grid, |&r| {
        let mut acc = vec![0.0f64; spec.len()];
        for (&u, &w) in rule.nodes.iter().zip(&rule.weights) {
            let t = r * u;
            let inner = LinearOp::bochner_riesz(delta, t).with_family(match family {
                SlidingFamily::B => LinearFamily::B,
                _ => LinearFamily::BTilde,
            });
            let coeffs: Vec<Complex64> = fh
                .coeffs
                .iter()
                .zip(&norms)
                .map(|(c, &q)| {
                    let mut m = inner.multiplier(q);
                    if family == SlidingFamily::Psi0BTilde {
                        m *= psi0(q / (r * r));
                    }
                    c * m
                })
                .collect();
            let out = idft(&Spectrum { spec, coeffs });
            for (a, v) in acc.iter_mut().zip(&out.values) {
                *a += w * v.norm_sqr();
            }
        }
        acc
    });
    let mut best = vec![0.0f64; spec.len()];
    for row in per_r {
        for (b, v) in best.iter_mut().zip(row) {
            *b = b.max(v.sqrt());
        }
    }
    ComplexField::new(spec, best.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
}

/// Smallest `d` with `Re delta + d > (n - 1)/2`.
pub fn telescoping_depth(delta: Complex64, n: usize) -> u32 {
    let target = 0.5 * (n as f64 - 1.0);
    let mut d = 0u32;
    while !(delta.re + d as f64 > target) {
        d += 1;
    }
    d
}
