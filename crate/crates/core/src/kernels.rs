//! Spatial kernels in closed form, the periodic kernel on the unit torus
//! (lattice side and Poisson side), and the `R`-averages behind the Dirac
//! divergence: time averages against `e^{2 pi i lambda R}` and Riesz products.
//!
//! Kernels are inverse transforms with the `e^{2 pi i}` convention, so
//! `(1 - |zeta|^2/R^2)_+^alpha` on `R^d` (`d = 2n`) transforms to
//! `c_alpha R^d J_{n+alpha}(2 pi R|y|) / (R|y|)^{n+alpha}`,
//! `c_alpha = Gamma(alpha + 1) / pi^alpha`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::par;
use crate::quad::gauss_legendre;
use crate::special::{bessel_switch, gamma, hankel_pq, jv, jv_over_pow};

pub fn kernel_constant(alpha: f64) -> f64 {
    gamma(alpha + 1.0) / PI.powf(alpha)
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn half_dim(y: &[f64]) -> usize {
    assert!(!y.is_empty() && y.len() % 2 == 0, "kernel points live in R^(2n)");
    y.len() / 2
}

/// Kernel of the bilinear mean `B_R^alpha` at `y in R^{2n}`.
pub fn kernel_br(alpha: f64, r: f64, y: &[f64]) -> f64 {
    let n = half_dim(y);
    let nu = n as f64 + alpha;
    let d = 2 * n;
    // J_nu(x)/(R|y|)^nu = (2 pi)^nu J_nu(x)/x^nu with x = 2 pi R |y|
    kernel_constant(alpha) * r.powi(d as i32) * (2.0 * PI).powf(nu) * jv_over_pow(nu, 2.0 * PI * r * norm(y))
}

/// Kernel of the square-function symbol `2(alpha+1) s (1-s)_+^alpha`,
/// `s = |zeta|^2/t^2`. Since `s (1-s)^alpha = (1-s)^alpha - (1-s)^{alpha+1}` it is
/// the difference of two Bessel kernels.
pub fn kernel_sq(alpha: f64, t: f64, y1: &[f64], y2: &[f64]) -> f64 {
    let y = join(y1, y2);
    2.0 * (alpha + 1.0) * (kernel_br(alpha, t, &y) - kernel_br(alpha + 1.0, t, &y))
}

/// Leading large-`t|y|` term of [`kernel_sq`]. At `alpha = n - 1/2` it is
/// `const * cos(2 pi t|y| + n pi) / |y|^{2n}`.
pub fn kernel_sq_asymptotic(alpha: f64, t: f64, y1: &[f64], y2: &[f64]) -> f64 {
    let y = join(y1, y2);
    let n = half_dim(&y);
    let nu = n as f64 + alpha;
    let ty = t * norm(&y);
    let phase = 2.0 * PI * ty - (0.5 * nu + 0.25) * PI;
    2.0 * (alpha + 1.0) * kernel_constant(alpha) * t.powi(2 * n as i32) * phase.cos()
        / (PI * ty.powf(nu + 0.5))
}

fn join(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "both blocks must have the same dimension");
    a.iter().chain(b).copied().collect()
}

// ---------------------------------------------------------------------------
// Lattice enumeration

/// Calls `visit(m, |m|^2)` for every `m in Z^d` with `|m|^2 <= r2`.
pub(crate) fn for_lattice_ball(d: usize, r2: f64, visit: &mut dyn FnMut(&[i64], i64)) {
    let mut m = vec![0i64; d];
    fn rec(axis: usize, m: &mut Vec<i64>, used: i64, r2: f64, visit: &mut dyn FnMut(&[i64], i64)) {
        if axis == m.len() {
            visit(m, used);
            return;
        }
        let rem = r2 - used as f64;
        let top = (rem.max(0.0).sqrt() + 1e-9).floor() as i64;
        for k in -top..=top {
            let s = used + k * k;
            if s as f64 > r2 {
                continue;
            }
            m[axis] = k;
            rec(axis + 1, m, s, r2, visit);
        }
    }
    rec(0, &mut m, 0, r2, visit);
}

/// Phase `x0 . (m1 + m2)` of the lattice point `m = (m1, m2)` at `(x0, x0)`.
fn diag_phase(x0: &[f64], m: &[i64]) -> f64 {
    let n = x0.len();
    (0..n).map(|a| x0[a] * (m[a] + m[a + n]) as f64).sum()
}

// ---------------------------------------------------------------------------
// Periodic kernel

/// Truncation `|m| <= M` of the Poisson lattice sum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeCutoff {
    pub m: u32,
}

impl LatticeCutoff {
    pub fn new(m: u32) -> Result<Self> {
        if m == 0 {
            return domain("lattice cutoff M must be at least 1");
        }
        Ok(LatticeCutoff { m })
    }

    /// Upper bound for `sum_{|m| > M} |(x0, x0) - m|^{-p}`, `p > 2n`, by comparing
    /// each term with the integral over its unit cell.
    pub fn lattice_tail(&self, x0: &[f64], p: f64) -> f64 {
        let d = 2 * x0.len();
        let df = d as f64;
        if p <= df {
            return f64::INFINITY;
        }
        let c = 0.5 * df.sqrt() + 2f64.sqrt() * norm(x0);
        let rho0 = self.m as f64 - 0.5 * df.sqrt() - c;
        if rho0 <= 0.0 {
            return f64::INFINITY;
        }
        let omega = 2.0 * PI.powf(0.5 * df) / gamma(0.5 * df);
        omega * (1.0 + c / rho0).powi(d as i32 - 1) * rho0.powf(df - p) / (p - df)
    }

    /// Bound on the truncation error of [`periodic_kernel_poisson`], from
    /// `|J_nu(x)| <= b_nu x^{-1/2}`.
    pub fn tail_bound(&self, alpha: f64, r: f64, x0: &[f64]) -> f64 {
        let n = x0.len() as f64;
        let nu = n + alpha;
        let p = nu + 0.5;
        kernel_constant(alpha) * bessel_envelope(nu) * (2.0 * PI).powf(-0.5) * r.powf(n - alpha - 0.5)
            * self.lattice_tail(x0, p)
    }

    /// Smallest power-of-two cutoff whose tail bound is below `tol`.
    pub fn for_tolerance(alpha: f64, r: f64, x0: &[f64], tol: f64, max_m: u32) -> Result<Self> {
        let mut m = 8u32;
        while m <= max_m {
            let c = LatticeCutoff { m };
            if c.tail_bound(alpha, r, x0) <= tol {
                return Ok(c);
            }
            m *= 2;
        }
        domain(format!("no lattice cutoff up to {max_m} brings the tail bound below {tol}"))
    }
}

/// `sup_x sqrt(x) |J_nu(x)|`, sampled on `(0, 200]` with a 1% margin. For large
/// `x` the envelope tends to `sqrt(2/pi)` from the Hankel form.
pub fn bessel_envelope(nu: f64) -> f64 {
    let mut best = (2.0 / PI).sqrt();
    for k in 1..=40_000 {
        let x = k as f64 * 0.005;
        best = best.max(x.sqrt() * jv(nu, x).abs());
    }
    1.01 * best
}

/// Lattice side `sum_{|m| <= R} (1 - |m|^2/R^2)^alpha e^{2 pi i x0.(m1 + m2)}`
/// on the unit torus, `m in Z^{2n}`.
pub fn periodic_kernel_frequency(alpha: f64, r: f64, x0: &[f64]) -> f64 {
    let d = 2 * x0.len();
    let r2 = r * r;
    let mut acc = 0.0;
    for_lattice_ball(d, r2, &mut |m, q| {
        let w = 1.0 - q as f64 / r2;
        if w > 0.0 {
            acc += w.powf(alpha) * (2.0 * PI * diag_phase(x0, m)).cos();
        }
    });
    acc
}

/// Same sum, binned first by the integer `|m|^2`.
pub fn periodic_kernel_binned(alpha: f64, r: f64, x0: &[f64]) -> f64 {
    let d = 2 * x0.len();
    let r2 = r * r;
    let mut bins = vec![0.0; r2.floor() as usize + 1];
    for_lattice_ball(d, r2, &mut |m, q| {
        bins[q as usize] += (2.0 * PI * diag_phase(x0, m)).cos();
    });
    bins.iter()
        .enumerate()
        .map(|(q, w)| {
            let base = 1.0 - q as f64 / r2;
            if base > 0.0 {
                w * base.powf(alpha)
            } else {
                0.0
            }
        })
        .sum()
}

/// Poisson side `c_alpha R^{2n} sum_{|m| <= M} J_nu(2 pi R lambda_m)/(R lambda_m)^nu`,
/// `lambda_m = |(x0, x0) - m|`, with its tail bound.
pub fn periodic_kernel_poisson(alpha: f64, r: f64, x0: &[f64], cutoff: LatticeCutoff) -> Result<(f64, f64)> {
    let n = x0.len();
    if alpha <= n as f64 - 0.5 {
        return domain(format!(
            "the Poisson series needs alpha > n - 1/2 = {}, got {alpha}",
            n as f64 - 0.5
        ));
    }
    let y: Vec<f64> = x0.iter().chain(x0).copied().collect();
    let nu = n as f64 + alpha;
    let c = kernel_constant(alpha) * r.powi(2 * n as i32) * (2.0 * PI).powf(nu);
    let mut pts = Vec::new();
    let mm = cutoff.m as f64;
    for_lattice_ball(2 * n, mm * mm, &mut |m, _| pts.push(m.to_vec()));
    let vals = par::map_slice(&pts, |m| {
        let lam = y.iter().zip(m).map(|(a, &b)| (a - b as f64).powi(2)).sum::<f64>().sqrt();
        jv_over_pow(nu, 2.0 * PI * r * lam)
    });
    let sum: f64 = vals.iter().sum();
    Ok((c * sum, cutoff.tail_bound(alpha, r, x0)))
}

/// Both sides and the tolerance check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualPath {
    pub frequency: f64,
    pub poisson: f64,
    pub tail_bound: f64,
}

impl DualPath {
    pub fn agrees(&self) -> bool {
        (self.frequency - self.poisson).abs() <= self.tail_bound
    }
}

pub fn periodic_kernel(alpha: f64, r: f64, x0: &[f64], cutoff: LatticeCutoff) -> Result<DualPath> {
    let frequency = periodic_kernel_frequency(alpha, r, x0);
    let (poisson, tail_bound) = periodic_kernel_poisson(alpha, r, x0, cutoff)?;
    Ok(DualPath {
        frequency,
        poisson,
        tail_bound,
    })
}

/// `D(s) = sum_{m1 + m2 = s} (1 - |m|^2/R^2)_+^alpha` for `n = 1`, indexed by
/// `s + 2 floor(R)`. The diagonal kernel is then `sum_s D(s) cos(2 pi x s)`.
pub fn diagonal_profile(alpha: f64, r: f64) -> Vec<f64> {
    let top = r.floor() as i64;
    let r2 = r * r;
    let mut d = vec![0.0; (4 * top + 1) as usize];
    for m1 in -top..=top {
        let rem = r2 - (m1 * m1) as f64;
        let t2 = (rem.max(0.0).sqrt() + 1e-9).floor() as i64;
        for m2 in -t2..=t2 {
            let w = 1.0 - ((m1 * m1 + m2 * m2) as f64) / r2;
            if w > 0.0 {
                d[(m1 + m2 + 2 * top) as usize] += w.powf(alpha);
            }
        }
    }
    d
}

/// Evaluates a [`diagonal_profile`] at `x`.
pub fn eval_profile(d: &[f64], x: f64) -> f64 {
    let top = (d.len() as i64 - 1) / 4;
    let mut acc = d[(2 * top) as usize];
    let (sn, cs) = (2.0 * PI * x).sin_cos();
    let (mut c, mut s) = (1.0f64, 0.0f64);
    for k in 1..=2 * top {
        let nc = c * cs - s * sn;
        s = s * cs + c * sn;
        c = nc;
        acc += (d[(2 * top + k) as usize] + d[(2 * top - k) as usize]) * c;
    }
    acc
}

// ---------------------------------------------------------------------------
// Lambda set

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaSet {
    pub x0: Vec<f64>,
    /// Distinct values of `|(x0, x0) - m|`, increasing.
    pub values: Vec<f64>,
    pub multiplicity: Vec<usize>,
    pub cutoff: u32,
    /// Indices `j` with `values[j+1] - values[j] < 1e-9`.
    pub near_coincidences: Vec<usize>,
}

impl LambdaSet {
    /// Values below this are complete: every `m` with a smaller distance has
    /// `|m| <= M`.
    pub fn complete_below(&self) -> f64 {
        self.cutoff as f64 - 2f64.sqrt() * norm(&self.x0)
    }

    /// `sum_{lambda_j <= top} lambda_j^{-2n}` over distinct values.
    pub fn partial_sum(&self, top: f64) -> f64 {
        let p = 2 * self.x0.len();
        self.values
            .iter()
            .take_while(|&&v| v <= top)
            .map(|v| v.powi(-(p as i32)))
            .sum()
    }
}

pub fn lambda_set(x0: &[f64], cutoff: LatticeCutoff) -> LambdaSet {
    let d = 2 * x0.len();
    let y: Vec<f64> = x0.iter().chain(x0).copied().collect();
    let mut all = Vec::new();
    let mm = cutoff.m as f64;
    for_lattice_ball(d, mm * mm, &mut |m, _| {
        let lam = y.iter().zip(m).map(|(a, &b)| (a - b as f64).powi(2)).sum::<f64>().sqrt();
        all.push(lam);
    });
    all.sort_by(f64::total_cmp);
    let mut values: Vec<f64> = Vec::new();
    let mut multiplicity: Vec<usize> = Vec::new();
    for v in all {
        match values.last() {
            Some(&last) if v - last <= 1e-12 * last.max(1.0) => *multiplicity.last_mut().unwrap() += 1,
            _ => {
                values.push(v);
                multiplicity.push(1);
            }
        }
    }
    let near_coincidences = values
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] - w[0] < 1e-9)
        .map(|(j, _)| j)
        .collect();
    LambdaSet {
        x0: x0.to_vec(),
        values,
        multiplicity,
        cutoff: cutoff.m,
        near_coincidences,
    }
}

/// Default base point: irrational coordinates from `sqrt 3` and `sqrt 2`.
pub fn default_x0(n: usize) -> Vec<f64> {
    let pool = [3f64.sqrt() / 6.0, 2f64.sqrt() / 5.0, 5f64.sqrt() / 7.0];
    (0..n).map(|i| pool[i % pool.len()]).collect()
}

// ---------------------------------------------------------------------------
// Time averages

/// `R`-quadrature for the time average. Above `2 pi R lambda = switch` each
/// Poisson term is split by the Hankel form into slowly varying amplitudes
/// times `e^{+-2 pi i lambda R}` and integrated by Filon's rule (quadratic
/// amplitude, exact oscillatory moments) on panels geometric in `R`; below it a
/// Gauss-Legendre rule resolves the oscillation directly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeRule {
    /// Filon panels per unit of `ln R`.
    pub panels_per_log: usize,
    pub window: Window,
}

/// Averaging weight on `[1, T]`. `Sharp` is `1/T`; `Fejer` is `(2/T)(1 - R/T)`,
/// which has the same limits on the spectrum but no boundary term at `R = T`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Sharp,
    Fejer,
}

impl Window {
    fn weight(self, r: f64, t_end: f64) -> f64 {
        match self {
            Window::Sharp => 1.0 / t_end,
            Window::Fejer => 2.0 * (1.0 - r / t_end) / t_end,
        }
    }
}

impl Default for TimeRule {
    fn default() -> Self {
        TimeRule {
            panels_per_log: 8,
            window: Window::Sharp,
        }
    }
}

impl TimeRule {
    pub fn doubled(&self) -> Self {
        TimeRule {
            panels_per_log: 2 * self.panels_per_log,
            ..*self
        }
    }

    pub fn with_window(self, window: Window) -> Self {
        TimeRule { window, ..self }
    }
}

/// `int_0^1 s^k e^{i theta s} ds` for `k = 0, 1, 2`.
fn filon_moments(theta: f64) -> [Complex64; 3] {
    if theta.abs() < 1.0 {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        let it = Complex64::new(0.0, theta);
        for (k, o) in out.iter_mut().enumerate() {
            let mut term = Complex64::new(1.0, 0.0);
            for j in 0..30 {
                *o += term / (k + j + 1) as f64;
                term = term * it / (j + 1) as f64;
            }
        }
        out
    } else {
        let e = Complex64::from_polar(1.0, theta);
        let it = Complex64::new(0.0, theta);
        let i0 = (e - 1.0) / it;
        let i1 = (e - i0) / it;
        let i2 = (e - 2.0 * i1) / it;
        [i0, i1, i2]
    }
}

/// `int_a^b p(R) e^{i omega R} dR`, `p` the quadratic through `(a, fm, b)` values.
fn filon_panel(a: f64, b: f64, f0: Complex64, fm: Complex64, f1: Complex64, omega: f64) -> Complex64 {
    let h = b - a;
    let m = filon_moments(omega * h);
    let c1 = -3.0 * f0 + 4.0 * fm - f1;
    let c2 = 2.0 * f0 - 4.0 * fm + 2.0 * f1;
    Complex64::from_polar(h, omega * a) * (f0 * m[0] + c1 * m[1] + c2 * m[2])
}

struct TermPlan {
    /// Filon nodes (panel ends and midpoints) on `[r_s, T]`.
    nodes: Vec<f64>,
    amp_plus: Vec<Complex64>,
    amp_minus: Vec<Complex64>,
    /// Gauss-Legendre nodes and weights on `[1, r_s]` with term values.
    gl: Vec<(f64, f64)>,
    lam: f64,
}

fn plan_term(n: usize, alpha: f64, lam: f64, t_end: f64, rule: TimeRule, mu_max: f64) -> TermPlan {
    let nu = n as f64 + alpha;
    let c = kernel_constant(alpha);
    let d = 2 * n as i32;
    let xs = 2.0 * bessel_switch(nu);
    let rs = (xs / (2.0 * PI * lam)).max(1.0).min(t_end);
    let phi = (0.5 * nu + 0.25) * PI;
    let mut nodes = Vec::new();
    let mut amp_plus = Vec::new();
    let mut amp_minus = Vec::new();
    if rs < t_end {
        let panels = ((rule.panels_per_log as f64 * (t_end / rs).ln()).ceil() as usize).max(1);
        let ratio = (t_end / rs).powf(1.0 / panels as f64);
        let end = |k: usize| if k == panels { t_end } else { rs * ratio.powi(k as i32) };
        for k in 0..=2 * panels {
            let r = if k % 2 == 0 { end(k / 2) } else { 0.5 * (end(k / 2) + end(k / 2 + 1)) };
            nodes.push(r);
            let x = 2.0 * PI * r * lam;
            let (p, q) = hankel_pq(nu, x);
            let base = rule.window.weight(r, t_end) * c * r.powi(d) * (r * lam).powf(-nu)
                / (2.0 * PI * (r * lam).sqrt());
            amp_plus.push(base * Complex64::new(p, q) * Complex64::from_polar(1.0, -phi));
            amp_minus.push(base * Complex64::new(p, -q) * Complex64::from_polar(1.0, phi));
        }
    }
    let mut gl = Vec::new();
    if rs > 1.0 {
        let (gx, gw) = gauss_legendre(16);
        let width = 1.0 / (mu_max + lam + 1.0);
        let panels = (((rs - 1.0) / width).ceil() as usize).max(1);
        let h = (rs - 1.0) / panels as f64;
        for p in 0..panels {
            let lo = 1.0 + p as f64 * h;
            for (xi, wi) in gx.iter().zip(&gw) {
                let r = lo + 0.5 * h * (xi + 1.0);
                let val = rule.window.weight(r, t_end)
                    * c
                    * r.powi(d)
                    * (2.0 * PI).powf(nu)
                    * jv_over_pow(nu, 2.0 * PI * r * lam);
                gl.push((r, 0.5 * h * wi * val));
            }
        }
    }
    TermPlan {
        nodes,
        amp_plus,
        amp_minus,
        gl,
        lam,
    }
}

fn term_average(plan: &TermPlan, mu: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for &(r, w) in &plan.gl {
        acc += Complex64::from_polar(w, 2.0 * PI * mu * r);
    }
    let wp = 2.0 * PI * (mu + plan.lam);
    let wm = 2.0 * PI * (mu - plan.lam);
    let k = plan.nodes.len();
    let mut i = 0;
    while i + 2 < k {
        let (a, b) = (plan.nodes[i], plan.nodes[i + 2]);
        acc += filon_panel(a, b, plan.amp_plus[i], plan.amp_plus[i + 1], plan.amp_plus[i + 2], wp);
        acc += filon_panel(a, b, plan.amp_minus[i], plan.amp_minus[i + 1], plan.amp_minus[i + 2], wm);
        i += 2;
    }
    acc
}

fn check_time(x0: &[f64], t_end: f64) -> Result<()> {
    if x0.is_empty() {
        return domain("base point x0 is empty");
    }
    if !(t_end > 1.0) {
        return domain(format!("averaging length T = {t_end} must exceed 1"));
    }
    Ok(())
}

/// `(1/T) int_1^T K_R^alpha((x0, x0)) e^{2 pi i mu R} dR` for every `mu` (or the
/// windowed analogue),
/// summing the Poisson terms `|m| <= M` after averaging each one.
pub fn time_averages(
    alpha: f64,
    x0: &[f64],
    mus: &[f64],
    t_end: f64,
    cutoff: LatticeCutoff,
    rule: TimeRule,
) -> Result<Vec<Complex64>> {
    check_time(x0, t_end)?;
    let n = x0.len();
    let y: Vec<f64> = x0.iter().chain(x0).copied().collect();
    let mut lams = Vec::new();
    let mm = cutoff.m as f64;
    for_lattice_ball(2 * n, mm * mm, &mut |m, _| {
        lams.push(y.iter().zip(m).map(|(a, &b)| (a - b as f64).powi(2)).sum::<f64>().sqrt());
    });
    if lams.iter().any(|&l| l < 1e-12) {
        return domain("(x0, x0) sits on the lattice");
    }
    let mu_max = mus.iter().fold(0.0f64, |a, m| a.max(m.abs()));
    let rows = par::map_slice(&lams, |&lam| {
        let plan = plan_term(n, alpha, lam, t_end, rule, mu_max);
        mus.iter().map(|&mu| term_average(&plan, mu)).collect::<Vec<_>>()
    });
    let mut out = vec![Complex64::new(0.0, 0.0); mus.len()];
    for row in rows {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Ok(out)
}

/// One time average and its self-reported error `|A(rule) - A(2 rule)|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeAverage {
    pub value: Complex64,
    pub error: f64,
}

pub fn time_average(
    alpha: f64,
    x0: &[f64],
    mu: f64,
    t_end: f64,
    cutoff: LatticeCutoff,
    rule: TimeRule,
) -> Result<TimeAverage> {
    let a = time_averages(alpha, x0, &[mu], t_end, cutoff, rule)?[0];
    let b = time_averages(alpha, x0, &[mu], t_end, cutoff, rule.doubled())?[0];
    Ok(TimeAverage {
        value: b,
        error: (a - b).norm(),
    })
}

/// The same average computed from the lattice side for `n = 1`: every lattice
/// point contributes `(1/T) int (1 - rho^2/R^2)^alpha e^{2 pi i mu R} dR` from
/// `max(1, rho)`, integrated after `R = rho + s^2`. Cost grows like `T^2`.
pub fn time_average_frequency(alpha: f64, x0: f64, mu: f64, t_end: f64, window: Window) -> Result<Complex64> {
    check_time(&[x0], t_end)?;
    let t2 = t_end * t_end;
    let mut bins = vec![0.0; t2.floor() as usize + 1];
    for_lattice_ball(2, t2, &mut |m, q| {
        bins[q as usize] += (2.0 * PI * x0 * (m[0] + m[1]) as f64).cos();
    });
    let (gx, gw) = gauss_legendre(16);
    let ks: Vec<usize> = (0..bins.len()).filter(|&k| bins[k] != 0.0).collect();
    let vals = par::map_slice(&ks, |&k| {
        let rho = (k as f64).sqrt();
        let amp = |r: f64| {
            let b = 1.0 - rho * rho / (r * r);
            if b > 0.0 {
                b.powf(alpha) * window.weight(r, t_end)
            } else {
                0.0
            }
        };
        let mut acc = Complex64::new(0.0, 0.0);
        if rho <= 1.0 {
            let panels = ((t_end - 1.0) * (2.0 * mu.abs() + 1.0)).ceil() as usize + 1;
            let h = (t_end - 1.0) / panels as f64;
            for p in 0..panels {
                let lo = 1.0 + p as f64 * h;
                for (xi, wi) in gx.iter().zip(&gw) {
                    let r = lo + 0.5 * h * (xi + 1.0);
                    acc += Complex64::from_polar(0.5 * h * wi * amp(r), 2.0 * PI * mu * r);
                }
            }
        } else {
            let smax = (t_end - rho).sqrt();
            let panels = (smax * smax * (2.0 * mu.abs() + 1.0) * 2.0).ceil() as usize + 2;
            let h = smax / panels as f64;
            for p in 0..panels {
                let lo = p as f64 * h;
                for (xi, wi) in gx.iter().zip(&gw) {
                    let s = lo + 0.5 * h * (xi + 1.0);
                    let r = rho + s * s;
                    acc += Complex64::from_polar(0.5 * h * wi * amp(r) * 2.0 * s, 2.0 * PI * mu * r);
                }
            }
        }
        acc * bins[k]
    });
    Ok(vals.into_iter().sum())
}

/// Frequencies and weights of the expanded Riesz product
/// `prod_j [1 + (e^{-i n pi} e^{2 pi i lambda_j R} + e^{i n pi} e^{-2 pi i lambda_j R})/2]`.
pub fn riesz_expansion(n: usize, lambdas: &[f64]) -> Vec<(f64, Complex64)> {
    let mut terms = vec![(0.0, Complex64::new(1.0, 0.0))];
    let phase = n as f64 * PI;
    for &l in lambdas {
        let mut next = Vec::with_capacity(3 * terms.len());
        for &(mu, c) in &terms {
            next.push((mu, c));
            next.push((mu + l, c * Complex64::from_polar(0.5, -phase)));
            next.push((mu - l, c * Complex64::from_polar(0.5, phase)));
        }
        terms = next;
    }
    terms
}

/// Average of `K_R(x0, x0) prod_j [...]` over `[1, T]` under `rule.window`.
pub fn riesz_product_average(
    alpha: f64,
    x0: &[f64],
    lambdas: &[f64],
    t_end: f64,
    cutoff: LatticeCutoff,
    rule: TimeRule,
) -> Result<Complex64> {
    if lambdas.len() > 8 {
        return domain("at most 8 Riesz factors");
    }
    let terms = riesz_expansion(x0.len(), lambdas);
    let mus: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let avgs = time_averages(alpha, x0, &mus, t_end, cutoff, rule)?;
    Ok(terms.iter().zip(avgs).map(|(t, a)| t.1 * a).sum())
}

/// Average of `prod_j [...]` alone over `[1, T]`, in closed form.
pub fn riesz_weight_average(n: usize, lambdas: &[f64], t_end: f64, window: Window) -> Complex64 {
    riesz_expansion(n, lambdas)
        .into_iter()
        .map(|(mu, c)| c * window_moment(2.0 * PI * mu, t_end, window))
        .sum()
}

/// `int_1^T w(R) e^{i w R} dR` for the window weight `w`.
fn window_moment(w: f64, t_end: f64, window: Window) -> Complex64 {
    let span = t_end - 1.0;
    let (i0, i1) = if (w * span).abs() < 1e-9 {
        (Complex64::new(span, 0.0), Complex64::new(0.5 * (t_end * t_end - 1.0), 0.0))
    } else {
        let iw = Complex64::new(0.0, w);
        let (e1, et) = (Complex64::from_polar(1.0, w), Complex64::from_polar(1.0, w * t_end));
        let i0 = (et - e1) / iw;
        (i0, (t_end * et - e1) / iw - i0 / iw)
    };
    match window {
        Window::Sharp => i0 / t_end,
        Window::Fejer => 2.0 * (i0 - i1 / t_end) / t_end,
    }
}

/// Limit of [`time_average`] at `mu = lambda_j` for a term of multiplicity 1:
/// `c_alpha / (2 pi lambda^{2n})` times `e^{i n pi}`, valid at `alpha = n - 1/2`.
pub fn resonance_limit(n: usize, lambda: f64) -> Complex64 {
    let alpha = n as f64 - 0.5;
    Complex64::from_polar(
        kernel_constant(alpha) / (2.0 * PI * lambda.powi(2 * n as i32)),
        n as f64 * PI,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_at_origin_matches_limit() {
        let (alpha, r) = (1.5, 3.0);
        let nu = 1.0 + alpha;
        let expect = kernel_constant(alpha) * r * r * PI.powf(nu) / gamma(nu + 1.0);
        assert!((kernel_br(alpha, r, &[0.0, 0.0]) - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn binned_and_direct_lattice_sums_agree() {
        let x0 = default_x0(1);
        let a = periodic_kernel_frequency(1.0, 5.5, &x0);
        let b = periodic_kernel_binned(1.0, 5.5, &x0);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn small_radius_keeps_only_origin() {
        assert_eq!(periodic_kernel_frequency(0.5, 0.9, &[0.3]), 1.0);
    }

    #[test]
    fn profile_matches_lattice_sum() {
        let x0 = default_x0(1);
        let d = diagonal_profile(0.5, 17.3);
        let a = eval_profile(&d, x0[0]);
        let b = periodic_kernel_frequency(0.5, 17.3, &x0);
        assert!((a - b).abs() < 1e-10);
    }
}
