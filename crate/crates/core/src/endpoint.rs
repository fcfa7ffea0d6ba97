//! Endpoint experiments at the critical index `alpha = n - 1/2`: the growth of
//! the square function on the `psi_N` family, the growth of `sup_R |K_R(x, x)|`,
//! and a finite-depth run of the periodized-bump construction of a divergent
//! pair.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{weak_quasinorm, ComplexField, GridSpec};
use crate::kernels::{for_lattice_ball, kernel_sq};
use crate::par;
use crate::quad::{gauss_legendre, linear_fit, Composite};
use crate::special::{phi_bump, theta, PhiBump};
use crate::Complex64;

// ---------------------------------------------------------------------------
// psi_N family

/// `psi_N(x) = N^n psi(N x)` with `hat psi(xi) = 1 - theta(|xi|/2)`: equal to 1 on
/// `|xi| <= 1` and supported in `|xi| <= 2`. Only `n = 1` is tabulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiNFamily {
    pub scales: Vec<u32>,
}

impl PsiNFamily {
    pub fn new(scales: Vec<u32>) -> Result<Self> {
        if scales.is_empty() || scales.iter().any(|&s| s == 0) {
            return domain("scales must be a nonempty list of positive integers");
        }
        if scales.windows(2).any(|w| w[0] >= w[1]) {
            return domain("scales must be strictly increasing");
        }
        Ok(PsiNFamily { scales })
    }

    pub fn dyadic(lo: u32, hi: u32) -> Result<Self> {
        let mut s = Vec::new();
        let mut v = lo.max(1);
        while v <= hi {
            s.push(v);
            v *= 2;
        }
        PsiNFamily::new(s)
    }

    pub fn psi_hat(xi: f64) -> f64 {
        1.0 - theta(0.5 * xi.abs())
    }

    pub fn psi_hat_n(scale: f64, xi: f64) -> f64 {
        Self::psi_hat(xi / scale)
    }

    /// `psi(x) = 2 int_0^2 hat psi(xi) cos(2 pi x xi) d xi`.
    pub fn psi(x: f64) -> f64 {
        let head = if x == 0.0 { 2.0 } else { (2.0 * PI * x).sin() / (PI * x) };
        let panels = (4.0 * x.abs()).ceil() as usize + 4;
        let rule = Composite::new(1.0, 2.0, panels, 16);
        head + 2.0 * rule.integrate(|xi| Self::psi_hat(xi) * (2.0 * PI * x * xi).cos())
    }

    pub fn psi_n(scale: f64, x: f64) -> f64 {
        scale * Self::psi(scale * x)
    }

    /// `||psi_N||_1` by quadrature over `|x| <= 64 / N`; beyond that `|psi_N|`
    /// is below double precision.
    pub fn l1_norm(scale: f64) -> f64 {
        let reach = 64.0 / scale;
        let rule = Composite::new(0.0, reach, 2048, 8);
        2.0 * rule.integrate(|x| Self::psi_n(scale, x).abs())
    }
}

// ---------------------------------------------------------------------------
// Blowup curve

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupConfig {
    pub alpha: f64,
    pub scales: Vec<u32>,
    /// Annulus `r0 <= |x| <= r1`.
    pub annulus: [f64; 2],
    /// Spatial sampling of the box `[-L/2, L/2)`.
    pub grid: GridSpec,
    /// Gauss-Legendre nodes per unit of `t`.
    pub t_order: usize,
}

impl BlowupConfig {
    pub fn standard() -> Self {
        BlowupConfig {
            alpha: 0.5,
            scales: vec![4, 8, 16, 32, 64, 128, 256],
            annulus: [0.25, 0.5],
            grid: GridSpec {
                n: 1,
                points: 8192,
                period: 2.0,
            },
            t_order: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.grid.n != 1 {
            return domain("the blowup experiment is implemented for n = 1");
        }
        PsiNFamily::new(self.scales.clone())?;
        let [r0, r1] = self.annulus;
        if !(r0 > 0.0 && r1 > r0 && r1 <= 0.5 * self.grid.period) {
            return domain(format!("annulus [{r0}, {r1}] must satisfy 0 < r0 < r1 <= L/2"));
        }
        let band = self.grid.points as f64 / (2.0 * self.grid.period);
        let top = *self.scales.last().unwrap() as f64;
        if top > band / 4.0 {
            return domain(format!(
                "scale N = {top} exceeds a quarter of the grid bandwidth {band}"
            ));
        }
        if self.t_order < 4 {
            return domain("t_order must be at least 4");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupRow {
    pub scale: u32,
    /// `min_{annulus} |(x, x)|^{2n} G(x)`.
    pub annulus_stat: f64,
    /// `min_{annulus} |(x, x)|^{4n} G(x)^2`.
    pub annulus_energy: f64,
    pub weak_halfnorm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub intercept: f64,
    pub slope: f64,
    pub correlation: f64,
}

impl Fit {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let (intercept, slope, correlation) = linear_fit(x, y);
        Fit {
            intercept,
            slope,
            correlation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupCurve {
    pub rows: Vec<BlowupRow>,
    pub psi_l1: f64,
    /// Fits against `ln N`.
    pub stat_fit: Fit,
    pub energy_fit: Fit,
    pub weak_fit: Fit,
}

impl BlowupCurve {
    /// Successive differences of the annulus statistic.
    pub fn increments(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].annulus_stat - w[0].annulus_stat).collect()
    }

    pub fn energy_increments(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| w[1].annulus_energy - w[0].annulus_energy).collect()
    }
}

/// `max/min - 1` over a list of positive increments, `inf` if any is `<= 0`.
pub fn increment_spread(inc: &[f64]) -> f64 {
    if inc.is_empty() || inc.iter().any(|&v| v <= 0.0) {
        return f64::INFINITY;
    }
    let hi = inc.iter().cloned().fold(f64::MIN, f64::max);
    let lo = inc.iter().cloned().fold(f64::MAX, f64::min);
    hi / lo - 1.0
}

/// `G(x)^2 = int_1^N |K_t((x, x))|^2 dt/t` for every scale, at one `|x|`.
///
/// For `t <= N` the symbol of `K_t` lives where `hat psi_N (x) hat psi_N = 1`, so
/// `K_t * (psi_N (x) psi_N) = K_t` and only the closed-form kernel enters.
/// Panels are unit intervals in `t`, so the rule for `[1, N]` is nested in the
/// rule for `[1, 2N]`.
fn band_energy(alpha: f64, x: f64, scales: &[u32], nodes: &[f64], weights: &[f64]) -> Vec<f64> {
    let top = *scales.last().unwrap();
    let mut out = Vec::with_capacity(scales.len());
    let mut acc = 0.0;
    let mut next = 0;
    while next < scales.len() && scales[next] <= 1 {
        out.push(0.0);
        next += 1;
    }
    for k in 1..top {
        let lo = k as f64;
        for (xi, wi) in nodes.iter().zip(weights) {
            let t = lo + 0.5 * (xi + 1.0);
            let v = kernel_sq(alpha, t, &[x], &[x]);
            acc += 0.5 * wi * v * v / t;
        }
        while next < scales.len() && scales[next] == k + 1 {
            out.push(acc);
            next += 1;
        }
    }
    out
}

/// Square function of `(psi_N, psi_N) / ||psi||_1^2` restricted to the band
/// `[1, N]`, on the box grid, one field per scale.
pub fn band_square_functions(cfg: &BlowupConfig) -> Result<(Vec<ComplexField>, f64)> {
    cfg.validate()?;
    let spec = cfg.grid;
    let (nodes, weights) = gauss_legendre(cfg.t_order);
    let h = spec.spacing();
    let half = spec.points / 2;
    // |x| takes the values j h, j = 0..=half
    let profiles = par::map_range(half + 1, |j| band_energy(cfg.alpha, j as f64 * h, &cfg.scales, &nodes, &weights));
    let l1 = PsiNFamily::l1_norm(1.0);
    let norm = l1 * l1;
    let fields = (0..cfg.scales.len())
        .map(|s| {
            let values = (0..spec.points)
                .map(|i| {
                    let j = (i as i64 - half as i64).unsigned_abs() as usize;
                    Complex64::new(profiles[j][s].sqrt() / norm, 0.0)
                })
                .collect();
            ComplexField { spec, values }
        })
        .collect();
    Ok((fields, l1))
}

pub fn blowup_curve(cfg: &BlowupConfig) -> Result<BlowupCurve> {
    let (fields, psi_l1) = band_square_functions(cfg)?;
    let spec = cfg.grid;
    let n = spec.n as i32;
    let [r0, r1] = cfg.annulus;
    let mut rows = Vec::new();
    for (field, &scale) in fields.iter().zip(&cfg.scales) {
        let mut stat = f64::INFINITY;
        for (i, v) in field.values.iter().enumerate() {
            let x = spec.coord(i).abs();
            if x >= r0 && x <= r1 {
                let y = 2f64.sqrt() * x;
                stat = stat.min(y.powi(2 * n) * v.re);
            }
        }
        if !stat.is_finite() {
            return domain("the annulus contains no grid nodes");
        }
        rows.push(BlowupRow {
            scale,
            annulus_stat: stat,
            annulus_energy: stat * stat,
            weak_halfnorm: weak_quasinorm(field, 0.5)?,
        });
    }
    let ln: Vec<f64> = rows.iter().map(|r| (r.scale as f64).ln()).collect();
    let col = |f: fn(&BlowupRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    Ok(BlowupCurve {
        stat_fit: Fit::new(&ln, &col(|r| r.annulus_stat)),
        energy_fit: Fit::new(&ln, &col(|r| r.annulus_energy)),
        weak_fit: Fit::new(&ln, &col(|r| r.weak_halfnorm)),
        rows,
        psi_l1,
    })
}

/// Weak `L^{1/2}` quasinorm of the band square function for one scale.
pub fn weak_halfnorm_of_g(alpha: f64, scale: u32, grid: GridSpec) -> Result<f64> {
    let cfg = BlowupConfig {
        alpha,
        scales: vec![scale],
        grid,
        ..BlowupConfig::standard()
    };
    let (fields, _) = band_square_functions(&cfg)?;
    weak_quasinorm(&fields[0], 0.5)
}

// ---------------------------------------------------------------------------
// sup_R |K_R(x, x)|

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupRow {
    pub sample: usize,
    pub r: f64,
    pub value: f64,
    pub running_max: f64,
}

/// Lattice-side `K_R^{n-1/2}((x, x))` over the dilations `r_values` (increasing),
/// for every sample point, with the running maximum of `|K_R|`.
pub fn dirac_kernel_sup(xs: &[Vec<f64>], r_values: &[f64]) -> Result<Vec<SupRow>> {
    if r_values.is_empty() || r_values.windows(2).any(|w| w[0] >= w[1]) || r_values[0] <= 0.0 {
        return domain("dilations must be positive and increasing");
    }
    let top = *r_values.last().unwrap();
    let mut out = Vec::new();
    for (sample, x) in xs.iter().enumerate() {
        if x.is_empty() {
            return domain("sample point is empty");
        }
        let n = x.len();
        let alpha = n as f64 - 0.5;
        let mut bins = vec![0.0; (top * top).floor() as usize + 1];
        for_lattice_ball(2 * n, top * top, &mut |m, q| {
            let phase: f64 = (0..n).map(|a| x[a] * (m[a] + m[a + n]) as f64).sum();
            bins[q as usize] += (2.0 * PI * phase).cos();
        });
        let occupied: Vec<(f64, f64)> = bins
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != 0.0)
            .map(|(q, &w)| (q as f64, w))
            .collect();
        let values = par::map_slice(r_values, |&r| {
            let r2 = r * r;
            occupied
                .iter()
                .take_while(|(q, _)| *q < r2)
                .map(|(q, w)| w * (1.0 - q / r2).powf(alpha))
                .sum::<f64>()
        });
        let mut run = 0.0f64;
        for (&r, v) in r_values.iter().zip(values) {
            run = run.max(v.abs());
            out.push(SupRow {
                sample,
                r,
                value: v,
                running_max: run,
            });
        }
    }
    Ok(out)
}

/// Slope of `ln(running max)` against `ln R_max` at the given checkpoints.
pub fn sup_growth_exponent(rows: &[SupRow], sample: usize, checkpoints: &[f64]) -> Fit {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for &c in checkpoints {
        if let Some(row) = rows.iter().filter(|r| r.sample == sample && r.r <= c).last() {
            lx.push(c.ln());
            ly.push(row.running_max.ln());
        }
    }
    Fit::new(&lx, &ly)
}

// ---------------------------------------------------------------------------
// Divergent construction, n = 1, on the unit torus

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionConfig {
    /// Deepest level `K_max`, at most 3.
    pub depth: usize,
    /// Cells of the unit torus.
    pub points: usize,
    /// Largest dilation tried by the doubling scan.
    pub r_cap: f64,
    /// Sampled dilations per octave when taking `sup_R`.
    pub samples_per_octave: usize,
    /// Width of the bump standing in for the Dirac mass; defaults to `1/(4 points)`.
    pub eps0: Option<f64>,
}

impl Default for ConstructionConfig {
    fn default() -> Self {
        ConstructionConfig {
            depth: 2,
            points: 512,
            r_cap: 256.0,
            samples_per_octave: 64,
            eps0: None,
        }
    }
}

impl ConstructionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.depth) {
            return domain(format!("depth must be in 1..=3, got {}", self.depth));
        }
        if self.points < 16 {
            return domain("at least 16 cells are needed");
        }
        if !(self.r_cap >= 2.0) {
            return domain("r_cap must be at least 2");
        }
        if self.samples_per_octave == 0 {
            return domain("samples_per_octave must be positive");
        }
        if let Some(e) = self.eps0 {
            if !(e > 0.0) {
                return domain("eps0 must be positive");
            }
        }
        Ok(())
    }

    fn eps0(&self) -> f64 {
        self.eps0.unwrap_or(1.0 / (4.0 * self.points as f64))
    }
}

/// Measured constants of the construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Lipschitz constant of `Phi`.
    pub b: f64,
    /// `sup_eps eps^n sum_m |Phi(eps m)|` over the sampled and used `eps`.
    pub c_n: f64,
    /// `sup_{x in Q, R <= 10} |B_R(delta_0)(x)|`.
    pub c1: f64,
    /// `sup_{x in E, 10 < R <= r_cap} |B_R(delta_0)(x)|`.
    pub c2: f64,
}

impl Constants {
    pub fn c(&self) -> f64 {
        self.c1.max(self.c2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Check {
    fn le(name: &str, lhs: f64, rhs: f64) -> Self {
        Check {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs <= rhs,
        }
    }

    fn ge(name: &str, lhs: f64, rhs: f64) -> Self {
        Check {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs >= rhs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub k: usize,
    pub r: f64,
    pub eps: f64,
    pub delta: f64,
    pub a_k: f64,
    /// `|E_k|`, cell count times cell volume.
    pub measure: f64,
    /// `min_{x in E_k} sup_{R <= R_k} |B_R(f, phi_eps0)(x)|`, filled at the end.
    pub achieved: f64,
    pub checks: Vec<Check>,
}

/// A level whose set `E_k` stayed below measure `4/5 - 1/k` for every
/// `R_k <= r_cap`: `top` is the largest value of
/// `sup_R |B_R(2^-k delta_0, delta_0)|` over `E`, against `A_k + k + 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub k: usize,
    pub r_cap: f64,
    pub measure: f64,
    pub floor: f64,
    pub top: f64,
    pub threshold: f64,
    pub a_k: f64,
    pub c: f64,
    pub c_n: f64,
    pub b: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Construction {
    pub constants: Constants,
    /// Completed levels, starting with the trivial level 1.
    pub levels: Vec<Level>,
    /// The level at which the scan for `R_k` failed, if any.
    pub stopped: Option<Stop>,
    /// `E_k` as cell masks, one per level.
    pub masks: Vec<Vec<bool>>,
    /// `f = sum_{s <= K} 2^{-s} (phi_{eps_s} - phi_{delta_s})` on the cells.
    pub witness: ComplexField,
}

/// Cache of `Phi` on `eps * m` for `|m| <= reach`.
struct PhiTable {
    values: Vec<f64>,
}

impl PhiTable {
    fn new(phi: &PhiBump, eps: f64, reach: i64) -> Self {
        PhiTable {
            values: par::map_range(reach as usize + 1, |m| phi.value(eps * m as f64)),
        }
    }

    fn at(&self, m: i64) -> f64 {
        self.values.get(m.unsigned_abs() as usize).copied().unwrap_or(0.0)
    }
}

fn in_e(x: f64) -> bool {
    (0.1..0.5).contains(&x) || (-0.5..=-0.1).contains(&x)
}

/// `D(s) = sum_{m1 + m2 = s, |m| < R} (1 - |m|^2/R^2)^{1/2} a(m1) b(m2)`, offset `2 floor R`.
fn weighted_profile(r: f64, a: &dyn Fn(i64) -> f64, b: &dyn Fn(i64) -> f64) -> Vec<f64> {
    let top = r.floor() as i64;
    let r2 = r * r;
    let mut d = vec![0.0; (4 * top + 1) as usize];
    for m1 in -top..=top {
        let am = a(m1);
        if am == 0.0 {
            continue;
        }
        let t2 = ((r2 - (m1 * m1) as f64).max(0.0).sqrt() + 1e-9).floor() as i64;
        for m2 in -t2..=t2 {
            let w = 1.0 - ((m1 * m1 + m2 * m2) as f64) / r2;
            if w > 0.0 {
                d[(m1 + m2 + 2 * top) as usize] += w.sqrt() * am * b(m2);
            }
        }
    }
    d
}

/// Real part of `sum_s D(s) e^{2 pi i x s}` at every sample; the profiles used
/// here are symmetric, so this is the whole value.
fn eval_at(d: &[f64], xs: &[f64]) -> Vec<f64> {
    let top = (d.len() as i64 - 1) / 4;
    xs.iter()
        .map(|&x| {
            let mut acc = d[(2 * top) as usize];
            for k in 1..=2 * top {
                acc += (d[(2 * top + k) as usize] + d[(2 * top - k) as usize]) * (2.0 * PI * x * k as f64).cos();
            }
            acc
        })
        .collect()
}

/// Dilations sampled for `sup_{R <= top}`: a log grid from 1 with `per` points
/// per octave, plus `top` itself. `R < 1` only sees `m = 0`.
fn dilation_samples(top: f64, per: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let r = 2f64.powf(k as f64 / per as f64);
        if r >= top {
            break;
        }
        out.push(r);
        k += 1;
    }
    out.push(top);
    out
}

/// `sup_{R in samples} |B_R(a, b)(x)|` on the sample points.
fn sup_over_r(samples: &[f64], xs: &[f64], a: &dyn Fn(i64) -> f64, b: &dyn Fn(i64) -> f64) -> Vec<f64> {
    let mut best = vec![0.0f64; xs.len()];
    let a0 = a(0) * b(0);
    for v in best.iter_mut() {
        *v = a0.abs();
    }
    for &r in samples {
        let d = weighted_profile(r, a, b);
        for (bv, v) in best.iter_mut().zip(eval_at(&d, xs)) {
            *bv = bv.max(v.abs());
        }
    }
    best
}

/// Linear `B_R^{1/2}(delta_0)(x) = sum_{|m| < R} (1 - m^2/R^2)^{1/2} e^{2 pi i x m}`.
fn linear_dirac(r: f64, x: f64) -> f64 {
    let top = r.floor() as i64;
    let mut acc = 0.0;
    for m in -top..=top {
        let w = 1.0 - (m * m) as f64 / (r * r);
        if w > 0.0 {
            acc += w.sqrt() * (2.0 * PI * x * m as f64).cos();
        }
    }
    acc
}

/// `sum_{|(m1, m2)| <= R} |m1|`.
fn lattice_m1_sum(r: f64) -> f64 {
    let mut acc = 0.0;
    for_lattice_ball(2, r * r, &mut |m, _| acc += m[0].abs() as f64);
    acc
}

/// Largest `delta <= cap` with `B delta S <= 1`, checked in floating point.
fn lipschitz_delta(b: f64, s: f64, cap: f64) -> f64 {
    if s == 0.0 {
        return cap;
    }
    let mut d = (1.0 / (b * s)).min(cap);
    while b * d * s > 1.0 {
        d = f64::from_bits(d.to_bits() - 1);
    }
    d
}

/// Step I of the construction for `n = 1`, run level by level up to
/// `cfg.depth`. Every inequality the recipe relies on is evaluated as stated and
/// reported; the run stops at the first level whose set `E_k` cannot reach
/// measure `4/5 - 1/k` within `r_cap` and records it in `stopped`.
pub fn construct_divergent(cfg: &ConstructionConfig) -> Result<Construction> {
    cfg.validate()?;
    let phi = phi_bump(1);
    let spec = GridSpec::new(1, cfg.points, 1.0)?;
    let xs: Vec<f64> = (0..cfg.points).map(|i| spec.coord(i)).collect();
    let e_idx: Vec<usize> = (0..cfg.points).filter(|&i| in_e(xs[i])).collect();
    let e_xs: Vec<f64> = e_idx.iter().map(|&i| xs[i]).collect();
    let cell = spec.cell_volume();

    let b = phi.lipschitz();
    let mut c_n = 0.0f64;
    for k in 0..=6 {
        let eps = 0.5f64.powi(k);
        c_n = c_n.max(eps * phi.coefficient_l1(eps));
    }
    let small: Vec<f64> = dilation_samples(10.0, cfg.samples_per_octave);
    let c1 = par::map_slice(&xs, |&x| small.iter().map(|&r| linear_dirac(r, x).abs()).fold(1.0, f64::max))
        .into_iter()
        .fold(0.0, f64::max);
    let large: Vec<f64> = dilation_samples(cfg.r_cap, cfg.samples_per_octave)
        .into_iter()
        .filter(|&r| r > 10.0)
        .collect();
    let c2 = par::map_slice(&e_xs, |&x| large.iter().map(|&r| linear_dirac(r, x).abs()).fold(0.0, f64::max))
        .into_iter()
        .fold(0.0, f64::max);
    let mut constants = Constants { b, c_n, c1, c2 };

    let mut levels = vec![Level {
        k: 1,
        r: 1.0,
        eps: 1.0,
        delta: 1.0,
        a_k: 0.0,
        measure: 0.0,
        achieved: 0.0,
        checks: Vec::new(),
    }];
    let mut masks = vec![vec![false; cfg.points]];
    let mut stopped = None;

    for k in 2..=cfg.depth {
        let prev = levels.last().unwrap().clone();
        let s_prev = lattice_m1_sum(prev.r);
        let delta = lipschitz_delta(b, s_prev, prev.delta);
        constants.c_n = constants.c_n.max(delta * phi.coefficient_l1(delta));
        let c = constants.c();
        let tail: f64 = levels
            .iter()
            .map(|l| 0.5f64.powi(l.k as i32) * (1.0 / l.eps + 1.0 / l.delta))
            .sum();
        let a_k = c * constants.c_n * (0.5f64.powi(k as i32) / delta + tail);
        let threshold = a_k + k as f64 + 2.0;
        let floor = 0.8 - 1.0 / k as f64;
        let scale = 0.5f64.powi(k as i32);

        // doubling scan for R_k
        let one = |_: i64| 1.0;
        let mut r_k = None;
        let mut best = vec![0.0f64; e_xs.len()];
        let mut covered = 0.0;
        let mut r = prev.r;
        while 2.0 * r <= cfg.r_cap {
            let lo = r;
            r *= 2.0;
            let samples: Vec<f64> = dilation_samples(r, cfg.samples_per_octave)
                .into_iter()
                .filter(|&s| s > lo || lo <= 1.0)
                .collect();
            for (bv, v) in best.iter_mut().zip(sup_over_r(&samples, &e_xs, &one, &one)) {
                *bv = bv.max(scale * v);
            }
            let count = best.iter().filter(|&&v| v > threshold).count();
            covered = count as f64 * cell;
            if covered >= floor {
                r_k = Some(r);
                break;
            }
        }
        let Some(r_k) = r_k else {
            stopped = Some(Stop {
                k,
                r_cap: cfg.r_cap,
                measure: covered,
                floor,
                top: best.iter().cloned().fold(0.0, f64::max),
                threshold,
                a_k,
                c,
                c_n: constants.c_n,
                b,
                delta,
            });
            break;
        };
        let mask: Vec<bool> = {
            let mut m = vec![false; cfg.points];
            for (&i, &v) in e_idx.iter().zip(&best) {
                m[i] = v > threshold;
            }
            m
        };

        // eps_k from the closeness condition
        let reach = r_k.ceil() as i64 + 1;
        let mut weights = vec![0.0; reach as usize + 1];
        for_lattice_ball(2, r_k * r_k, &mut |m, q| {
            let w = 1.0 - q as f64 / (r_k * r_k);
            if w > 0.0 {
                weights[m[0].unsigned_abs() as usize] += w.sqrt();
            }
        });
        let closeness = |eps: f64| -> f64 {
            let t = PhiTable::new(phi, eps, reach);
            scale * (0..=reach).map(|m| weights[m as usize] * (1.0 - t.at(m)).abs()).sum::<f64>()
        };
        let mut eps = delta;
        let mut close = closeness(eps);
        let mut halvings = 0;
        while close > 1.0 {
            eps *= 0.5;
            close = closeness(eps);
            halvings += 1;
            if halvings > 60 {
                return Err(Error::Search {
                    level: k,
                    reason: format!("no eps_{k} <= delta_{k} makes the closeness sum at most 1"),
                });
            }
        }
        constants.c_n = constants.c_n.max(eps * phi.coefficient_l1(eps));

        let samples = dilation_samples(r_k, cfg.samples_per_octave);
        let mut checks = vec![
            Check::le("lipschitz: B delta_k sum |m1| <= 1", b * delta * s_prev, 1.0),
            Check::le("closeness: sum 2^-k w |1 - Phi(eps_k m1)| <= 1", close, 1.0),
            Check::le("eps_k <= delta_k", eps, delta),
        ];

        // smaller: crude bound A_k against the measured sup over E
        let tables: Vec<(f64, PhiTable, PhiTable)> = levels
            .iter()
            .map(|l| {
                (
                    0.5f64.powi(l.k as i32),
                    PhiTable::new(phi, l.eps, reach),
                    PhiTable::new(phi, l.delta, reach),
                )
            })
            .collect();
        let dk = PhiTable::new(phi, delta, reach);
        let small_coef = |m: i64| -> f64 {
            -scale * dk.at(m) + tables.iter().map(|(w, e, d)| w * (e.at(m) - d.at(m))).sum::<f64>()
        };
        let smaller = sup_over_r(&samples, &e_xs, &small_coef, &one)
            .into_iter()
            .fold(0.0, f64::max);
        checks.push(Check::le("smaller: sup_E sup_R |B_R(lower terms, delta_0)| <= A_k", smaller, a_k));

        // equal: the eps_k bump keeps the level on E_k
        let ek = PhiTable::new(phi, eps, reach);
        let eq_coef = |m: i64| scale * ek.at(m);
        let on_mask: Vec<f64> = e_idx.iter().zip(&e_xs).filter(|(i, _)| mask[**i]).map(|(_, &x)| x).collect();
        let equal = sup_over_r(&samples, &on_mask, &eq_coef, &one)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        checks.push(Check::ge("equal: inf_{E_k} sup_R |B_R(2^-k phi_eps_k, delta_0)| >= A_k + k + 1", equal, a_k + k as f64 + 1.0));

        // greater: the next delta from the same Lipschitz rule
        let s_k = lattice_m1_sum(r_k);
        let next_delta = lipschitz_delta(b, s_k, delta);
        checks.push(Check::le("greater: B delta_{k+1} sum |m1| <= 1", b * next_delta * s_k, 1.0));

        levels.push(Level {
            k,
            r: r_k,
            eps,
            delta,
            a_k,
            measure: covered,
            achieved: 0.0,
            checks,
        });
        masks.push(mask);
    }

    // witness and achieved levels
    let top_r = levels.last().unwrap().r;
    let reach = (top_r.ceil() as i64 + 1).max(cfg.points as i64 / 2);
    let parts: Vec<(f64, PhiTable, PhiTable)> = levels
        .iter()
        .map(|l| {
            (
                0.5f64.powi(l.k as i32),
                PhiTable::new(phi, l.eps, reach),
                PhiTable::new(phi, l.delta, reach),
            )
        })
        .collect();
    let f_hat = |m: i64| -> f64 { parts.iter().map(|(w, e, d)| w * (e.at(m) - d.at(m))).sum() };
    let g_tab = PhiTable::new(phi, cfg.eps0(), reach);
    let g_hat = |m: i64| g_tab.at(m);
    for (level, mask) in levels.iter_mut().zip(&masks).skip(1) {
        let on_mask: Vec<f64> = (0..cfg.points).filter(|&i| mask[i]).map(|i| xs[i]).collect();
        let samples = dilation_samples(level.r, cfg.samples_per_octave);
        level.achieved = sup_over_r(&samples, &on_mask, &f_hat, &g_hat)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        let k = level.k as f64;
        level.checks.push(Check::ge("target: inf_{E_k} sup_R |B_R(f, phi_eps0)| >= k", level.achieved, k));
    }
    let half = cfg.points as i64 / 2;
    let witness_values = xs
        .iter()
        .map(|&x| {
            let mut acc = f_hat(0);
            for m in 1..half {
                acc += 2.0 * f_hat(m) * (2.0 * PI * x * m as f64).cos();
            }
            Complex64::new(acc, 0.0)
        })
        .collect();
    Ok(Construction {
        constants,
        levels,
        stopped,
        masks,
        witness: ComplexField {
            spec,
            values: witness_values,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_hat_plateau_and_support() {
        assert_eq!(PsiNFamily::psi_hat(0.9), 1.0);
        assert_eq!(PsiNFamily::psi_hat(2.0), 0.0);
        assert_eq!(PsiNFamily::psi_hat_n(8.0, 7.5), 1.0);
    }

    #[test]
    fn depth_one_is_trivial() {
        let c = construct_divergent(&ConstructionConfig {
            depth: 1,
            points: 64,
            r_cap: 16.0,
            samples_per_octave: 4,
            eps0: None,
        })
        .unwrap();
        assert_eq!(c.levels.len(), 1);
        assert_eq!((c.levels[0].r, c.levels[0].eps, c.levels[0].delta), (1.0, 1.0, 1.0));
        assert!(c.masks[0].iter().all(|m| !m));
        assert!(c.witness.values.iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn lipschitz_delta_respects_the_product() {
        let d = lipschitz_delta(3.7, 11.0, 1.0);
        assert!(3.7 * d * 11.0 <= 1.0);
    }

    #[test]
    fn empty_band_gives_zero() {
        let (nodes, weights) = gauss_legendre(8);
        let v = band_energy(0.5, 0.3, &[1, 2], &nodes, &weights);
        assert_eq!(v[0], 0.0);
        assert!(v[1] > 0.0);
    }
}
