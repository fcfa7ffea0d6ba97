//! Bilinear means, maximal and square functions, the linearized square
//! function, and the Stein-identity factorization of the decomposition pieces.
//!
//! A bilinear multiplier `m(xi, eta)` acts by
//! `T(f, g)(x) = sum m(xi, eta) f^(xi) g^(eta) e^{2 pi i x.(xi + eta)}`.
//! Two engines evaluate it: the reference one builds `m (f^ ⊗ g^)` on the
//! `2n`-grid, transforms back and takes the diagonal; the pair engine folds
//! the same sum into the `n`-dimensional spectrum of `xi + eta` (wrapped
//! mod `N`, exactly as the diagonal trace wraps) and needs one `n`-dim
//! transform. Both agree to rounding.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::grid::{check_same, dft, idft, restrict_diagonal, ComplexField, GridSpec, Spectrum};
use crate::linear::{ball_averages, pow_plus};
use crate::par;
use crate::special::{psi, psi0, psi0_2, stein_constant_dz};
use crate::symbols::{br_ab, cpow_plus, log_plus, resolve_k, sq_ab, Family, Order, SymbolPiece};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Fft2n,
    Pairs,
}

/// Radial bilinear symbol as a function of `(|xi|^2, |eta|^2)`.
pub trait Radial2: Fn(f64, f64) -> Complex64 + Sync + Send {}
impl<T: Fn(f64, f64) -> Complex64 + Sync + Send> Radial2 for T {}

/// Apply `m(|xi|^2, |eta|^2)`; `reach_sq` bounds the support: the symbol must
/// vanish whenever `|xi|^2 + |eta|^2 > reach_sq`.
pub fn apply_bilinear<M: Radial2>(
    engine: Engine,
    fh: &Spectrum,
    gh: &Spectrum,
    reach_sq: f64,
    symbol: M,
) -> Result<ComplexField> {
    check_same(&fh.spec, &gh.spec)?;
    match engine {
        Engine::Fft2n => Ok(apply_fft2n(fh, gh, symbol)),
        Engine::Pairs => Ok(apply_pairs(fh, gh, reach_sq, symbol)),
    }
}

fn apply_fft2n<M: Radial2>(fh: &Spectrum, gh: &Spectrum, symbol: M) -> ComplexField {
    let spec = fh.spec;
    let q = spec.frequency_norms_sq();
    let len = spec.len();
    let mut coeffs = vec![Complex64::new(0.0, 0.0); len * len];
    par::for_each_chunk(&mut coeffs, len, |i, row| {
        let a = fh.coeffs[i];
        if a == Complex64::new(0.0, 0.0) {
            return;
        }
        for (k, out) in row.iter_mut().enumerate() {
            let b = gh.coeffs[k];
            if b != Complex64::new(0.0, 0.0) {
                *out = symbol(q[i], q[k]) * a * b;
            }
        }
    });
    let full = idft(&Spectrum {
        spec: spec.doubled(),
        coeffs,
    });
    restrict_diagonal(&full).expect("doubled grid has matching blocks")
}

fn apply_pairs<M: Radial2>(fh: &Spectrum, gh: &Spectrum, reach_sq: f64, symbol: M) -> ComplexField {
    let spec = fh.spec;
    let q = spec.frequency_norms_sq();
    let active = |s: &Spectrum| -> Vec<usize> {
        (0..spec.len())
            .filter(|&i| q[i] <= reach_sq && s.coeffs[i] != Complex64::new(0.0, 0.0))
            .collect()
    };
    let fa = active(fh);
    let ga = active(gh);
    let nn = spec.points as i64;
    let wave: Vec<Vec<i64>> = (0..spec.len()).map(|i| spec.wavevector(i)).collect();
    // Partial sums per f-index, folded in order so the result is deterministic.
    let partial: Vec<Vec<(usize, Complex64)>> = par::map_slice(&fa, |&i| {
        let mut out = Vec::new();
        let mut sum_k = vec![0i64; spec.n];
        let mut multi = vec![0usize; spec.n];
        for &k in &ga {
            if q[i] + q[k] > reach_sq {
                continue;
            }
            let m = symbol(q[i], q[k]);
            if m == Complex64::new(0.0, 0.0) {
                continue;
            }
            for a in 0..spec.n {
                sum_k[a] = wave[i][a] + wave[k][a];
                multi[a] = sum_k[a].rem_euclid(nn) as usize;
            }
            out.push((spec.flat_index(&multi), m * fh.coeffs[i] * gh.coeffs[k]));
        }
        out
    });
    let mut d = vec![Complex64::new(0.0, 0.0); spec.len()];
    for row in partial {
        for (idx, v) in row {
            d[idx] += v;
        }
    }
    let scale = (spec.len() as f64).sqrt().recip();
    idft(&Spectrum { spec, coeffs: d }).scaled(Complex64::new(scale, 0.0))
}

/// `B_R^z(f, g)`.
pub fn br_mean(order: Order, r: f64, f: &ComplexField, g: &ComplexField) -> Result<ComplexField> {
    br_mean_with(Engine::Fft2n, order, r, f, g)
}

pub fn br_mean_with(
    engine: Engine,
    order: Order,
    r: f64,
    f: &ComplexField,
    g: &ComplexField,
) -> Result<ComplexField> {
    check_positive(r)?;
    check_same(&f.spec, &g.spec)?;
    let z = order.z;
    let r2 = r * r;
    apply_bilinear(engine, &dft(f), &dft(g), r2, move |qa, qb| br_ab(z, qa / r2, qb / r2))
}

fn check_positive(r: f64) -> Result<()> {
    if !(r > 0.0) {
        return domain(format!("dilation R = {r} must be positive"));
    }
    Ok(())
}

/// Dilation values standing in for `R > 0`: midpoints of `count` equal cells in
/// `log R` spanning `[lo, hi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationGrid {
    pub values: Vec<f64>,
    pub log_step: f64,
}

impl DilationGrid {
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || count == 0 {
            return domain(format!("dilation grid needs 0 < lo < hi and count > 0, got [{lo}, {hi}] x {count}"));
        }
        let step = (hi / lo).ln() / count as f64;
        let values = (0..count)
            .map(|k| lo * ((k as f64 + 0.5) * step).exp())
            .collect();
        Ok(DilationGrid {
            values,
            log_step: step,
        })
    }

    /// Explicit values; `log_step` is the mean log spacing.
    pub fn from_values(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(f64::total_cmp);
        if values.is_empty() || values[0] <= 0.0 || values.windows(2).any(|w| w[0] >= w[1]) {
            return domain("dilation values must be positive and distinct");
        }
        let step = if values.len() > 1 {
            (values[values.len() - 1] / values[0]).ln() / (values.len() - 1) as f64
        } else {
            1.0
        };
        Ok(DilationGrid {
            values,
            log_step: step,
        })
    }

    /// Default span: `1/L` (the first lattice shell; frequencies are `k/L`
    /// with no `2 pi`) up to `N/(4L)`, 64 values.
    pub fn default_for(spec: &GridSpec) -> Self {
        let lo = 1.0 / spec.period;
        let hi = spec.points as f64 / (4.0 * spec.period);
        DilationGrid::log_spaced(lo, hi, 64).expect("grid spans a positive band")
    }

    /// Same span with twice as many cells.
    pub fn refined(&self) -> Self {
        let m = self.values.len();
        let lo = self.values[0] * (-0.5 * self.log_step).exp();
        let hi = lo * (self.log_step * m as f64).exp();
        DilationGrid::log_spaced(lo, hi, 2 * m).expect("refining a valid grid")
    }
}

/// `max_R |B_R^z(f, g)|` over the grid.
pub fn br_maximal(order: Order, grid: &DilationGrid, f: &ComplexField, g: &ComplexField) -> Result<ComplexField> {
    br_maximal_with(Engine::Fft2n, order, grid, f, g)
}

pub fn br_maximal_with(
    engine: Engine,
    order: Order,
    grid: &DilationGrid,
    f: &ComplexField,
    g: &ComplexField,
) -> Result<ComplexField> {
    check_same(&f.spec, &g.spec)?;
    let (fh, gh) = (dft(f), dft(g));
    let z = order.z;
    let rows = par::map_slice(&grid.values, |&r| {
        let r2 = r * r;
        apply_bilinear(engine, &fh, &gh, r2, move |qa, qb| br_ab(z, qa / r2, qb / r2))
    });
    let mut best = vec![0.0f64; f.spec.len()];
    for row in rows {
        for (b, v) in best.iter_mut().zip(&row?.values) {
            *b = b.max(v.norm());
        }
    }
    ComplexField::new(f.spec, best.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
}

/// `K_R^alpha * (f ⊗ g)(x, x)` for each `R` of the grid.
pub fn sq_integrands(
    engine: Engine,
    alpha: Complex64,
    grid: &DilationGrid,
    f: &ComplexField,
    g: &ComplexField,
) -> Result<Vec<ComplexField>> {
    check_same(&f.spec, &g.spec)?;
    let (fh, gh) = (dft(f), dft(g));
    par::map_slice(&grid.values, |&r| {
        let r2 = r * r;
        apply_bilinear(engine, &fh, &gh, r2, move |qa, qb| sq_ab(alpha, qa / r2, qb / r2))
    })
    .into_iter()
    .collect()
}

/// `G^alpha(f, g) = (sum_R |K_R * (f ⊗ g)(x, x)|^2 dlogR)^{1/2}`.
pub fn sq_function(alpha: Complex64, grid: &DilationGrid, f: &ComplexField, g: &ComplexField) -> Result<ComplexField> {
    let rows = sq_integrands(Engine::Fft2n, alpha, grid, f, g)?;
    Ok(square_sum(&f.spec, &rows, grid.log_step))
}

fn square_sum(spec: &GridSpec, rows: &[ComplexField], step: f64) -> ComplexField {
    let mut acc = vec![0.0f64; spec.len()];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(&row.values) {
            *a += v.norm_sqr() * step;
        }
    }
    ComplexField {
        spec: *spec,
        values: acc.into_iter().map(|v| Complex64::new(v.sqrt(), 0.0)).collect(),
    }
}

/// `G` on the grid and on its refinement, with the largest pointwise change.
pub fn sq_function_with_error(
    alpha: Complex64,
    grid: &DilationGrid,
    f: &ComplexField,
    g: &ComplexField,
) -> Result<(ComplexField, f64)> {
    let coarse = sq_function(alpha, grid, f, g)?;
    let fine = sq_function(alpha, &grid.refined(), f, g)?;
    let delta = coarse.sub(&fine)?.sup_norm();
    Ok((fine, delta))
}

/// Weights `b(x, R)` of the linearized square function, stored `x`-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizerB {
    pub grid: DilationGrid,
    pub values: Vec<Complex64>,
}

impl LinearizerB {
    pub fn new(grid: DilationGrid, len: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != len * grid.values.len() {
            return Err(Error::Mismatch(format!(
                "linearizer has {} entries, expected {}",
                values.len(),
                len * grid.values.len()
            )));
        }
        Ok(LinearizerB { grid, values })
    }

    /// `max_x sum_R |b(x, R)|^2 dlogR`.
    pub fn mass(&self) -> f64 {
        let m = self.grid.values.len();
        self.values
            .chunks(m)
            .map(|row| row.iter().map(|b| b.norm_sqr()).sum::<f64>() * self.grid.log_step)
            .fold(0.0, f64::max)
    }

    pub fn check(&self) -> Result<()> {
        let mass = self.mass();
        if mass > 1.0 + 1e-12 {
            return domain(format!("linearizer mass {mass} exceeds 1"));
        }
        Ok(())
    }
}

/// Symbol of the linearized square function: `(1 - s)_+^z s`.
fn tb_symbol(z: Complex64, a: f64, b: f64) -> Complex64 {
    let s = a + b;
    s * cpow_plus(1.0 - s, z)
}

/// The pieces `int m_R f^ g^ e^{..}` of the linearized form, one per `R`.
pub fn tb_integrands(order: Order, grid: &DilationGrid, f: &ComplexField, g: &ComplexField) -> Result<Vec<ComplexField>> {
    check_same(&f.spec, &g.spec)?;
    let (fh, gh) = (dft(f), dft(g));
    let z = order.z;
    par::map_slice(&grid.values, |&r| {
        let r2 = r * r;
        apply_bilinear(Engine::Fft2n, &fh, &gh, r2, move |qa, qb| tb_symbol(z, qa / r2, qb / r2))
    })
    .into_iter()
    .collect()
}

/// `T_b(f, g)(x) = sum_R [m_R(f, g)](x) b(x, R) dlogR`.
pub fn linearized_tb(order: Order, b: &LinearizerB, f: &ComplexField, g: &ComplexField) -> Result<ComplexField> {
    b.check()?;
    let rows = tb_integrands(order, &b.grid, f, g)?;
    let m = b.grid.values.len();
    let len = f.spec.len();
    if b.values.len() != len * m {
        return Err(Error::Mismatch("linearizer does not match the grid".into()));
    }
    let values = (0..len)
        .map(|x| {
            (0..m)
                .map(|k| rows[k].values[x] * b.values[x * m + k])
                .sum::<Complex64>()
                * b.grid.log_step
        })
        .collect();
    ComplexField::new(f.spec, values)
}

/// Square function built from the same symbol as `T_b`, so `|T_b| <= this`.
pub fn tb_envelope(order: Order, grid: &DilationGrid, f: &ComplexField, g: &ComplexField) -> Result<ComplexField> {
    let rows = tb_integrands(order, grid, f, g)?;
    Ok(square_sum(&f.spec, &rows, grid.log_step))
}

/// Weights `conj(K_R(x)) / G(x)`, which turn Cauchy-Schwarz into equality.
pub fn aligned_linearizer(order: Order, grid: &DilationGrid, f: &ComplexField, g: &ComplexField) -> Result<LinearizerB> {
    let rows = tb_integrands(order, grid, f, g)?;
    let env = square_sum(&f.spec, &rows, grid.log_step);
    let m = grid.values.len();
    let mut values = Vec::with_capacity(f.spec.len() * m);
    for x in 0..f.spec.len() {
        let gx = env.values[x].re;
        for row in &rows {
            values.push(if gx > 0.0 { row.values[x].conj() / gx } else { Complex64::new(0.0, 0.0) });
        }
    }
    LinearizerB::new(grid.clone(), f.spec.len(), values)
}

/// `M(f, g)(x) = max_r avg_{B(x,r)}|f| avg_{B(x,r)}|g|`.
pub fn bilinear_hl_maximal(f: &ComplexField, g: &ComplexField, radii: &[f64]) -> Result<ComplexField> {
    check_same(&f.spec, &g.spec)?;
    if radii.is_empty() {
        return domain("radius list is empty");
    }
    let mut best = vec![0.0f64; f.spec.len()];
    for &r in radii {
        let af = ball_averages(f, r)?;
        let ag = ball_averages(g, r)?;
        for ((b, x), y) in best.iter_mut().zip(af).zip(ag) {
            *b = b.max(x * y);
        }
    }
    ComplexField::new(f.spec, best.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
}

/// Direct application of one decomposition piece (any family and flags).
pub fn apply_piece(piece: &SymbolPiece, f: &ComplexField, g: &ComplexField) -> Result<ComplexField> {
    apply_piece_with(Engine::Fft2n, piece, f, g)
}

pub fn apply_piece_with(engine: Engine, piece: &SymbolPiece, f: &ComplexField, g: &ComplexField) -> Result<ComplexField> {
    piece.validate()?;
    check_same(&f.spec, &g.spec)?;
    let r2 = piece.r * piece.r;
    let p = *piece;
    apply_bilinear(engine, &dft(f), &dft(g), r2, move |qa, qb| p.eval_ab(qa / r2, qb / r2))
}

// ---------------------------------------------------------------------------
// Stein factorization

/// Rules for the `t`-integral of the factorization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuadratureRule {
    /// Midpoint nodes in `t` with point evaluation of every operator.
    Midpoint { nodes: usize },
    /// Equal panels in `v = t^2`, split further at the lattice values where a
    /// factor is singular. On each panel both operator symbols are
    /// replaced by their exact mean and first Legendre moment, so the rule is
    /// exact whenever either factor is linear on the panel and the endpoint
    /// singularities are integrated in closed form.
    PanelProduct { panels: usize },
}

impl QuadratureRule {
    pub fn count(&self) -> usize {
        match *self {
            QuadratureRule::Midpoint { nodes } => nodes,
            QuadratureRule::PanelProduct { panels } => panels,
        }
    }

    pub fn doubled(&self) -> Self {
        match *self {
            QuadratureRule::Midpoint { nodes } => QuadratureRule::Midpoint { nodes: 2 * nodes },
            QuadratureRule::PanelProduct { panels } => QuadratureRule::PanelProduct { panels: 2 * panels },
        }
    }

    fn validate(&self) -> Result<()> {
        if self.count() == 0 {
            return domain("quadrature rule needs at least one node");
        }
        Ok(())
    }
}

/// Which factor carries the slab and which one the ball.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Layout {
    /// Slab side acts on `g` (the `eta`-split) instead of `f`.
    slab_on_g: bool,
    /// Slab bump: `Some(j)` for `psi(2^j(1 - u))`, `None` for `psi0^2(u)`.
    slab_j: Option<u32>,
    /// Ball side carries `B^{psi0}_R`.
    cutoff: bool,
    /// Upper end of the `v = t^2` range.
    v_max: f64,
}

fn layout(piece: &SymbolPiece, spec: &GridSpec) -> Result<Layout> {
    if piece.dz {
        return Err(Error::Piece("derivative pieces are evaluated by dz_bilinear".into()));
    }
    match (piece.family, piece.j) {
        (Family::MJ, j) => Ok(Layout {
            slab_on_g: false,
            slab_j: Some(j),
            cutoff: false,
            v_max: 2f64.powi(1 - j as i32),
        }),
        (Family::MTilde, 1) => Ok(Layout {
            slab_on_g: true,
            slab_j: None,
            cutoff: true,
            v_max: 29.0 / 32.0,
        }),
        (Family::MTilde, j) if j >= 2 => {
            let k = resolve_k(spec, piece.r, 40);
            Ok(Layout {
                slab_on_g: true,
                slab_j: Some(j),
                cutoff: j < k,
                v_max: 2f64.powi(1 - j as i32),
            })
        }
        (family, j) => Err(Error::Piece(format!(
            "{family:?} with j = {j} has no Stein factorization"
        ))),
    }
}

fn slab_bump(l: &Layout, u: f64) -> f64 {
    match l.slab_j {
        Some(j) => psi(2f64.powi(j as i32) * (1.0 - u)),
        None => psi0_2(u),
    }
}

/// Panel boundaries in `v`. The skeleton holds every lattice value where one
/// of the two factors is singular (`v = u` on the ball side, `v = 1 - u` on the
/// slab side); each skeleton interval is then cut into equal panels, at least
/// `panels / 128` of them and at least its share of a uniform `panels` grid.
/// Doubling `panels` therefore halves every panel.
fn panel_cuts(l: &Layout, q: &[f64], r2: f64, panels: usize) -> Vec<f64> {
    let top = l.v_max;
    let mut skeleton = vec![0.0, top];
    for &qi in q {
        let u = qi / r2;
        if u > 0.0 && u < top {
            skeleton.push(u);
        }
        if slab_bump(l, u) != 0.0 && 1.0 - u > 0.0 && 1.0 - u < top {
            skeleton.push(1.0 - u);
        }
    }
    skeleton.sort_by(f64::total_cmp);
    let tiny = 1e-12 * top;
    skeleton.dedup_by(|b, a| *b - *a <= tiny);
    let floor = (panels / 128).max(1);
    let mut cuts = vec![0.0];
    for w in skeleton.windows(2) {
        let len = w[1] - w[0];
        let m = ((panels as f64 * len / top).ceil() as usize).max(floor);
        for k in 1..m {
            cuts.push(w[0] + len * k as f64 / m as f64);
        }
        cuts.push(w[1]);
    }
    cuts
}

/// Per-node multipliers on the two sides. `slab` and `ball` receive the
/// normalized square of their own variable.
struct NodeSymbols<'a> {
    slab: Box<dyn Fn(f64) -> f64 + Sync + Send + 'a>,
    ball: Box<dyn Fn(f64) -> Complex64 + Sync + Send + 'a>,
    weight: Complex64,
}

/// Evaluates `c * sum_k w_k [X_k Y_k (+ X~_k Y^A_k)]`, the sums over the rule.
/// `ball_log` selects the `log(1 - u/v)` variant on the ball side and
/// `t_log` multiplies the weights by `2 log t`.
#[allow(clippy::too_many_arguments)]
fn factorized_sum(
    piece: &SymbolPiece,
    f: &ComplexField,
    g: &ComplexField,
    rule: QuadratureRule,
    constant: Complex64,
    ball_log: bool,
    t_log: bool,
) -> Result<ComplexField> {
    piece.validate()?;
    piece.order.check_split()?;
    rule.validate()?;
    check_same(&f.spec, &g.spec)?;
    let spec = f.spec;
    let l = layout(piece, &spec)?;
    let (slab_in, ball_in) = if l.slab_on_g { (g, f) } else { (f, g) };
    let sh = dft(slab_in);
    let bh = dft(ball_in);
    let q = spec.frequency_norms_sq();
    let r2 = piece.r * piece.r;
    let beta = piece.order.beta;
    let delta = piece.order.delta();
    let square = piece.square;

    let nodes: Vec<NodeSymbols> = match rule {
        QuadratureRule::Midpoint { nodes } => {
            let top = l.v_max.sqrt();
            let h = top / nodes as f64;
            (0..nodes)
                .map(|k| {
                    let t = (k as f64 + 0.5) * h;
                    let v = t * t;
                    let mut w = h * cpow_plus(t, 2.0 * delta + 1.0);
                    if t_log {
                        w *= 2.0 * t.ln();
                    }
                    NodeSymbols {
                        slab: Box::new(move |u| pow_plus(1.0 - u - v, beta - 1.0)),
                        ball: Box::new(move |u| {
                            let x = 1.0 - u / v;
                            let mut y = cpow_plus(x, delta);
                            if ball_log {
                                y *= log_plus(x);
                            }
                            y
                        }),
                        weight: w,
                    }
                })
                .collect()
        }
        QuadratureRule::PanelProduct { panels } => {
            if ball_log || t_log {
                return Err(Error::Piece(
                    "the I/II/III split needs a point rule (midpoint)".into(),
                ));
            }
            let cuts = panel_cuts(&l, &q, r2, panels);
            let mut out = Vec::with_capacity(2 * cuts.len());
            for w in cuts.windows(2) {
                let (v0, v1) = (w[0], w[1]);
                let hv = v1 - v0;
                let vc = v0 + 0.5 * hv;
                out.push(NodeSymbols {
                    // (1/hv) int (1 - u - v)_+^{beta-1} dv
                    slab: Box::new(move |u| {
                        let p = (1.0 - u - v0).max(0.0);
                        let qq = (1.0 - u - v1).max(0.0);
                        (p.powf(beta) - qq.powf(beta)) / (beta * hv)
                    }),
                    // (1/hv) int (v - u)_+^delta dv
                    ball: Box::new(move |u| {
                        let p = (v0 - u).max(0.0);
                        let qq = (v1 - u).max(0.0);
                        (cpow_plus(qq, delta + 1.0) - cpow_plus(p, delta + 1.0)) / ((delta + 1.0) * hv)
                    }),
                    weight: Complex64::new(0.5 * hv, 0.0),
                });
                // First Legendre moments (1/hv) int F P1 dv, P1 = 2 (v - vc) / hv.
                out.push(NodeSymbols {
                    slab: Box::new(move |u| {
                        let c = 1.0 - u - vc;
                        let prim = |w: f64| -(c * w.powf(beta) / beta - w.powf(beta + 1.0) / (beta + 1.0));
                        let p = (1.0 - u - v0).max(0.0);
                        let qq = (1.0 - u - v1).max(0.0);
                        2.0 * (prim(qq) - prim(p)) / (hv * hv)
                    }),
                    ball: Box::new(move |u| {
                        let c = u - vc;
                        let prim = |w: f64| {
                            cpow_plus(w, delta + 2.0) / (delta + 2.0) + c * cpow_plus(w, delta + 1.0) / (delta + 1.0)
                        };
                        let p = (v0 - u).max(0.0);
                        let qq = (v1 - u).max(0.0);
                        2.0 * (prim(qq) - prim(p)) / (hv * hv)
                    }),
                    weight: Complex64::new(1.5 * hv, 0.0),
                });
            }
            out
        }
    };
    // Under the v-panel rule the ball factor already absorbs v^delta, so the A
    // side is `u` times the B side; under point rules A t^2 is also `u` times B.
    let terms: Vec<Vec<Complex64>> = par::map_slice(&nodes, |node| {
        let mut xs = Vec::with_capacity(spec.len());
        let mut xt = Vec::with_capacity(spec.len());
        let mut yb = Vec::with_capacity(spec.len());
        let mut ya = Vec::with_capacity(spec.len());
        for i in 0..spec.len() {
            let u = q[i] / r2;
            let bump = slab_bump(&l, u);
            let sv = if bump == 0.0 { 0.0 } else { bump * (node.slab)(u) };
            xs.push(sh.coeffs[i] * sv);
            xt.push(sh.coeffs[i] * (sv * u));
            let mut bv = (node.ball)(u);
            if l.cutoff {
                bv *= psi0(u);
            }
            yb.push(bh.coeffs[i] * bv);
            ya.push(bh.coeffs[i] * (bv * u));
        }
        let x = idft(&Spectrum { spec, coeffs: xs });
        let y = idft(&Spectrum { spec, coeffs: yb });
        let mut out: Vec<Complex64> = if square {
            let xt = idft(&Spectrum { spec, coeffs: xt });
            let ya = idft(&Spectrum { spec, coeffs: ya });
            (0..spec.len())
                .map(|p| x.values[p] * ya.values[p] + xt.values[p] * y.values[p])
                .collect()
        } else {
            (0..spec.len()).map(|p| x.values[p] * y.values[p]).collect()
        };
        for v in out.iter_mut() {
            *v *= node.weight;
        }
        out
    });
    let mut acc = vec![Complex64::new(0.0, 0.0); spec.len()];
    for row in terms {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    for a in acc.iter_mut() {
        *a *= constant;
    }
    Ok(ComplexField { spec, values: acc })
}

/// Factorized evaluation of `m_j` (`j >= 2`) or `m~_j` (`j >= 1`), plain or
/// square, through the Stein identity.
pub fn factorized_piece(
    piece: &SymbolPiece,
    f: &ComplexField,
    g: &ComplexField,
    rule: QuadratureRule,
) -> Result<ComplexField> {
    let c = piece.order.stein_constant()?;
    factorized_sum(piece, f, g, rule, c, false, false)
}

/// Smallest `J` with `2^{-J}` below every positive gap `1 - s` on the lattice,
/// so that the pieces up to `J` cover every pair inside the ball.
pub fn covering_depth(spec: &GridSpec, r: f64, cap: u32) -> u32 {
    let mut q = spec.frequency_norms_sq();
    q.sort_by(f64::total_cmp);
    q.dedup();
    let r2 = r * r;
    let mut gap = f64::INFINITY;
    for &qa in &q {
        for &qb in &q {
            let c = 1.0 - (qa + qb) / r2;
            if c <= 0.0 {
                break;
            }
            gap = gap.min(c);
        }
    }
    let mut j = 2;
    while j < cap && 2f64.powi(-(j as i32)) > gap {
        j += 1;
    }
    j
}

/// `B_R^z(f, g)` through the decomposition: `m_j` for `2 <= j <= J` and `m~_j`
/// for `1 <= j <= J` by the Stein factorization, `m~_0` directly.
pub fn br_mean_factorized(
    order: Order,
    r: f64,
    f: &ComplexField,
    g: &ComplexField,
    j_max: u32,
    rule: QuadratureRule,
) -> Result<ComplexField> {
    check_positive(r)?;
    check_same(&f.spec, &g.spec)?;
    if j_max < 2 {
        return domain(format!("truncation J = {j_max} must be at least 2"));
    }
    let mut pieces = Vec::new();
    for j in 2..=j_max {
        pieces.push(SymbolPiece::new(Family::MJ, j, order, r)?);
    }
    for j in 1..=j_max {
        pieces.push(SymbolPiece::new(Family::MTilde, j, order, r)?);
    }
    let mut acc = apply_piece(&SymbolPiece::new(Family::MTilde, 0, order, r)?, f, g)?;
    for p in &pieces {
        acc = acc.add(&factorized_piece(p, f, g, rule)?)?;
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DzTerm {
    /// `(d/dz c_z) int ...`
    I,
    /// `c_z int ...` with `B~`/`A~` on the ball side.
    II,
    /// `c_z int ... 2 log t dt`.
    III,
}

/// One term of `d/dz` of the factorized piece. Requires a point rule.
pub fn dz_bilinear(
    term: DzTerm,
    piece: &SymbolPiece,
    f: &ComplexField,
    g: &ComplexField,
    rule: QuadratureRule,
) -> Result<ComplexField> {
    if matches!(rule, QuadratureRule::PanelProduct { .. }) {
        return Err(Error::Piece("the I/II/III split needs a point rule (midpoint)".into()));
    }
    let o = piece.order;
    match term {
        DzTerm::I => factorized_sum(piece, f, g, rule, stein_constant_dz(o.z, o.beta)?, false, false),
        DzTerm::II => factorized_sum(piece, f, g, rule, o.stein_constant()?, true, false),
        DzTerm::III => factorized_sum(piece, f, g, rule, o.stein_constant()?, false, true),
    }
}

/// `I + II + III`.
pub fn dz_total(piece: &SymbolPiece, f: &ComplexField, g: &ComplexField, rule: QuadratureRule) -> Result<ComplexField> {
    let a = dz_bilinear(DzTerm::I, piece, f, g, rule)?;
    let b = dz_bilinear(DzTerm::II, piece, f, g, rule)?;
    let c = dz_bilinear(DzTerm::III, piece, f, g, rule)?;
    a.add(&b)?.add(&c)
}

/// Central difference of the factorized piece in `z`.
pub fn dz_central(
    piece: &SymbolPiece,
    f: &ComplexField,
    g: &ComplexField,
    rule: QuadratureRule,
    h: Complex64,
) -> Result<ComplexField> {
    let mut plus = *piece;
    plus.order = piece.order.with_z(piece.order.z + h);
    let mut minus = *piece;
    minus.order = piece.order.with_z(piece.order.z - h);
    let fp = factorized_piece(&plus, f, g, rule)?;
    let fm = factorized_piece(&minus, f, g, rule)?;
    Ok(fp.sub(&fm)?.scaled(1.0 / (2.0 * h)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random_band_limited;

    #[test]
    fn engines_agree() {
        let spec = GridSpec::new(1, 32, 1.0).unwrap();
        let f = random_band_limited(spec, 8.0, 1);
        let g = random_band_limited(spec, 8.0, 2);
        let o = Order::new(0.5, 0.2, 0.6);
        let a = br_mean_with(Engine::Fft2n, o, 7.3, &f, &g).unwrap();
        let b = br_mean_with(Engine::Pairs, o, 7.3, &f, &g).unwrap();
        assert!(crate::grid::relative_l2(&b, &a) < 1e-12);
    }

    #[test]
    fn m0_has_no_factorization() {
        let spec = GridSpec::new(1, 16, 1.0).unwrap();
        let f = random_band_limited(spec, 4.0, 1);
        let p = SymbolPiece::new(Family::M0, 0, Order::new(0.5, 0.0, 0.6), 4.0).unwrap();
        let rule = QuadratureRule::Midpoint { nodes: 8 };
        assert!(matches!(factorized_piece(&p, &f, &f, rule), Err(Error::Piece(_))));
    }

    #[test]
    fn grid_refinement_keeps_span() {
        let g = DilationGrid::log_spaced(1.0, 16.0, 8).unwrap();
        let r = g.refined();
        assert_eq!(r.values.len(), 16);
        assert!((r.log_step * 2.0 - g.log_step).abs() < 1e-14);
        assert!((r.values[0] - (0.25 * g.log_step).exp()).abs() < 1e-12);
    }
}
