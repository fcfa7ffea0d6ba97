//! Bilinear weight classes: the characteristic over a family of cubes, the
//! product weight `v_w`, weighted norms, and a dilation probe for the weighted
//! bounds of the maximal and square functions.
//!
//! Weights are stored per grid cell. Power weights `|x - c|^a` use the value
//! at the cell center, except in the cell containing `c`, which carries the
//! exact cell average (infinite when `|x|^a` is not integrable there).

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bilinear::{apply_bilinear, DilationGrid, Engine};
use crate::endpoint::Fit;
use crate::error::{domain, Error, Result};
use crate::fields::rng;
use crate::grid::{check_same, dft, idft, ComplexField, GridSpec, Spectrum};
use crate::par;
use crate::special::gamma;
use crate::symbols::{br_ab, sq_ab, Order};
use crate::Complex64;

/// Serialize `f64` allowing `inf` as a string.
mod extended {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => Ok(f64::INFINITY),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

/// Exponents `p1, p2` in `[1, inf]` and `p` with `1/p = 1/p1 + 1/p2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentTriple {
    #[serde(with = "extended")]
    pub p1: f64,
    #[serde(with = "extended")]
    pub p2: f64,
}

/// Hölder conjugate, with `1' = inf` and `inf' = 1`.
pub fn conjugate(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

impl ExponentTriple {
    pub fn new(p1: f64, p2: f64) -> Result<Self> {
        let e = ExponentTriple { p1, p2 };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.p1, self.p2] {
            if !(p >= 1.0) {
                return domain(format!("exponent {p} must lie in [1, inf]"));
            }
        }
        if self.p1.is_infinite() && self.p2.is_infinite() {
            return domain("p1 = p2 = inf gives p = inf");
        }
        Ok(())
    }

    pub fn p(&self) -> f64 {
        1.0 / (1.0 / self.p1 + 1.0 / self.p2)
    }

    pub fn get(&self, j: usize) -> f64 {
        [self.p1, self.p2][j]
    }

    /// `p / p_j`, the power of `w_j` in `v_w`.
    pub fn v_power(&self, j: usize) -> f64 {
        self.p() / self.get(j)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Weight {
    Unit,
    /// `|x - center|^exponent`, distance taken on the torus.
    Power { center: Vec<f64>, exponent: f64 },
    /// Per-cell values.
    Custom { values: Vec<f64> },
}

impl Weight {
    pub fn power(center: Vec<f64>, exponent: f64) -> Self {
        Weight::Power { center, exponent }
    }

    fn validate(&self, spec: &GridSpec) -> Result<()> {
        match self {
            Weight::Unit => Ok(()),
            Weight::Power { center, exponent } => {
                if center.len() != spec.n {
                    return Err(Error::Mismatch(format!(
                        "weight center has {} coordinates on an {}-dim grid",
                        center.len(),
                        spec.n
                    )));
                }
                if !exponent.is_finite() || center.iter().any(|c| !c.is_finite()) {
                    return domain("power weight needs a finite center and exponent");
                }
                Ok(())
            }
            Weight::Custom { values } => {
                if values.len() != spec.len() {
                    return Err(Error::Mismatch(format!(
                        "custom weight has {} values for {} cells",
                        values.len(),
                        spec.len()
                    )));
                }
                if values.iter().any(|&v| !(v >= 0.0) || v.is_infinite()) {
                    return domain("custom weight values must be finite and nonnegative");
                }
                Ok(())
            }
        }
    }

    /// Cell values of `w^q`.
    pub fn cell_powers(&self, spec: &GridSpec, q: f64) -> Vec<f64> {
        if q == 0.0 {
            return vec![1.0; spec.len()];
        }
        match self {
            Weight::Unit => vec![1.0; spec.len()],
            Weight::Power { center, exponent } => power_cells(spec, center, exponent * q),
            Weight::Custom { values } => values.iter().map(|&v| pow_ext(v, q)).collect(),
        }
    }

    /// Infimum of `w` over each cell (exact in the singular cell of a power
    /// weight, the cell value elsewhere).
    pub fn cell_inf(&self, spec: &GridSpec) -> Vec<f64> {
        match self {
            Weight::Unit => vec![1.0; spec.len()],
            Weight::Custom { values } => values.clone(),
            Weight::Power { center, exponent } => {
                let h = spec.spacing();
                par::map_range(spec.len(), |idx| {
                    let d = offset(spec, center, idx);
                    if is_singular(&d, h) {
                        if *exponent > 0.0 {
                            0.0
                        } else {
                            // farthest point of the cell
                            let far: f64 = d.iter().map(|&di| (di.abs() + 0.5 * h).powi(2)).sum::<f64>().sqrt();
                            far.powf(*exponent)
                        }
                    } else {
                        norm(&d).powf(*exponent)
                    }
                })
            }
        }
    }
}

fn pow_ext(v: f64, q: f64) -> f64 {
    if v == 0.0 && q < 0.0 {
        f64::INFINITY
    } else {
        v.powf(q)
    }
}

fn norm(d: &[f64]) -> f64 {
    d.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Torus offset `center - x_idx`, each coordinate in `[-L/2, L/2)`.
fn offset(spec: &GridSpec, center: &[f64], idx: usize) -> Vec<f64> {
    let l = spec.period;
    spec.node(idx)
        .iter()
        .zip(center)
        .map(|(&x, &c)| (c - x + 0.5 * l).rem_euclid(l) - 0.5 * l)
        .collect()
}

fn is_singular(d: &[f64], h: f64) -> bool {
    d.iter().all(|&di| di >= -0.5 * h && di < 0.5 * h)
}

fn power_cells(spec: &GridSpec, center: &[f64], s: f64) -> Vec<f64> {
    let h = spec.spacing();
    let n = spec.n;
    par::map_range(spec.len(), |idx| {
        let d = offset(spec, center, idx);
        if !is_singular(&d, h) {
            return norm(&d).powf(s);
        }
        if n == 1 {
            if s <= -1.0 {
                return f64::INFINITY;
            }
            let (d1, d2) = (0.5 * h + d[0], 0.5 * h - d[0]);
            (d1.powf(s + 1.0) + d2.powf(s + 1.0)) / ((s + 1.0) * h)
        } else {
            // Ball of the cell's volume centered at the singularity.
            if s <= -(n as f64) {
                return f64::INFINITY;
            }
            let nf = n as f64;
            let unit_ball = PI.powf(0.5 * nf) / gamma(0.5 * nf + 1.0);
            let rho = h / unit_ball.powf(1.0 / nf);
            nf * rho.powf(s) / (nf + s)
        }
    })
}

/// A bilinear weight on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightPair {
    pub spec: GridSpec,
    pub w: [Weight; 2],
}

impl WeightPair {
    pub fn new(spec: GridSpec, w1: Weight, w2: Weight) -> Result<Self> {
        spec.validate()?;
        w1.validate(&spec)?;
        w2.validate(&spec)?;
        Ok(WeightPair { spec, w: [w1, w2] })
    }

    pub fn unit(spec: GridSpec) -> Result<Self> {
        WeightPair::new(spec, Weight::Unit, Weight::Unit)
    }

    /// Power weights with a common center.
    pub fn powers(spec: GridSpec, center: Vec<f64>, a1: f64, a2: f64) -> Result<Self> {
        WeightPair::new(spec, Weight::power(center.clone(), a1), Weight::power(center, a2))
    }

    /// Cell values of `v_w = w1^{p/p1} w2^{p/p2}`. Two power weights sharing a
    /// center combine into a single power, so the singular cell stays exact.
    pub fn v_cells(&self, exps: &ExponentTriple) -> Vec<f64> {
        let (q1, q2) = (exps.v_power(0), exps.v_power(1));
        if let (Weight::Power { center: c1, exponent: a1 }, Weight::Power { center: c2, exponent: a2 }) =
            (&self.w[0], &self.w[1])
        {
            if c1 == c2 {
                return power_cells(&self.spec, c1, a1 * q1 + a2 * q2);
            }
        }
        let u = self.w[0].cell_powers(&self.spec, q1);
        let v = self.w[1].cell_powers(&self.spec, q2);
        u.iter().zip(&v).map(|(a, b)| a * b).collect()
    }

    fn translated(&self, by: &[usize]) -> WeightPair {
        let h = self.spec.spacing();
        let w = self.w.clone().map(|w| match w {
            Weight::Unit => Weight::Unit,
            Weight::Power { center, exponent } => Weight::Power {
                center: center.iter().zip(by).map(|(c, &b)| c + b as f64 * h).collect(),
                exponent,
            },
            Weight::Custom { values } => {
                let f = ComplexField {
                    spec: self.spec,
                    values: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
                };
                Weight::Custom {
                    values: f.shifted(by).values.iter().map(|v| v.re).collect(),
                }
            }
        });
        WeightPair { spec: self.spec, w }
    }

    /// Same weights moved by `by` cells.
    pub fn shifted(&self, by: &[usize]) -> WeightPair {
        self.translated(by)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shifts {
    /// Cubes at multiples of their side.
    Aligned,
    /// Also the copies moved by half a side along any subset of axes.
    #[default]
    Half,
    /// Every cyclic position.
    All,
}

/// Dyadic cubes of `side` cells, `min_side <= side <= points`, on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubeFamily {
    pub min_side: usize,
    pub shifts: Shifts,
}

impl Default for CubeFamily {
    fn default() -> Self {
        CubeFamily {
            min_side: 2,
            shifts: Shifts::Half,
        }
    }
}

impl CubeFamily {
    fn validate(&self, spec: &GridSpec) -> Result<()> {
        if !self.min_side.is_power_of_two() || self.min_side > spec.points {
            return domain(format!(
                "min_side {} must be a power of two not above {}",
                self.min_side, spec.points
            ));
        }
        if !spec.points.is_power_of_two() {
            return domain("dyadic cube families need a power-of-two grid");
        }
        Ok(())
    }

    fn offsets(&self, side: usize, points: usize) -> Vec<usize> {
        match self.shifts {
            Shifts::Aligned => (0..points / side).map(|k| k * side).collect(),
            Shifts::Half if side >= 2 && side < points => (0..2 * points / side).map(|k| k * side / 2).collect(),
            Shifts::Half => (0..points / side).map(|k| k * side).collect(),
            Shifts::All if side < points => (0..points).collect(),
            Shifts::All => vec![0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Characteristic {
    #[serde(with = "extended")]
    pub value: f64,
    /// Side (cells) and lower corner of a maximizing cube.
    pub side: usize,
    pub corner: Vec<usize>,
    pub cubes: usize,
}

/// Cyclic sums (or minima) over boxes of side `2s` from those of side `s`.
fn double_boxes(spec: &GridSpec, data: &[f64], s: usize, combine: fn(f64, f64) -> f64) -> Vec<f64> {
    let n = spec.points;
    let mut cur = data.to_vec();
    for axis in 0..spec.n {
        let stride = n.pow((spec.n - 1 - axis) as u32);
        let next: Vec<f64> = (0..cur.len())
            .map(|idx| {
                let i = (idx / stride) % n;
                let j = (i + s) % n;
                let other = idx - i * stride + j * stride;
                combine(cur[idx], cur[other])
            })
            .collect();
        cur = next;
    }
    cur
}

/// `sup_Q avg_Q(v_w) prod_j (avg_Q w_j^{1 - p_j'})^{p/p_j'}` over the family.
/// For `p_j = 1` the bracket `(avg_Q w_j^{1-p_j'})^{1/p_j'}` is `(inf_Q w_j)^{-1}`;
/// for `p_j = inf` the factor is 1.
pub fn ap_characteristic(pair: &WeightPair, exps: &ExponentTriple, family: &CubeFamily) -> Result<Characteristic> {
    exps.validate()?;
    let spec = pair.spec;
    family.validate(&spec)?;
    let p = exps.p();
    let add = |a: f64, b: f64| a + b;
    let min = |a: f64, b: f64| a.min(b);

    enum Factor {
        One,
        Dual { field: Vec<f64>, power: f64 },
        Inf { field: Vec<f64> },
    }
    let mut v = pair.v_cells(exps);
    let mut factors: Vec<Factor> = (0..2)
        .map(|j| {
            let pj = exps.get(j);
            if pj.is_infinite() {
                Factor::One
            } else if pj == 1.0 {
                Factor::Inf {
                    field: pair.w[j].cell_inf(&spec),
                }
            } else {
                let pc = conjugate(pj);
                Factor::Dual {
                    field: pair.w[j].cell_powers(&spec, 1.0 - pc),
                    power: p / pc,
                }
            }
        })
        .collect();

    let mut best = Characteristic {
        value: 0.0,
        side: 0,
        corner: vec![0; spec.n],
        cubes: 0,
    };
    let mut side = 1;
    let mut multi = vec![0usize; spec.n];
    loop {
        if side >= family.min_side {
            let vol = (side as f64).powi(spec.n as i32);
            let offs = family.offsets(side, spec.points);
            let count = offs.len().pow(spec.n as u32);
            for c in 0..count {
                let mut rem = c;
                for a in (0..spec.n).rev() {
                    multi[a] = offs[rem % offs.len()];
                    rem /= offs.len();
                }
                let idx = spec.flat_index(&multi);
                let mut value = v[idx] / vol;
                for f in &factors {
                    value *= match f {
                        Factor::One => 1.0,
                        Factor::Dual { field, power } => (field[idx] / vol).powf(*power),
                        Factor::Inf { field } => pow_ext(field[idx], -p),
                    };
                }
                if value.is_nan() {
                    value = f64::INFINITY;
                }
                if value > best.value || best.cubes == 0 {
                    best.value = value;
                    best.side = side;
                    best.corner.clone_from(&multi);
                }
                best.cubes += 1;
            }
        }
        if side == spec.points {
            break;
        }
        v = double_boxes(&spec, &v, side, add);
        for f in factors.iter_mut() {
            match f {
                Factor::One => {}
                Factor::Dual { field, .. } => *field = double_boxes(&spec, field, side, add),
                Factor::Inf { field } => *field = double_boxes(&spec, field, side, min),
            }
        }
        side *= 2;
    }
    Ok(best)
}

/// Value on an interval `[-theta r, (1 - theta) r]` of the pair `|x|^{a1}`,
/// `|x|^{a2}` on the line (independent of `r`); infinite when a factor is.
pub fn power_interval_value(exps: &ExponentTriple, a1: f64, a2: f64, theta: f64) -> f64 {
    let p = exps.p();
    let avg = |b: f64| {
        if b <= -1.0 {
            f64::INFINITY
        } else {
            (theta.powf(b + 1.0) + (1.0 - theta).powf(b + 1.0)) / (b + 1.0)
        }
    };
    let mut value = avg(a1 * exps.v_power(0) + a2 * exps.v_power(1));
    for (j, a) in [a1, a2].into_iter().enumerate() {
        let pj = exps.get(j);
        if pj.is_infinite() {
            continue;
        }
        if pj == 1.0 {
            // inf of |x|^a over the interval, in units of r
            let inf = if a > 0.0 { 0.0 } else { theta.max(1.0 - theta).powf(a) };
            value *= pow_ext(inf, -p);
        } else {
            let pc = conjugate(pj);
            value *= avg(a * (1.0 - pc)).powf(p / pc);
        }
    }
    value
}

/// Supremum of [`power_interval_value`] over the position of the singularity.
pub fn power_interval_sup(exps: &ExponentTriple, a1: f64, a2: f64) -> f64 {
    (0..=1000)
        .map(|k| power_interval_value(exps, a1, a2, k as f64 / 1000.0))
        .fold(0.0, f64::max)
}

/// Whether `|x|^{a1}, |x|^{a2}` on the line is in the class: `v_w` and every
/// dual weight locally integrable, and `a_j <= 0` when `p_j = 1`.
pub fn power_pair_in_class(exps: &ExponentTriple, a1: f64, a2: f64) -> bool {
    power_interval_value(exps, a1, a2, 0.5).is_finite()
}

// ---------------------------------------------------------------------------
// weighted ratios

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Maximal,
    Square,
}

/// `(sum |h|^p w cellvol)^{1/p}`, or `max |h|` for `p = inf`.
pub fn weighted_norm(h: &ComplexField, w: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return h
            .values
            .iter()
            .zip(w)
            .filter(|(_, &wi)| wi > 0.0)
            .map(|(v, _)| v.norm())
            .fold(0.0, f64::max);
    }
    let s: f64 = h.values.iter().zip(w).map(|(v, &wi)| v.norm().powf(p) * wi).sum();
    (s * h.spec.cell_volume()).powf(1.0 / p)
}

/// `B_*` or `G` of a pair given by spectra, using the pair engine.
pub fn operator_output(
    op: Operator,
    order: Order,
    grid: &DilationGrid,
    fh: &Spectrum,
    gh: &Spectrum,
) -> Result<ComplexField> {
    check_same(&fh.spec, &gh.spec)?;
    let z = order.z;
    let rows: Vec<Result<ComplexField>> = grid
        .values
        .iter()
        .map(|&r| {
            let r2 = r * r;
            match op {
                Operator::Maximal => {
                    apply_bilinear(Engine::Pairs, fh, gh, r2, move |a, b| br_ab(z, a / r2, b / r2))
                }
                Operator::Square => {
                    apply_bilinear(Engine::Pairs, fh, gh, r2, move |a, b| sq_ab(z, a / r2, b / r2))
                }
            }
        })
        .collect();
    let mut acc = vec![0.0f64; fh.spec.len()];
    for row in rows {
        for (a, v) in acc.iter_mut().zip(&row?.values) {
            match op {
                Operator::Maximal => *a = a.max(v.norm()),
                Operator::Square => *a += v.norm_sqr() * grid.log_step,
            }
        }
    }
    if op == Operator::Square {
        acc.iter_mut().for_each(|a| *a = a.sqrt());
    }
    ComplexField::new(fh.spec, acc.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
}

fn ratio_of(out: &ComplexField, f: &ComplexField, g: &ComplexField, pair: &WeightPair, exps: &ExponentTriple) -> Result<f64> {
    let nf = weighted_norm(f, &pair.w[0].cell_powers(&pair.spec, 1.0), exps.p1);
    let ng = weighted_norm(g, &pair.w[1].cell_powers(&pair.spec, 1.0), exps.p2);
    let den = nf * ng;
    if !(den > 0.0) || !den.is_finite() {
        return domain(format!("denominator {den} is not a positive finite number"));
    }
    Ok(weighted_norm(out, &pair.v_cells(exps), exps.p()) / den)
}

/// `||T(f, g)||_{L^p(v_w)} / (||f||_{L^p1(w1)} ||g||_{L^p2(w2)})`.
pub fn weighted_ratio(
    op: Operator,
    order: Order,
    grid: &DilationGrid,
    f: &ComplexField,
    g: &ComplexField,
    pair: &WeightPair,
    exps: &ExponentTriple,
) -> Result<f64> {
    exps.validate()?;
    check_same(&f.spec, &g.spec)?;
    check_same(&f.spec, &pair.spec)?;
    let out = operator_output(op, order, grid, &dft(f), &dft(g))?;
    ratio_of(&out, f, g, pair, exps)
}

// ---------------------------------------------------------------------------
// dilation probe

/// Gaussian atom `exp(-pi |x - c - tau s|^2 / s^2) e^{2 pi i nu.(x - c)/s}`,
/// built on the spectrum and cut where the envelope drops below `e^{-9 pi}`.
pub fn gaussian_atom(spec: GridSpec, center: &[f64], scale: f64, tau: &[f64], nu: &[f64]) -> Spectrum {
    let nf = spec.n as i32;
    let norm = (spec.len() as f64).sqrt() / spec.period.powi(nf);
    let x0: Vec<f64> = center.iter().zip(tau).map(|(c, t)| c + t * scale).collect();
    let coeffs = (0..spec.len())
        .map(|idx| {
            let xi = spec.frequency(idx);
            let mut d2 = 0.0;
            let mut phase = 0.0;
            for a in 0..spec.n {
                let m = nu[a] / scale;
                let d = xi[a] - m;
                d2 += d * d;
                phase -= 2.0 * PI * (d * x0[a] + m * center[a]);
            }
            if d2 * scale * scale > 9.0 {
                return Complex64::new(0.0, 0.0);
            }
            Complex64::from_polar(norm * scale.powi(nf) * (-PI * scale * scale * d2).exp(), phase)
        })
        .collect();
    Spectrum { spec, coeffs }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub id: String,
    pub exponents: [f64; 2],
    pub exps: ExponentTriple,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub op: Operator,
    pub alpha: f64,
    pub grid: GridSpec,
    /// Scale of the undilated atoms.
    pub base_scale: f64,
    pub octaves: usize,
    pub trials: usize,
    pub seed: u64,
    pub r_per_octave: usize,
}

impl ProbeSpec {
    /// `n = 1`, critical index, 4 octaves below scale 1/8 on 2048 points.
    pub fn standard(op: Operator) -> Self {
        ProbeSpec {
            op,
            alpha: 0.5,
            grid: GridSpec {
                n: 1,
                points: 2048,
                period: 1.0,
            },
            base_scale: 0.125,
            octaves: 4,
            trials: 6,
            seed: 7,
            r_per_octave: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let finest = self.base_scale * 0.5f64.powi(self.octaves as i32);
        if !(self.base_scale > 0.0 && self.base_scale <= 0.25 * self.grid.period) {
            return domain("base_scale must lie in (0, L/4]");
        }
        if finest < 8.0 * self.grid.spacing() {
            return domain(format!("finest atom scale {finest} is below 8 cells"));
        }
        if self.r_per_octave == 0 {
            return domain("r_per_octave must be positive");
        }
        Ok(())
    }

    /// Dilations from `1/(4 base)` to twice the highest atom frequency, capped
    /// at the Nyquist frequency.
    pub fn dilation_grid(&self) -> Result<DilationGrid> {
        let finest = self.base_scale * 0.5f64.powi(self.octaves as i32);
        let lo = 0.25 / self.base_scale;
        let hi = (8.0 / finest).min(0.5 * self.grid.points as f64 / self.grid.period);
        let count = ((hi / lo).log2() * self.r_per_octave as f64).ceil() as usize;
        DilationGrid::log_spaced(lo, hi, count.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub id: String,
    pub exps: ExponentTriple,
    pub exponents: [f64; 2],
    pub characteristic: Characteristic,
    /// Sup over the family dilated up to each octave.
    pub running_sup: Vec<f64>,
    /// Sup over the pairs first reached at each octave.
    pub frontier_sup: Vec<f64>,
    pub empirical_sup: f64,
    /// Slope of `log2(running_sup)` against the octave.
    pub trend_slope: f64,
    pub trials: usize,
}

/// Ratios of the operator over random modulated and translated Gaussian atoms
/// centered at the weight singularity (the origin). At octave `o` the family
/// gains every pair with `f` dilated by `2^-j` and `g` by `2^-k`,
/// `max(j, k) = o`.
pub fn probe_suite(spec: &ProbeSpec, configs: &[ProbeConfig]) -> Result<Vec<ProbeRow>> {
    if configs.is_empty() {
        return Ok(Vec::new());
    }
    spec.validate()?;
    let grid = spec.dilation_grid()?;
    let order = Order::real(spec.alpha);
    let g = spec.grid;
    let n = g.n;
    let center = vec![0.0; n];
    let mut r = rng(spec.seed);
    let mut draw = || -> Vec<f64> { (0..n).map(|_| r.gen_range(-1.0..1.0)).collect() };
    let bases: Vec<[Vec<f64>; 4]> = (0..spec.trials).map(|_| [draw(), draw(), draw(), draw()]).collect();

    // atoms[t][o] = (f, g) spectra and fields at scale base 2^-o
    let atoms: Vec<Vec<[(Spectrum, ComplexField); 2]>> = bases
        .iter()
        .map(|b| {
            (0..=spec.octaves)
                .map(|o| {
                    let s = spec.base_scale * 0.5f64.powi(o as i32);
                    let fh = gaussian_atom(g, &center, s, &b[0], &b[1]);
                    let gh = gaussian_atom(g, &center, s, &b[2], &b[3]);
                    let (ff, gf) = (idft(&fh), idft(&gh));
                    [(fh, ff), (gh, gf)]
                })
                .collect()
        })
        .collect();

    // Outputs do not depend on the weights: compute each once.
    let mut jobs = Vec::new();
    for t in 0..spec.trials {
        for j in 0..=spec.octaves {
            for k in 0..=spec.octaves {
                jobs.push((t, j, k));
            }
        }
    }
    let outputs: Vec<Result<ComplexField>> = par::map_slice(&jobs, |&(t, j, k)| {
        operator_output(spec.op, order, &grid, &atoms[t][j][0].0, &atoms[t][k][1].0)
    });
    let outputs: Vec<ComplexField> = outputs.into_iter().collect::<Result<_>>()?;

    configs
        .iter()
        .map(|c| {
            c.exps.validate()?;
            let pair = WeightPair::powers(g, center.clone(), c.exponents[0], c.exponents[1])?;
            let characteristic = ap_characteristic(&pair, &c.exps, &CubeFamily::default())?;
            let mut frontier = vec![0.0f64; spec.octaves + 1];
            for (&(t, j, k), out) in jobs.iter().zip(&outputs) {
                let ratio = ratio_of(out, &atoms[t][j][0].1, &atoms[t][k][1].1, &pair, &c.exps)?;
                let o = j.max(k);
                frontier[o] = frontier[o].max(ratio);
            }
            let mut running = frontier.clone();
            for o in 1..running.len() {
                running[o] = running[o].max(running[o - 1]);
            }
            let xs: Vec<f64> = (0..running.len()).map(|o| o as f64).collect();
            let ys: Vec<f64> = running.iter().map(|v| v.log2()).collect();
            let trend_slope = if running.len() > 1 { Fit::new(&xs, &ys).slope } else { 0.0 };
            Ok(ProbeRow {
                id: c.id.clone(),
                exps: c.exps,
                exponents: c.exponents,
                characteristic,
                empirical_sup: *running.last().expect("octave 0 present"),
                running_sup: running,
                frontier_sup: frontier,
                trend_slope,
                trials: spec.trials,
            })
        })
        .collect()
}
