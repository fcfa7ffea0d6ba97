//! Periodic sampling grids, unitary transforms, norms and the diagonal trace.
//!
//! Nodes sit at `x_i = -L/2 + i L/N` on every axis. Multi-indices are stored
//! row-major with axis 0 slowest, so on a `2n`-dimensional grid the first `n`
//! axes form the `y1` block and the last `n` axes the `y2` block.
//!
//! Spectra use the signed wavenumber `k` in FFT order (`0, 1, .., N/2-1,
//! -N/2, .., -1`) and the physical phase convention
//! `c_k = N^{-n/2} sum_j f(x_j) exp(-2 pi i k.x_j / L)`, so a pure mode
//! `exp(2 pi i k0.x / L)` lands on the single coefficient `N^{n/2}` at `k0`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(rename = "L")]
    pub period: f64,
}

impl GridSpec {
    pub fn new(n: usize, points: usize, period: f64) -> Result<Self> {
        let spec = GridSpec { n, points, period };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Grid("dimension must be positive".into()));
        }
        if self.points < 2 || self.points % 2 != 0 {
            return Err(Error::Grid(format!("N = {} must be even and >= 2", self.points)));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::Grid(format!("L = {} must be positive", self.period)));
        }
        if (self.points as f64).powi(self.n as i32) > 1.0e9 {
            return Err(Error::Grid("grid too large".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.points as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.n as i32)
    }

    pub fn box_volume(&self) -> f64 {
        self.period.powi(self.n as i32)
    }

    /// Coordinate of node `i` along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.period + i as f64 * self.spacing()
    }

    /// Signed wavenumber of FFT-ordered index `i` along one axis.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.points as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT-ordered index of a signed wavenumber, if it lies on the lattice.
    pub fn index_of_wavenumber(&self, k: i64) -> Option<usize> {
        let n = self.points as i64;
        if k < -n / 2 || k >= n / 2 {
            return None;
        }
        Some(if k < 0 { (k + n) as usize } else { k as usize })
    }

    pub fn multi_index(&self, mut idx: usize, out: &mut [usize]) {
        for a in (0..self.n).rev() {
            out[a] = idx % self.points;
            idx /= self.points;
        }
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &m| acc * self.points + m)
    }

    pub fn node(&self, idx: usize) -> Vec<f64> {
        let mut m = vec![0; self.n];
        self.multi_index(idx, &mut m);
        m.iter().map(|&i| self.coord(i)).collect()
    }

    pub fn wavevector(&self, idx: usize) -> Vec<i64> {
        let mut m = vec![0; self.n];
        self.multi_index(idx, &mut m);
        m.iter().map(|&i| self.wavenumber(i)).collect()
    }

    /// Physical frequency `k / L` of spectrum entry `idx`.
    pub fn frequency(&self, idx: usize) -> Vec<f64> {
        self.wavevector(idx)
            .iter()
            .map(|&k| k as f64 / self.period)
            .collect()
    }

    /// `|k / L|^2` for every spectrum entry, in storage order.
    pub fn frequency_norms_sq(&self) -> Vec<f64> {
        let axis: Vec<f64> = (0..self.points)
            .map(|i| {
                let f = self.wavenumber(i) as f64 / self.period;
                f * f
            })
            .collect();
        let mut out = vec![0.0; self.len()];
        let mut m = vec![0; self.n];
        for (idx, o) in out.iter_mut().enumerate() {
            self.multi_index(idx, &mut m);
            *o = m.iter().map(|&i| axis[i]).sum();
        }
        out
    }

    /// Grid on the product space: same `N` and `L`, dimension `2n`.
    pub fn doubled(&self) -> GridSpec {
        GridSpec {
            n: 2 * self.n,
            ..*self
        }
    }

    pub fn largest_frequency(&self) -> f64 {
        (self.points / 2) as f64 / self.period
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    pub spec: GridSpec,
    pub values: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub spec: GridSpec,
    pub coeffs: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(spec: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::Mismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                spec.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite {
                index,
                coords: spec.node(index),
            });
        }
        Ok(ComplexField { spec, values })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        ComplexField {
            spec,
            values: vec![Complex64::new(0.0, 0.0); spec.len()],
        }
    }

    pub fn constant(spec: GridSpec, c: Complex64) -> Self {
        ComplexField {
            spec,
            values: vec![c; spec.len()],
        }
    }

    /// Discrete L2 norm with the cell volume, i.e. a Riemann sum for the box integral.
    pub fn l2_norm(&self) -> f64 {
        (sum_sq(&self.values) * self.spec.cell_volume()).sqrt()
    }

    /// Euclidean norm of the raw sample vector.
    pub fn vec_norm(&self) -> f64 {
        sum_sq(&self.values).sqrt()
    }

    pub fn integral(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() * self.spec.cell_volume()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        ComplexField {
            spec: self.spec,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &ComplexField) -> Result<Self> {
        check_same(&self.spec, &other.spec)?;
        Ok(ComplexField {
            spec: self.spec,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &ComplexField) -> Result<Self> {
        check_same(&self.spec, &other.spec)?;
        Ok(ComplexField {
            spec: self.spec,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn abs(&self) -> Self {
        ComplexField {
            spec: self.spec,
            values: self.values.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect(),
        }
    }

    /// Cyclic shift by whole cells along every axis.
    pub fn shifted(&self, by: &[usize]) -> Self {
        let spec = self.spec;
        let mut out = vec![Complex64::new(0.0, 0.0); spec.len()];
        let mut m = vec![0; spec.n];
        for (idx, v) in self.values.iter().enumerate() {
            spec.multi_index(idx, &mut m);
            for (a, mi) in m.iter_mut().enumerate() {
                *mi = (*mi + by[a]) % spec.points;
            }
            out[spec.flat_index(&m)] = *v;
        }
        ComplexField { spec, values: out }
    }
}

impl Spectrum {
    pub fn zeros(spec: GridSpec) -> Self {
        Spectrum {
            spec,
            coeffs: vec![Complex64::new(0.0, 0.0); spec.len()],
        }
    }

    pub fn l2_norm(&self) -> f64 {
        sum_sq(&self.coeffs).sqrt()
    }

    /// Pointwise product with a multiplier evaluated at every lattice frequency.
    pub fn multiplied<F>(&self, symbol: F) -> Spectrum
    where
        F: Fn(&[f64]) -> Complex64 + Sync + Send,
    {
        let spec = self.spec;
        let coeffs = par::map_range(spec.len(), |idx| {
            let xi = spec.frequency(idx);
            self.coeffs[idx] * symbol(&xi)
        });
        Spectrum { spec, coeffs }
    }

    /// Pointwise product with a radial multiplier `m(|xi|^2)`.
    pub fn multiplied_radial<F>(&self, symbol: F) -> Spectrum
    where
        F: Fn(f64) -> Complex64 + Sync + Send,
    {
        let norms = self.spec.frequency_norms_sq();
        let coeffs = par::map_range(self.spec.len(), |idx| self.coeffs[idx] * symbol(norms[idx]));
        Spectrum {
            spec: self.spec,
            coeffs,
        }
    }
}

fn sum_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

pub(crate) fn check_same(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::Mismatch(format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

/// Sample a pointwise function at the grid nodes.
pub fn sample<F>(f: F, spec: GridSpec) -> Result<ComplexField>
where
    F: Fn(&[f64]) -> Complex64 + Sync + Send,
{
    spec.validate()?;
    let values = par::map_range(spec.len(), |idx| f(&spec.node(idx)));
    ComplexField::new(spec, values)
}

type PlanKey = (usize, bool);

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    static CACHE: OnceLock<Mutex<(FftPlanner<f64>, HashMap<PlanKey, Arc<dyn Fft<f64>>>)>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    let (planner, map) = &mut *guard;
    map.entry((len, inverse))
        .or_insert_with(|| {
            let dir = if inverse {
                FftDirection::Inverse
            } else {
                FftDirection::Forward
            };
            planner.plan_fft(len, dir)
        })
        .clone()
}

fn transform_axes(values: &mut [Complex64], spec: &GridSpec, inverse: bool) {
    let n = spec.points;
    let d = spec.n;
    let fft = plan(n, inverse);
    let total = values.len();
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        if stride == 1 {
            par::for_each_chunk(values, n, |_, line| fft.process(line));
            continue;
        }
        let block = n * stride;
        let mut buf = vec![Complex64::new(0.0, 0.0); total];
        for b in 0..total / block {
            let src = &values[b * block..(b + 1) * block];
            let dst = &mut buf[b * block..(b + 1) * block];
            for k in 0..n {
                for i in 0..stride {
                    dst[i * n + k] = src[k * stride + i];
                }
            }
        }
        par::for_each_chunk(&mut buf, n, |_, line| fft.process(line));
        for b in 0..total / block {
            let src = &buf[b * block..(b + 1) * block];
            let dst = &mut values[b * block..(b + 1) * block];
            for k in 0..n {
                for i in 0..stride {
                    dst[k * stride + i] = src[i * n + k];
                }
            }
        }
    }
}

/// `(-1)^{sum_a k_a}` for every spectrum entry; converts between node-index and
/// physical phase conventions.
fn parity_signs(spec: &GridSpec) -> Vec<f64> {
    let mut m = vec![0; spec.n];
    (0..spec.len())
        .map(|idx| {
            spec.multi_index(idx, &mut m);
            let s: i64 = m.iter().map(|&i| spec.wavenumber(i)).sum();
            if s.rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

pub fn dft(field: &ComplexField) -> Spectrum {
    let spec = field.spec;
    let mut v = field.values.clone();
    transform_axes(&mut v, &spec, false);
    let scale = (spec.len() as f64).sqrt().recip();
    for (c, s) in v.iter_mut().zip(parity_signs(&spec)) {
        *c *= scale * s;
    }
    Spectrum { spec, coeffs: v }
}

pub fn idft(spectrum: &Spectrum) -> ComplexField {
    let spec = spectrum.spec;
    let scale = (spec.len() as f64).sqrt().recip();
    let mut v: Vec<Complex64> = spectrum
        .coeffs
        .iter()
        .zip(parity_signs(&spec))
        .map(|(c, s)| c * (scale * s))
        .collect();
    transform_axes(&mut v, &spec, true);
    ComplexField { spec, values: v }
}

/// `(sum |F|^p cellvol)^{1/p}`.
pub fn lp_quasinorm(field: &ComplexField, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return crate::error::domain(format!("p = {p} must be positive"));
    }
    let s: f64 = field.values.iter().map(|v| v.norm().powf(p)).sum();
    Ok((s * field.spec.cell_volume()).powf(1.0 / p))
}

/// `sup_{lambda > 0} lambda |{|F| > lambda}|^{1/p}` with cell-counting measure.
///
/// The sup is approached as lambda rises to each sample modulus, so the
/// candidate values are `a_(i) (i cellvol)^{1/p}` over the decreasing
/// rearrangement `a_(1) >= a_(2) >= ..`.
pub fn weak_quasinorm(field: &ComplexField, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return crate::error::domain(format!("p = {p} must be positive"));
    }
    let mut a: Vec<f64> = field.values.iter().map(|v| v.norm()).collect();
    a.sort_by(|x, y| y.total_cmp(x));
    let vol = field.spec.cell_volume();
    Ok(a.iter()
        .enumerate()
        .map(|(i, &ai)| ai * ((i + 1) as f64 * vol).powf(1.0 / p))
        .fold(0.0, f64::max))
}

/// Trace `out(x) = in(x, x)` of a field on the `2n`-grid.
pub fn restrict_diagonal(field2n: &ComplexField) -> Result<ComplexField> {
    let spec2 = field2n.spec;
    if spec2.n % 2 != 0 {
        return Err(Error::Mismatch(format!(
            "diagonal restriction needs an even dimension, got {}",
            spec2.n
        )));
    }
    let spec = GridSpec {
        n: spec2.n / 2,
        ..spec2
    };
    let block = spec.len();
    if field2n.values.len() != block * block {
        return Err(Error::Mismatch("axis blocks do not match".into()));
    }
    let values = (0..block).map(|i| field2n.values[i * block + i]).collect();
    Ok(ComplexField { spec, values })
}

/// Tensor product `(u ⊗ v)(y1, y2) = u(y1) v(y2)` on the doubled grid.
pub fn tensor(u: &ComplexField, v: &ComplexField) -> Result<ComplexField> {
    check_same(&u.spec, &v.spec)?;
    let spec2 = u.spec.doubled();
    spec2.validate()?;
    let mut values = Vec::with_capacity(spec2.len());
    for a in &u.values {
        for b in &v.values {
            values.push(a * b);
        }
    }
    Ok(ComplexField {
        spec: spec2,
        values,
    })
}

/// Tensor product of spectra, the transform of `u ⊗ v`.
pub fn tensor_spectrum(u: &Spectrum, v: &Spectrum) -> Result<Spectrum> {
    check_same(&u.spec, &v.spec)?;
    let spec2 = u.spec.doubled();
    spec2.validate()?;
    let mut coeffs = Vec::with_capacity(spec2.len());
    for a in &u.coeffs {
        for b in &v.coeffs {
            coeffs.push(a * b);
        }
    }
    Ok(Spectrum {
        spec: spec2,
        coeffs,
    })
}

/// Apply a multiplier `m(xi)` on an `n`-grid: `idft(m * dft(f))`.
pub fn apply_multiplier<F>(field: &ComplexField, symbol: F) -> ComplexField
where
    F: Fn(&[f64]) -> Complex64 + Sync + Send,
{
    idft(&dft(field).multiplied(symbol))
}

/// Relative discrete L2 distance `|a - b| / |b|` (0 when both vanish).
pub fn relative_l2(a: &ComplexField, b: &ComplexField) -> f64 {
    let num: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum();
    let den = sum_sq(&b.values);
    if den == 0.0 {
        return num.sqrt();
    }
    (num / den).sqrt()
}
