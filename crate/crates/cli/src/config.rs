//! Run configurations. Every field has a default, so an empty JSON object (or no
//! file at all) runs the bundled demo for the subcommand.

use brlab::bilinear::{DilationGrid, Engine};
use brlab::endpoint::{BlowupConfig, ConstructionConfig};
use brlab::fields::{random_band_limited, random_field, smooth_random};
use brlab::grid::{ComplexField, GridSpec};
use brlab::kernels::Window;
use brlab::symbols::Order;
use brlab::weights::{ExponentTriple, Operator, ProbeConfig, ProbeSpec};
use brlab::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConf {
    pub n: usize,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(rename = "L")]
    pub period: f64,
}

impl Default for GridConf {
    fn default() -> Self {
        GridConf {
            n: 1,
            points: 256,
            period: 1.0,
        }
    }
}

impl GridConf {
    pub fn spec(&self) -> brlab::Result<GridSpec> {
        GridSpec::new(self.n, self.points, self.period)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrderConf {
    pub alpha: f64,
    pub tau: f64,
    /// Stein split; `(alpha + 1) / 2` clamped above 1/2 when absent.
    pub beta: Option<f64>,
}

impl Default for OrderConf {
    fn default() -> Self {
        OrderConf {
            alpha: 0.5,
            tau: 0.0,
            beta: Some(0.6),
        }
    }
}

impl OrderConf {
    pub fn order(&self) -> Order {
        let beta = self.beta.unwrap_or_else(|| Order::real(self.alpha).beta);
        Order::new(self.alpha, self.tau, beta)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilationConf {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl DilationConf {
    pub fn grid(&self) -> brlab::Result<DilationGrid> {
        DilationGrid::log_spaced(self.lo, self.hi, self.count)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Ones,
    White,
    BandLimited,
    Smooth,
}

/// Test inputs `f` (seed) and `g` (seed + 1).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConf {
    pub kind: InputKind,
    /// Frequency cutoff `|k/L|` for band-limited and smooth inputs.
    pub cutoff: f64,
    /// Envelope width for smooth inputs.
    pub width: f64,
}

impl Default for InputConf {
    fn default() -> Self {
        InputConf {
            kind: InputKind::BandLimited,
            cutoff: 40.0,
            width: 16.0,
        }
    }
}

impl InputConf {
    pub fn pair(&self, spec: GridSpec, seed: u64) -> (ComplexField, ComplexField) {
        let make = |s| match self.kind {
            InputKind::Ones => ComplexField::constant(spec, Complex64::new(1.0, 0.0)),
            InputKind::White => random_field(spec, s),
            InputKind::BandLimited => random_band_limited(spec, self.cutoff, s),
            InputKind::Smooth => smooth_random(spec, self.width, self.cutoff, s),
        };
        (make(seed), make(seed.wrapping_add(1)))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApplyConfig {
    pub grid: GridConf,
    pub order: OrderConf,
    pub r: f64,
    pub input: InputConf,
    /// `v = t^2` panels of the factorized path.
    pub panels: usize,
    /// Deepest piece; chosen to cover the lattice when absent.
    pub j_max: Option<u32>,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for ApplyConfig {
    fn default() -> Self {
        ApplyConfig {
            grid: GridConf::default(),
            order: OrderConf::default(),
            r: 48.0,
            input: InputConf::default(),
            panels: 512,
            j_max: None,
            tolerance: 1e-3,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaximalConfig {
    pub grid: GridConf,
    pub order: OrderConf,
    /// Defaults to `1/L .. N/(4L)` with 64 values.
    pub dilations: Option<DilationConf>,
    pub input: InputConf,
    pub engine: Engine,
    /// Bound on the relative gap between the two engines at the top dilation.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for MaximalConfig {
    fn default() -> Self {
        MaximalConfig {
            grid: GridConf::default(),
            order: OrderConf::default(),
            dilations: None,
            input: InputConf::default(),
            engine: Engine::Fft2n,
            tolerance: 1e-10,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SquareConfig {
    pub grid: GridConf,
    pub alpha: f64,
    pub dilations: Option<DilationConf>,
    pub input: InputConf,
    /// Bound on `sup |G(grid) - G(refined grid)| / sup G`.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SquareConfig {
    fn default() -> Self {
        SquareConfig {
            grid: GridConf::default(),
            alpha: 0.5,
            dilations: None,
            input: InputConf::default(),
            tolerance: 0.05,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Kernel of the `2n`-dimensional symbol on an `N^{2n}` grid of period `L`.
    pub n: usize,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(rename = "L")]
    pub period: f64,
    pub alpha: f64,
    pub r: f64,
    /// Comparison window `|y| <= window`.
    pub window: f64,
    pub tolerance: f64,
    pub periodic: PeriodicConf,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            n: 1,
            points: 1024,
            period: 8.0,
            alpha: 0.5,
            r: 16.0,
            window: 2.0,
            tolerance: 0.02,
            periodic: PeriodicConf::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodicConf {
    pub alpha: f64,
    /// Diagonal point `(x0, x0)`; the generic default when absent.
    pub x0: Option<Vec<f64>>,
    pub r_values: Vec<f64>,
    pub cutoffs: Vec<u32>,
}

impl Default for PeriodicConf {
    fn default() -> Self {
        PeriodicConf {
            alpha: 1.0,
            x0: None,
            r_values: vec![3.0, 7.5, 15.0],
            cutoffs: vec![16, 64, 256],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub grid: GridConf,
    pub order: OrderConf,
    pub r: f64,
    pub j_max: u32,
    pub tolerance: f64,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig {
            grid: GridConf::default(),
            order: OrderConf::default(),
            r: 40.0,
            j_max: 14,
            tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiracConfig {
    pub alpha: f64,
    pub x0: Option<Vec<f64>>,
    /// Frequencies off the spectrum.
    pub mus: Vec<f64>,
    /// How many of the smallest spectrum values to include.
    pub spectrum_values: usize,
    pub t_values: Vec<f64>,
    /// Poisson terms `|m| <= cutoff`.
    pub cutoff: u32,
    pub panels_per_log: usize,
    pub window: Window,
    /// Smallest accepted off-spectrum decay ratio per doubling of `T`.
    pub decay_ratio: f64,
    /// Relative tolerance of the per-multiplicity on-spectrum ratio.
    pub ratio_tolerance: f64,
}

impl Default for DiracConfig {
    fn default() -> Self {
        DiracConfig {
            alpha: 0.5,
            x0: None,
            mus: vec![0.3, 0.55, 0.9],
            spectrum_values: 2,
            t_values: vec![125.0, 250.0, 500.0, 1000.0, 2000.0],
            cutoff: 64,
            panels_per_log: 8,
            window: Window::Fejer,
            decay_ratio: 1.8,
            ratio_tolerance: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RieszConfig {
    pub alpha: f64,
    pub x0: Option<Vec<f64>>,
    /// Largest number of factors.
    pub factors: usize,
    pub t: f64,
    pub cutoff: u32,
    pub panels_per_log: usize,
    pub window: Window,
    pub tolerance: f64,
}

impl Default for RieszConfig {
    fn default() -> Self {
        RieszConfig {
            alpha: 0.5,
            x0: None,
            factors: 3,
            t: 2000.0,
            cutoff: 64,
            panels_per_log: 8,
            window: Window::Sharp,
            tolerance: 0.15,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlowupRunConfig {
    pub blowup: BlowupConfig,
    pub min_correlation: f64,
    pub min_weak_correlation: f64,
}

impl Default for BlowupRunConfig {
    fn default() -> Self {
        BlowupRunConfig {
            blowup: BlowupConfig::standard(),
            min_correlation: 0.99,
            min_weak_correlation: 0.95,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructRunConfig {
    pub construction: ConstructionConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsProbeConfig {
    pub probe: ProbeSpec,
    pub configs: Vec<ProbeConfig>,
    /// Largest accepted `|slope|` per octave for in-class configurations.
    pub slope_tolerance: f64,
}

impl Default for WeightsProbeConfig {
    fn default() -> Self {
        let e = ExponentTriple { p1: 2.0, p2: 2.0 };
        WeightsProbeConfig {
            probe: ProbeSpec::standard(Operator::Maximal),
            configs: vec![
                ProbeConfig {
                    id: "inside".into(),
                    exponents: [0.5, -0.5],
                    exps: e,
                },
                ProbeConfig {
                    id: "outside".into(),
                    exponents: [1.5, 0.0],
                    exps: e,
                },
            ],
            slope_tolerance: 0.05,
        }
    }
}

/// Configs that draw random inputs take the `--seed` override.
pub trait Seeded {
    fn set_seed(&mut self, _seed: u64) {}
}

impl Seeded for ApplyConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

impl Seeded for MaximalConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

impl Seeded for SquareConfig {
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
}

impl Seeded for WeightsProbeConfig {
    fn set_seed(&mut self, seed: u64) {
        self.probe.seed = seed;
    }
}

impl Seeded for KernelConfig {}
impl Seeded for DecomposeConfig {}
impl Seeded for DiracConfig {}
impl Seeded for RieszConfig {}
impl Seeded for BlowupRunConfig {}
impl Seeded for ConstructRunConfig {}
