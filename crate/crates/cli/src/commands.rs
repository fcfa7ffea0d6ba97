use brlab::bilinear::{
    br_maximal_with, br_mean, br_mean_factorized, br_mean_with, covering_depth, sq_function, DilationGrid,
    Engine, QuadratureRule,
};
use brlab::endpoint::{blowup_curve, construct_divergent, increment_spread, Fit};
use brlab::grid::{idft, relative_l2, ComplexField, GridSpec, Spectrum};
use brlab::kernels::{
    default_x0, kernel_br, lambda_set, periodic_kernel, resonance_limit, riesz_product_average, riesz_weight_average,
    time_averages, LatticeCutoff, TimeRule,
};
use brlab::symbols::{reconstruct_defect, Split};
use brlab::weights::probe_suite;
use brlab::Complex64;
use serde_json::json;

use crate::config::*;
use crate::output::{int, num, Check, Outcome, Table};

type Res = brlab::Result<Outcome>;

fn coord_header(n: usize) -> Vec<String> {
    if n == 1 {
        vec!["x [length]".into()]
    } else {
        (1..=n).map(|a| format!("x{a} [length]")).collect()
    }
}

fn header_with(first: Vec<String>, rest: &[&str]) -> Vec<String> {
    first.into_iter().chain(rest.iter().map(|s| s.to_string())).collect()
}

fn coords(spec: &GridSpec, idx: usize) -> Vec<String> {
    spec.node(idx).into_iter().map(num).collect()
}

fn field_table(file: &str, spec: &GridSpec, cols: &[&str], data: &[&ComplexField], extra: impl Fn(usize) -> Vec<f64>) -> Table {
    let header = header_with(coord_header(spec.n), cols);
    let mut t = Table {
        file: file.into(),
        header,
        rows: Vec::new(),
    };
    for idx in 0..spec.len() {
        let mut row = coords(spec, idx);
        for d in data {
            row.push(num(d.values[idx].re));
            row.push(num(d.values[idx].im));
        }
        row.extend(extra(idx).into_iter().map(num));
        t.push(row);
    }
    t
}

pub fn apply(cfg: &ApplyConfig) -> Res {
    let spec = cfg.grid.spec()?;
    let order = cfg.order.order();
    order.check_split()?;
    let (f, g) = cfg.input.pair(spec, cfg.seed);
    let direct = br_mean(order, cfg.r, &f, &g)?;
    let j_max = cfg.j_max.unwrap_or_else(|| covering_depth(&spec, cfg.r, 40));
    let rule = QuadratureRule::PanelProduct { panels: cfg.panels };
    let fact = br_mean_factorized(order, cfg.r, &f, &g, j_max, rule)?;
    let diff: Vec<f64> = direct.values.iter().zip(&fact.values).map(|(a, b)| (a - b).norm()).collect();
    let table = field_table(
        "apply.csv",
        &spec,
        &["direct_re [1]", "direct_im [1]", "factorized_re [1]", "factorized_im [1]", "abs_diff [1]"],
        &[&direct, &fact],
        |i| vec![diff[i]],
    );
    let max_diff = diff.iter().cloned().fold(0.0, f64::max);
    Ok(Outcome {
        tables: vec![table],
        checks: vec![Check::le("max |direct - factorized|", max_diff, cfg.tolerance)],
        summary: json!({ "j_max": j_max, "relative_l2": relative_l2(&fact, &direct) }),
    })
}

fn dilations(conf: &Option<DilationConf>, spec: &GridSpec) -> brlab::Result<DilationGrid> {
    match conf {
        Some(d) => d.grid(),
        None => Ok(DilationGrid::default_for(spec)),
    }
}

pub fn maximal(cfg: &MaximalConfig) -> Res {
    let spec = cfg.grid.spec()?;
    let order = cfg.order.order();
    let grid = dilations(&cfg.dilations, &spec)?;
    let (f, g) = cfg.input.pair(spec, cfg.seed);
    let out = br_maximal_with(cfg.engine, order, &grid, &f, &g)?;
    let top = *grid.values.last().expect("nonempty dilation grid");
    let a = br_mean_with(Engine::Fft2n, order, top, &f, &g)?;
    let b = br_mean_with(Engine::Pairs, order, top, &f, &g)?;
    let mut t = Table {
        file: "maximal.csv".into(),
        header: header_with(coord_header(spec.n), &["maximal [1]"]),
        rows: Vec::new(),
    };
    for idx in 0..spec.len() {
        let mut row = coords(&spec, idx);
        row.push(num(out.values[idx].re));
        t.push(row);
    }
    Ok(Outcome {
        tables: vec![t],
        checks: vec![Check::le("engine gap at the top dilation (relative L2)", relative_l2(&b, &a), cfg.tolerance)],
        summary: json!({ "dilations": grid.values.len(), "sup": out.sup_norm() }),
    })
}

pub fn square(cfg: &SquareConfig) -> Res {
    let spec = cfg.grid.spec()?;
    let grid = dilations(&cfg.dilations, &spec)?;
    let (f, g) = cfg.input.pair(spec, cfg.seed);
    let alpha = Complex64::new(cfg.alpha, 0.0);
    let coarse = sq_function(alpha, &grid, &f, &g)?;
    let fine = sq_function(alpha, &grid.refined(), &f, &g)?;
    let delta = coarse.sub(&fine)?.sup_norm();
    let mut t = Table {
        file: "square.csv".into(),
        header: header_with(coord_header(spec.n), &["G [1]", "G_refined [1]"]),
        rows: Vec::new(),
    };
    for idx in 0..spec.len() {
        let mut row = coords(&spec, idx);
        row.push(num(coarse.values[idx].re));
        row.push(num(fine.values[idx].re));
        t.push(row);
    }
    let rel = delta / fine.sup_norm().max(f64::MIN_POSITIVE);
    Ok(Outcome {
        tables: vec![t],
        checks: vec![Check::le("sup |G - G_refined| / sup G", rel, cfg.tolerance)],
        summary: json!({ "dilations": grid.values.len(), "sup": fine.sup_norm() }),
    })
}

pub fn kernel(cfg: &KernelConfig) -> Res {
    let spec = GridSpec::new(2 * cfg.n, cfg.points, cfg.period)?;
    if !(cfg.r > 0.0 && cfg.window > 0.0 && cfg.window <= 0.5 * cfg.period) {
        return Err(brlab::Error::Domain("kernel needs r > 0 and 0 < window <= L/2".into()));
    }
    let (alpha, r) = (cfg.alpha, cfg.r);
    let ones = Spectrum {
        spec,
        coeffs: vec![Complex64::new(1.0, 0.0); spec.len()],
    };
    let m = ones.multiplied_radial(|q| {
        let b = 1.0 - q / (r * r);
        Complex64::new(if b > 0.0 { b.powf(alpha) } else { 0.0 }, 0.0)
    });
    let k = idft(&m);
    let scale = (spec.len() as f64).sqrt() / spec.period.powi(spec.n as i32);
    let mut t = Table::new("kernel.csv", &["y1 [length]", "fft_kernel [1/length^2n]", "bessel_kernel [1/length^2n]", "abs_diff [1/length^2n]"]);
    let (mut err, mut sup) = (0.0f64, 0.0f64);
    for idx in 0..spec.len() {
        let y = spec.node(idx);
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ny > cfg.window {
            continue;
        }
        let exact = kernel_br(alpha, r, &y);
        let got = k.values[idx].re * scale;
        sup = sup.max(exact.abs());
        err = err.max((got - exact).abs());
        if y[1..].iter().all(|&v| v == 0.0) {
            t.push(vec![num(y[0]), num(got), num(exact), num((got - exact).abs())]);
        }
    }
    let rel = err / sup;

    let p = &cfg.periodic;
    let x0 = p.x0.clone().unwrap_or_else(|| default_x0(cfg.n));
    let mut pt = Table::new(
        "kernel_periodic.csv",
        &["R [1/length]", "M [1]", "frequency [1]", "poisson [1]", "abs_diff [1]", "tail_bound [1]"],
    );
    let mut checks = vec![Check::le("windowed sup-relative error", rel, cfg.tolerance)];
    for &r in &p.r_values {
        for &mm in &p.cutoffs {
            let d = periodic_kernel(p.alpha, r, &x0, LatticeCutoff::new(mm)?)?;
            let diff = (d.frequency - d.poisson).abs();
            pt.push(vec![num(r), int(mm), num(d.frequency), num(d.poisson), num(diff), num(d.tail_bound)]);
            checks.push(Check::le(format!("dual path R = {r}, M = {mm}"), diff, d.tail_bound));
        }
    }
    Ok(Outcome {
        tables: vec![t, pt],
        checks,
        summary: json!({ "sup_relative_error": rel, "kernel_sup": sup }),
    })
}

pub fn decompose(cfg: &DecomposeConfig) -> Res {
    let spec = cfg.grid.spec()?;
    let order = cfg.order.order();
    let mut t = Table::new("decompose.csv", &["split", "square", "J [1]", "defect [1]"]);
    let mut checks = Vec::new();
    for split in [Split::Xi, Split::Eta] {
        for square in [false, true] {
            let d = reconstruct_defect(order, cfg.r, &spec, cfg.j_max, split, square)?;
            let name = match split {
                Split::Xi => "xi",
                Split::Eta => "eta",
            };
            t.push(vec![name.into(), int(square), int(cfg.j_max), num(d)]);
            checks.push(Check::le(format!("defect {name} square={square}"), d, cfg.tolerance));
        }
    }
    Ok(Outcome {
        tables: vec![t],
        checks,
        summary: json!({}),
    })
}

fn lambdas(x0: &[f64]) -> brlab::Result<brlab::kernels::LambdaSet> {
    Ok(lambda_set(x0, LatticeCutoff::new(20)?))
}

pub fn dirac_average(cfg: &DiracConfig) -> Res {
    let x0 = cfg.x0.clone().unwrap_or_else(|| default_x0(1));
    let n = x0.len();
    let ls = lambdas(&x0)?;
    let on = cfg.spectrum_values.min(ls.values.len());
    let mut mus = cfg.mus.clone();
    mus.extend_from_slice(&ls.values[..on]);
    let rule = TimeRule {
        panels_per_log: cfg.panels_per_log,
        window: cfg.window,
    };
    let cutoff = LatticeCutoff::new(cfg.cutoff)?;
    let mut t = Table::new(
        "dirac_average.csv",
        &["T [1/length]", "mu [length]", "on_spectrum", "multiplicity", "avg_re [1]", "avg_im [1]", "avg_abs [1]", "limit_abs [1]"],
    );
    let mut table: Vec<Vec<Complex64>> = Vec::new();
    for &te in &cfg.t_values {
        let avg = time_averages(cfg.alpha, &x0, &mus, te, cutoff, rule)?;
        for (j, (&mu, a)) in mus.iter().zip(&avg).enumerate() {
            let spectral = j >= cfg.mus.len();
            let (mult, limit) = if spectral {
                let k = j - cfg.mus.len();
                (ls.multiplicity[k], ls.multiplicity[k] as f64 * resonance_limit(n, mu).norm())
            } else {
                (0, 0.0)
            };
            t.push(vec![
                num(te),
                num(mu),
                int(spectral as u8),
                int(mult),
                num(a.re),
                num(a.im),
                num(a.norm()),
                num(limit),
            ]);
        }
        table.push(avg);
    }
    let mut checks = Vec::new();
    let doubling: Vec<usize> = (1..cfg.t_values.len())
        .filter(|&i| (cfg.t_values[i] / cfg.t_values[i - 1] - 2.0).abs() < 1e-9)
        .collect();
    for (j, &mu) in cfg.mus.iter().enumerate() {
        let worst = doubling
            .iter()
            .map(|&i| table[i - 1][j].norm() / table[i][j].norm())
            .fold(f64::INFINITY, f64::min);
        if worst.is_finite() {
            checks.push(Check::ge(format!("off-spectrum decay per doubling, mu = {mu}"), worst, cfg.decay_ratio));
        }
    }
    let mut summary = json!({ "lambdas": &ls.values[..on], "multiplicity": &ls.multiplicity[..on] });
    if on >= 2 && !table.is_empty() {
        let last = table.last().unwrap();
        let k = cfg.mus.len();
        let a1 = last[k].norm() / ls.multiplicity[0] as f64;
        let a2 = last[k + 1].norm() / ls.multiplicity[1] as f64;
        let expect = (ls.values[1] / ls.values[0]).powi(2 * n as i32);
        let rel = (a1 / a2 / expect - 1.0).abs();
        checks.push(Check::le("on-spectrum ratio per multiplicity vs (l2/l1)^2n (relative)", rel, cfg.ratio_tolerance));
        summary["on_spectrum_ratio"] = json!(a1 / a2);
        summary["expected_ratio"] = json!(expect);
    }
    Ok(Outcome {
        tables: vec![t],
        checks,
        summary,
    })
}

pub fn riesz(cfg: &RieszConfig) -> Res {
    let x0 = cfg.x0.clone().unwrap_or_else(|| default_x0(1));
    let n = x0.len();
    let ls = lambdas(&x0)?;
    if cfg.factors == 0 || cfg.factors > ls.values.len().min(8) {
        return Err(brlab::Error::Domain(format!("factors must be in 1..=8, got {}", cfg.factors)));
    }
    let rule = TimeRule {
        panels_per_log: cfg.panels_per_log,
        window: cfg.window,
    };
    let cutoff = LatticeCutoff::new(cfg.cutoff)?;
    let vals: Vec<Complex64> = (0..=cfg.factors)
        .map(|k| riesz_product_average(cfg.alpha, &x0, &ls.values[..k], cfg.t, cutoff, rule))
        .collect::<brlab::Result<_>>()?;
    let mut t = Table::new(
        "riesz.csv",
        &[
            "factors",
            "lambda [length]",
            "multiplicity",
            "avg_re [1]",
            "avg_im [1]",
            "increment_abs [1]",
            "expected_increment_abs [1]",
            "weight_average_abs [1]",
        ],
    );
    for k in 0..=cfg.factors {
        let (lam, mult, inc, expect) = if k == 0 {
            (0.0, 0, 0.0, 0.0)
        } else {
            let lam = ls.values[k - 1];
            let mult = ls.multiplicity[k - 1];
            (lam, mult, (vals[k] - vals[k - 1]).norm(), mult as f64 * resonance_limit(n, lam).norm())
        };
        let w = riesz_weight_average(n, &ls.values[..k], cfg.t, cfg.window).norm();
        t.push(vec![
            int(k),
            num(lam),
            int(mult),
            num(vals[k].re),
            num(vals[k].im),
            num(inc),
            num(expect),
            num(w),
        ]);
    }
    let mut checks = Vec::new();
    for k in 2..=cfg.factors {
        let got = (vals[k] - vals[k - 1]).norm() / (vals[k - 1] - vals[k - 2]).norm();
        let expect = ls.multiplicity[k - 1] as f64 / ls.multiplicity[k - 2] as f64
            * (ls.values[k - 2] / ls.values[k - 1]).powi(2 * n as i32);
        checks.push(Check::le(
            format!("increment ratio {k}/{} vs multiplicity-weighted lambda^-2n (relative)", k - 1),
            (got / expect - 1.0).abs(),
            cfg.tolerance,
        ));
    }
    Ok(Outcome {
        tables: vec![t],
        checks,
        summary: json!({ "lambdas": &ls.values[..cfg.factors] }),
    })
}

pub fn blowup(cfg: &BlowupRunConfig) -> Res {
    let c = blowup_curve(&cfg.blowup)?;
    let mut t = Table::new(
        "blowup.csv",
        &["N [1]", "ln_N [1]", "annulus_stat [1]", "annulus_energy [1]", "weak_halfnorm [1]"],
    );
    for r in &c.rows {
        t.push(vec![
            int(r.scale),
            num((r.scale as f64).ln()),
            num(r.annulus_stat),
            num(r.annulus_energy),
            num(r.weak_halfnorm),
        ]);
    }
    let spread = increment_spread(&c.increments());
    let energy_spread = increment_spread(&c.energy_increments());
    let mut ft = Table::new(
        "blowup_fit.csv",
        &["quantity", "slope [1/ln N]", "intercept [1]", "correlation [1]", "increment_spread [1]"],
    );
    let mut row = |name: &str, f: &Fit, s: Option<f64>| {
        ft.push(vec![
            name.into(),
            num(f.slope),
            num(f.intercept),
            num(f.correlation),
            s.map(num).unwrap_or_default(),
        ])
    };
    row("annulus_stat", &c.stat_fit, Some(spread));
    row("annulus_energy", &c.energy_fit, Some(energy_spread));
    row("weak_halfnorm", &c.weak_fit, None);
    let checks = vec![
        Check::ge("annulus statistic slope", c.stat_fit.slope, 0.0),
        Check::ge("annulus statistic correlation", c.stat_fit.correlation, cfg.min_correlation),
        Check::ge("weak quasinorm slope", c.weak_fit.slope, 0.0),
        Check::ge("weak quasinorm correlation", c.weak_fit.correlation, cfg.min_weak_correlation),
    ];
    Ok(Outcome {
        tables: vec![t, ft],
        checks,
        summary: json!({
            "psi_l1": c.psi_l1,
            "increments": c.increments(),
            "increment_spread": spread,
            "energy_increment_spread": energy_spread,
        }),
    })
}

pub fn construct(cfg: &ConstructRunConfig) -> Res {
    let c = construct_divergent(&cfg.construction)?;
    let mut lt = Table::new(
        "construct_levels.csv",
        &["k", "R_k [1]", "eps_k [1]", "delta_k [1]", "A_k [1]", "measure_E_k [1]", "achieved [1]"],
    );
    let mut ct = Table::new("construct_checks.csv", &["k", "check", "lhs [1]", "rhs [1]", "holds"]);
    let mut checks = Vec::new();
    for l in &c.levels {
        lt.push(vec![int(l.k), num(l.r), num(l.eps), num(l.delta), num(l.a_k), num(l.measure), num(l.achieved)]);
        for ch in &l.checks {
            ct.push(vec![int(l.k), ch.name.clone(), num(ch.lhs), num(ch.rhs), int(ch.holds as u8)]);
            checks.push(Check::holds(format!("level {}: {}", l.k, ch.name), ch.holds));
        }
    }
    let mut st = Table::new(
        "construct_stop.csv",
        &["k", "r_cap [1]", "measure [1]", "floor [1]", "top [1]", "threshold [1]", "A_k [1]", "C [1]", "C_n [1]", "B [1]", "delta_k [1]"],
    );
    if let Some(s) = &c.stopped {
        st.push(vec![
            int(s.k),
            num(s.r_cap),
            num(s.measure),
            num(s.floor),
            num(s.top),
            num(s.threshold),
            num(s.a_k),
            num(s.c),
            num(s.c_n),
            num(s.b),
            num(s.delta),
        ]);
        checks.push(Check::ge(format!("level {}: sup over E reaches A_k + k + 2", s.k), s.top, s.threshold));
    }
    let spec = c.witness.spec;
    let mut wt = Table::new("construct_witness.csv", &["x [length]", "f [1]"]);
    for (idx, v) in c.witness.values.iter().enumerate() {
        wt.push(vec![num(spec.coord(idx)), num(v.re)]);
    }
    Ok(Outcome {
        tables: vec![lt, ct, st, wt],
        checks,
        summary: json!({ "constants": c.constants, "stopped": c.stopped }),
    })
}

pub fn weights_probe(cfg: &WeightsProbeConfig) -> Res {
    let rows = probe_suite(&cfg.probe, &cfg.configs)?;
    let mut t = Table::new(
        "weights_probe.csv",
        &[
            "weight_id",
            "p1",
            "p2",
            "a1",
            "a2",
            "characteristic [1]",
            "empirical_sup [1]",
            "trend_slope [log2 per octave]",
            "trials",
        ],
    );
    let mut ot = Table::new(
        "weights_octaves.csv",
        &["weight_id", "octave", "finest_scale [length]", "running_sup [1]", "frontier_sup [1]"],
    );
    let mut checks = Vec::new();
    for r in &rows {
        t.push(vec![
            r.id.clone(),
            num(r.exps.p1),
            num(r.exps.p2),
            num(r.exponents[0]),
            num(r.exponents[1]),
            num(r.characteristic.value),
            num(r.empirical_sup),
            num(r.trend_slope),
            int(r.trials),
        ]);
        for (o, (a, b)) in r.running_sup.iter().zip(&r.frontier_sup).enumerate() {
            let s = cfg.probe.base_scale * 0.5f64.powi(o as i32);
            ot.push(vec![r.id.clone(), int(o), num(s), num(*a), num(*b)]);
        }
        if r.characteristic.value.is_finite() {
            checks.push(Check::le(format!("{}: |trend slope|", r.id), r.trend_slope.abs(), cfg.slope_tolerance));
        } else {
            let grows = r.running_sup.windows(2).all(|w| w[1] > w[0]);
            checks.push(Check::holds(format!("{}: running sup grows every octave", r.id), grows));
        }
    }
    Ok(Outcome {
        tables: vec![t, ot],
        checks,
        summary: json!({ "dilations": cfg.probe.dilation_grid()?.values.len() }),
    })
}
