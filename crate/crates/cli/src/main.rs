//! `brlab`: run one experiment from a JSON config and write CSV tables plus
//! `meta.json` into the output directory.
//!
//! Exit codes: 0 when every self-check passes, 2 for configuration errors,
//! 3 when a self-check fails or a search gives up, 1 for I/O failures.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::*;
use crate::output::{Meta, Outcome};

#[derive(Parser, Debug)]
#[command(name = "brlab", version, about = "Bilinear Bochner-Riesz experiments on periodic grids")]
struct Cli {
    /// JSON run configuration; defaults reproduce the bundled demo.
    #[arg(long, global = true, env = "BRLAB_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "BRLAB_OUT", default_value = "out")]
    out: PathBuf,
    /// Overrides the seed of the config.
    #[arg(long, global = true, env = "BRLAB_SEED")]
    seed: Option<u64>,
    /// Worker threads (0 = rayon default).
    #[arg(long, global = true, env = "BRLAB_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// One mean, direct and through the factorized pieces.
    Apply,
    /// Maximal function over a dilation grid.
    Maximal,
    /// Square function over a dilation grid.
    Square,
    /// Kernel of the symbol against its Bessel form; periodic kernel both ways.
    Kernel,
    /// Reconstruction defect of the decompositions.
    DecomposeCheck,
    /// Time averages of the diagonal kernel against `e^{2 pi i mu R}`.
    DiracAverage,
    /// Time averages against Riesz products over the spectrum.
    Riesz,
    /// Square function of the psi_N family against ln N.
    Blowup,
    /// Finite-depth divergent construction.
    Construct,
    /// Weighted ratios under dyadic dilation.
    WeightsProbe,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Apply => "apply",
            Command::Maximal => "maximal",
            Command::Square => "square",
            Command::Kernel => "kernel",
            Command::DecomposeCheck => "decompose-check",
            Command::DiracAverage => "dirac-average",
            Command::Riesz => "riesz",
            Command::Blowup => "blowup",
            Command::Construct => "construct",
            Command::WeightsProbe => "weights-probe",
        }
    }
}

enum Failure {
    Config(String),
    Search(String),
}

impl From<brlab::Error> for Failure {
    fn from(e: brlab::Error) -> Self {
        match e {
            brlab::Error::Search { .. } => Failure::Search(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn load<T: DeserializeOwned + Serialize + Default + Seeded>(cli: &Cli) -> Result<(T, serde_json::Value), Failure> {
    let mut cfg: T = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => T::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let effective = serde_json::to_value(&cfg).expect("config serializes");
    Ok((cfg, effective))
}

fn run(cli: &Cli) -> Result<(Outcome, serde_json::Value), Failure> {
    macro_rules! go {
        ($t:ty, $f:path) => {{
            let (cfg, eff) = load::<$t>(cli)?;
            ($f(&cfg)?, eff)
        }};
    }
    Ok(match cli.command {
        Command::Apply => go!(ApplyConfig, commands::apply),
        Command::Maximal => go!(MaximalConfig, commands::maximal),
        Command::Square => go!(SquareConfig, commands::square),
        Command::Kernel => go!(KernelConfig, commands::kernel),
        Command::DecomposeCheck => go!(DecomposeConfig, commands::decompose),
        Command::DiracAverage => go!(DiracConfig, commands::dirac_average),
        Command::Riesz => go!(RieszConfig, commands::riesz),
        Command::Blowup => go!(BlowupRunConfig, commands::blowup),
        Command::Construct => go!(ConstructRunConfig, commands::construct),
        Command::WeightsProbe => go!(WeightsProbeConfig, commands::weights_probe),
    })
}

fn set_threads(k: usize) -> usize {
    #[cfg(feature = "parallel")]
    {
        if k > 0 {
            // Only fails if a pool already exists, which cannot happen here.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
        }
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = k;
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = set_threads(cli.threads);
    let name = cli.command.name();
    let (outcome, effective) = match run(&cli) {
        Ok(v) => v,
        Err(Failure::Config(msg)) => {
            eprintln!("brlab {name}: {msg}");
            return ExitCode::from(2);
        }
        Err(Failure::Search(msg)) => {
            eprintln!("brlab {name}: {msg}");
            return ExitCode::from(3);
        }
    };
    let meta = Meta {
        command: name,
        version: env!("CARGO_PKG_VERSION"),
        backend: brlab::par::backend(),
        threads,
        seed: cli.seed,
        config: effective,
        outputs: outcome.tables.iter().map(|t| t.file.as_str()).collect(),
        checks: &outcome.checks,
        pass: outcome.passed(),
        summary: &outcome.summary,
    };
    if let Err(e) = output::write_all(&cli.out, &outcome, &meta) {
        eprintln!("brlab {name}: writing {}: {e}", cli.out.display());
        return ExitCode::from(1);
    }
    for c in &outcome.checks {
        let mark = if c.pass { "ok  " } else { "FAIL" };
        let rel = if c.relation == "le" { "<=" } else { ">=" };
        println!("{mark} {}: {} {rel} {}", c.name, c.value, c.bound);
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    }
}
