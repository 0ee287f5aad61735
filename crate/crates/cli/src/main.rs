//! `kdesign` command-line front end.
//!
//! Exit status: 0 when every internal check passes, 2 when a check fails,
//! 3 for an invalid configuration, 1 for any other error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kdesign::frame_potential::Protocol;
use kdesign::hamiltonians::{ModelKind, ModelSpec};
use kdesign::runner::{self, ExperimentConfig, Recipe, TGrid};
use kdesign::Error;

#[derive(Parser)]
#[command(name = "kdesign", version, about = "Frame potentials of random quench sequences")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Frame potential against k, finite window or perfect filter.
    FpVsK(Common),
    /// Error curve against window length with fit and threshold time.
    ErrorVsT(Common),
    /// Closed-form count table against k.
    Theorems(Common),
    /// Weingarten table and Haar moment checks.
    Weingarten(Common),
    /// Temporal leakage against window length.
    Epsilon(Common),
    /// Cross-check of independent perfect-filter routes.
    OracleTriangle(Common),
}

#[derive(Args, Default)]
struct Common {
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// gue, csyk, rspin or flat.
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    sites: Option<usize>,
    #[arg(long = "J")]
    j: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    /// Seed of the Hamiltonian ensemble.
    #[arg(long)]
    model_seed: Option<u64>,
    /// 2sp or 3sp.
    #[arg(long)]
    protocol: Option<Protocol>,
    /// Comma-separated list, e.g. 1,2,3.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<u32>>,
    /// Window length; omit for the perfect-filter limit.
    #[arg(long = "T")]
    duration: Option<f64>,
    /// min:max[:per_decade] or a comma-separated list.
    #[arg(long)]
    t_grid: Option<TGrid>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Moment order (weingarten).
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    oracle_samples: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Output path; the JSON summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(recipe: Recipe, c: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            cfg.recipe = recipe;
            cfg
        }
        None => ExperimentConfig::new(recipe),
    };
    let touches_model = c.model.is_some() || c.sites.is_some() || c.j.is_some() || c.h.is_some() || c.model_seed.is_some();
    if touches_model || (c.dim.is_some() && cfg.model.is_some()) {
        let mut m = match (cfg.model.take(), c.model) {
            (Some(m), None) => m,
            (Some(m), Some(kind)) if m.kind == kind => m,
            (_, Some(kind)) => ModelSpec { kind, n: None, dim: None, j: 1.0, h: 0.0, seed: 0 },
            (None, None) => return Err(Error::Config("--model is required with model parameters".into())),
        };
        if let Some(d) = c.dim {
            m.dim = Some(d);
        }
        if let Some(n) = c.sites {
            m.n = Some(n);
        }
        if let Some(j) = c.j {
            m.j = j;
        }
        if let Some(h) = c.h {
            m.h = h;
        }
        if let Some(s) = c.model_seed {
            m.seed = s;
        }
        cfg.model = Some(m);
    }
    if let Some(d) = c.dim {
        cfg.dim = Some(d);
    }
    if c.protocol.is_some() {
        cfg.protocol = c.protocol;
    }
    if let Some(k) = &c.k {
        cfg.k_list = k.clone();
    }
    if c.duration.is_some() {
        cfg.duration = c.duration;
    }
    if c.t_grid.is_some() {
        cfg.t_grid = c.t_grid.clone();
    }
    if let Some(s) = c.samples {
        cfg.samples = s;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if c.p.is_some() {
        cfg.p = c.p;
    }
    if let Some(g) = c.gamma {
        cfg.gamma = g;
    }
    if let Some(r) = c.realizations {
        cfg.realizations = r;
    }
    if c.oracle_samples.is_some() {
        cfg.oracle_samples = c.oracle_samples;
    }
    if c.out.is_some() {
        cfg.output = c.out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (recipe, common) = match &cli.verb {
        Verb::FpVsK(c) => (Recipe::FpVsK, c),
        Verb::ErrorVsT(c) => (Recipe::ErrorVsT, c),
        Verb::Theorems(c) => (Recipe::TheoremTable, c),
        Verb::Weingarten(c) => (Recipe::WeingartenVerify, c),
        Verb::Epsilon(c) => (Recipe::EpsilonScaling, c),
        Verb::OracleTriangle(c) => (Recipe::OracleTriangle, c),
    };
    let cfg = match build_config(recipe, common) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(3);
        }
    }
    let outcome = runner::run(&cfg).and_then(|o| o.write(cfg.output.as_deref()).map(|_| o));
    match outcome {
        Ok(o) if o.passed => ExitCode::SUCCESS,
        Ok(_) => {
            eprintln!("one or more checks failed; see the summary");
            ExitCode::from(2)
        }
        Err(e @ (Error::Config(_) | Error::InvalidParameter(_) | Error::InvalidDimension(_) | Error::InvalidSector(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
