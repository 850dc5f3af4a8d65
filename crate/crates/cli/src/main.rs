use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coarsekit_cli::config::*;
use coarsekit_cli::{init_threads, reproduce, run, CliError, ExperimentConfig, Method};

#[derive(Parser)]
#[command(name = "coarsekit", version, about = "Coarse variables of autonomous ODE systems")]
struct Cli {
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true, env = "COARSEKIT_THREADS")]
    threads: Option<usize>,
    /// Suppress the per-stage summary lines.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    system: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn config(self, default_system: &str, method: Method) -> ExperimentConfig {
        ExperimentConfig { system: self.system.unwrap_or_else(|| default_system.into()), seed: self.seed, output_dir: self.out, method }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one system and write its trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        t0: Option<f64>,
        #[arg(long)]
        t1: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        record_every: Option<usize>,
        /// ε of the slow-fast systems, ω of the sinusoidal load.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        ic: Vec<f64>,
    },
    /// Running window averages of observables.
    Average {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        taus: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        observables: Vec<String>,
        #[arg(long)]
        t1: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        ic: Vec<f64>,
    },
    /// Relax a slow manifold of the augmented system and evolve on it.
    Plim {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Integrate the limit DAE and compare it with fine averages.
    Dae {
        #[command(flatten)]
        common: Common,
    },
    /// Time-averaged coarse stepping.
    Pta {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = PtaMode::Alternative)]
        mode: PtaMode,
    },
    /// Build a coarse function on a phase-space mesh.
    FindCoarse {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mesh_n: Option<usize>,
        #[arg(long)]
        level: Option<f64>,
    },
    /// Pair tests of a coarse function.
    Criteria {
        #[command(flatten)]
        common: Common,
        /// A field written by find-coarse; built afresh when absent.
        #[arg(long)]
        field: Option<PathBuf>,
        #[arg(long)]
        n_pairs: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        mesh_n: Option<usize>,
    },
    /// Run a bundled figure preset and check its properties.
    Reproduce {
        id: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; `out/<id>` when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment described by a TOML file.
    Run {
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PtaMode {
    Alternative,
    Projective,
    Instantaneous,
}

fn build(cmd: Cmd) -> Result<ExperimentConfig, CliError> {
    Ok(match cmd {
        Cmd::Simulate { common, t0, t1, dt, record_every, epsilon, ic } => {
            let mut p = SimulateParams::default();
            if let Some(v) = t0 {
                p.t0 = v;
            }
            if let Some(v) = t1 {
                p.t1 = v;
            }
            if let Some(v) = dt {
                p.integrator.dt = v;
            }
            if let Some(v) = record_every {
                p.integrator.record_every = v;
            }
            if let Some(v) = epsilon {
                p.epsilon = v;
            }
            p.ic = ic;
            common.config("lorenz", Method::Simulate(p))
        }
        Cmd::Average { common, taus, observables, t1, epsilon, ic } => {
            let mut p = AverageParams::default();
            if !taus.is_empty() {
                p.taus = taus;
            }
            if !observables.is_empty() {
                p.observables = observables;
            }
            if let Some(v) = t1 {
                p.t1 = v;
            }
            if let Some(v) = epsilon {
                p.epsilon = v;
            }
            if !ic.is_empty() {
                p.ics = vec![ic];
            }
            common.config("forced-monotone-lorenz", Method::Average(p))
        }
        Cmd::Plim { common, tau, epsilon, max_iters } => {
            let mut p = PlimParams::default();
            if let Some(v) = tau {
                p.tau = v;
            }
            if let Some(v) = epsilon {
                p.epsilon = v;
            }
            if let Some(v) = max_iters {
                p.solver.max_iters = v;
            }
            common.config("forced-monotone-lorenz", Method::Plim(p))
        }
        Cmd::Dae { common } => {
            let oscillatory = common.system.as_deref() == Some("oscillatory-forced-lorenz");
            let p = if oscillatory {
                DaeParams::OscillatoryLorenz(OscillatoryDaeParams::default())
            } else {
                DaeParams::Artstein(ArtsteinDaeParams::default())
            };
            common.config("artstein", Method::Dae(p))
        }
        Cmd::Pta { common, mode } => {
            let (sys, p) = match mode {
                PtaMode::Alternative => ("oscillatory-forced-lorenz", PtaParams::Alternative(AlternativePtaParams::default())),
                PtaMode::Projective => ("artstein", PtaParams::Projective(ProjectivePtaParams::default())),
                PtaMode::Instantaneous => ("oscillatory-forced-lorenz", PtaParams::Instantaneous(InstantaneousParams::default())),
            };
            common.config(sys, Method::Pta(p))
        }
        Cmd::FindCoarse { common, mesh_n, level } => {
            let mut p = FindCoarseParams::default();
            if let Some(v) = mesh_n {
                p.mesh_n = v;
            }
            p.level = level;
            common.config("lorenz", Method::FindCoarse(p))
        }
        Cmd::Criteria { common, field, n_pairs, horizon, mesh_n } => {
            let mut p = CriteriaParams { field, ..CriteriaParams::default() };
            if let Some(v) = n_pairs {
                p.n_pairs = v;
            }
            if let Some(v) = horizon {
                p.horizon = v;
            }
            if let Some(v) = mesh_n {
                p.find.mesh_n = v;
            }
            common.config("lorenz", Method::Criteria(p))
        }
        Cmd::Run { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg
        }
        Cmd::Reproduce { .. } => unreachable!("handled in main"),
    })
}

fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    match cli.cmd {
        Cmd::Reproduce { id, seed, out } => {
            reproduce(&id, out.as_deref(), seed, cli.quiet)?.into_result()?;
        }
        cmd => {
            let cfg = build(cmd)?;
            run(&cfg, cli.quiet)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
