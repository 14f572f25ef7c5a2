use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spinobs_cli::{load_config, run_experiment, CliError, ConfigError, ExperimentConfig};

/// Declares an argument group whose flags all become config keys of the same name.
macro_rules! keyed {
    ($name:ident { $( $(#[$m:meta])* $field:ident ),* $(,)? }) => {
        #[derive(Args, Debug, Default)]
        struct $name {
            $( $(#[$m])* #[arg(long)] $field: Option<String>, )*
        }
        impl $name {
            fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), ConfigError> {
                $( if let Some(v) = &self.$field { cfg.set_flag(stringify!($field), v)?; } )*
                Ok(())
            }
        }
    };
}

keyed!(Global {
    /// Worker threads for parallel stages
    #[arg(global = true)] threads,
    /// Maximum number of configurations an exact enumeration may visit
    #[arg(global = true)] budget,
    /// Seed for every random stream
    #[arg(global = true)] seed,
    /// Stdout format: text (key=value summary) or csv (the result table)
    #[arg(global = true)] format,
    /// Write the result table to this CSV file
    #[arg(global = true)] csv,
    /// Write the key=value summary to this file
    #[arg(global = true)] summary,
    /// Write a config file that reproduces this run
    #[arg(global = true)] replay,
});

keyed!(ModelArgs {
    /// potts, twospin, hardcore or ising
    model,
    /// Number of Potts colours
    q,
    /// Edge activity (Potts), same-spin-0 activity (2-spin) or coupling (Ising)
    beta,
    /// Same-spin-1 activity (2-spin)
    gamma,
    /// Vertex activity of spin 1
    lambda,
});

keyed!(FamilyArgs {
    q,
    beta,
    gamma,
    lambda,
});

keyed!(PoolArgs {
    max_vertices,
    per_size,
    max_children,
});

keyed!(ExactArgs {
    /// Edge-list graph file
    graph,
    /// partition, susceptibility, magnetization or vertex-edge:a,b,c
    observable,
    /// Comma-separated v:s, u=v, u!v
    pins,
    /// auto, enumerate or eliminate
    method,
});

keyed!(CriticalArgs { delta });

keyed!(GadgetArgs {
    observable,
    /// Recipe file
    recipe,
    /// Inline recipe expression
    expr,
    /// Write the gadget graph here
    graph_out,
    /// Path tolerance (build-path) or pair half-distance (pair)
    r,
    /// Minimum gap separation (pair)
    gap,
    /// Library half-width
    radius,
    /// Library mesh as a fraction of the half-width
    mesh,
    /// Target value (build)
    target,
    /// Construction depth (build)
    levels,
    window_lo,
    window_hi,
});

keyed!(PhaseArgs {
    n,
    t,
    delta,
    /// Output graph file (sample)
    #[arg(short = 'o')] out,
    attempts,
    /// Phase gadget graph file (assess)
    graph,
    /// exact or mc
    mode,
    samples,
    burn_in,
    chains,
});

keyed!(ReduceArgs {
    /// Base graph H
    graph,
    /// Effective activity to realise
    target,
    /// Base parameters, e.g. q=3,beta=4
    base,
    observable,
    eta,
    path_tol,
    pair_r,
    pair_gap,
    delta,
    max_ell,
    /// Write the reduction plan here
    plan_out,
    /// Run the idealized phase-marginal check on H (true or false)
    check,
});

keyed!(InterpolateArgs {
    graph,
    /// Final value of the varying activity
    target,
    /// Number of grid intervals
    grid,
    /// Bracket width to reach instead of a fixed grid
    eps,
    /// tight or paper (with --eps)
    grid_mode,
    /// exact, float, mc[:samples=..,burn_in=..,thinning=..,chains=..,z=..] or noise:rel=..
    oracle,
    max_grid,
});

keyed!(SampleArgs {
    graph,
    observable,
    /// Glauber updates after burn-in
    steps,
    burn_in,
    /// Updates between recorded samples (default one sweep)
    thinning,
    /// Compare with the exact expectation: auto, true or false
    exact,
});

#[derive(Parser, Debug)]
#[command(name = "spinobs", version, about = "Exact and Monte Carlo experiments on Potts and 2-spin systems")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact partition function and observable expectation
    Exact {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        args: ExactArgs,
    },
    /// Critical parameters: potts, twospin or hardcore
    Critical {
        family: String,
        #[command(flatten)]
        params: FamilyArgs,
        #[command(flatten)]
        args: CriticalArgs,
    },
    /// Gadget tools: stats, build-path, library, build or pair
    Gadget {
        action: String,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        pool: PoolArgs,
        #[command(flatten)]
        args: GadgetArgs,
    },
    /// Phase gadgets: sample or assess
    Phase {
        action: String,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        args: PhaseArgs,
    },
    /// Plan a reduction onto H: potts, twospin, hardcore or ising
    Reduce {
        family: String,
        #[command(flatten)]
        params: FamilyArgs,
        #[command(flatten)]
        pool: PoolArgs,
        #[command(flatten)]
        args: ReduceArgs,
    },
    /// Bracket log Z by integrating observable readings over a grid
    Interpolate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        args: InterpolateArgs,
    },
    /// Glauber dynamics estimate of an observable
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        args: SampleArgs,
    },
    /// Run a config or replay file
    Run { config: PathBuf },
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.command {
        Command::Run { config } => load_config(config)?,
        _ => ExperimentConfig::new(),
    };
    let mut set = |key: &str, value: &str| cfg.set_flag(key, value);
    match &cli.command {
        Command::Exact { model, args } => {
            set("command", "exact")?;
            model.apply(&mut cfg)?;
            args.apply(&mut cfg)?;
        }
        Command::Critical { family, params, args } => {
            set("command", "critical")?;
            set("model", family)?;
            params.apply(&mut cfg)?;
            args.apply(&mut cfg)?;
        }
        Command::Gadget { action, model, pool, args } => {
            set("command", "gadget")?;
            set("action", action)?;
            model.apply(&mut cfg)?;
            pool.apply(&mut cfg)?;
            args.apply(&mut cfg)?;
        }
        Command::Phase { action, model, args } => {
            set("command", "phase")?;
            set("action", action)?;
            model.apply(&mut cfg)?;
            args.apply(&mut cfg)?;
        }
        Command::Reduce { family, params, pool, args } => {
            set("command", "reduce")?;
            set("model", family)?;
            params.apply(&mut cfg)?;
            pool.apply(&mut cfg)?;
            args.apply(&mut cfg)?;
        }
        Command::Interpolate { model, args } => {
            set("command", "interpolate")?;
            model.apply(&mut cfg)?;
            args.apply(&mut cfg)?;
        }
        Command::Sample { model, args } => {
            set("command", "sample")?;
            model.apply(&mut cfg)?;
            args.apply(&mut cfg)?;
        }
        Command::Run { .. } => {}
    }
    cli.global.apply(&mut cfg)?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = build_config(cli)?;
    let art = run_experiment(&cfg)?;
    art.write()?;
    Ok(art.stdout)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
