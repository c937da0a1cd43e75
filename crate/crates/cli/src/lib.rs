//! Command-line front end for the `qmc` binary.
//!
//! Every command writes its results into `--out` together with a
//! `manifest.json` recording the arguments, seeds, code version, wall time
//! and SHA-256 digests of the deterministic outputs. Wall-clock timings go
//! to a separate `timings.csv` so that the result files are reproducible
//! byte for byte; `qmc replay <manifest>` re-runs a command and checks the
//! digests.

mod commands;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use output::{Manifest, Output};

#[derive(Parser, Debug)]
#[command(name = "qmc", version, about = "Quasi-Monte Carlo rules, bounds and estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by all commands; they do not affect results and are not
/// recorded as parameters.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Output directory.
    #[arg(long, default_value = "qmc-out")]
    pub out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Construct a generating vector (or an interlaced polynomial lattice
    /// rule with --alpha) by component-by-component search.
    Cbc(commands::CbcArgs),
    /// Write the points of a rule, optionally randomly shifted.
    Points(commands::PointsArgs),
    /// Evaluate the worst-case error bound factor for a weight model.
    Bound(commands::BoundArgs),
    /// Calibrate weights from norm-bound coefficients.
    Calibrate(commands::CalibrateArgs),
    /// Price an arithmetic Asian call option.
    Option(commands::OptionArgs),
    /// Log-likelihood of a Poisson GLMM with AR(1) random effects.
    Glmm(commands::GlmmArgs),
    /// Expected functional of an elliptic PDE with a random coefficient.
    Pde(commands::PdeArgs),
    /// Multivariate decomposition method on a product test integrand.
    Mdm(commands::MdmArgs),
    /// Multilevel estimate of the Asian option price over time-step levels.
    Ml(commands::MlArgs),
    /// Fast versus naive lattice matrix-vector products.
    MvmBench(commands::MvmArgs),
    /// Convergence study over n = 2^m.
    Convergence(commands::ConvergenceArgs),
    /// Re-run a command from its manifest and compare output digests.
    Replay(commands::ReplayArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Cbc(_) => "cbc",
            Self::Points(_) => "points",
            Self::Bound(_) => "bound",
            Self::Calibrate(_) => "calibrate",
            Self::Option(_) => "option",
            Self::Glmm(_) => "glmm",
            Self::Pde(_) => "pde",
            Self::Mdm(_) => "mdm",
            Self::Ml(_) => "ml",
            Self::MvmBench(_) => "mvm-bench",
            Self::Convergence(_) => "convergence",
            Self::Replay(_) => "replay",
        }
    }
}

fn params<T: Serialize>(a: &T) -> serde_json::Value {
    serde_json::to_value(a).unwrap_or(serde_json::Value::Null)
}

/// Runs the CLI on `argv` (including the program name) and returns the
/// process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn execute(command: Command, argv: &[String]) -> anyhow::Result<()> {
    let name = command.name();
    if let Command::Replay(a) = &command {
        return commands::replay(a);
    }
    let (common, seed, parameters) = match &command {
        Command::Cbc(a) => (&a.common, None, params(a)),
        Command::Points(a) => (&a.common, Some(a.seed), params(a)),
        Command::Bound(a) => (&a.common, None, params(a)),
        Command::Calibrate(a) => (&a.common, None, params(a)),
        Command::Option(a) => (&a.common, Some(a.seed), params(a)),
        Command::Glmm(a) => (&a.common, Some(a.seed), params(a)),
        Command::Pde(a) => (&a.common, Some(a.seed), params(a)),
        Command::Mdm(a) => (&a.common, Some(a.seed), params(a)),
        Command::Ml(a) => (&a.common, Some(a.seed), params(a)),
        Command::MvmBench(a) => (&a.common, Some(a.seed), params(a)),
        Command::Convergence(a) => (&a.common, Some(a.seed), params(a)),
        Command::Replay(_) => unreachable!(),
    };
    if let Some(t) = common.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    if let Some(s) = seed {
        eprintln!("seed = {s}");
    }
    let mut out = Output::new(&common.out)?;
    let start = std::time::Instant::now();
    let result = match &command {
        Command::Cbc(a) => commands::cbc(a, &mut out),
        Command::Points(a) => commands::points(a, &mut out),
        Command::Bound(a) => commands::bound(a, &mut out),
        Command::Calibrate(a) => commands::calibrate(a, &mut out),
        Command::Option(a) => commands::option(a, &mut out),
        Command::Glmm(a) => commands::glmm(a, &mut out),
        Command::Pde(a) => commands::pde(a, &mut out),
        Command::Mdm(a) => commands::mdm(a, &mut out),
        Command::Ml(a) => commands::ml(a, &mut out),
        Command::MvmBench(a) => commands::mvm_bench(a, &mut out),
        Command::Convergence(a) => commands::convergence(a, &mut out),
        Command::Replay(_) => unreachable!(),
    };
    let wall = start.elapsed().as_secs_f64();
    let manifest = Manifest {
        command: name.to_string(),
        args: output::strip_volatile_args(&argv[1..]),
        parameters,
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: wall,
        outputs: out.digests().clone(),
        success: result.is_ok(),
    };
    out.write_manifest(&manifest)?;
    result
}
