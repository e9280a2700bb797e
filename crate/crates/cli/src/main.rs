use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pslab::{execute, Invocation};

/// Patterson-Sullivan experiments for discrete subgroups of SL(d, R).
#[derive(Parser)]
#[command(name = "pslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `outputPath` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (overrides `workers` in the config).
    #[arg(long, env = "PSLAB_WORKERS")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Cartan and Jordan projections of the generators.
    Kappa(RunArgs),
    /// Cartan projections and phi over the word ball.
    Orbit(RunArgs),
    /// Flags u_theta(g) over a sphere.
    LimitSet(RunArgs),
    /// Normalized Cartan projections over a sphere.
    LimitCone(RunArgs),
    /// Critical exponent estimate.
    CriticalExponent(RunArgs),
    /// Atomic Patterson-Sullivan measure.
    PsMeasure(RunArgs),
    /// Residual of the conformality relation.
    QuasiInvariance(RunArgs),
    /// Shadow-lemma ratios in the Klein model.
    ShadowCheck(RunArgs),
    /// Orbit points near a ray to a boundary point.
    Conicality(RunArgs),
    /// Closed-geodesic counts against the prime-geodesic prediction.
    CountGeodesics(RunArgs),
    /// Box-counting dimension of the sampled limit set.
    BoxDim(RunArgs),
    /// Exponent of a subgroup against the whole group.
    EntropyDrop(RunArgs),
    /// Normalized exponents along a segment of functionals.
    Concavity(RunArgs),
}

impl Command {
    fn split(self) -> (&'static str, RunArgs) {
        match self {
            Command::Kappa(a) => ("kappa", a),
            Command::Orbit(a) => ("orbit", a),
            Command::LimitSet(a) => ("limit-set", a),
            Command::LimitCone(a) => ("limit-cone", a),
            Command::CriticalExponent(a) => ("critical-exponent", a),
            Command::PsMeasure(a) => ("ps-measure", a),
            Command::QuasiInvariance(a) => ("quasi-invariance", a),
            Command::ShadowCheck(a) => ("shadow-check", a),
            Command::Conicality(a) => ("conicality", a),
            Command::CountGeodesics(a) => ("count-geodesics", a),
            Command::BoxDim(a) => ("box-dim", a),
            Command::EntropyDrop(a) => ("entropy-drop", a),
            Command::Concavity(a) => ("concavity", a),
        }
    }
}

fn main() -> ExitCode {
    let (command, args) = Cli::parse().command.split();
    let status = execute(&Invocation { command: command.into(), config: args.config, out: args.out, workers: args.workers });
    if let Some(message) = &status.message {
        eprintln!("pslab {command}: {message}");
    }
    ExitCode::from(status.code as u8)
}
