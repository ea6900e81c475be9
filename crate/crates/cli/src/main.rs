use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use percolab::config::{Command, ExperimentConfig};
use percolab::run::print;
use percolab::{emit_report, run_experiment, CliError};
use percolab_core::growth::StoppingRule;
use percolab_core::model::ConnectionFunction;

#[derive(Parser)]
#[command(name = "percolab", version, about = "Soft random geometric graph experiments")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Sample Poisson configurations.
    Sample(RunArgs),
    /// Largest and second-largest component orders over replicates.
    Giant(RunArgs),
    /// Percolation probability from whole-plane origin explorations.
    Theta(RunArgs),
    /// Bracket the critical intensity by bisection over box sizes.
    LambdaC(RunArgs),
    /// Renormalization event probabilities.
    Events(RunArgs),
    /// Sample the block field and check its dependence range.
    BlockField(RunArgs),
    /// Monte Carlo checks of the Mecke identities.
    Mecke(RunArgs),
    /// Empirical covariance of increasing events.
    Fkg(RunArgs),
    /// Aggregate finished runs into a tab-separated table.
    Report {
        dir: PathBuf,
        /// Also write the table here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default configuration of a command as TOML.
    PrintConfig {
        #[arg(value_enum, default_value = "giant")]
        command: Command,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Connection function, e.g. `hard-disk:1` or `step-table:1=1,2=0.5`.
    #[arg(long)]
    phi: Option<ConnectionFunction>,
    /// Intensity grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Box-side grid, comma separated.
    #[arg(long, value_delimiter = ',')]
    s: Option<Vec<f64>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Escape radius of explorations.
    #[arg(long)]
    rmax_escape: Option<f64>,
    /// Size cap of explorations.
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; overridden by PERCOLAB_WORKERS.
    #[arg(long)]
    workers: Option<usize>,
    /// Dump the edge list of replicate 0 per grid cell.
    #[arg(long)]
    dump_edges: bool,
    /// Dump the growth trace of replicate 0 per intensity.
    #[arg(long)]
    trace: bool,
}

impl RunArgs {
    fn resolve(self, command: Command) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::defaults(command),
        };
        cfg.command = command;
        if let Some(phi) = self.phi {
            cfg.phi = phi;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.s {
            cfg.s = v;
        }
        if let Some(v) = self.replicates {
            cfg.replicates = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        let kmax = self.kmax.unwrap_or(cfg.rule.max_size);
        let rmax = self.rmax_escape.unwrap_or(cfg.rule.escape_radius);
        cfg.rule = StoppingRule::new(kmax, rmax)?;
        if let Some(v) = self.out {
            cfg.out = v;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.debug.dump_edges |= self.dump_edges;
        cfg.debug.trace |= self.trace;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(action: Action) -> Result<(), CliError> {
    let (command, args) = match action {
        Action::Report { dir, out } => {
            let table = emit_report(&dir)?;
            if let Some(path) = out {
                std::fs::write(&path, &table).map_err(|source| CliError::Io { path, source })?;
            }
            print(&table);
            return Ok(());
        }
        Action::PrintConfig { command } => {
            print(&ExperimentConfig::defaults(command).to_toml());
            return Ok(());
        }
        Action::Sample(a) => (Command::Sample, a),
        Action::Giant(a) => (Command::Giant, a),
        Action::Theta(a) => (Command::Theta, a),
        Action::LambdaC(a) => (Command::LambdaC, a),
        Action::Events(a) => (Command::Events, a),
        Action::BlockField(a) => (Command::BlockField, a),
        Action::Mecke(a) => (Command::Mecke, a),
        Action::Fkg(a) => (Command::Fkg, a),
    };
    let cfg = args.resolve(command)?;
    let outcome = run_experiment(&cfg)?;
    for f in &outcome.files {
        eprintln!("wrote {}", outcome.out.join(f).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.action) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
