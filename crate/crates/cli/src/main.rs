use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};
use sigtrial_core::campaign::{
    export_simulated, run_analysis, run_simulation, write_analysis, write_simulation,
};
use sigtrial_core::config::{bundled, bundled_names, RunConfig};
use sigtrial_core::Error;

#[derive(Parser)]
#[command(
    name = "sigtrial",
    version,
    about = "Two-outcome adaptive signature designs with cross-validated risk scores"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
}

impl Overrides {
    fn apply(&self, config: &mut RunConfig) {
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(t) = self.threads {
            config.threads = Some(t);
        }
        if let Some(r) = self.replications {
            config.n_replications = r;
        }
        if let Some(p) = self.permutations {
            config.n_permutations = p;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation campaign and write operating characteristics.
    Simulate {
        /// Config file, or the name of a bundled config.
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        outdir: PathBuf,
        /// Write per-subject risk scores of the first N replications.
        #[arg(long, value_name = "N", default_value_t = 0)]
        dump_scores: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Analyse a trial data CSV (id,arm,y1,y2,covariates...).
    Analyze {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        data: PathBuf,
        #[arg(short, long)]
        outdir: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write one simulated dataset as a data CSV.
    Generate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Replication index whose dataset is written.
        #[arg(long, default_value_t = 0)]
        replication: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List bundled configs, or print one.
    Configs { name: Option<String> },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigInvalid(_) | Error::InvalidDataset(_) => 2,
        Error::Io(_) => 3,
        _ => 4,
    }
}

fn load(path: &Path) -> Result<RunConfig, Error> {
    RunConfig::load(path)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate {
            config,
            outdir,
            dump_scores,
            overrides,
        } => {
            let mut cfg = load(&config)?;
            overrides.apply(&mut cfg);
            let outcome = run_simulation(&cfg, dump_scores)?;
            for p in write_simulation(&outcome, &outdir)? {
                info!("wrote {}", p.display());
            }
        }
        Command::Analyze {
            config,
            data,
            outdir,
            overrides,
        } => {
            let mut cfg = load(&config)?;
            overrides.apply(&mut cfg);
            let (dataset, report) = run_analysis(&cfg, &data)?;
            for p in write_analysis(&dataset, &report, &outdir)? {
                info!("wrote {}", p.display());
            }
        }
        Command::Generate {
            config,
            output,
            replication,
            seed,
        } => {
            let mut cfg = load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let file = std::fs::File::create(&output)
                .map_err(|e| Error::Io(format!("{}: {e}", output.display())))?;
            export_simulated(&cfg, replication, std::io::BufWriter::new(file))?;
            info!("wrote {}", output.display());
        }
        Command::Configs { name: None } => {
            for n in bundled_names() {
                println!("{n}");
            }
        }
        Command::Configs { name: Some(name) } => match bundled(&name) {
            Some(text) => print!("{text}"),
            None => {
                return Err(Error::ConfigInvalid(format!(
                    "no bundled config named '{name}'"
                )))
            }
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
