use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gslp::channel::write_channel_csv;
use gslp::harness::config::Config;
use gslp::harness::experiment::channel_for;
use gslp::harness::output::{write_bench_csv, write_power_csv, write_ser_csv};
use gslp::harness::{bench, run_powermin_experiment, run_ser_experiment, table_for_config};
use gslp::Error;

#[derive(Parser)]
#[command(name = "gslp", version, about = "Grouped symbol-level precoding experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output CSV path; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; the rayon default when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// SER versus transmit power for the max-min designs.
    Maxmin,
    /// Average power and SER versus the SINR target.
    Powermin,
    /// Precoder-table build times.
    Bench,
    /// Dumps the precoder table of the first channel realization.
    Table,
    /// Dumps the first channel realization.
    Channel,
}

fn load_config(cli: &Cli) -> Result<Config, Error> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = Config::from_path(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &Config, out: &mut dyn Write) -> Result<(), Error> {
    match cli.command {
        Command::Maxmin => {
            let result = run_ser_experiment(cfg)?;
            write_ser_csv(&result.rows, out)
        }
        Command::Powermin => {
            let result = run_powermin_experiment(cfg)?;
            write_power_csv(&result.rows, out)
        }
        Command::Bench => {
            let result = bench(cfg)?;
            write_bench_csv(&result.rows, out)
        }
        Command::Table => table_for_config(cfg)?.write_csv(out),
        Command::Channel => write_channel_csv(&channel_for(cfg, 0)?, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = (|| -> Result<(), Error> {
        let mut out: Box<dyn Write> = match &cli.out {
            Some(path) => Box::new(BufWriter::new(File::create(path)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        run(&cli, &cfg, &mut out)?;
        out.flush()?;
        Ok(())
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
