use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use fltp_cli::{eval, gen_data, metrics_row, train, CliError, RunConfig, METRICS_CSV_HEADER};

#[derive(Parser)]
#[command(name = "fltp", version, about = "Federated trajectory-prediction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the client partition and validation split.
    GenData { config: PathBuf },
    /// Train with the mode selected in the config.
    Train { config: PathBuf },
    /// Evaluate a parameter file on a dataset file.
    Eval {
        params: PathBuf,
        data: PathBuf,
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { config } => {
            let cfg = RunConfig::load(&config)?;
            let s = gen_data(&cfg)?;
            println!(
                "wrote {} clients x {} scenarios to {}",
                s.clients,
                s.scenarios_per_client,
                cfg.dataset.display()
            );
            println!(
                "wrote {} validation scenarios to {}",
                s.validation_scenarios,
                cfg.validation.display()
            );
        }
        Command::Train { config } => {
            let cfg = RunConfig::load(&config)?;
            let out = train(&cfg)?;
            if let Some(m) = out.log.iter().rev().find_map(|l| l.metrics) {
                println!(
                    "final: nll={} min_ade={} min_fde={} mr={}",
                    m.nll, m.min_ade, m.min_fde, m.mr
                );
            }
            println!("params:  {}", out.params_path.display());
            println!("metrics: {}", out.metrics_path.display());
            println!("rounds:  {}", out.rounds_path.display());
        }
        Command::Eval {
            params,
            data,
            config,
        } => {
            let cfg = RunConfig::load(&config)?;
            let (r, path) = eval(&params, &data, &cfg)?;
            println!("scenarios: {}", r.n_scenarios);
            println!("nll:       {}", r.nll);
            println!("minADE:    {}", r.min_ade);
            println!("minFDE:    {}", r.min_fde);
            println!("MR:        {}", r.mr);
            println!("{METRICS_CSV_HEADER}");
            println!("{}", metrics_row(cfg.fl.rounds, &r));
            println!("csv:       {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
