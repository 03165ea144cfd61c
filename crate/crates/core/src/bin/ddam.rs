use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ddam_core::config::SystemConfig;
use ddam_core::experiments::{run_experiment, verdict_code, ExperimentSpec, EXPERIMENTS};
use ddam_core::zf::zf_feasibility;
use ddam_core::DdamError;

#[derive(Parser)]
#[command(name = "ddam", version, about = "Delay-Doppler alignment modulation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Zero-forcing feasibility verdict and equation/variable counts.
    Feasibility {
        #[arg(long)]
        m_t: Option<usize>,
        #[arg(long, default_value_t = 2)]
        m_r: usize,
        #[arg(long, default_value_t = 2)]
        n_s: usize,
        #[arg(long, default_value_t = 3)]
        l: usize,
        /// Print the M_t x L grid up to these sizes when --m-t is omitted.
        #[arg(long, default_value_t = 32)]
        max_m_t: usize,
        #[arg(long, default_value_t = 8)]
        max_l: usize,
    },
    /// Run a registered Monte-Carlo experiment.
    Run {
        experiment: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with SystemConfig fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Registered experiments with a one-line description.
    ListExperiments,
}

fn run(cli: Cli) -> Result<(), DdamError> {
    match cli.command {
        Command::Feasibility { m_t: Some(m_t), m_r, n_s, l, .. } => {
            let f = zf_feasibility(m_t, m_r, n_s, l);
            println!("verdict: {:?}", f.verdict);
            println!("equations: {}", f.num_equations);
            println!("variables: {}", f.num_variables);
        }
        Command::Feasibility { m_t: None, m_r, n_s, max_m_t, max_l, .. } => {
            println!("M_r = {m_r}, N_s = {n_s}; F feasible, U undetermined, . infeasible");
            print!("  L \\ M_t");
            for m_t in 1..=max_m_t {
                print!("{}", m_t % 10);
            }
            println!();
            for l in 1..=max_l {
                print!("{l:>9}");
                for m_t in 1..=max_m_t {
                    let c = match verdict_code(zf_feasibility(m_t, m_r, n_s, l).verdict) {
                        x if x > 0.0 => 'F',
                        x if x < 0.0 => '.',
                        _ => 'U',
                    };
                    print!("{c}");
                }
                println!();
            }
        }
        Command::Run { experiment, seed, trials, out, config, format } => {
            let config = match config {
                Some(path) => SystemConfig::from_toml_file(&path)?,
                None => SystemConfig::default(),
            };
            let table = run_experiment(&ExperimentSpec { name: experiment, seed, trials, config })?;
            let text = match format {
                Format::Csv => table.to_csv(),
                Format::Json => table.to_json()?,
            };
            std::fs::write(&out, text)?;
            eprintln!("{} rows written to {}; {} failed trials", table.rows.len(), out.display(), table.failures);
        }
        Command::ListExperiments => {
            for (name, about) in EXPERIMENTS {
                println!("{name:<24} {about}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ DdamError::UnknownExperiment(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
