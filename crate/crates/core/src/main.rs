use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fairsim::config::{parse_config, parse_strategy_list, OutputFormat, Overrides};
use fairsim::runner::{self, GenerationChoice};
use fairsim::strategies::StrategyKind;
use fairsim::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "fairsim", version, about = "Simulate artificial societies under four labor allocation strategies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment and write logs and the summary report.
    Run {
        /// TOML configuration file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// 0, A, b, Ab, a comma list, or all.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        societies: Option<u64>,
        #[arg(long)]
        generations: Option<u32>,
        /// Founding population of each society.
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recompute the summary report from a run directory.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Overlay the consumption histograms of two strategies as SVG.
    Histogram {
        #[arg(long = "in")]
        input: PathBuf,
        /// Two strategies, e.g. `0,Ab`.
        #[arg(long, default_value = "0,Ab")]
        strategies: String,
        /// `last` or a generation number.
        #[arg(long, default_value = "last")]
        generation: String,
        #[arg(long, default_value_t = 0)]
        society: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_config(path: Option<&Path>, any_override: bool) -> Result<String> {
    match path {
        Some(p) if p.is_file() => std::fs::read_to_string(p).map_err(|e| Error::io(p, e)),
        Some(p) => Err(Error::Usage(format!("configuration file {} does not exist", p.display()))),
        None if any_override => Ok(String::new()),
        None => Err(Error::Usage("pass --config <path> or at least one override flag".into())),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { config, strategy, societies, generations, agents, seed, out, format, workers } => {
            let overrides = Overrides {
                strategies: strategy.as_deref().map(parse_strategy_list).transpose()?,
                societies,
                generations,
                initial_population: agents,
                master_seed: seed,
                output_dir: out,
                format: format.as_deref().map(str::parse::<OutputFormat>).transpose()?,
                workers,
            };
            let any_override = overrides.strategies.is_some()
                || societies.is_some()
                || generations.is_some()
                || agents.is_some()
                || seed.is_some()
                || overrides.output_dir.is_some()
                || overrides.format.is_some()
                || workers.is_some();
            let text = read_config(config.as_deref(), any_override)?;
            let cfg = parse_config(&text, &overrides)?;
            let output = runner::run_experiment(&cfg)?;
            print!("{}", runner::format_report(&output.report));
            println!("wrote {}", cfg.output_dir.display());
            Ok(())
        }
        Command::Report { input } => {
            let report = runner::report_from_dir(&input)?;
            print!("{}", runner::format_report(&report));
            Ok(())
        }
        Command::Histogram { input, strategies, generation, society, out } => {
            let kinds: Vec<StrategyKind> = parse_strategy_list(&strategies)?;
            let [a, b] = kinds[..] else {
                return Err(Error::Usage(format!("--strategies expects exactly two strategies, got `{strategies}`")));
            };
            let generation: GenerationChoice = generation.parse()?;
            let skews = runner::histogram_from_dir(&input, [a, b], generation, society, &out)?;
            for (kind, skew) in [a, b].into_iter().zip(skews) {
                match skew {
                    Some(s) => println!("Strategy {kind}: skewness {s:.4}"),
                    None => println!("Strategy {kind}: skewness undefined"),
                }
            }
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
