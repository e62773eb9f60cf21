//! simcli: generate scenarios, replay them under one routing strategy,
//! or compare all three side by side.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use railchain_core::engine::Envelope;
use railchain_core::sim::{
    compare_table, generate, replay, ReplayConfig, RunReport, ScenarioSpec, Strategy,
};

#[derive(Parser)]
#[command(name = "simcli", about = "Transport chain simulation runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Greedy,
    Online,
    Offline,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Greedy => Strategy::Greedy,
            StrategyArg::Online => Strategy::Online,
            StrategyArg::Offline => Strategy::Offline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario into a directory (spec.json + stream.ndjson).
    Generate {
        /// Scenario spec JSON; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a generated stream under one strategy.
    Replay {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        strategy: StrategyArg,
        #[arg(long, value_enum, default_value = "table")]
        report: ReportFormat,
    },
    /// Replay under all three strategies and print them side by side.
    Compare {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn load_spec(path: Option<&Path>, seed: Option<u64>) -> Result<ScenarioSpec, String> {
    let mut spec = match path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ScenarioSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn load_stream(dir: &Path) -> Result<Vec<Envelope>, String> {
    let path = dir.join("stream.ndjson");
    let file = fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut stream = Vec::new();
    for (number, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| format!("{}: {e}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let envelope = serde_json::from_str(&line)
            .map_err(|e| format!("{}:{}: {e}", path.display(), number + 1))?;
        stream.push(envelope);
    }
    Ok(stream)
}

fn run_one(stream: &[Envelope], strategy: Strategy) -> Result<RunReport, String> {
    replay(stream, strategy, &ReplayConfig::default()).map_err(|e| e.to_string())
}

fn run() -> Result<(), String> {
    match Cli::parse().command {
        Command::Generate { spec, seed, out } => {
            let spec = load_spec(spec.as_deref(), seed)?;
            let scenario = generate(&spec).map_err(|e| e.to_string())?;
            fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            let spec_path = out.join("spec.json");
            fs::write(&spec_path, serde_json::to_string_pretty(&spec).unwrap())
                .map_err(|e| format!("{}: {e}", spec_path.display()))?;
            let stream_path = out.join("stream.ndjson");
            let mut file = fs::File::create(&stream_path)
                .map_err(|e| format!("{}: {e}", stream_path.display()))?;
            for envelope in scenario.stream() {
                writeln!(file, "{}", serde_json::to_string(&envelope).unwrap())
                    .map_err(|e| format!("{}: {e}", stream_path.display()))?;
            }
            eprintln!(
                "wrote {} messages to {}",
                scenario.bookings.len() + 1,
                stream_path.display()
            );
            Ok(())
        }
        Command::Replay { input, strategy, report } => {
            let stream = load_stream(&input)?;
            let run = run_one(&stream, strategy.into())?;
            match report {
                ReportFormat::Table => print!("{}", run.table()),
                ReportFormat::Csv => {
                    println!("{}", RunReport::csv_header());
                    println!("{}", run.csv_row());
                }
            }
            Ok(())
        }
        Command::Compare { input } => {
            let stream = load_stream(&input)?;
            let reports = [Strategy::Greedy, Strategy::Online, Strategy::Offline]
                .into_iter()
                .map(|s| run_one(&stream, s))
                .collect::<Result<Vec<_>, _>>()?;
            print!("{}", compare_table(&reports));
            Ok(())
        }
    }
}

fn main() {
    if let Err(message) = run() {
        eprintln!("error: {message}");
        std::process::exit(1);
    }
}
