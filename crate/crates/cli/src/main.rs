//! Command-line driver: dataset generation, training and evaluation reports.

mod eval;
mod output;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use concept_reasoner::datasets::{split, DatasetKind};

use output::{CliError, Reporter};

#[derive(Debug, Parser)]
#[command(name = "dcr", version, about = "Train and inspect concept-based rule reasoners")]
struct Cli {
    /// Default directory for outputs whose path is not given.
    #[arg(long, global = true, env = "DCR_OUTPUT_DIR", default_value = "runs")]
    output_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with its train/val/test split as CSV.
    Generate(GenerateArgs),
    /// Train a stage (or the whole pipeline) and write a checkpoint.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint on a dataset and write JSON and CSV reports.
    Eval(eval::EvalArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Xor,
    Trig,
    Dot,
}

impl From<KindArg> for DatasetKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Xor => DatasetKind::Xor,
            KindArg::Trig => DatasetKind::Trig,
            KindArg::Dot => DatasetKind::Dot,
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: KindArg,
    /// Number of samples.
    #[arg(long, default_value_t = 3000, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV path; defaults to `<output-dir>/<kind>-<seed>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn generate(cli_dir: &std::path::Path, args: &GenerateArgs) -> Result<(), CliError> {
    let reporter = Reporter::new("generate");
    let kind = DatasetKind::from(args.kind);
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| cli_dir.join(format!("{}-{}.csv", kind.token(), args.seed)));
    let n = usize::try_from(args.n).map_err(|_| CliError::Usage("--n is too large".into()))?;
    let mut ds = reporter.time("generate", || kind.generate(n, args.seed))?;
    split(&mut ds, args.seed);
    output::write_dataset(&ds, &out)?;
    println!("wrote {} samples ({} features, {} concepts) to {}", ds.len(), ds.n_features, ds.n_concepts, out.display());

    let mut manifest = reporter.manifest();
    manifest.seed = Some(args.seed);
    manifest.artifacts.insert("dataset".into(), out.clone());
    manifest.finish(&output::sibling(&out, "manifest.json"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(args) => generate(&cli.output_dir, args),
        Command::Train(args) => train::run(&cli.output_dir, args),
        Command::Eval(args) => eval::run(&cli.output_dir, args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { output::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
