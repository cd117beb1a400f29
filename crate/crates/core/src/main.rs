use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use codealign::dataset::StrategyKind;
use codealign::gateway::BackendKind;
use codealign::pipeline::{self, Pipeline, PipelineConfig, Stage};

#[derive(Parser)]
#[command(
    name = "codealign",
    version,
    about = "Build an execution-validated instruction dataset from a code corpus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage in order.
    Run(Common),
    /// Extract and filter seed functions.
    Curate(Common),
    /// Mine concepts from seeds.
    Concepts(Common),
    /// Generate instructions from concepts.
    Instructions(Common),
    /// Sample responses with tests.
    Responses(Common),
    /// Execute every candidate in the sandbox.
    Validate(Common),
    /// Apply the selection strategy and write the dataset.
    Select(Common),
    /// Print statistics for an output directory.
    Stats {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; overrides the config.
        dir: Option<PathBuf>,
    },
    /// Re-execute the dataset's programs and report records that fail.
    Revalidate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<StrategyKind>,
    #[arg(long)]
    subset_size: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    /// `mock:<transcript>` or an OpenAI-compatible base URL.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    sandbox_url: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Continue from existing checkpoints.
    #[arg(long)]
    resume: bool,
    /// Write the dataset without provenance.
    #[arg(long)]
    bare: bool,
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse()
}

fn load_config(path: Option<&PathBuf>) -> Result<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(PipelineConfig::default()),
    }
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut c = load_config(self.config.as_ref())?;
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(kind) = self.strategy {
            c.selection.strategy = kind;
        }
        if let Some(n) = self.subset_size {
            c.selection.subset_size = Some(n);
        }
        if let Some(n) = self.n_samples {
            c.n_samples = n;
        }
        if let Some(b) = &self.backend {
            match b.strip_prefix("mock:") {
                Some(path) => {
                    c.backend.kind = BackendKind::ScriptedMock;
                    c.backend.transcript_path = Some(PathBuf::from(path));
                }
                None => {
                    c.backend.kind = BackendKind::HttpOpenaiCompatible;
                    c.backend.base_url = Some(b.clone());
                }
            }
        }
        if let Some(url) = &self.sandbox_url {
            c.sandbox.url = Some(url.clone());
        }
        if let Some(dir) = &self.output_dir {
            c.output_dir = dir.clone();
        }
        if self.bare {
            c.bare = true;
        }
        Ok(c)
    }

    fn open(&self) -> Result<Pipeline> {
        Ok(Pipeline::open(self.config()?, self.resume)?)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn stage(common: &Common, stage: Stage) -> Result<()> {
    let summary = common.open()?.run_stage(stage)?;
    print_json(&summary)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => print_json(&c.open()?.run()?),
        Command::Curate(c) => stage(&c, Stage::Curate),
        Command::Concepts(c) => stage(&c, Stage::Concepts),
        Command::Instructions(c) => stage(&c, Stage::Instructions),
        Command::Responses(c) => stage(&c, Stage::Responses),
        Command::Validate(c) => stage(&c, Stage::Validate),
        Command::Select(c) => stage(&c, Stage::Select),
        Command::Stats { config, dir } => {
            let dir = match dir {
                Some(d) => d,
                None => load_config(config.as_ref())?.output_dir,
            };
            print_json(&pipeline::stats(&dir)?)
        }
        Command::Revalidate(c) => {
            let violations = c.open()?.revalidate()?;
            print_json(&violations)?;
            if !violations.is_empty() {
                anyhow::bail!("{} record(s) no longer pass", violations.len());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
