use std::path::PathBuf;

use auscult::data::Split;
use auscult_cli::{
    cmd_ablation, cmd_embed, cmd_evaluate, cmd_preprocess, cmd_synth, cmd_train, CliError,
    RunConfig, SynthSpec,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "auscult",
    about = "Respiratory-sound classification: preprocessing, sharpness-aware training, scoring, and embedding diagnostics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML config file; defaults apply when omitted
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the run seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-path overrides, e.g. --set optimizer.rho=0.1
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::load(self.config.as_deref(), &self.set)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out_dir = out.clone();
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decode, resample, pad, and cache log-mel spectrograms
    Preprocess(ConfigArgs),
    /// Train a model over the cached training split
    Train(ConfigArgs),
    /// Score a checkpoint over the cached test split
    Evaluate {
        #[command(flatten)]
        common: ConfigArgs,
        /// Checkpoint to score (default: <out>/model.astc)
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the three-way sampler/optimizer comparison
    Ablation(ConfigArgs),
    /// Export embeddings and a 2-D projection
    Embed {
        #[command(flatten)]
        common: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Which split to embed
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Generate a seeded synthetic dataset
    Synth {
        #[command(flatten)]
        common: ConfigArgs,
        /// Records per class: normal,crackle,wheeze,both
        #[arg(long, default_value = "100,50,25,25")]
        counts: String,
        #[arg(long, default_value_t = 2.0)]
        min_duration: f64,
        #[arg(long, default_value_t = 5.0)]
        max_duration: f64,
        #[arg(long, default_value_t = 0.75)]
        train_fraction: f64,
        /// Output directory for the dataset (default: the config data path)
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML
    PrintConfig(ConfigArgs),
}

fn parse_counts(raw: &str) -> Result<[usize; 4], CliError> {
    let parts: Vec<&str> = raw.split(',').collect();
    if parts.len() != 4 {
        return Err(CliError::Config(format!(
            "--counts expects 4 comma-separated integers, got {raw:?}"
        )));
    }
    let mut counts = [0usize; 4];
    for (slot, part) in counts.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("bad count {part:?}")))?;
    }
    Ok(counts)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess(common) => {
            let config = common.load()?;
            let summary = cmd_preprocess(&config)?;
            for warning in &summary.warnings {
                eprintln!("warning: {warning}");
            }
            println!(
                "preprocessed {} records ({} skipped) into {}",
                summary.processed,
                summary.skipped,
                config.cache_dir().display()
            );
        }
        Command::Train(common) => {
            let config = common.load()?;
            let summary = cmd_train(&config)?;
            println!(
                "trained {} steps; final train accuracy {:.4}; checkpoint {}",
                summary.steps,
                summary.final_train_accuracy,
                summary.checkpoint_path.display()
            );
        }
        Command::Evaluate { common, checkpoint } => {
            let config = common.load()?;
            let path = checkpoint.unwrap_or_else(|| config.out_dir.join("model.astc"));
            let outputs = cmd_evaluate(&config, &path)?;
            print!("{}", auscult::eval::report_summary(&outputs.report));
            println!("report: {}", outputs.report_path.display());
        }
        Command::Ablation(common) => {
            let config = common.load()?;
            let outputs = cmd_ablation(&config)?;
            println!("ablation rows written to {}", outputs.csv_path.display());
            for (name, report) in &outputs.rows {
                println!(
                    "{name}: Se={} Sp={} Score={}",
                    render(report.sensitivity),
                    render(report.specificity),
                    render(report.score)
                );
            }
        }
        Command::Embed {
            common,
            checkpoint,
            split,
        } => {
            let config = common.load()?;
            let split = Split::from_name(&split)
                .ok_or_else(|| CliError::Config(format!("unknown split {split:?}")))?;
            let path = checkpoint.unwrap_or_else(|| config.out_dir.join("model.astc"));
            let outputs = cmd_embed(&config, &path, split)?;
            println!(
                "embeddings: {}\ncoordinates: {}\nkl trace: {}",
                outputs.embeddings_path.display(),
                outputs.coords_path.display(),
                outputs.kl_path.display()
            );
        }
        Command::Synth {
            common,
            counts,
            min_duration,
            max_duration,
            train_fraction,
            data_dir,
        } => {
            let config = common.load()?;
            let spec = SynthSpec {
                out_dir: data_dir.unwrap_or(config.data.path.clone()),
                counts: parse_counts(&counts)?,
                min_duration,
                max_duration,
                train_fraction,
                seed: config.seed,
            };
            let summary = cmd_synth(&spec)?;
            println!(
                "wrote {} records, manifest {}, splits {}",
                summary.rows,
                summary.manifest_path.display(),
                summary.split_path.display()
            );
        }
        Command::PrintConfig(common) => {
            let config = common.load()?;
            print!("{}", config.to_toml());
        }
    }
    Ok(())
}

fn render(m: auscult::eval::MetricValue) -> String {
    match m.value() {
        Some(v) => format!("{v:.4}"),
        None => "undefined".into(),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
