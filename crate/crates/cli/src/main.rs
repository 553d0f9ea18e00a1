use clap::{Parser, Subcommand};
use descant_cli::{pipeline, RunConfig};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "descant",
    about = "Lyrics transcription pipeline: synthesis, training, decoding, rescoring, scoring"
)]
struct Cli {
    /// Sectioned key=value configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Override the data directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Worker cap inside stages (the pipeline is deterministic at any value).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus (audio, manifests, labels, lexicon).
    Synth,
    /// Extract normalized filter-bank features into per-split archives.
    Features,
    /// Train the acoustic model.
    TrainAm,
    /// Train the n-gram language models.
    TrainLm,
    /// First-pass decode a split with the trained models.
    Decode {
        #[arg(long, default_value = "dev")]
        split: String,
    },
    /// Rescore first-pass lattices with higher-order and recurrent LMs.
    Rescore {
        #[arg(long, default_value = "dev")]
        split: String,
    },
    /// Score every hypothesis file present for a split.
    Score {
        #[arg(long, default_value = "dev")]
        split: String,
    },
    /// Export the attention profile of the trained model (CSV + SVG).
    AnalyzeAttention,
    /// Print the per-layer parameter count table.
    ParamsReport,
    /// Run the whole pipeline end to end and emit results.csv.
    RunAll,
}

fn load_config(cli: &Cli) -> descant_cli::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.output {
        cfg.output_dir = out.clone();
    }
    if let Some(data) = &cli.data {
        cfg.data_dir = data.clone();
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> descant_cli::Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth => {
            let files = pipeline::cmd_synth(&cfg)?;
            println!("synthesized {} files under {}", files.len(), cfg.data_dir.display());
        }
        Command::Features => {
            let files = pipeline::cmd_features(&cfg)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::TrainAm => {
            pipeline::cmd_train_am(&cfg)?;
            println!("model written to {}", cfg.output_dir.join("am/final.bin").display());
        }
        Command::TrainLm => {
            let files = pipeline::cmd_train_lm(&cfg)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Decode { split } => {
            let files = pipeline::cmd_decode(&cfg, split)?;
            println!("decoded {split}: {} files", files.len());
        }
        Command::Rescore { split } => {
            let files = pipeline::cmd_rescore(&cfg, split)?;
            println!("rescored {split}: {} files", files.len());
        }
        Command::Score { split } => {
            let files = pipeline::cmd_score(&cfg, split)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::AnalyzeAttention => {
            let files = pipeline::cmd_analyze_attention(&cfg)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::ParamsReport => {
            let (report, _) = pipeline::cmd_params_report(&cfg)?;
            print!("{report}");
        }
        Command::RunAll => {
            let path = pipeline::cmd_run_all(&cfg)?;
            let table = std::fs::read_to_string(&path)?;
            print!("{table}");
            println!("results written to {}", path.display());
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
