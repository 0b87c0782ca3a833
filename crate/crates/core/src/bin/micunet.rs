//! Command-line entry point. Exit status 0 on success, 1 for invalid input,
//! 2 for runtime failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use micunet::data::{synth_generate, Filter, Lang, Split, SynthConfig};
use micunet::train::{evaluate, export_embeddings, run_ablation_suite, run_loto, run_training, Checkpoint, EvalOptions, TrainConfig};
use micunet::{Error, Result};

#[derive(Parser)]
#[command(name = "micunet", version, about = "Mixed-curvature multitask fusion: training, evaluation and experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write its checkpoint, log and test report
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a manifest and print the JSON report
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        lang: Option<Lang>,
        #[arg(long)]
        split: Option<Split>,
    },
    /// Train every fusion variant under the same budget and tabulate test EER
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// comma-separated seeds; defaults to the config seed
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
    /// Train without two sources and evaluate the emotion tasks on them
    Loto {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        holdout: Vec<usize>,
        /// also write the JSON report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus: `n` training clips per language, a quarter of that for dev and test
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write fused embeddings of every manifest record plus a label sidecar
    ExportEmbeddings {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        lang: Option<Lang>,
        #[arg(long)]
        split: Option<Split>,
    },
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Train { config, out } => {
            let cfg = TrainConfig::load(&config)?;
            let (outcome, report) = run_training(&cfg, &out)?;
            let best = &outcome.best.meta;
            eprintln!("best epoch {} of {} (dev loss {:.4}); checkpoint in {}", best.epoch, outcome.log.len(), best.dev.loss, out.join("checkpoint").display());
            println!("{}", report.to_json()?);
        }
        Cmd::Eval { ckpt, manifest, lang, split } => {
            let ck = Checkpoint::load(&ckpt)?;
            let opts = EvalOptions { filter: Filter { lang, split, ..Default::default() }, tasks: vec![] };
            println!("{}", evaluate(&ck, &manifest, &opts)?.to_json()?);
        }
        Cmd::Ablate { config, out, seeds } => {
            let cfg = TrainConfig::load(&config)?;
            let seeds = if seeds.is_empty() { vec![cfg.seed] } else { seeds };
            let table = run_ablation_suite(&cfg, &seeds)?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            write(&out.join("ablation.json"), &serde_json::to_string_pretty(&table)?)?;
            write(&out.join("ablation.txt"), &table.render())?;
            print!("{}", table.render());
        }
        Cmd::Loto { config, holdout, out } => {
            let cfg = TrainConfig::load(&config)?;
            let report = run_loto(&cfg, &holdout)?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(out) = out {
                write(&out, &json)?;
            }
            println!("{json}");
        }
        Cmd::Synth { n, seed, out } => {
            let cfg = SynthConfig::with_train_count(n, seed);
            let (manifest, report) = synth_generate(&cfg, &out)?;
            eprintln!("{} records; manifest {}", report.n_records, manifest.display());
        }
        Cmd::ExportEmbeddings { ckpt, manifest, out, lang, split } => {
            let ck = Checkpoint::load(&ckpt)?;
            let filter = Filter { lang, split, ..Default::default() };
            let z = export_embeddings(&ck, &manifest, &filter, &out)?;
            eprintln!("{} x {} embeddings written to {}", z.dim(0), z.dim(1), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).format_timestamp(None).init();
    // clap exits with 2 on usage errors; those are validation failures here
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
