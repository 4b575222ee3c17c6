use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shotpose_cli::commands::*;
use shotpose_cli::{PipelineError, RunConfig};

/// Shot pose analysis pipeline. Log verbosity follows SHOTPOSE_LOG (e.g. `debug`).
#[derive(Parser)]
#[command(name = "shotpose", version)]
struct Cli {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured dataset directory.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every clip directory and report problems per clip.
    Validate {
        /// Dataset root; defaults to the configured dataset.
        root: Option<PathBuf>,
    },
    /// Write a synthetic dataset with evaluation fixtures.
    Synth {
        dest: PathBuf,
        #[arg(long, default_value_t = 12)]
        clips: usize,
    },
    /// Train the autoencoder and write model.json.
    Train {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Encode every clip into latents.csv.
    Embed,
    /// k-means over latents, with an inertia table and PCA baseline.
    Cluster {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Per-clip kinematics and per-cluster comparisons.
    Stats,
    /// Two-dimensional t-SNE projection of the latents.
    Tsne {
        #[arg(long)]
        perplexity: Option<f64>,
    },
    /// PDJ and AUC of predicted 2D poses (JSON: clip_id -> frames).
    EvalPose { pred: PathBuf },
    /// Precision, recall and AP of detections (JSON list of frames).
    EvalDetect { input: PathBuf },
    /// HOTA, DetA and AssA (JSON: sequence -> track set).
    EvalTrack { gt: PathBuf, pred: PathBuf },
    /// Tracklet-selection precision, recall, ACC and CLIP ACC.
    EvalSelect { input: PathBuf },
    /// Assemble the report directory.
    Report,
    /// validate, train, embed, cluster, stats, tsne, report.
    Run,
}

fn print<T: serde::Serialize>(value: &T) {
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn execute(cli: Cli) -> Result<ExitCode, PipelineError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = cli.out {
        config.out = o;
    }
    if let Some(d) = cli.dataset {
        config.dataset = d;
    }
    match cli.command {
        Command::Validate { root } => {
            let root = root.unwrap_or_else(|| config.dataset.clone());
            let report = cmd_validate(&root, &config, Some(&config.out))?;
            for c in &report.clips {
                let status = if c.passed { "ok" } else { "FAIL" };
                println!("{status}\t{}\t{}", c.clip_id.as_deref().unwrap_or(&c.dir), c.reasons.join("; "));
            }
            let failed = report.failures().count();
            println!("{} clips, {failed} failed", report.clips.len());
            return Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
        Command::Synth { dest, clips } => {
            cmd_synth(&dest, clips, config.seed)?;
        }
        Command::Train { epochs } => {
            if let Some(e) = epochs {
                config.grae.epochs = e;
            }
            print(&cmd_train(&config)?);
        }
        Command::Embed => println!("embedded {} clips", cmd_embed(&config)?),
        Command::Cluster { k } => {
            if let Some(k) = k {
                config.k = k;
            }
            print(&cmd_cluster(&config)?);
        }
        Command::Stats => print(&cmd_stats(&config)?),
        Command::Tsne { perplexity } => {
            if let Some(p) = perplexity {
                config.perplexity = p;
            }
            println!("final KL {}", cmd_tsne(&config)?);
        }
        Command::EvalPose { pred } => print(&cmd_eval_pose(&config, &pred)?),
        Command::EvalDetect { input } => print(&cmd_eval_detect(&config, &input)?),
        Command::EvalTrack { gt, pred } => print(&cmd_eval_track(&config, &gt, &pred)?),
        Command::EvalSelect { input } => print(&cmd_eval_select(&config, &input)?),
        Command::Report => println!("{}", cmd_report(&config)?.display()),
        Command::Run => print(&cmd_run(&config)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SHOTPOSE_LOG", "info")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
