use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use samc::cli::{cmd_demakeup, cmd_eval, cmd_fixtures, cmd_train, CliError, EXIT_RUNTIME, EXIT_USAGE};
use samc::models::ExtractorSource;

#[derive(Parser)]
#[command(name = "samc", version, about = "Semantic-aware makeup cleanser")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic paired makeup / non-makeup dataset with a manifest.
    Fixtures {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Preprocess uncached samples, then train G, A and D.
    Train {
        /// `key=value` configuration file; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Loss to switch off (repeatable): id, sat, adv or rec.
        #[arg(long = "disable-loss", value_name = "LOSS")]
        disable_loss: Vec<String>,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        image_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        checkpoint_interval: Option<u64>,
        #[arg(long)]
        base_channels: Option<usize>,
        #[arg(long)]
        extractor: Option<String>,
        /// Any other configuration key, as KEY=VALUE (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Remove makeup from one image and export its attention map.
    Demakeup {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long = "attention-out")]
        attention_out: PathBuf,
    },
    /// Verification-via-generation metrics against the no-generation baseline.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Override the extractor recorded in the checkpoint.
        #[arg(long)]
        extractor: Option<String>,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fixtures { seed, count, size, out } => {
            let manifest = cmd_fixtures(seed, count, size, &out)?;
            println!("{}", manifest.display());
        }
        Command::Train {
            config,
            manifest,
            out,
            disable_loss,
            resume,
            max_steps,
            seed,
            batch_size,
            image_size,
            learning_rate,
            checkpoint_interval,
            base_channels,
            extractor,
            set,
        } => {
            let mut overrides: Vec<(String, String)> = Vec::new();
            let mut push = |k: &str, v: Option<String>| {
                if let Some(v) = v {
                    overrides.push((k.to_string(), v));
                }
            };
            push("manifest", manifest.map(|p| p.display().to_string()));
            push("out", out.map(|p| p.display().to_string()));
            push("max_steps", max_steps.map(|v| v.to_string()));
            push("seed", seed.map(|v| v.to_string()));
            push("batch_size", batch_size.map(|v| v.to_string()));
            push("image_size", image_size.map(|v| v.to_string()));
            push("learning_rate", learning_rate.map(|v| v.to_string()));
            push("checkpoint_interval", checkpoint_interval.map(|v| v.to_string()));
            push("base_channels", base_channels.map(|v| v.to_string()));
            push("extractor", extractor);
            for d in disable_loss {
                push("disable_loss", Some(d));
            }
            for kv in set {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
                overrides.push((k.trim().to_string(), v.trim().to_string()));
            }
            let outcome = cmd_train(config.as_deref(), &overrides, resume.as_deref())?;
            if let Some(last) = outcome.history.last() {
                println!("step {} total {} rec {}", outcome.state.step, last.total, last.rec);
            }
            println!("{}", outcome.final_checkpoint.display());
        }
        Command::Demakeup {
            checkpoint,
            input,
            output,
            attention_out,
        } => {
            let overlay = cmd_demakeup(&checkpoint, &input, &output, &attention_out)
                .with_context(|| format!("de-makeup of {}", input.display()))?;
            println!("{}", output.display());
            println!("{}", attention_out.display());
            println!("{}", overlay.display());
        }
        Command::Eval {
            checkpoint,
            manifest,
            report,
            extractor,
        } => {
            let source = extractor.as_deref().map(ExtractorSource::parse);
            let r = cmd_eval(&checkpoint, &manifest, &report, source.as_ref())?;
            println!("rank1={}", r.generated.rank1);
            println!("tpr_at_fpr_0.1pct={}", r.generated.tpr_01pct);
            println!("tpr_at_fpr_1pct={}", r.generated.tpr_1pct);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = String::new();
            for cause in e.chain().map(|c| c.to_string()) {
                if !msg.contains(&cause) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&cause);
                }
            }
            eprintln!("error: {msg}");
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<CliError>())
                .map_or(EXIT_RUNTIME, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
