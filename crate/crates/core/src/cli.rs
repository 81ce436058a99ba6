//! Command-line surface: argument definitions and subcommand dispatch.
//!
//! Every failure is reported as a single `error[kind]: message` line on
//! stderr; usage errors exit with status 2, runtime errors with status 1.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::TrainConfig;
use crate::data::{generate_synthetic, write_image_dir, Dataset, DatasetKind, SyntheticSpec};
use crate::error::{Result, VtccError};
use crate::eval::{embed, export_embeddings, predict};
use crate::loss::Objective;
use crate::metrics::MetricsReport;
use crate::state::load_model;
use crate::train::{FitOptions, Trainer};

/// Environment variable selecting the worker-thread count (default 1).
pub const THREADS_ENV: &str = "VTCC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "vtcc", version, about = "Contrastive clustering with a vision transformer backbone")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural pattern dataset with generator labels.
    GenData(GenDataArgs),
    /// Train a model and write checkpoints and a run report.
    Train(TrainArgs),
    /// Print NMI/ACC/ARI of a checkpoint on labeled data.
    Eval(EvalArgs),
    /// Export cluster probabilities and instance embeddings as TSV.
    Embed(EmbedArgs),
    /// Run the finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 128)]
    pub per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub side: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output file (binary records) or directory (image_dir).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "binary_records")]
    pub format: DatasetKind,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// key=value config file; the desk profile when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub data_kind: Option<DatasetKind>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Suppress per-epoch progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "binary_records")]
    pub data_kind: DatasetKind,
    /// Assignment rule; defaults to the objective the checkpoint was trained with.
    #[arg(long)]
    pub objective: Option<Objective>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "binary_records")]
    pub data_kind: DatasetKind,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the end-to-end model check and run only the per-op suite.
    #[arg(long)]
    pub ops_only: bool,
}

/// Reads [`THREADS_ENV`]; unset means one thread.
pub fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(VtccError::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Builds the effective training config from a file plus flag overrides.
pub fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::desk(),
    };
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| VtccError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(data) = &args.data {
        cfg.data_path = Some(data.clone());
    }
    if let Some(kind) = args.data_kind {
        cfg.data_kind = kind;
    }
    if let Some(epochs) = args.epochs {
        cfg.epochs = epochs;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one parsed command, writing its normal output to `out`.
pub fn run(cli: Cli, out: &mut impl Write) -> Result<()> {
    let stdout = |out: &mut dyn Write, line: String| writeln!(out, "{line}").map_err(|e| VtccError::io("<stdout>", e));
    match cli.command {
        Command::GenData(a) => {
            let data = generate_synthetic(&SyntheticSpec::new(a.classes, a.per_class, a.side, a.seed))?;
            match a.format {
                DatasetKind::ImageDir => write_image_dir(&data, &a.out)?,
                _ => data.write(&a.out)?,
            }
            stdout(out, format!("wrote {} samples to {}", data.len(), a.out.display()))
        }
        Command::Train(a) => {
            let cfg = train_config(&a)?;
            let path = cfg
                .data_path
                .clone()
                .ok_or_else(|| VtccError::Config("no dataset: pass --data or set data.path".into()))?;
            let data = Dataset::load(&path, cfg.data_kind)?;
            let mut trainer = match &a.resume {
                Some(ckpt) => Trainer::resume(cfg, &crate::checkpoint::Checkpoint::load(ckpt)?)?,
                None => Trainer::new(cfg)?,
            };
            let opts = FitOptions {
                write_outputs: true,
                ..FitOptions::default()
            };
            let quiet = a.quiet;
            let report = trainer.fit(&data, &opts, |e| {
                if !quiet {
                    let mut line = format!(
                        "epoch {} loss={:.6} instance={:.6} cluster={:.6} entropy={:.4} ({:.1}s)",
                        e.epoch, e.total, e.instance, e.cluster, e.entropy, e.seconds
                    );
                    if let Some(m) = &e.metrics {
                        line.push_str(&format!(" nmi={:.4} acc={:.4} ari={:.4}", m.nmi, m.acc, m.ari));
                    }
                    eprintln!("{line}");
                }
            })?;
            stdout(
                out,
                format!("report={}", trainer.cfg.out.join("report.json").display()),
            )?;
            if let Some(m) = &report.final_metrics {
                stdout(out, m.to_string())?;
            }
            Ok(())
        }
        Command::Eval(a) => {
            let (cfg, mut model, _) = load_model(&a.ckpt)?;
            let data = Dataset::load(&a.data, a.data_kind)?;
            let truth = data.label_vec()?;
            let emb = embed(&mut model, &data, &cfg.aug)?;
            let pred = predict(&emb, a.objective.unwrap_or(cfg.objective), cfg.seed)?;
            let report = MetricsReport::compute(&pred, &truth, emb.clusters)?;
            stdout(out, report.to_string())
        }
        Command::Embed(a) => {
            let (cfg, mut model, _) = load_model(&a.ckpt)?;
            let data = Dataset::load(&a.data, a.data_kind)?;
            let emb = embed(&mut model, &data, &cfg.aug)?;
            let labels = data.has_labels().then(|| data.labels());
            export_embeddings(&emb, labels, &a.out)?;
            stdout(out, format!("wrote {} rows to {}", emb.n, a.out.display()))
        }
        Command::Gradcheck(a) => {
            let checks = if a.ops_only {
                vtcc_tensor::gradcheck::op_suite(a.seed)?
            } else {
                crate::gradcheck::full_suite(a.seed)?
            };
            for c in &checks {
                stdout(out, c.to_string())?;
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
            if failed.is_empty() {
                stdout(out, format!("gradcheck ok: {} checks", checks.len()))
            } else {
                Err(VtccError::Contract(format!("gradcheck failed: {}", failed.join(", "))))
            }
        }
    }
}

/// The one-line error format printed by the binary.
pub fn error_line(e: &VtccError) -> String {
    let msg = e.to_string().replace('\n', " ");
    format!("error[{}]: {}", e.kind(), msg)
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let threads = match thread_count() {
        Ok(n) => n,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            return 2;
        }
    };
    // a second initialization (tests calling in-process) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    match run(cli, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            1
        }
    }
}
