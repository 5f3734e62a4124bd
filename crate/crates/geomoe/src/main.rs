use std::path::{Path, PathBuf};

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use geomoe::commands::{cmd_eval, cmd_filter, cmd_generate, cmd_pose, cmd_train};
use geomoe::config::{help_text, RunConfig};
use geomoe::{Error, Result};
use geomoe_core::eval::Arm;

/// Correspondence filtering for two-view geometry.
#[derive(Parser, Debug)]
#[command(name = "geomoe", version)]
struct Cli {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides the `threads` key (0 = available parallelism).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset of `data.pairs` pairs.
    Generate {
        /// Dataset destination (defaults to `paths.dataset`).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Train a model and write a checkpoint (and optionally a metrics log).
    Train {
        /// Dataset file (defaults to `paths.dataset`).
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        /// Checkpoint destination (defaults to `paths.checkpoint`).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Continue from a checkpoint, restoring its optimiser state.
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
        /// Per-iteration loss log (defaults to `paths.metrics`).
        #[arg(long, value_name = "PATH")]
        metrics: Option<PathBuf>,
    },
    /// Predict inlier probabilities for a text correspondence file.
    Filter {
        /// Checkpoint file (defaults to `paths.checkpoint`).
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Text file with one `x y x' y'` correspondence per line.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Weights destination.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Append the rotation and translation recovered from the weights.
        #[arg(long)]
        pose: bool,
    },
    /// Benchmark estimator arms on a dataset.
    Eval {
        /// Dataset file (defaults to `paths.dataset`).
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        /// Checkpoint file (defaults to `paths.checkpoint`).
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// raw, ransac, geomoe, geomoe-ransac or oracle; repeatable.
        #[arg(long = "arm", value_name = "NAME")]
        arms: Vec<String>,
        /// JSON report destination.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
        /// Per-pair trace destination.
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,
    },
    /// Estimate the essential matrix and pose of a text correspondence file.
    Pose {
        /// Text file with one `x y x' y'` correspondence per line.
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// One weight per correspondence (uniform if omitted).
        #[arg(long, value_name = "PATH")]
        weights: Option<PathBuf>,
        /// Use RANSAC instead of the weighted eight-point solver.
        #[arg(long)]
        ransac: bool,
        /// Destination (stdout if omitted).
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

fn required(flag: Option<PathBuf>, fallback: &str, name: &str) -> Result<PathBuf> {
    flag.or_else(|| (!fallback.is_empty()).then(|| PathBuf::from(fallback)))
        .ok_or_else(|| Error::Config(format!("--{name} is required (or set it under [paths])")))
}

fn optional(flag: Option<PathBuf>, fallback: &str) -> Option<PathBuf> {
    flag.or_else(|| (!fallback.is_empty()).then(|| PathBuf::from(fallback)))
}

fn run(cli: Cli, config: RunConfig) -> Result<()> {
    let paths = config.paths.clone();
    match cli.command {
        Command::Generate { out } => {
            let out = required(out, &paths.dataset, "out")?;
            let summary = cmd_generate(&config, &out)?;
            println!("{summary}");
        }
        Command::Train { data, out, resume, metrics } => {
            let data = required(data, &paths.dataset, "data")?;
            let out = required(out, &paths.checkpoint, "out")?;
            let metrics = optional(metrics, &paths.metrics);
            let start = std::time::Instant::now();
            let s = cmd_train(&config, &data, &out, resume.as_deref(), metrics.as_deref())?;
            println!("trained iterations {}..{}", s.start_iteration, s.iterations);
            if let (Some(c), Some(t)) = (s.final_classification, s.final_total) {
                println!("final batch classification loss {c:.6}, total {t:.6}");
            }
            eprintln!("wall time {:.1} s", start.elapsed().as_secs_f64());
        }
        Command::Filter { checkpoint, input, out, pose } => {
            let checkpoint = required(checkpoint, &paths.checkpoint, "checkpoint")?;
            let w = cmd_filter(&config, &checkpoint, &input, &out, pose)?;
            let kept = w.iter().filter(|&&v| v >= config.eval.weight_threshold).count();
            println!("{} correspondences, {kept} at or above {}", w.len(), config.eval.weight_threshold);
        }
        Command::Eval { data, checkpoint, arms, report, trace } => {
            let data = required(data, &paths.dataset, "data")?;
            let checkpoint = optional(checkpoint, &paths.checkpoint);
            let arms = arms.iter().map(|a| Arm::parse(a).map_err(|e| Error::Config(e.to_string()))).collect::<Result<Vec<_>>>()?;
            let report = optional(report, &paths.report);
            let trace = optional(trace, &paths.trace);
            let start = std::time::Instant::now();
            let out = cmd_eval(&config, &data, checkpoint.as_deref(), &arms, report.as_deref(), trace.as_deref())?;
            print!("{}", out.table);
            let secs = start.elapsed().as_secs_f64();
            eprintln!("wall time {secs:.2} s ({:.2} ms per pair)", 1e3 * secs / out.run.report.pairs.max(1) as f64);
        }
        Command::Pose { input, weights, ransac, out } => {
            let text = cmd_pose(&config, &input, weights.as_deref(), ransac)?;
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::Io { path: p, source: e })?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn load_config(path: Option<&Path>, seed: Option<u64>, threads: Option<usize>) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(t) = threads {
        config.threads = t;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> std::process::ExitCode {
    let matches = Cli::command().after_long_help(help_text()).after_help("Run with --help to list every configuration key and its default.").get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let outcome = load_config(cli.config.as_deref(), cli.seed, cli.threads).and_then(|config| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| run(cli, config))
    });
    match outcome {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::from(e.exit_code() as u8)
        }
    }
}
