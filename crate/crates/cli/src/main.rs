//! `xabsa`: data preparation, pipeline runs, transfer matrices, generation
//! count sweeps, checkpoint evaluation and manifest replay.

mod config;
mod exit;
mod invocation;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use log::{error, info};
use xabsa::augmentation::{EpochSelection, Mode};
use xabsa::data_io::enumerate_pairs;
use xabsa::evaluation::default_seeds;
use xabsa::{Split, Task, TransferPair};

use crate::config::RunConfig;
use crate::exit::{config_err, usage_err, Failure, REPLAY_MISMATCH};
use crate::invocation::{ConvertSpec, EvalSpec, Invocation, MatrixSpec, RunSpec, SweepSpec, SynthSpec};
use crate::manifest::{compare_artifacts, RunManifest};

#[derive(Parser)]
#[command(name = "xabsa", version, about = "Cross-domain aspect-based sentiment analysis with bidirectional generative augmentation")]
struct Cli {
    /// Log filter, as accepted by RUST_LOG.
    #[arg(long, global = true, env = "RUST_LOG", default_value = "info")]
    log: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write corpus files.
    #[command(subcommand)]
    Prepare(Prepare),
    /// One pipeline run for a single transfer pair and mode.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        target: Option<String>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
        /// Cap on target sentences used for pseudo-labeling.
        #[arg(long)]
        generation_count: Option<usize>,
        /// Start final training from fresh parameters.
        #[arg(long)]
        reinit_final: bool,
        #[arg(long)]
        no_checkpoints: bool,
    },
    /// Every transfer pair times every seed, one table row per mode.
    Matrix {
        #[command(flatten)]
        common: Common,
        /// Comma-separated modes.
        #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "text-to-label,bgca")]
        modes: Vec<Mode>,
        /// Comma-separated seeds; defaults to the config's list, else five seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Comma-separated SOURCE:TARGET pairs; defaults to the benchmark pairs of the task.
        #[arg(long, value_delimiter = ',')]
        pairs: Option<Vec<String>>,
        /// Worker threads for the cells.
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
    /// Final-stage F1 as the number of target sentences used grows.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        target: Option<String>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        /// Comma-separated generation counts.
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
        /// Train the final stage on generated data only.
        #[arg(long)]
        exclude_source: bool,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Score a saved checkpoint on a labeled corpus.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long, default_value_t = 64)]
        label_max_len: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Re-execute a command from its manifest and compare the reports byte for byte.
    Replay {
        manifest: PathBuf,
        /// Where the replay writes; defaults to `replay/` next to the manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum Prepare {
    /// Two synthetic review domains with disjoint aspect lexicons.
    Synth {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long, default_value_t = 500)]
        train: usize,
        #[arg(long, default_value_t = 50)]
        dev: usize,
        #[arg(long, default_value_t = 200)]
        test: usize,
        /// Share of the second domain's aspects taken from the first.
        #[arg(long, default_value_t = 0.0)]
        overlap: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert an upstream release file to the canonical corpus format.
    Convert {
        /// unified-tags, triplets or towe.
        #[arg(long)]
        format: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        domain: String,
        #[arg(long, value_parser = parse_split)]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Flags shared by the training commands.
#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// Directory holding `<domain>/{train,dev,test}.jsonl`.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Train every stage for exactly this many epochs, no grid selection.
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate of every stage.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: xabsa::Error| e.to_string())
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: xabsa::Error| e.to_string())
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse().map_err(|e: xabsa::Error| e.to_string())
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => {
                let mut c = RunConfig::load(path)?;
                c.absolutize(&absolute(path.parent().unwrap_or(Path::new("."))));
                c
            }
            None => RunConfig::default(),
        };
        if let Some(t) = self.task {
            cfg.pipeline.task = t;
        }
        if let Some(d) = &self.data_dir {
            cfg.data.data_dir = Some(absolute(d));
        }
        if let Some(n) = self.epochs {
            for stage in [&mut cfg.pipeline.stage1, &mut cfg.pipeline.stage2, &mut cfg.pipeline.final_stage] {
                stage.epochs = n;
            }
            cfg.pipeline.epoch_selection = EpochSelection::Fixed;
        }
        if let Some(lr) = self.lr {
            for stage in [&mut cfg.pipeline.stage1, &mut cfg.pipeline.stage2, &mut cfg.pipeline.final_stage] {
                stage.learning_rate = lr;
            }
        }
        cfg.absolutize(&absolute(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_pairs(specs: &[String], task: Task) -> Result<Vec<TransferPair>, Failure> {
    specs
        .iter()
        .map(|s| {
            let (a, b) = s
                .split_once(':')
                .ok_or_else(|| usage_err(anyhow!("pair {s:?} is not SOURCE:TARGET")))?;
            TransferPair::new(a, b, task).map_err(|e| usage_err(e.into()))
        })
        .collect()
}

/// Turns parsed flags into a self-contained invocation plus its output directory.
fn resolve(command: Command) -> Result<(Invocation, PathBuf), Failure> {
    Ok(match command {
        Command::Prepare(Prepare::Synth { task, train, dev, test, overlap, seed, out }) => (
            Invocation::PrepareSynth(SynthSpec { task, train, dev, test, aspect_overlap: overlap, seed }),
            out,
        ),
        Command::Prepare(Prepare::Convert { format, input, task, domain, split, out }) => (
            Invocation::PrepareConvert(ConvertSpec { format, input: absolute(&input), task, domain, split }),
            out,
        ),
        Command::Run { common, source, target, mode, seed, generation_count, reinit_final, no_checkpoints } => {
            let mut config = common.resolve()?;
            if let Some(m) = mode {
                config.pipeline.mode = m;
            }
            if let Some(s) = seed {
                config.pipeline.seed = s;
            }
            if generation_count.is_some() {
                config.pipeline.generation_count = generation_count;
            }
            config.pipeline.reinit_final |= reinit_final;
            (
                Invocation::Run(RunSpec { config, source, target, save_checkpoints: !no_checkpoints }),
                common.out,
            )
        }
        Command::Matrix { common, modes, seeds, pairs, jobs } => {
            let config = common.resolve()?;
            let seeds = seeds.or_else(|| config.seeds.clone()).unwrap_or_else(default_seeds);
            let task = config.pipeline.task;
            let pairs = match pairs {
                Some(p) => parse_pairs(&p, task)?,
                None => enumerate_pairs(task),
            };
            if jobs == 0 || modes.is_empty() || seeds.is_empty() {
                return Err(usage_err(anyhow!("jobs, modes and seeds must be non-empty")));
            }
            (Invocation::Matrix(MatrixSpec { config, modes, seeds, pairs, jobs }), common.out)
        }
        Command::Sweep { common, source, target, mode, counts, exclude_source, seeds } => {
            let mut config = common.resolve()?;
            if let Some(m) = mode {
                config.pipeline.mode = m;
            }
            if counts.windows(2).any(|w| w[0] >= w[1]) {
                return Err(usage_err(anyhow!("sweep counts must be strictly increasing")));
            }
            let seeds = seeds.or_else(|| config.seeds.clone()).unwrap_or_else(|| vec![config.pipeline.seed]);
            (Invocation::Sweep(SweepSpec { config, source, target, counts, exclude_source, seeds }), common.out)
        }
        Command::Eval { checkpoint, corpus, task, label_max_len, out } => {
            if label_max_len == 0 {
                return Err(config_err(anyhow!("label max length must be positive")));
            }
            (
                Invocation::Eval(EvalSpec { checkpoint: absolute(&checkpoint), corpus: absolute(&corpus), task, label_max_len }),
                out,
            )
        }
        Command::Replay { .. } => unreachable!("handled before resolution"),
    })
}

fn execute(invocation: Invocation, out: &Path) -> Result<(), Failure> {
    let started = SystemTime::now();
    let clock = Instant::now();
    info!("{} -> {}", invocation.name(), out.display());
    let outcome = invocation.execute(out)?;
    println!("{}", outcome.summary.trim_end());
    let manifest = RunManifest::new(invocation, outcome.artifacts, started, clock.elapsed());
    let path = manifest.write(out)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn replay(manifest_path: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let manifest = RunManifest::read(manifest_path)?;
    let original = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let out = out.unwrap_or_else(|| original.join("replay"));
    info!("replaying {} into {}", manifest.invocation.name(), out.display());
    manifest.invocation.execute(&out)?;
    let mismatched = compare_artifacts(&manifest.artifacts, &original, &out);
    for a in manifest.artifacts.iter().filter(|a| a.reproducible) {
        let verdict = if mismatched.contains(&a.name) { "DIFFERS" } else { "identical" };
        println!("{:<24} {verdict}", a.name);
    }
    if mismatched.is_empty() {
        Ok(())
    } else {
        Err(Failure::new(REPLAY_MISMATCH, anyhow!("replay differs in {}", mismatched.join(", "))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp(None).init();
    let result = match cli.command {
        Command::Replay { manifest, out } => replay(&manifest, out),
        command => resolve(command).and_then(|(inv, out)| execute(inv, &out)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            error!("{f}");
            f.exit_code()
        }
    }
}
