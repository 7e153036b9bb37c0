//! Resolved commands. An [`Invocation`] holds every input a command depends
//! on, so executing the same value twice writes the same reports.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use xabsa::augmentation::{evaluate, run_pipeline, Evaluation, FilterStatus, Mode, PipelineOutput, RunReport};
use xabsa::data_io::{convert, load_corpus, reference_count, save_corpus, synth_corpus, DomainProfile, UpstreamFormat};
use xabsa::evaluation::{render_table, run_transfer_matrix, TransferMatrix};
use xabsa::model::{ToyBackbone, ToyConfig};
use xabsa::{Corpus, Split, Task, TransferPair};

use crate::config::RunConfig;
use crate::exit::{classify, config_err, data_err, Failure};
use crate::manifest::Artifact;

pub const CHECKPOINT_ROOT_ENV: &str = "XABSA_CHECKPOINT_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Invocation {
    PrepareSynth(SynthSpec),
    PrepareConvert(ConvertSpec),
    Run(RunSpec),
    Matrix(MatrixSpec),
    Sweep(SweepSpec),
    Eval(EvalSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub task: Task,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub aspect_overlap: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvertSpec {
    pub format: String,
    pub input: PathBuf,
    pub task: Task,
    pub domain: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub config: RunConfig,
    pub source: Option<String>,
    pub target: Option<String>,
    pub save_checkpoints: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub config: RunConfig,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub pairs: Vec<TransferPair>,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub config: RunConfig,
    pub source: Option<String>,
    pub target: Option<String>,
    pub counts: Vec<usize>,
    pub exclude_source: bool,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub checkpoint: PathBuf,
    pub corpus: PathBuf,
    pub task: Task,
    pub label_max_len: usize,
}

/// What a command leaves behind: files, and a summary for the terminal.
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::PrepareSynth(_) => "prepare synth",
            Invocation::PrepareConvert(_) => "prepare convert",
            Invocation::Run(_) => "run",
            Invocation::Matrix(_) => "matrix",
            Invocation::Sweep(_) => "sweep",
            Invocation::Eval(_) => "eval",
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self {
            Invocation::PrepareSynth(s) => vec![s.seed],
            Invocation::Run(r) => vec![r.config.pipeline.seed],
            Invocation::Matrix(m) => m.seeds.clone(),
            Invocation::Sweep(s) => s.seeds.clone(),
            Invocation::PrepareConvert(_) | Invocation::Eval(_) => Vec::new(),
        }
    }

    pub fn execute(&self, out: &Path) -> Result<Outcome, Failure> {
        fs::create_dir_all(out)
            .with_context(|| format!("creating {}", out.display()))
            .map_err(data_err)?;
        match self {
            Invocation::PrepareSynth(s) => prepare_synth(s, out),
            Invocation::PrepareConvert(c) => prepare_convert(c, out),
            Invocation::Run(r) => run(r, out),
            Invocation::Matrix(m) => matrix(m, out),
            Invocation::Sweep(s) => sweep(s, out),
            Invocation::Eval(e) => eval(e, out),
        }
    }
}

fn write(out: &Path, rel: &str, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| data_err(e.into()))?;
    }
    fs::write(&path, bytes)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(data_err)
}

fn json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map(|s| s + "\n").map_err(|e| data_err(e.into()))
}

fn corpus_path(domain: &str, split: Split) -> String {
    format!("{domain}/{split}.jsonl")
}

fn save(out: &Path, rel: &str, corpus: &Corpus) -> Result<(), Failure> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| data_err(e.into()))?;
    }
    save_corpus(&path, corpus).map_err(classify)
}

fn prepare_synth(s: &SynthSpec, out: &Path) -> Result<Outcome, Failure> {
    if !(0.0..=1.0).contains(&s.aspect_overlap) {
        return Err(config_err(anyhow!("aspect overlap must lie in [0, 1]")));
    }
    let (a, b) = DomainProfile::builtin_pair(s.aspect_overlap);
    let mut artifacts = Vec::new();
    let mut lines = Vec::new();
    for (d, profile) in [a, b].iter().enumerate() {
        for (k, (split, size)) in [(Split::Train, s.train), (Split::Dev, s.dev), (Split::Test, s.test)].into_iter().enumerate() {
            if size == 0 {
                continue;
            }
            let seed = s.seed.wrapping_mul(1000).wrapping_add((d * 3 + k) as u64);
            let mut corpus = synth_corpus(profile, s.task, size, seed).map_err(classify)?;
            corpus.split = split;
            let rel = corpus_path(&profile.name, split);
            save(out, &rel, &corpus)?;
            lines.push(format!("{rel}: {size} examples"));
            artifacts.push(Artifact::report(&format!("{}-{split}", profile.name), rel));
        }
    }
    Ok(Outcome { artifacts, summary: lines.join("\n") })
}

fn prepare_convert(c: &ConvertSpec, out: &Path) -> Result<Outcome, Failure> {
    let format: UpstreamFormat = c.format.parse().map_err(classify)?;
    let text = fs::read_to_string(&c.input)
        .with_context(|| format!("reading {}", c.input.display()))
        .map_err(data_err)?;
    let corpus = convert(format, &text, c.task, c.domain.as_str().into(), c.split).map_err(classify)?;
    let rel = corpus_path(&c.domain, c.split);
    save(out, &rel, &corpus)?;
    let mut summary = format!("{rel}: {} examples", corpus.len());
    if let Some(expected) = reference_count(c.task, &c.domain, c.split) {
        if expected != corpus.len() {
            warn!("{rel} has {} examples; the reference split has {expected}", corpus.len());
        }
        summary.push_str(&format!(" (reference: {expected})"));
    }
    Ok(Outcome { artifacts: vec![Artifact::report("corpus", rel)], summary })
}

/// Runs the pipeline once with the toy backbone.
pub fn execute_pipeline(
    cfg: &RunConfig,
    source: Option<&str>,
    target: Option<&str>,
) -> Result<PipelineOutput<ToyBackbone>, Failure> {
    let inputs = cfg.data.resolve(cfg.pipeline.task, source, target)?;
    let model_cfg = cfg.model.clone();
    run_pipeline(&cfg.pipeline, &inputs, |vocab, seed| {
        ToyBackbone::new(vocab, ToyConfig { seed, ..model_cfg.clone() })
    })
    .map_err(|f| {
        let done: Vec<String> = f.report.completed_stages.iter().map(ToString::to_string).collect();
        let done = if done.is_empty() { "none".to_owned() } else { done.join(", ") };
        let message = format!("{} (completed: {done})", f);
        Failure::new(classify(f.error).code, anyhow!(message))
    })
}

#[derive(Serialize)]
struct GeneratedLine {
    label: String,
    sentence: String,
    status: FilterStatus,
    same_tuples: bool,
}

fn checkpoint_dir(out: &Path, report: &RunReport) -> (PathBuf, bool) {
    match std::env::var_os(CHECKPOINT_ROOT_ENV) {
        Some(root) => {
            let id = format!(
                "{}-{}-{}-{}-seed{}",
                report.task.as_str().to_lowercase(),
                report.source_domain,
                report.target_domain,
                report.mode,
                report.seed
            );
            (PathBuf::from(root).join(id), true)
        }
        None => (out.join("checkpoints"), false),
    }
}

fn run(r: &RunSpec, out: &Path) -> Result<Outcome, Failure> {
    let output = execute_pipeline(&r.config, r.source.as_deref(), r.target.as_deref())?;
    let report = &output.report;
    write(out, "report.json", json(report)?)?;
    let mut artifacts = vec![Artifact::report("report", "report.json")];

    if report.candidates.is_some() {
        let mut text = String::new();
        for c in &output.candidates {
            let line = GeneratedLine {
                label: c.label.to_string(),
                sentence: c.sentence.join(" "),
                status: c.filter_status,
                same_tuples: c.same_tuples,
            };
            text.push_str(&serde_json::to_string(&line).map_err(|e| data_err(e.into()))?);
            text.push('\n');
        }
        write(out, "generated.jsonl", text)?;
        artifacts.push(Artifact::report("generated", "generated.jsonl"));
    }

    if r.save_checkpoints {
        let (dir, external) = checkpoint_dir(out, report);
        for (name, model) in [("stage1", &output.stage1_model), ("final", &output.model)] {
            let path = dir.join(name);
            model.save(&path).map_err(classify)?;
            let recorded = if external { path } else { PathBuf::from("checkpoints").join(name) };
            artifacts.push(Artifact::other(&format!("checkpoint-{name}"), recorded));
        }
    }
    Ok(Outcome { artifacts, summary: summarize(report) })
}

fn summarize(r: &RunReport) -> String {
    let mut lines = vec![format!(
        "{} {} {}->{} seed {}: stages {}",
        r.task,
        r.mode,
        r.source_domain,
        r.target_domain,
        r.seed,
        r.completed_stages.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
    )];
    if let Some(p) = r.pseudo_labels {
        lines.push(format!(
            "pseudo labels: {} parsed, {} empty, {} bad format of {}",
            p.parsed, p.empty, p.bad_format, p.total
        ));
    }
    if let Some(a) = r.attrition {
        lines.push(format!(
            "generated: {} retained, {} bad format, {} missing words, {} round-trip mismatch ({} same tuples)",
            a.retained, a.bad_format, a.missing_words, a.roundtrip_mismatch, a.mismatch_same_tuples
        ));
    }
    if let Some(n) = r.final_train_size {
        lines.push(format!("final training set: {n}"));
    }
    if let Some(e) = &r.evaluation {
        lines.push(format!(
            "target test F1 {:.2} (P {:.2}, R {:.2}), unparseable {}",
            100.0 * e.f1.f1,
            100.0 * e.f1.precision,
            100.0 * e.f1.recall,
            e.unparseable
        ));
    }
    lines.join("\n")
}

fn target_f1(output: &PipelineOutput<ToyBackbone>) -> Result<f64, Failure> {
    output
        .report
        .evaluation
        .map(|e| e.f1.f1)
        .ok_or_else(|| config_err(anyhow!("no target test corpus to score")))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| config_err(e.into()))
}

fn matrix(m: &MatrixSpec, out: &Path) -> Result<Outcome, Failure> {
    let pool = thread_pool(m.jobs)?;
    let task = m.config.pipeline.task;
    let mut tables: Vec<TransferMatrix> = Vec::new();
    for &mode in &m.modes {
        let mut cfg = m.config.clone();
        cfg.pipeline.mode = mode;
        let table = pool
            .install(|| {
                run_transfer_matrix(task, mode.as_str(), &m.pairs, &m.seeds, |pair, seed| {
                    let mut cfg = cfg.clone();
                    cfg.pipeline.seed = seed;
                    execute_pipeline(&cfg, Some(pair.source.as_str()), Some(pair.target.as_str()))
                        .and_then(|o| target_f1(&o))
                        .map_err(|f| xabsa::Error::Config(f.to_string()))
                })
            })
            .map_err(classify)?;
        for cell in &table.cells {
            for e in &cell.errors {
                warn!("{mode} {}: {e}", cell.pair.label());
            }
        }
        tables.push(table);
    }
    let text = render_table(&tables);
    write(out, "matrix.json", json(&tables)?)?;
    write(out, "matrix.txt", &text)?;
    Ok(Outcome {
        artifacts: vec![Artifact::report("matrix", "matrix.json"), Artifact::report("table", "matrix.txt")],
        summary: text,
    })
}

/// One row of the generation-count sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub count: usize,
    /// Target sentences actually used after clamping.
    pub target_used: usize,
    pub generated_per_seed: Vec<usize>,
    pub final_train_size_per_seed: Vec<usize>,
    pub f1_per_seed: Vec<f64>,
    pub mean_f1: f64,
}

#[derive(Serialize)]
struct SweepCsv {
    count: usize,
    target_used: usize,
    mean_generated: f64,
    mean_final_train_size: f64,
    mean_f1: f64,
}

fn mean<T: Copy + Into<f64>>(v: &[T]) -> f64 {
    v.iter().map(|&x| x.into()).sum::<f64>() / v.len().max(1) as f64
}

fn sweep(s: &SweepSpec, out: &Path) -> Result<Outcome, Failure> {
    if s.counts.is_empty() || s.seeds.is_empty() {
        return Err(config_err(anyhow!("sweep needs at least one count and one seed")));
    }
    if s.config.pipeline.mode == Mode::TextToLabelOnly {
        return Err(config_err(anyhow!("sweep varies generated data; text-to-label mode generates none")));
    }
    let mut rows = Vec::new();
    for &count in &s.counts {
        let (mut gen, mut fin, mut f1s, mut used) = (Vec::new(), Vec::new(), Vec::new(), 0);
        for &seed in &s.seeds {
            let mut cfg = s.config.clone();
            cfg.pipeline.seed = seed;
            cfg.pipeline.generation_count = Some(count);
            cfg.pipeline.include_source_in_final = !s.exclude_source;
            let output = execute_pipeline(&cfg, s.source.as_deref(), s.target.as_deref())?;
            let r = &output.report;
            used = r.target_used;
            gen.push(r.generated.or(r.pseudo_labels.map(|p| p.parsed)).unwrap_or(0));
            fin.push(r.final_train_size.unwrap_or(0));
            f1s.push(target_f1(&output)?);
        }
        if used < count {
            warn!("count {count} clamped to the {used} available target sentences");
        }
        info!("count {count}: mean F1 {:.4}", mean(&f1s));
        rows.push(SweepRow {
            count,
            target_used: used,
            mean_f1: mean(&f1s),
            generated_per_seed: gen,
            final_train_size_per_seed: fin,
            f1_per_seed: f1s,
        });
    }

    let mut csv = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        let as_f64 = |v: &[usize]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        csv.serialize(SweepCsv {
            count: r.count,
            target_used: r.target_used,
            mean_generated: mean(&as_f64(&r.generated_per_seed)),
            mean_final_train_size: mean(&as_f64(&r.final_train_size_per_seed)),
            mean_f1: r.mean_f1,
        })
        .map_err(|e| data_err(e.into()))?;
    }
    let csv = csv.into_inner().map_err(|e| data_err(anyhow!("{e}")))?;

    let mut table = format!("{:>8} {:>8} {:>10} {:>8}\n", "count", "used", "generated", "F1");
    for r in &rows {
        let g: Vec<f64> = r.generated_per_seed.iter().map(|&x| x as f64).collect();
        table.push_str(&format!("{:>8} {:>8} {:>10.1} {:>8.2}\n", r.count, r.target_used, mean(&g), 100.0 * r.mean_f1));
    }
    write(out, "sweep.json", json(&rows)?)?;
    write(out, "sweep.csv", csv)?;
    write(out, "sweep.txt", &table)?;
    Ok(Outcome {
        artifacts: vec![
            Artifact::report("sweep", "sweep.json"),
            Artifact::report("sweep-csv", "sweep.csv"),
            Artifact::report("table", "sweep.txt"),
        ],
        summary: table,
    })
}

fn eval(e: &EvalSpec, out: &Path) -> Result<Outcome, Failure> {
    let model = ToyBackbone::load(&e.checkpoint).map_err(|err| data_err(err.into()))?;
    let corpus = load_corpus(&e.corpus, e.task).map_err(classify)?;
    if !corpus.labeled {
        return Err(data_err(anyhow!("{} is unlabeled; nothing to score", e.corpus.display())));
    }
    let result: Evaluation = evaluate(&model, &corpus, e.label_max_len).map_err(classify)?;
    write(out, "eval.json", json(&result)?)?;
    let g = &result.groups;
    let acc = |s: xabsa::evaluation::GroupStat| s.accuracy().map_or("-".into(), |a| format!("{:.2}", 100.0 * a));
    let summary = format!(
        "F1 {:.2} (P {:.2}, R {:.2}) on {} sentences; sentence accuracy zero {} single {} multiple {}; unparseable {}",
        100.0 * result.f1.f1,
        100.0 * result.f1.precision,
        100.0 * result.f1.recall,
        corpus.len(),
        acc(g.zero),
        acc(g.single),
        acc(g.multiple),
        result.unparseable
    );
    Ok(Outcome { artifacts: vec![Artifact::report("eval", "eval.json")], summary })
}
