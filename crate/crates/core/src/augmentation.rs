//! Cross-domain augmentation: text-to-label training and pseudo-labeling,
//! label-to-text training and sentence generation, consistency filtering, and
//! final training on the combined data.

use std::fmt;
use std::str::FromStr;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoding::{constrained_generate, free_generate, DEFAULT_LABEL_MAX_LEN, DEFAULT_SENTENCE_MAX_LEN};
use crate::error::{Error, Result};
use crate::evaluation::{micro_f1, sentence_group_accuracy, EvalResult, GroupAccuracy};
use crate::model::{Control, Seq2SeqModel, SeqPair, TrainConfig, Vocab, EPOCH_GRID};
use crate::tagging::{serialize, TaggedSequence};
use crate::types::{find_span, normalize_span, Corpus, Example, SentimentTuple, Task, TupleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Both directions on a shared model, generated data filtered and added.
    Bgca,
    /// Stage 1 and evaluation only.
    TextToLabelOnly,
    /// Pseudo-labeled target sentences replace the generated data.
    SelfTraining,
    /// Label-to-text trained on separate fresh parameters.
    NoSharing,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Bgca, Mode::TextToLabelOnly, Mode::SelfTraining, Mode::NoSharing];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Bgca => "bgca",
            Mode::TextToLabelOnly => "text-to-label",
            Mode::SelfTraining => "self-training",
            Mode::NoSharing => "no-sharing",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "bgca" => Ok(Mode::Bgca),
            "text-to-label" | "text-to-label-only" => Ok(Mode::TextToLabelOnly),
            "self-training" => Ok(Mode::SelfTraining),
            "no-sharing" => Ok(Mode::NoSharing),
            _ => Err(Error::Config(format!(
                "unknown mode {s:?} (expected bgca, text-to-label, self-training or no-sharing)"
            ))),
        }
    }
}

/// How many epochs a stage trains for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochSelection {
    /// Use each stage's configured epoch count.
    Fixed,
    /// Train to the largest grid value and keep the snapshot at the grid epoch
    /// with the best source-dev score. Needs a source dev corpus.
    Grid(Vec<usize>),
}

impl Default for EpochSelection {
    fn default() -> Self {
        EpochSelection::Grid(EPOCH_GRID.to_vec())
    }
}

/// Which model state checks rule 3 of the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Checker {
    /// Snapshot taken at the end of text-to-label training.
    #[default]
    Stage1Snapshot,
    /// The shared state after label-to-text training.
    SharedAfterStage2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: Task,
    pub mode: Mode,
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    pub final_stage: TrainConfig,
    pub epoch_selection: EpochSelection,
    /// Cap on pseudo-labeled target sentences; `None` uses all of them.
    pub generation_count: Option<usize>,
    pub include_source_in_final: bool,
    /// Start final training from fresh parameters instead of the shared state.
    pub reinit_final: bool,
    pub checker: Checker,
    pub label_max_len: usize,
    pub sentence_max_len: usize,
    /// Overrides every stage's shuffle seed (offset per stage) and is passed to
    /// the model factory for initialization.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            task: Task::Ate,
            mode: Mode::Bgca,
            stage1: TrainConfig::default(),
            stage2: TrainConfig::default(),
            final_stage: TrainConfig::default(),
            epoch_selection: EpochSelection::default(),
            generation_count: None,
            include_source_in_final: true,
            reinit_final: false,
            checker: Checker::default(),
            label_max_len: DEFAULT_LABEL_MAX_LEN,
            sentence_max_len: DEFAULT_SENTENCE_MAX_LEN,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.stage1.validate()?;
        self.stage2.validate()?;
        self.final_stage.validate()?;
        if let EpochSelection::Grid(g) = &self.epoch_selection {
            if g.is_empty() || g.contains(&0) {
                return Err(Error::Config("epoch grid must hold positive epoch counts".into()));
            }
        }
        if self.label_max_len == 0 || self.sentence_max_len == 0 {
            return Err(Error::Config("decoding length limits must be positive".into()));
        }
        Ok(())
    }
}

pub struct PipelineInputs {
    pub source_train: Corpus,
    pub source_dev: Option<Corpus>,
    pub target_unlabeled: Corpus,
    pub target_test: Option<Corpus>,
}

impl PipelineInputs {
    fn check(&self, task: Task) -> Result<()> {
        let named = [
            Some(&self.source_train),
            self.source_dev.as_ref(),
            Some(&self.target_unlabeled),
            self.target_test.as_ref(),
        ];
        for c in named.into_iter().flatten() {
            if c.task != task {
                return Err(Error::Config(format!(
                    "corpus {} ({}) is for {}, pipeline runs {task}",
                    c.domain, c.split, c.task
                )));
            }
        }
        if self.source_train.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        Ok(())
    }
}

/// Word vocabulary over the training-time corpora. Target test sentences are
/// deliberately left out.
pub fn build_vocab(inputs: &PipelineInputs) -> Vocab {
    let mut v = Vocab::new();
    let corpora = [Some(&inputs.source_train), inputs.source_dev.as_ref(), Some(&inputs.target_unlabeled)];
    for c in corpora.into_iter().flatten() {
        for ex in c.examples() {
            for w in ex.tokens() {
                v.insert(w);
            }
        }
    }
    v
}

/// The gold label of `ex` with every span spelled as it appears in the sentence.
pub fn surface_label(ex: &Example, task: Task) -> Result<TaggedSequence> {
    let tokens = ex.tokens();
    let surface = |span: &str| -> Result<String> {
        let start = find_span(tokens, span).ok_or_else(|| Error::SpanNotInSentence { span: span.to_owned() })?;
        let n = span.split_whitespace().count();
        Ok(tokens[start..start + n].join(" "))
    };
    let mut out = Vec::with_capacity(ex.tuples().len());
    for t in ex.tuples().iter() {
        let opinion = t.opinion().map(surface).transpose()?;
        out.push(SentimentTuple::new(&surface(t.aspect())?, opinion.as_deref(), t.polarity())?);
    }
    if out.is_empty() {
        return Ok(TaggedSequence::empty_label(task));
    }
    // Serialize tuple by tuple so the canonical sentence order survives.
    let mut tokens = Vec::new();
    for t in out {
        tokens.extend(serialize(&TupleSet::from_tuples([t]), task)?.tokens().iter().cloned());
    }
    Ok(TaggedSequence::from_tokens(tokens, task))
}

fn encode_pair(vocab: &Vocab, source: &[String], target: &[String]) -> SeqPair {
    SeqPair {
        source: vocab.encode(source),
        target: vocab.encode(target),
    }
}

fn text_to_label_pairs(vocab: &Vocab, corpus: &Corpus) -> Result<Vec<SeqPair>> {
    corpus
        .examples()
        .iter()
        .map(|ex| Ok(encode_pair(vocab, ex.tokens(), surface_label(ex, corpus.task)?.tokens())))
        .collect()
}

fn label_to_text_pairs(vocab: &Vocab, corpus: &Corpus) -> Result<Vec<SeqPair>> {
    corpus
        .examples()
        .iter()
        .map(|ex| Ok(encode_pair(vocab, surface_label(ex, corpus.task)?.tokens(), ex.tokens())))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub train_size: usize,
    pub epoch_losses: Vec<f64>,
    pub optimizer_steps: usize,
    /// Epoch whose parameters were kept.
    pub selected_epoch: usize,
    /// Dev score at each grid epoch: F1 for text-to-label, negative mean NLL for
    /// label-to-text.
    pub dev_scores: Vec<(usize, f64)>,
}

fn stage_seed(base: u64, stage: Stage) -> u64 {
    base.wrapping_add(match stage {
        Stage::TextToLabel => 0,
        Stage::LabelToText => 1,
        Stage::FinalTrain => 2,
        _ => 3,
    })
}

/// Scores a model snapshot on the source dev set; higher is better.
type DevScorer<'a, M> = dyn Fn(&M) -> Result<f64> + Sync + 'a;

/// Fits `model` and applies epoch selection. `dev_score` is higher-is-better.
fn train_stage<M: Seq2SeqModel>(
    model: &mut M,
    stage: Stage,
    pairs: &[SeqPair],
    cfg: &TrainConfig,
    seed: u64,
    selection: &EpochSelection,
    dev_score: Option<&DevScorer<'_, M>>,
) -> Result<StageReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut cfg = cfg.clone();
    cfg.seed = stage_seed(seed, stage);
    let grid = match (selection, dev_score) {
        (EpochSelection::Grid(g), Some(_)) => {
            let mut g = g.clone();
            g.sort_unstable();
            g.dedup();
            cfg.epochs = *g.last().expect("validated non-empty");
            g
        }
        (EpochSelection::Grid(_), None) => {
            warn!("{stage}: no dev set for epoch selection; training {} epochs", cfg.epochs);
            Vec::new()
        }
        (EpochSelection::Fixed, _) => Vec::new(),
    };
    let mut best: Option<(f64, usize, M)> = None;
    let mut dev_scores = Vec::new();
    let mut eval_error = None;
    let fit = model.fit_observed(pairs, &cfg, &mut |m, end| {
        if !grid.contains(&end.epoch) {
            return Control::Continue;
        }
        let score = match dev_score.expect("grid implies scorer")(m) {
            Ok(s) => s,
            Err(e) => {
                eval_error = Some(e);
                return Control::Stop;
            }
        };
        dev_scores.push((end.epoch, score));
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, end.epoch, m.clone()));
        }
        Control::Continue
    })?;
    if let Some(e) = eval_error {
        return Err(e);
    }
    let selected_epoch = match best {
        Some((_, epoch, snapshot)) => {
            *model = snapshot;
            epoch
        }
        None => fit.epoch_losses.len(),
    };
    info!(
        "{stage}: {} pairs, final loss {:.4}, kept epoch {selected_epoch}",
        pairs.len(),
        fit.final_loss().unwrap_or(f64::NAN)
    );
    Ok(StageReport {
        stage,
        train_size: pairs.len(),
        epoch_losses: fit.epoch_losses,
        optimizer_steps: fit.optimizer_steps,
        selected_epoch,
        dev_scores,
    })
}

/// Text-to-label training on the labeled source corpus.
pub fn stage1_text_to_label<M: Seq2SeqModel>(
    model: &mut M,
    source: &Corpus,
    cfg: &PipelineConfig,
    source_dev: Option<&Corpus>,
) -> Result<StageReport> {
    if source.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let pairs = text_to_label_pairs(model.vocab(), source)?;
    let scorer = source_dev.map(|dev| {
        move |m: &M| -> Result<f64> { Ok(evaluate(m, dev, cfg.label_max_len)?.f1.f1) }
    });
    train_stage(
        model,
        Stage::TextToLabel,
        &pairs,
        &cfg.stage1,
        cfg.seed,
        &cfg.epoch_selection,
        scorer.as_ref().map(|s| s as &DevScorer<'_, M>),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoStatus {
    Parsed,
    /// The empty sentinel: the sentence was judged to carry no tuples.
    Empty,
    BadFormat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoLabel {
    pub sentence: Vec<String>,
    pub label: TaggedSequence,
    pub status: PseudoStatus,
}

/// One constrained label per target sentence, in input order.
pub fn pseudo_label<M: Seq2SeqModel>(model: &M, target: &Corpus, max_len: usize) -> Result<Vec<PseudoLabel>> {
    target
        .examples()
        .par_iter()
        .map(|ex| {
            let label = constrained_generate(model, ex.tokens(), target.task, max_len)?;
            let status = match label.parse() {
                Err(_) => PseudoStatus::BadFormat,
                Ok(_) if label.is_empty_label() => PseudoStatus::Empty,
                Ok(_) => PseudoStatus::Parsed,
            };
            Ok(PseudoLabel {
                sentence: ex.tokens().to_vec(),
                label,
                status,
            })
        })
        .collect()
}

/// Label-to-text training on reversed source pairs.
pub fn stage2_label_to_text<M: Seq2SeqModel>(
    model: &mut M,
    source: &Corpus,
    cfg: &PipelineConfig,
    source_dev: Option<&Corpus>,
) -> Result<StageReport> {
    if source.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let vocab = model.vocab().clone();
    let pairs = label_to_text_pairs(&vocab, source)?;
    let dev_pairs = source_dev.map(|d| label_to_text_pairs(&vocab, d)).transpose()?;
    let scorer = dev_pairs
        .as_ref()
        .filter(|p| !p.is_empty())
        .map(|dev| move |m: &M| -> Result<f64> { Ok(-m.sequence_nll(dev)?) });
    train_stage(
        model,
        Stage::LabelToText,
        &pairs,
        &cfg.stage2,
        cfg.seed,
        &cfg.epoch_selection,
        scorer.as_ref().map(|s| s as &DevScorer<'_, M>),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStatus {
    Retained,
    BadFormat,
    MissingWords,
    RoundtripMismatch,
}

/// A generated sentence paired with the pseudo label it was generated from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedPair {
    pub label: TaggedSequence,
    pub sentence: Vec<String>,
    pub filter_status: FilterStatus,
    /// For a round-trip mismatch: whether the checker's output still parses to
    /// the same tuple set.
    pub same_tuples: bool,
}

impl GeneratedPair {
    pub fn is_retained(&self) -> bool {
        self.filter_status == FilterStatus::Retained
    }

    pub fn to_example(&self) -> Result<Example> {
        let tuples = self.label.parse()?;
        Example::from_tokens(self.sentence.clone(), tuples.iter().cloned())
    }
}

/// One free-generated sentence per parseable, non-empty pseudo label. Status
/// is left at `Retained` until [`filter_candidates`] runs.
pub fn generate_candidates<M: Seq2SeqModel>(
    model: &M,
    pseudo: &[PseudoLabel],
    max_len: usize,
) -> Result<Vec<GeneratedPair>> {
    pseudo
        .par_iter()
        .filter(|p| p.status == PseudoStatus::Parsed)
        .map(|p| {
            Ok(GeneratedPair {
                sentence: free_generate(model, &p.label, max_len)?,
                label: p.label.clone(),
                filter_status: FilterStatus::Retained,
                same_tuples: false,
            })
        })
        .collect()
}

/// Rule 2: every non-marker word of the label occurs in the sentence,
/// compared after normalization.
pub fn label_words_in_sentence(label: &TaggedSequence, sentence: &[String]) -> bool {
    let words: std::collections::HashSet<String> = sentence.iter().map(|w| normalize_span(w)).collect();
    label.words().all(|w| words.contains(&normalize_span(w)))
}

/// Applies the three consistency checks to each candidate in order: the label
/// parses, its words occur in the sentence, and the checker model relabels
/// the sentence with exactly the same tokens.
pub fn filter_candidates<M: Seq2SeqModel>(
    candidates: Vec<GeneratedPair>,
    checker: &M,
    max_len: usize,
) -> Result<Vec<GeneratedPair>> {
    candidates
        .into_par_iter()
        .map(|mut c| {
            let parsed = c.label.parse();
            c.same_tuples = false;
            c.filter_status = match parsed {
                Err(_) => FilterStatus::BadFormat,
                Ok(_) if !label_words_in_sentence(&c.label, &c.sentence) => FilterStatus::MissingWords,
                Ok(gold) => {
                    let relabel = constrained_generate(checker, &c.sentence, c.label.task, max_len)?;
                    if relabel.tokens() == c.label.tokens() {
                        FilterStatus::Retained
                    } else {
                        c.same_tuples = relabel.parse().is_ok_and(|t| t.same_set(&gold));
                        FilterStatus::RoundtripMismatch
                    }
                }
            };
            Ok(c)
        })
        .collect()
}

/// A text-to-label training record of the final stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalRecord {
    pub sentence: Vec<String>,
    pub label: TaggedSequence,
}

/// Text-to-label training on `records` (source examples, generated or
/// pseudo-labeled pairs).
pub fn final_train<M: Seq2SeqModel>(
    model: &mut M,
    records: &[FinalRecord],
    cfg: &PipelineConfig,
    source_dev: Option<&Corpus>,
) -> Result<StageReport> {
    let vocab = model.vocab().clone();
    let pairs: Vec<SeqPair> = records
        .iter()
        .map(|r| encode_pair(&vocab, &r.sentence, r.label.tokens()))
        .collect();
    let scorer = source_dev.map(|dev| {
        move |m: &M| -> Result<f64> { Ok(evaluate(m, dev, cfg.label_max_len)?.f1.f1) }
    });
    train_stage(
        model,
        Stage::FinalTrain,
        &pairs,
        &cfg.final_stage,
        cfg.seed,
        &cfg.epoch_selection,
        scorer.as_ref().map(|s| s as &DevScorer<'_, M>),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub f1: EvalResult,
    pub groups: GroupAccuracy,
    /// Predictions that failed to parse and were scored as empty.
    pub unparseable: usize,
}

/// Predictions of `model` on a labeled corpus, unparseable outputs as empty sets.
pub fn predict<M: Seq2SeqModel>(model: &M, corpus: &Corpus, max_len: usize) -> Result<Vec<Option<TupleSet>>> {
    corpus
        .examples()
        .par_iter()
        .map(|ex| Ok(constrained_generate(model, ex.tokens(), corpus.task, max_len)?.parse().ok()))
        .collect()
}

pub fn evaluate<M: Seq2SeqModel>(model: &M, corpus: &Corpus, max_len: usize) -> Result<Evaluation> {
    let raw = predict(model, corpus, max_len)?;
    let unparseable = raw.iter().filter(|p| p.is_none()).count();
    let preds: Vec<TupleSet> = raw.into_iter().map(Option::unwrap_or_default).collect();
    let golds: Vec<TupleSet> = corpus.examples().iter().map(|e| e.tuples().clone()).collect();
    Ok(Evaluation {
        f1: micro_f1(&preds, &golds)?,
        groups: sentence_group_accuracy(&preds, &golds)?,
        unparseable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    TextToLabel,
    PseudoLabel,
    LabelToText,
    Generate,
    Filter,
    FinalTrain,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::TextToLabel => "text-to-label",
            Stage::PseudoLabel => "pseudo-label",
            Stage::LabelToText => "label-to-text",
            Stage::Generate => "generate",
            Stage::Filter => "filter",
            Stage::FinalTrain => "final-train",
            Stage::Evaluate => "evaluate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PseudoCounts {
    pub total: usize,
    pub parsed: usize,
    pub empty: usize,
    pub bad_format: usize,
}

impl PseudoCounts {
    fn of(labels: &[PseudoLabel]) -> Self {
        let count = |s| labels.iter().filter(|p| p.status == s).count();
        Self {
            total: labels.len(),
            parsed: count(PseudoStatus::Parsed),
            empty: count(PseudoStatus::Empty),
            bad_format: count(PseudoStatus::BadFormat),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Attrition {
    pub retained: usize,
    pub bad_format: usize,
    pub missing_words: usize,
    pub roundtrip_mismatch: usize,
    /// Round-trip mismatches whose relabel still parses to the same tuple set.
    pub mismatch_same_tuples: usize,
}

impl Attrition {
    pub fn of(pairs: &[GeneratedPair]) -> Self {
        let mut a = Attrition::default();
        for p in pairs {
            match p.filter_status {
                FilterStatus::Retained => a.retained += 1,
                FilterStatus::BadFormat => a.bad_format += 1,
                FilterStatus::MissingWords => a.missing_words += 1,
                FilterStatus::RoundtripMismatch => {
                    a.roundtrip_mismatch += 1;
                    a.mismatch_same_tuples += usize::from(p.same_tuples);
                }
            }
        }
        a
    }

    pub fn total(&self) -> usize {
        self.retained + self.bad_format + self.missing_words + self.roundtrip_mismatch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: Task,
    pub mode: Mode,
    pub seed: u64,
    pub source_domain: String,
    pub target_domain: String,
    pub vocab_size: usize,
    pub completed_stages: Vec<Stage>,
    pub stages: Vec<StageReport>,
    /// Target sentences sent to pseudo-labeling after the generation cap.
    pub target_used: usize,
    pub pseudo_labels: Option<PseudoCounts>,
    pub candidates: Option<usize>,
    pub attrition: Option<Attrition>,
    /// Size of the retained generated set.
    pub generated: Option<usize>,
    pub final_train_size: Option<usize>,
    pub evaluation: Option<Evaluation>,
}

impl RunReport {
    fn new(cfg: &PipelineConfig, inputs: &PipelineInputs) -> Self {
        Self {
            task: cfg.task,
            mode: cfg.mode,
            seed: cfg.seed,
            source_domain: inputs.source_train.domain.to_string(),
            target_domain: inputs.target_unlabeled.domain.to_string(),
            vocab_size: 0,
            completed_stages: Vec::new(),
            stages: Vec::new(),
            target_used: 0,
            pseudo_labels: None,
            candidates: None,
            attrition: None,
            generated: None,
            final_train_size: None,
            evaluation: None,
        }
    }

    fn done(&mut self, stage: Stage) {
        self.completed_stages.push(stage);
    }
}

/// Everything a run produced, for callers that inspect intermediate data.
#[derive(Debug, Clone)]
pub struct PipelineOutput<M> {
    pub model: M,
    /// The model as it stood after text-to-label training.
    pub stage1_model: M,
    pub report: RunReport,
    pub pseudo_labels: Vec<PseudoLabel>,
    pub candidates: Vec<GeneratedPair>,
    pub final_records: Vec<FinalRecord>,
}

/// A stage failed; `report` lists the stages that completed before it.
#[derive(Debug)]
pub struct PipelineFailure {
    pub stage: Stage,
    pub error: Error,
    pub report: Box<RunReport>,
}

impl fmt::Display for PipelineFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for PipelineFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Runs the stage sequence of `cfg.mode`. `factory` builds a freshly
/// initialized model for a vocabulary and seed.
pub fn run_pipeline<M, F>(
    cfg: &PipelineConfig,
    inputs: &PipelineInputs,
    factory: F,
) -> std::result::Result<PipelineOutput<M>, PipelineFailure>
where
    M: Seq2SeqModel,
    F: Fn(Vocab, u64) -> M,
{
    let mut report = RunReport::new(cfg, inputs);
    macro_rules! attempt {
        ($stage:expr, $e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => {
                    return Err(PipelineFailure {
                        stage: $stage,
                        error,
                        report: Box::new(report),
                    })
                }
            }
        };
    }
    attempt!(Stage::TextToLabel, cfg.validate().and_then(|_| inputs.check(cfg.task)));

    let vocab = build_vocab(inputs);
    report.vocab_size = vocab.len();
    let dev = inputs.source_dev.as_ref().filter(|d| !d.is_empty());
    let mut model = factory(vocab.clone(), cfg.seed);

    let s1 = attempt!(Stage::TextToLabel, stage1_text_to_label(&mut model, &inputs.source_train, cfg, dev));
    report.stages.push(s1);
    report.done(Stage::TextToLabel);
    let stage1_model = model.clone();

    let mut pseudo = Vec::new();
    let mut candidates = Vec::new();
    let mut final_records = Vec::new();

    if cfg.mode != Mode::TextToLabelOnly {
        let n_t = inputs.target_unlabeled.len();
        let used = match cfg.generation_count {
            Some(n) if n > n_t => {
                warn!("generation count {n} exceeds the {n_t} target sentences; using {n_t}");
                n_t
            }
            Some(n) => n,
            None => n_t,
        };
        report.target_used = used;
        let target = inputs.target_unlabeled.take(used);
        pseudo = attempt!(Stage::PseudoLabel, pseudo_label(&model, &target, cfg.label_max_len));
        report.pseudo_labels = Some(PseudoCounts::of(&pseudo));
        report.done(Stage::PseudoLabel);

        let mut records: Vec<FinalRecord> = Vec::new();
        if cfg.include_source_in_final {
            for ex in inputs.source_train.examples() {
                records.push(FinalRecord {
                    sentence: ex.tokens().to_vec(),
                    label: attempt!(Stage::FinalTrain, surface_label(ex, cfg.task)),
                });
            }
        }

        if cfg.mode == Mode::SelfTraining {
            records.extend(pseudo.iter().filter(|p| p.status == PseudoStatus::Parsed).map(|p| FinalRecord {
                sentence: p.sentence.clone(),
                label: p.label.clone(),
            }));
        } else {
            let mut generator = if cfg.mode == Mode::NoSharing {
                factory(vocab.clone(), cfg.seed.wrapping_add(1))
            } else {
                model.clone()
            };
            let s2 = attempt!(
                Stage::LabelToText,
                stage2_label_to_text(&mut generator, &inputs.source_train, cfg, dev)
            );
            report.stages.push(s2);
            report.done(Stage::LabelToText);

            candidates = attempt!(Stage::Generate, generate_candidates(&generator, &pseudo, cfg.sentence_max_len));
            report.candidates = Some(candidates.len());
            report.done(Stage::Generate);

            let checker = match cfg.checker {
                Checker::Stage1Snapshot => &stage1_model,
                Checker::SharedAfterStage2 if cfg.mode == Mode::Bgca => &generator,
                Checker::SharedAfterStage2 => &stage1_model,
            };
            candidates = attempt!(Stage::Filter, filter_candidates(candidates, checker, cfg.label_max_len));
            let attrition = Attrition::of(&candidates);
            report.generated = Some(attrition.retained);
            report.attrition = Some(attrition);
            report.done(Stage::Filter);

            records.extend(candidates.iter().filter(|c| c.is_retained()).map(|c| FinalRecord {
                sentence: c.sentence.clone(),
                label: c.label.clone(),
            }));
            if cfg.mode == Mode::Bgca {
                model = generator;
            }
        }

        report.final_train_size = Some(records.len());
        if cfg.reinit_final {
            model = model.fresh();
        }
        let fin = attempt!(Stage::FinalTrain, final_train(&mut model, &records, cfg, dev));
        report.stages.push(fin);
        report.done(Stage::FinalTrain);
        final_records = records;
    }

    if let Some(test) = &inputs.target_test {
        let ev = attempt!(Stage::Evaluate, evaluate(&model, test, cfg.label_max_len));
        report.evaluation = Some(ev);
        report.done(Stage::Evaluate);
    }

    Ok(PipelineOutput {
        model,
        stage1_model,
        report,
        pseudo_labels: pseudo,
        candidates,
        final_records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ToyBackbone, ToyConfig};
    use crate::types::{DomainId, Polarity, Split};

    fn corpus(task: Task, rows: &[(&str, Vec<SentimentTuple>)]) -> Corpus {
        let examples = rows
            .iter()
            .map(|(s, t)| Example::new(s, t.clone()).unwrap())
            .collect();
        Corpus::new(DomainId::new("d"), task, Split::Train, true, examples).unwrap()
    }

    #[test]
    fn mode_names() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert_eq!("TEXT_TO_LABEL_ONLY".parse::<Mode>().unwrap(), Mode::TextToLabelOnly);
        assert!("both".parse::<Mode>().is_err());
    }

    #[test]
    fn surface_label_uses_sentence_casing() {
        let t = SentimentTuple::new("battery life", None, Some(Polarity::Pos)).unwrap();
        let ex = Example::new("The Battery Life is great", [t]).unwrap();
        assert_eq!(surface_label(&ex, Task::Uabsa).unwrap().to_string(), "<pos> Battery Life");
        let empty = Example::new("nothing here", []).unwrap();
        assert_eq!(surface_label(&empty, Task::Uabsa).unwrap().to_string(), "<none>");
    }

    #[test]
    fn rule_two_is_case_insensitive_and_ignores_markers() {
        let l = TaggedSequence::from_text("<pos> apple <opinion> sweet", Task::Aste);
        let s: Vec<String> = "The Apple is Sweet".split(' ').map(String::from).collect();
        assert!(label_words_in_sentence(&l, &s));
        let s: Vec<String> = "the pear is sweet".split(' ').map(String::from).collect();
        assert!(!label_words_in_sentence(&l, &s));
    }

    #[test]
    fn filter_statuses() {
        let vocab = Vocab::from_words(["apple", "sweet", "the", "is"]);
        let checker = ToyBackbone::new(vocab, ToyConfig { max_len: 16, ..ToyConfig::default() });
        let cand = |label: &str, sentence: &str| GeneratedPair {
            label: TaggedSequence::from_text(label, Task::Aste),
            sentence: sentence.split(' ').map(String::from).collect(),
            filter_status: FilterStatus::Retained,
            same_tuples: false,
        };
        let out = filter_candidates(
            vec![
                cand("<opinion> sweet", "the apple is sweet"),
                cand("<pos> apple <opinion> sweet", "the is sweet"),
                cand("<pos> apple <opinion> sweet", "the apple is sweet"),
            ],
            &checker,
            8,
        )
        .unwrap();
        assert_eq!(out[0].filter_status, FilterStatus::BadFormat);
        assert_eq!(out[1].filter_status, FilterStatus::MissingWords);
        // An untrained checker does not reproduce the label.
        assert_eq!(out[2].filter_status, FilterStatus::RoundtripMismatch);
        assert_eq!(Attrition::of(&out).total(), 3);
    }

    #[test]
    fn empty_source_is_rejected() {
        let src = Corpus::new(DomainId::new("s"), Task::Ate, Split::Train, true, vec![]).unwrap();
        let inputs = PipelineInputs {
            source_train: src.clone(),
            source_dev: None,
            target_unlabeled: src.to_unlabeled(),
            target_test: None,
        };
        let err = run_pipeline(&PipelineConfig::default(), &inputs, |v, _| ToyBackbone::new(v, ToyConfig::default()))
            .unwrap_err();
        assert!(matches!(err.error, Error::EmptyTrainingSet));
        assert!(err.report.completed_stages.is_empty());
    }

    #[test]
    fn text_to_label_only_skips_augmentation() {
        let t = |a: &str| SentimentTuple::new(a, None, None).unwrap();
        let src = corpus(Task::Ate, &[("the apple is sweet", vec![t("apple")]), ("nice pear", vec![t("pear")])]);
        let inputs = PipelineInputs {
            source_train: src.clone(),
            source_dev: None,
            target_unlabeled: src.to_unlabeled(),
            target_test: Some(src),
        };
        let cfg = PipelineConfig {
            mode: Mode::TextToLabelOnly,
            stage1: TrainConfig { epochs: 2, ..TrainConfig::default() },
            ..PipelineConfig::default()
        };
        let out = run_pipeline(&cfg, &inputs, |v, s| {
            ToyBackbone::new(v, ToyConfig { seed: s, embed_dim: 8, encoder_hidden: 8, decoder_hidden: 8, ..ToyConfig::default() })
        })
        .unwrap();
        assert_eq!(out.report.completed_stages, [Stage::TextToLabel, Stage::Evaluate]);
        assert!(out.report.pseudo_labels.is_none());
        assert!(out.report.evaluation.is_some());
    }
}
