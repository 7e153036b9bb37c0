//! Corpus files, reference split sizes, transfer-pair enumeration, synthetic
//! corpora and converters from the public release formats.
//!
//! A corpus file is UTF-8 JSON Lines. Line 1 is the manifest; every following
//! line is one record. See `docs/corpus-format.md` for the byte-level layout.

mod convert;
mod synth;

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Corpus, DomainId, Example, SentimentTuple, Split, Task, TransferPair};

pub use convert::{convert, project_tuple, UpstreamFormat};
pub use synth::{synth_corpus, DomainProfile, Template};

pub const FORMAT_NAME: &str = "xabsa-corpus";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub domain: DomainId,
    pub task: Task,
    pub split: Split,
    pub labeled: bool,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    sentence: String,
    #[serde(default)]
    tuples: Vec<SentimentTuple>,
}

/// Reference split sizes of the four benchmark task families.
pub fn reference_count(task: Task, domain: &str, split: Split) -> Option<usize> {
    let row = |train, dev, test| match split {
        Split::Train => train,
        Split::Dev => dev,
        Split::Test => test,
    };
    let n = match (task, domain) {
        (Task::Ate | Task::Uabsa, "L") => row(3045, 304, 800),
        (Task::Ate | Task::Uabsa, "R") => row(3877, 387, 2158),
        (Task::Ate | Task::Uabsa, "D") => row(2557, 255, 1279),
        (Task::Ate | Task::Uabsa, "S") => row(1492, 149, 747),
        (Task::Aope, "L14") => row(1035, 116, 343),
        (Task::Aope, "R14") => row(1462, 163, 500),
        (Task::Aope, "R15") => row(678, 76, 325),
        (Task::Aope, "R16") => row(971, 108, 328),
        (Task::Aste, "L14") => row(906, 219, 328),
        (Task::Aste, "R14") => row(1266, 310, 492),
        (Task::Aste, "R15") => row(605, 148, 322),
        (Task::Aste, "R16") => row(857, 210, 326),
        _ => return None,
    };
    Some(n)
}

/// Benchmark domains of a task family, in table column order.
pub fn benchmark_domains(task: Task) -> &'static [&'static str] {
    match task {
        Task::Ate | Task::Uabsa => &["R", "S", "L", "D"],
        Task::Aope | Task::Aste => &["L14", "R14", "R15", "R16"],
    }
}

fn excluded(task: Task, source: &str, target: &str) -> bool {
    match task {
        Task::Ate | Task::Uabsa => matches!((source, target), ("D", "L") | ("L", "D")),
        Task::Aope | Task::Aste => source.starts_with('R') && target.starts_with('R'),
    }
}

/// Admissible benchmark transfer pairs, grouped by target domain.
pub fn enumerate_pairs(task: Task) -> Vec<TransferPair> {
    let domains = benchmark_domains(task);
    domains
        .iter()
        .flat_map(|&target| {
            domains
                .iter()
                .filter(move |&&source| source != target && !excluded(task, source, target))
                .map(move |&source| {
                    TransferPair::new(source, target, task).expect("distinct domains")
                })
        })
        .collect()
}

pub fn load_corpus(path: &Path, task: Task) -> Result<Corpus> {
    let text = fs::read_to_string(path)?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        warn!("{} is empty; returning an empty corpus", path.display());
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let split = stem.parse().unwrap_or(Split::Train);
        return Corpus::new(DomainId::new(stem), task, split, true, Vec::new());
    };
    let manifest: Manifest =
        serde_json::from_str(header).map_err(|e| parse_err(1, format!("manifest: {e}")))?;
    if manifest.format != FORMAT_NAME || manifest.version != FORMAT_VERSION {
        return Err(parse_err(
            1,
            format!("unsupported format {} v{}", manifest.format, manifest.version),
        ));
    }
    if manifest.task != task {
        return Err(Error::TaskMismatch {
            path: path.to_path_buf(),
            expected: task,
            found: manifest.task,
        });
    }
    let mut examples = Vec::with_capacity(manifest.count);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let rec: Record = serde_json::from_str(line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if !manifest.labeled && !rec.tuples.is_empty() {
            return Err(parse_err(lineno, "tuples in an unlabeled corpus".into()));
        }
        let ex = Example::new(&rec.sentence, rec.tuples).map_err(|e| parse_err(lineno, e.to_string()))?;
        examples.push(ex);
    }
    if examples.len() != manifest.count {
        warn!(
            "{}: manifest declares {} records, found {}",
            path.display(),
            manifest.count,
            examples.len()
        );
    }
    if let Some(expected) = reference_count(task, manifest.domain.as_str(), manifest.split) {
        if expected != examples.len() {
            warn!(
                "{}: {} {} {} has {} records; the reference split has {}",
                path.display(),
                task,
                manifest.domain,
                manifest.split,
                examples.len(),
                expected
            );
        }
    }
    Corpus::new(manifest.domain, task, manifest.split, manifest.labeled, examples)
        .map_err(|e| parse_err(1, e.to_string()))
}

/// Serializes a corpus to its canonical byte form.
pub fn corpus_to_string(corpus: &Corpus) -> Result<String> {
    let manifest = Manifest {
        format: FORMAT_NAME.to_owned(),
        version: FORMAT_VERSION,
        domain: corpus.domain.clone(),
        task: corpus.task,
        split: corpus.split,
        labeled: corpus.labeled,
        count: corpus.len(),
    };
    let mut out = serde_json::to_string(&manifest)?;
    out.push('\n');
    for ex in corpus.examples() {
        let rec = Record {
            sentence: ex.sentence(),
            tuples: ex.tuples().iter().cloned().collect(),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes atomically under an exclusive `<path>.lock` file.
pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let lock = sibling(path, "lock");
    let _guard = LockGuard::acquire(&lock)?;
    let tmp = sibling(path, "tmp");
    fs::write(&tmp, corpus_to_string(corpus)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(ext);
    path.with_file_name(name)
}

struct LockGuard(PathBuf);

impl LockGuard {
    fn acquire(path: &Path) -> Result<Self> {
        let mut f = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(path)
            .map_err(|e| {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("cannot lock {}: {e}", path.display()),
                ))
            })?;
        writeln!(f, "{}", std::process::id())?;
        Ok(Self(path.to_path_buf()))
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Seeded 90/10 train/dev split for corpora that ship without a dev set.
pub fn derive_dev_split(train: &Corpus, seed: u64) -> Result<(Corpus, Corpus)> {
    let mut idx: Vec<usize> = (0..train.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = train.len() / 10;
    let (dev_idx, train_idx) = idx.split_at(n_dev);
    let pick = |ids: &[usize]| {
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        ids.into_iter().map(|i| train.examples()[i].clone()).collect::<Vec<_>>()
    };
    info!(
        "derived a dev split of {} examples from {} {} (seed {seed})",
        n_dev, train.domain, train.split
    );
    Ok((
        Corpus::new(train.domain.clone(), train.task, Split::Train, train.labeled, pick(train_idx))?,
        Corpus::new(train.domain.clone(), train.task, Split::Dev, train.labeled, pick(dev_idx))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Polarity;

    fn sample() -> Corpus {
        let ex = Example::new(
            "the apple is sweet",
            [SentimentTuple::new("apple", Some("sweet"), Some(Polarity::Pos)).unwrap()],
        )
        .unwrap();
        Corpus::new("R14".into(), Task::Aste, Split::Dev, true, vec![ex, Example::unlabeled("no aspects here")])
            .unwrap()
    }

    #[test]
    fn byte_format() {
        let s = corpus_to_string(&sample()).unwrap();
        assert_eq!(
            s,
            concat!(
                r#"{"format":"xabsa-corpus","version":1,"domain":"R14","task":"ASTE","split":"dev","labeled":true,"count":2}"#,
                "\n",
                r#"{"sentence":"the apple is sweet","tuples":[{"aspect":"apple","opinion":"sweet","polarity":"POS"}]}"#,
                "\n",
                r#"{"sentence":"no aspects here","tuples":[]}"#,
                "\n"
            )
        );
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/dev.jsonl");
        save_corpus(&path, &sample()).unwrap();
        assert_eq!(load_corpus(&path, Task::Aste).unwrap(), sample());
        assert!(!sibling(&path, "lock").exists());
    }

    #[test]
    fn load_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut text = corpus_to_string(&sample()).unwrap();
        text.push_str("{\"sentence\": \"x\", \"tuples\": [{\"aspect\": \"y\"}]}\n");
        fs::write(&path, text).unwrap();
        match load_corpus(&path, Task::Aste) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            load_corpus(&path, Task::Ate),
            Err(Error::TaskMismatch { .. })
        ));
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.jsonl");
        fs::write(&path, "").unwrap();
        let c = load_corpus(&path, Task::Ate).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.split, Split::Test);
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let _held = LockGuard::acquire(&sibling(&path, "lock")).unwrap();
        assert!(save_corpus(&path, &sample()).is_err());
    }

    #[test]
    fn reference_counts() {
        assert_eq!(reference_count(Task::Ate, "L", Split::Train), Some(3045));
        assert_eq!(reference_count(Task::Aste, "L14", Split::Dev), Some(219));
        assert_eq!(reference_count(Task::Aste, "R15", Split::Test), Some(322));
        assert_eq!(reference_count(Task::Aope, "R16", Split::Test), Some(328));
        assert_eq!(reference_count(Task::Ate, "L14", Split::Test), None);
    }

    #[test]
    fn pairs_match_benchmark_columns() {
        let labels = |t| enumerate_pairs(t).iter().map(TransferPair::label).collect::<Vec<_>>();
        assert_eq!(
            labels(Task::Ate),
            ["S→R", "L→R", "D→R", "R→S", "L→S", "D→S", "R→L", "S→L", "R→D", "S→D"]
        );
        assert_eq!(labels(Task::Uabsa), labels(Task::Ate));
        assert_eq!(
            labels(Task::Aste),
            ["R14→L14", "R15→L14", "R16→L14", "L14→R14", "L14→R15", "L14→R16"]
        );
        assert_eq!(labels(Task::Aope), labels(Task::Aste));
        for t in Task::ALL {
            assert!(enumerate_pairs(t).iter().all(|p| p.source != p.target));
            assert_eq!(enumerate_pairs(t), enumerate_pairs(t));
        }
    }

    #[test]
    fn dev_split_is_seeded() {
        let profile = DomainProfile::builtin_pair(0.0).0;
        let c = synth_corpus(&profile, Task::Ate, 50, 1).unwrap();
        let (a, b) = derive_dev_split(&c, 9).unwrap();
        assert_eq!((a.len(), b.len()), (45, 5));
        assert_eq!(derive_dev_split(&c, 9).unwrap().1, b);
    }
}
