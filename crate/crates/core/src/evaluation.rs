//! Exact-match micro-F1, per-sentence group accuracy, and multi-seed transfer
//! matrices.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Task, TransferPair, TupleSet};

pub const DEFAULT_SEED_COUNT: usize = 5;

pub fn default_seeds() -> Vec<u64> {
    (1..=DEFAULT_SEED_COUNT as u64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub pred_count: usize,
    pub gold_count: usize,
}

impl EvalResult {
    pub fn from_counts(tp: usize, pred_count: usize, gold_count: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, pred_count);
        let recall = ratio(tp, gold_count);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            tp,
            pred_count,
            gold_count,
        }
    }
}

fn check_lengths(predictions: &[TupleSet], golds: &[TupleSet]) -> Result<()> {
    if predictions.len() != golds.len() {
        return Err(Error::LengthMismatch {
            predictions: predictions.len(),
            golds: golds.len(),
        });
    }
    Ok(())
}

/// Corpus-level micro-F1: a predicted tuple counts only if every element
/// matches a gold tuple of the same sentence after normalization.
pub fn micro_f1(predictions: &[TupleSet], golds: &[TupleSet]) -> Result<EvalResult> {
    check_lengths(predictions, golds)?;
    let (mut tp, mut np, mut ng) = (0, 0, 0);
    for (pred, gold) in predictions.iter().zip(golds) {
        tp += pred.iter().filter(|t| gold.as_slice().contains(t)).count();
        np += pred.len();
        ng += gold.len();
    }
    Ok(EvalResult::from_counts(tp, np, ng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct GroupStat {
    pub correct: usize,
    pub total: usize,
}

impl GroupStat {
    /// `None` for an empty group.
    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

/// Sentence accuracy grouped by gold tuple count: zero, one, or several.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct GroupAccuracy {
    pub zero: GroupStat,
    pub single: GroupStat,
    pub multiple: GroupStat,
}

pub fn sentence_group_accuracy(predictions: &[TupleSet], golds: &[TupleSet]) -> Result<GroupAccuracy> {
    check_lengths(predictions, golds)?;
    let mut acc = GroupAccuracy::default();
    for (pred, gold) in predictions.iter().zip(golds) {
        let group = match gold.len() {
            0 => &mut acc.zero,
            1 => &mut acc.single,
            _ => &mut acc.multiple,
        };
        group.total += 1;
        if pred.same_set(gold) {
            group.correct += 1;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub pair: TransferPair,
    /// F1 per seed, in seed order; `None` where the run failed.
    pub f1_per_seed: Vec<Option<f64>>,
    pub errors: Vec<String>,
}

impl MatrixCell {
    /// Mean over successful seeds; `None` if every seed failed.
    pub fn mean(&self) -> Option<f64> {
        let ok: Vec<f64> = self.f1_per_seed.iter().flatten().copied().collect();
        (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub task: Task,
    pub method: String,
    pub seeds: Vec<u64>,
    pub cells: Vec<MatrixCell>,
}

impl TransferMatrix {
    /// Mean of the per-pair means, over pairs that produced a value.
    pub fn average(&self) -> Option<f64> {
        let means: Vec<f64> = self.cells.iter().filter_map(MatrixCell::mean).collect();
        (!means.is_empty()).then(|| means.iter().sum::<f64>() / means.len() as f64)
    }
}

/// Runs `run(pair, seed) -> F1` for every pair and seed. A failing run marks
/// its cell entry failed without aborting the others.
pub fn run_transfer_matrix<F>(
    task: Task,
    method: &str,
    pairs: &[TransferPair],
    seeds: &[u64],
    run: F,
) -> Result<TransferMatrix>
where
    F: Fn(&TransferPair, u64) -> Result<f64> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..pairs.len())
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let results: Vec<Result<f64>> = jobs.par_iter().map(|&(p, s)| run(&pairs[p], s)).collect();

    let mut cells: Vec<MatrixCell> = pairs
        .iter()
        .map(|pair| MatrixCell {
            pair: pair.clone(),
            f1_per_seed: Vec::with_capacity(seeds.len()),
            errors: Vec::new(),
        })
        .collect();
    for (&(p, seed), res) in jobs.iter().zip(results) {
        match res {
            Ok(f1) => cells[p].f1_per_seed.push(Some(f1)),
            Err(e) => {
                cells[p].f1_per_seed.push(None);
                cells[p].errors.push(format!("seed {seed}: {e}"));
            }
        }
    }
    Ok(TransferMatrix {
        task,
        method: method.to_owned(),
        seeds: seeds.to_vec(),
        cells,
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "failed".to_owned(), |f| format!("{:.2}", 100.0 * f))
}

/// Aligned plain-text table: one row per method, one column per transfer pair,
/// then the row average. Scores are F1 x 100.
pub fn render_table(matrices: &[TransferMatrix]) -> String {
    let Some(first) = matrices.first() else {
        return String::new();
    };
    let mut header = vec!["Methods".to_owned()];
    header.extend(first.cells.iter().map(|c| c.pair.label()));
    header.push("Avg.".to_owned());
    let mut rows = vec![header];
    for m in matrices {
        let mut row = vec![m.method.clone()];
        row.extend(m.cells.iter().map(|c| pct(c.mean())));
        row.push(pct(m.average()));
        rows.push(row);
    }
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let pad = widths[c] - s.chars().count();
                if c == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join(" | "));
        if i == 0 {
            let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
            let _ = writeln!(out, "{}", rule.join("-|-"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Polarity, SentimentTuple};

    fn set(items: &[(&str, Polarity)]) -> TupleSet {
        TupleSet::from_tuples(
            items
                .iter()
                .map(|(a, p)| SentimentTuple::new(a, None, Some(*p)).unwrap()),
        )
    }

    #[test]
    fn identity_is_perfect() {
        let g = vec![set(&[("a", Polarity::Pos)]), set(&[])];
        let r = micro_f1(&g, &g).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_predictions_score_zero() {
        let g = vec![set(&[("a", Polarity::Pos)])];
        let r = micro_f1(&[set(&[])], &g).unwrap();
        assert_eq!((r.recall, r.f1), (0.0, 0.0));
    }

    #[test]
    fn two_sentence_example() {
        use Polarity::*;
        let preds = vec![set(&[("a", Pos)]), set(&[("b", Neg), ("c", Pos)])];
        let golds = vec![set(&[("a", Pos)]), set(&[("b", Pos), ("c", Pos)])];
        let r = micro_f1(&preds, &golds).unwrap();
        assert_eq!(r.tp, 2);
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            micro_f1(&[set(&[])], &[]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(sentence_group_accuracy(&[], &[set(&[])]).is_err());
    }

    #[test]
    fn group_accuracy_cases() {
        use Polarity::*;
        let golds = vec![
            set(&[]),
            set(&[("a", Pos)]),
            set(&[("a", Pos), ("b", Neg)]),
            set(&[("c", Pos), ("d", Neg)]),
        ];
        let acc = sentence_group_accuracy(&golds, &golds).unwrap();
        assert_eq!(acc.zero.accuracy(), Some(1.0));
        assert_eq!(acc.multiple.accuracy(), Some(1.0));

        let preds = vec![
            set(&[("x", Pos)]),
            set(&[("a", Pos)]),
            set(&[("b", Neg), ("a", Pos)]),
            set(&[("c", Pos)]),
        ];
        let acc = sentence_group_accuracy(&preds, &golds).unwrap();
        assert_eq!(acc.zero.accuracy(), Some(0.0));
        assert_eq!(acc.single.accuracy(), Some(1.0));
        assert_eq!(acc.multiple.accuracy(), Some(0.5));
    }

    #[test]
    fn matrix_isolates_failures() {
        let pairs = vec![
            TransferPair::new("S", "R", Task::Ate).unwrap(),
            TransferPair::new("L", "R", Task::Ate).unwrap(),
        ];
        let m = run_transfer_matrix(Task::Ate, "test", &pairs, &[1, 2], |p, seed| {
            if p.source.as_str() == "L" && seed == 2 {
                Err(Error::Config("boom".into()))
            } else {
                Ok(seed as f64 / 10.0)
            }
        })
        .unwrap();
        assert_eq!(m.cells[0].mean(), Some(0.15000000000000002));
        assert_eq!(m.cells[1].mean(), Some(0.1));
        assert_eq!(m.cells[1].errors.len(), 1);
        let table = render_table(&[m]);
        assert!(table.contains("S→R"));
        assert!(table.lines().count() == 3);
    }

    #[test]
    fn single_seed_mean_is_that_run() {
        let pairs = vec![TransferPair::new("S", "R", Task::Ate).unwrap()];
        let m = run_transfer_matrix(Task::Ate, "x", &pairs, &[7], |_, _| Ok(0.4321)).unwrap();
        assert_eq!(m.cells[0].mean(), Some(0.4321));
        assert_eq!(m.average(), Some(0.4321));
        assert!(run_transfer_matrix(Task::Ate, "x", &pairs, &[], |_, _| Ok(0.0)).is_err());
    }

    #[test]
    fn default_seed_count_is_five() {
        assert_eq!(default_seeds().len(), 5);
    }
}
