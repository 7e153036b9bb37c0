//! The encoder-decoder abstraction shared by both generation directions.
//!
//! A single parameter state serves text-to-label and label-to-text calls; the
//! direction lives entirely in the training pairs. [`ToyBackbone`] is the
//! desk-scale implementation. A pretrained backbone plugs in by implementing
//! [`Seq2SeqModel`].

mod adam;
mod linalg;
mod toy;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::Adam;
pub use toy::{ToyBackbone, ToyConfig, ToyState};
pub use vocab::{TokenId, Vocab, BOS_ID, EOS_ID, PAD_ID, UNK_ID};

/// Epoch counts searched during per-stage model selection.
pub const EPOCH_GRID: [usize; 4] = [15, 20, 25, 30];

/// Default cap on sequence length, in tokens, excluding the end marker.
pub const DEFAULT_MAX_LEN: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OverlengthPolicy {
    /// Cut to the maximum length and log a warning.
    #[default]
    Truncate,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub grad_accumulation: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
    pub overlength: OverlengthPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            batch_size: 16,
            grad_accumulation: 2,
            epochs: 20,
            seed: 42,
            max_grad_norm: Some(5.0),
            overlength: OverlengthPolicy::Truncate,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.grad_accumulation == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch_size, grad_accumulation and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One training example: source ids and target ids, both without end markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqPair {
    pub source: Vec<TokenId>,
    pub target: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct FitReport {
    /// Mean token negative log-likelihood per epoch.
    pub epoch_losses: Vec<f64>,
    pub optimizer_steps: usize,
}

impl FitReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// What an epoch observer sees after each completed epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochEnd {
    /// One-based.
    pub epoch: usize,
    pub loss: f64,
}

pub trait Seq2SeqModel: Clone + Send + Sync {
    /// Incremental decoding state for one source sequence.
    type State: Clone + Send;

    fn vocab(&self) -> &Vocab;

    fn max_len(&self) -> usize;

    /// Fresh parameters with the same vocabulary and architecture.
    fn fresh(&self) -> Self;

    /// Encodes `source` and positions the decoder at its first step.
    fn begin(&self, source: &[TokenId]) -> Result<Self::State>;

    /// Unnormalized next-token scores over the vocabulary at the current step.
    fn scores<'s>(&self, state: &'s Self::State) -> &'s [f32];

    /// Feeds `token` as the next decoder input.
    fn advance(&self, state: &mut Self::State, token: TokenId) -> Result<()>;

    /// Minimizes token-level negative log-likelihood of targets given sources,
    /// calling `observer` after every epoch.
    fn fit_observed(
        &mut self,
        pairs: &[SeqPair],
        cfg: &TrainConfig,
        observer: &mut dyn FnMut(&Self, EpochEnd) -> Control,
    ) -> Result<FitReport>;

    fn fit(&mut self, pairs: &[SeqPair], cfg: &TrainConfig) -> Result<FitReport> {
        self.fit_observed(pairs, cfg, &mut |_, _| Control::Continue)
    }

    /// Mean token negative log-likelihood of targets (end marker included)
    /// under teacher forcing.
    fn sequence_nll(&self, pairs: &[SeqPair]) -> Result<f64> {
        let (mut loss, mut tokens) = (0.0, 0usize);
        for pair in pairs {
            let mut state = self.begin(&pair.source)?;
            for (i, &y) in pair.target.iter().chain([&EOS_ID]).enumerate() {
                if i > 0 {
                    self.advance(&mut state, pair.target[i - 1])?;
                }
                let p = softmax(self.scores(&state));
                loss -= p.get(y).copied().ok_or(Error::UnknownToken(y))?.max(1e-300).ln();
                tokens += 1;
            }
        }
        Ok(if tokens == 0 { 0.0 } else { loss / tokens as f64 })
    }

    fn next_token_distribution(&self, source: &[TokenId], prefix: &[TokenId]) -> Result<Vec<f64>> {
        let mut state = self.begin(source)?;
        for &t in prefix {
            self.advance(&mut state, t)?;
        }
        Ok(softmax(self.scores(&state)))
    }
}

pub fn softmax(scores: &[f32]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let mut out: Vec<f64> = scores.iter().map(|&s| (s as f64 - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    out
}
