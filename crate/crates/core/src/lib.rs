//! Bidirectional generative cross-domain aspect-based sentiment analysis.
//!
//! A single encoder-decoder is trained text-to-label on a labeled source
//! domain, pseudo-labels an unlabeled target domain, is then trained
//! label-to-text to regenerate sentences for those pseudo labels, and finally
//! retrains text-to-label on the source data plus the filtered generations.

pub mod augmentation;
pub mod data_io;
pub mod decoding;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod tagging;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    tuple_conforms, Corpus, DomainId, Example, Polarity, SentimentTuple, Split, Task, TaskSchema,
    TransferPair, TupleSet,
};
