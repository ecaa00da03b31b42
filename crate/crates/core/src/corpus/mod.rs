//! Corpus ingestion: annotated source sentences, vocabularies, subword
//! segmentation and padded batches.

mod batch;
pub mod bpe;
pub mod conll;
pub mod vocab;

use std::fs;
use std::path::Path;

pub use batch::{make_batch, Batch, BatchOptions, EncodedPair, EncodedSource, LabeledEdge, VocabSettings, Vocabs, VOCAB_FILES};
pub use bpe::{detokenize, join_subwords, BpeModel};
pub use conll::{ingest_conll, serialize_conll, AnnotatedSentence, Edge};
pub use vocab::{is_special, LabelSet, Vocabulary, BOS, EOS, PAD, UNK};

use crate::error::{Error, Result};

/// Splits plain text into one whitespace-tokenized sentence per line.
pub fn read_plain(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect()
}

/// Loads an annotated source file and its line-aligned target file.
pub fn read_parallel(source: &Path, target: &Path) -> Result<Vec<(AnnotatedSentence, Vec<String>)>> {
    let src_text = fs::read_to_string(source).map_err(|e| Error::io(source, e))?;
    let tgt_text = fs::read_to_string(target).map_err(|e| Error::io(target, e))?;
    let sources = ingest_conll(&src_text)?;
    let targets = read_plain(&tgt_text);
    if sources.len() != targets.len() {
        return Err(Error::Data(format!(
            "{} has {} sentences but {} has {} lines",
            source.display(),
            sources.len(),
            target.display(),
            targets.len()
        )));
    }
    Ok(sources.into_iter().zip(targets).collect())
}
