use std::fs;
use std::path::Path;

use super::bpe::BpeModel;
use super::conll::AnnotatedSentence;
use super::vocab::{LabelSet, Vocabulary, BOS, EOS, PAD};
use crate::error::{Error, Result};

/// Edge with its label resolved to an inventory id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledEdge {
    pub head: usize,
    pub dep: usize,
    pub label: usize,
}

/// Everything learned from the training corpus that maps text to ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabs {
    pub source: Vocabulary,
    pub target: Vocabulary,
    pub bpe: BpeModel,
    pub sem_labels: LabelSet,
    pub syn_labels: LabelSet,
}

#[derive(Debug, Clone, Copy)]
pub struct VocabSettings {
    pub source_min_count: usize,
    pub target_min_count: usize,
    pub bpe_merges: usize,
    pub label_min_count: usize,
}

pub const VOCAB_FILES: [&str; 5] = ["source.vocab", "target.vocab", "target.bpe", "sem.labels", "syn.labels"];

impl Vocabs {
    pub fn build(pairs: &[(AnnotatedSentence, Vec<String>)], settings: VocabSettings) -> Self {
        let bpe = BpeModel::learn(pairs.iter().map(|(_, t)| t.as_slice()), settings.bpe_merges);
        let segmented: Vec<Vec<String>> = pairs.iter().map(|(_, t)| bpe.apply_sentence(t)).collect();
        Vocabs {
            source: Vocabulary::build(pairs.iter().map(|(s, _)| s.tokens.as_slice()), settings.source_min_count),
            target: Vocabulary::build(segmented.iter().map(Vec::as_slice), settings.target_min_count),
            sem_labels: LabelSet::build(
                pairs.iter().flat_map(|(s, _)| s.sem_edges.iter().map(|e| e.label.as_str())),
                settings.label_min_count,
            ),
            syn_labels: LabelSet::build(
                pairs.iter().flat_map(|(s, _)| s.syn_edges.iter().map(|e| e.label.as_str())),
                settings.label_min_count,
            ),
            bpe,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let texts = [
            self.source.to_text(),
            self.target.to_text(),
            self.bpe.to_text(),
            self.sem_labels.to_text(),
            self.syn_labels.to_text(),
        ];
        for (name, text) in VOCAB_FILES.iter().zip(texts) {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
        };
        Ok(Vocabs {
            source: Vocabulary::from_text(&read(VOCAB_FILES[0])?)?,
            target: Vocabulary::from_text(&read(VOCAB_FILES[1])?)?,
            bpe: BpeModel::from_text(&read(VOCAB_FILES[2])?)?,
            sem_labels: LabelSet::from_text(&read(VOCAB_FILES[3])?)?,
            syn_labels: LabelSet::from_text(&read(VOCAB_FILES[4])?)?,
        })
    }

    /// Maps a source sentence to ids; unknown words and labels become UNK.
    pub fn encode_source(&self, sentence: &AnnotatedSentence) -> EncodedSource {
        let map = |edges: &[super::conll::Edge], labels: &LabelSet| {
            edges
                .iter()
                .map(|e| LabeledEdge {
                    head: e.head,
                    dep: e.dep,
                    label: labels.id(&e.label),
                })
                .collect()
        };
        EncodedSource {
            ids: self.source.encode(&sentence.tokens),
            sem: map(&sentence.sem_edges, &self.sem_labels),
            syn: map(&sentence.syn_edges, &self.syn_labels),
        }
    }

    /// BPE-segments and maps a target sentence, without BOS/EOS.
    pub fn encode_target<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        self.target.encode(&self.bpe.apply_sentence(tokens))
    }

    pub fn encode_pair(&self, source: &AnnotatedSentence, target: &[String]) -> EncodedPair {
        EncodedPair {
            source: self.encode_source(source),
            target: self.encode_target(target),
        }
    }

    /// Turns decoded target ids back into words: specials dropped, BPE rejoined.
    pub fn decode_target(&self, ids: &[usize]) -> Vec<String> {
        let units: Vec<&str> = ids
            .iter()
            .filter(|&&i| !super::vocab::is_special(i))
            .map(|&i| self.target.token(i))
            .collect();
        super::bpe::detokenize(&units)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSource {
    pub ids: Vec<usize>,
    pub sem: Vec<LabeledEdge>,
    pub syn: Vec<LabeledEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub source: EncodedSource,
    /// target subword ids without BOS/EOS
    pub target: Vec<usize>,
}

/// Which graphs to attach and the length limit.
#[derive(Debug, Clone, Copy)]
pub struct BatchOptions {
    pub max_len: usize,
    pub with_sem: bool,
    pub with_syn: bool,
}

/// Padded id matrices, row-major with one row per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub src_len: usize,
    /// `size × src_len`, PAD-filled
    pub source: Vec<usize>,
    pub lengths: Vec<usize>,
    /// true exactly at non-PAD source positions
    pub mask: Vec<bool>,
    pub tgt_len: usize,
    /// `size × tgt_len`: BOS, subword ids, EOS, then PAD
    pub target: Vec<usize>,
    pub sem: Option<Vec<Vec<LabeledEdge>>>,
    pub syn: Option<Vec<Vec<LabeledEdge>>>,
}

impl Batch {
    pub fn from_encoded(examples: &[(&EncodedSource, Option<&[usize]>)], opts: BatchOptions) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        for (i, (src, tgt)) in examples.iter().enumerate() {
            let tgt_len = tgt.map_or(0, <[usize]>::len);
            if src.ids.is_empty() {
                return Err(Error::Data(format!("sentence {i} is empty")));
            }
            if src.ids.len() > opts.max_len || tgt_len > opts.max_len {
                return Err(Error::Data(format!(
                    "sentence {i} ({} source / {tgt_len} target tokens) exceeds max length {}",
                    src.ids.len(),
                    opts.max_len
                )));
            }
            for e in src.sem.iter().chain(&src.syn) {
                if e.head >= src.ids.len() || e.dep >= src.ids.len() {
                    return Err(Error::Data(format!("sentence {i}: edge {}→{} out of range", e.head, e.dep)));
                }
            }
        }
        let size = examples.len();
        let src_len = examples.iter().map(|(s, _)| s.ids.len()).max().unwrap();
        let tgt_len = examples.iter().map(|(_, t)| t.map_or(0, <[usize]>::len)).max().unwrap() + 2;
        let mut source = vec![PAD; size * src_len];
        let mut mask = vec![false; size * src_len];
        let mut target = vec![PAD; size * tgt_len];
        for (b, (src, tgt)) in examples.iter().enumerate() {
            for (t, &id) in src.ids.iter().enumerate() {
                source[b * src_len + t] = id;
                mask[b * src_len + t] = true;
            }
            let row = &mut target[b * tgt_len..(b + 1) * tgt_len];
            row[0] = BOS;
            let ids = tgt.unwrap_or(&[]);
            row[1..=ids.len()].copy_from_slice(ids);
            row[ids.len() + 1] = EOS;
        }
        Ok(Batch {
            size,
            src_len,
            source,
            lengths: examples.iter().map(|(s, _)| s.ids.len()).collect(),
            mask,
            tgt_len,
            target,
            sem: opts.with_sem.then(|| examples.iter().map(|(s, _)| s.sem.clone()).collect()),
            syn: opts.with_syn.then(|| examples.iter().map(|(s, _)| s.syn.clone()).collect()),
        })
    }

    pub fn source_row(&self, b: usize) -> &[usize] {
        &self.source[b * self.src_len..b * self.src_len + self.lengths[b]]
    }

    pub fn target_row(&self, b: usize) -> &[usize] {
        &self.target[b * self.tgt_len..(b + 1) * self.tgt_len]
    }
}

/// Builds a training batch from raw sentence pairs.
pub fn make_batch(pairs: &[(AnnotatedSentence, Vec<String>)], vocabs: &Vocabs, opts: BatchOptions) -> Result<Batch> {
    let encoded: Vec<EncodedPair> = pairs.iter().map(|(s, t)| vocabs.encode_pair(s, t)).collect();
    let refs: Vec<(&EncodedSource, Option<&[usize]>)> = encoded.iter().map(|p| (&p.source, Some(p.target.as_slice()))).collect();
    Batch::from_encoded(&refs, opts)
}
