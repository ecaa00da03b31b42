use std::collections::HashMap;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

pub const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Default source cutoff: keep words seen more than three times.
pub const DEFAULT_MIN_COUNT: usize = 4;

pub fn is_special(id: usize) -> bool {
    id < SPECIALS.len()
}

fn count<'a>(items: impl IntoIterator<Item = &'a str>) -> HashMap<&'a str, usize> {
    let mut counts = HashMap::new();
    for t in items {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

/// Entries with `count >= min_count`, most frequent first, ties lexicographic.
fn ranked(counts: HashMap<&str, usize>, min_count: usize) -> Vec<(&str, usize)> {
    let mut kept: Vec<_> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    kept
}

/// Token ↔ id map. Ids 0..4 are `<pad> <unk> <s> </s>`.
///
/// File format: UTF-8, one token per line, line `i` (0-based) holds id `i`;
/// the first four lines are the specials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::from_tokens(Vec::<String>::new())
    }
}

impl Vocabulary {
    fn from_tokens(words: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().map(Into::into));
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }

    /// Counts tokens and keeps those seen at least `min_count` times.
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a [String]>, min_count: usize) -> Self {
        let min_count = min_count.max(1);
        let counts = count(
            sentences
                .into_iter()
                .flatten()
                .map(String::as_str)
                .filter(|t| !SPECIALS.contains(t)),
        );
        Vocabulary::from_tokens(ranked(counts, min_count).into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(SPECIALS[UNK])
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < SPECIALS.len() || lines[..SPECIALS.len()] != SPECIALS {
            return Err(Error::parse(1, "vocabulary must start with <pad> <unk> <s> </s>"));
        }
        let vocab = Vocabulary::from_tokens(lines[SPECIALS.len()..].iter().copied());
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::Data("vocabulary has duplicate entries".into()));
        }
        Ok(vocab)
    }
}

pub const UNK_LABEL: &str = "<unk>";
/// Labels seen fewer times than this in training share the UNK entry.
pub const DEFAULT_LABEL_MIN_COUNT: usize = 2;

/// Edge label inventory for one graph kind; id 0 is the UNK label.
/// Same file format as [`Vocabulary`] with the single special `<unk>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for LabelSet {
    fn default() -> Self {
        LabelSet::from_names(Vec::<String>::new())
    }
}

impl LabelSet {
    fn from_names(names: impl IntoIterator<Item = impl Into<String>>) -> Self {
        let mut all = vec![UNK_LABEL.to_string()];
        all.extend(names.into_iter().map(Into::into));
        let index = all.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        LabelSet { names: all, index }
    }

    pub fn build<'a>(labels: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let counts = count(labels.into_iter().filter(|l| *l != UNK_LABEL));
        LabelSet::from_names(ranked(counts, min_count.max(1)).into_iter().map(|(t, _)| t))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, label: &str) -> usize {
        self.index.get(label).copied().unwrap_or(0)
    }

    pub fn name(&self, id: usize) -> &str {
        self.names.get(id).map(String::as_str).unwrap_or(UNK_LABEL)
    }

    pub fn to_text(&self) -> String {
        let mut s = self.names.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(UNK_LABEL) {
            return Err(Error::parse(1, "label file must start with <unk>"));
        }
        Ok(LabelSet::from_names(lines))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn frequency_must_exceed_three() {
        let corpus = vec![toks("a a a b b b b"), toks("c")];
        let v = Vocabulary::build(corpus.iter().map(Vec::as_slice), DEFAULT_MIN_COUNT);
        assert!(v.contains("b"));
        assert!(!v.contains("a"));
        assert_eq!(v.id("a"), UNK);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn empty_corpus_gives_specials() {
        let v = Vocabulary::build(std::iter::empty(), 1);
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("<s>"), BOS);
        assert_eq!(v.token(EOS), "</s>");
    }

    #[test]
    fn specials_are_not_counted() {
        let corpus = vec![toks("<s> x </s> <pad>")];
        let v = Vocabulary::build(corpus.iter().map(Vec::as_slice), 1);
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("x"), 4);
    }

    #[test]
    fn ids_by_frequency_then_lexicographic() {
        let corpus = vec![toks("b a c c b d"), toks("c")];
        let v = Vocabulary::build(corpus.iter().map(Vec::as_slice), 1);
        let order: Vec<&str> = (4..v.len()).map(|i| v.token(i)).collect();
        assert_eq!(order, ["c", "b", "a", "d"]);
    }

    #[test]
    fn text_round_trip() {
        let corpus = vec![toks("x y y z z z")];
        let v = Vocabulary::build(corpus.iter().map(Vec::as_slice), 1);
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocabulary::from_text("a\nb\n").is_err());
    }

    #[test]
    fn rare_labels_fold_into_unk() {
        let l = LabelSet::build(["A0", "A0", "A1", "A1", "AM-TMP"], DEFAULT_LABEL_MIN_COUNT);
        assert_eq!(l.len(), 3);
        assert_eq!(l.id("AM-TMP"), 0);
        assert_eq!(l.id("never-seen"), 0);
        assert_ne!(l.id("A0"), l.id("A1"));
        assert_eq!(LabelSet::from_text(&l.to_text()).unwrap(), l);
    }
}
