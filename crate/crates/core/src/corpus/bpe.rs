//! Byte-pair encoding over characters.
//!
//! Words are split into characters with the end-of-word marker `</w>`
//! fused onto the last one, so `low` starts as `l o w</w>`. Learning
//! repeatedly merges the most frequent adjacent pair (ties go to the
//! lexicographically smallest pair). Segmented output marks every unit that
//! does not end a word with a trailing `@@`.
//!
//! Merge file format: first line `#bpe-merges v1`, then one merge per line
//! as `left right`, highest priority first.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const END_OF_WORD: &str = "</w>";
pub const CONTINUATION: &str = "@@";
const HEADER: &str = "#bpe-merges v1";

pub const NEWS_COMMENTARY_MERGES: usize = 8000;
pub const FULL_DATA_MERGES: usize = 16000;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

fn initial_symbols(word: &str) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut symbols: Vec<String> = chars.iter().map(|c| c.to_string()).collect();
    if let Some(last) = symbols.last_mut() {
        last.push_str(END_OF_WORD);
    }
    symbols
}

/// Replaces every non-overlapping occurrence of `pair`, scanning left to right.
fn merge_pair(symbols: &[String], left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(format!("{left}{right}"));
            i += 2;
        } else {
            out.push(symbols[i].clone());
            i += 1;
        }
    }
    out
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>) -> Self {
        let ranks = merges.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        BpeModel { merges, ranks }
    }

    /// Learns up to `num_merges` merges from whitespace tokens.
    pub fn learn<'a>(sentences: impl IntoIterator<Item = &'a [String]>, num_merges: usize) -> Self {
        let mut word_counts: HashMap<&str, usize> = HashMap::new();
        for t in sentences.into_iter().flatten() {
            *word_counts.entry(t.as_str()).or_insert(0) += 1;
        }
        let mut words: Vec<(&str, usize)> = word_counts.into_iter().collect();
        words.sort_unstable();
        let mut vocab: Vec<(Vec<String>, usize)> = words.into_iter().map(|(w, c)| (initial_symbols(w), c)).collect();

        let mut merges = Vec::new();
        while merges.len() < num_merges {
            let mut pairs: HashMap<(&str, &str), usize> = HashMap::new();
            for (symbols, count) in &vocab {
                for w in symbols.windows(2) {
                    *pairs.entry((w[0].as_str(), w[1].as_str())).or_insert(0) += count;
                }
            }
            let Some((best, _)) = pairs
                .into_iter()
                .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            else {
                break;
            };
            let (left, right) = (best.0.to_string(), best.1.to_string());
            for (symbols, _) in vocab.iter_mut() {
                if symbols.windows(2).any(|w| w[0] == left && w[1] == right) {
                    *symbols = merge_pair(symbols, &left, &right);
                }
            }
            merges.push((left, right));
        }
        BpeModel::from_merges(merges)
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// Segments one token; non-final units carry the `@@` suffix.
    pub fn apply(&self, token: &str) -> Vec<String> {
        let mut symbols = initial_symbols(token);
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())))
                .min();
            let Some(&rank) = best else { break };
            let (left, right) = &self.merges[rank];
            symbols = merge_pair(&symbols, left, right);
        }
        let n = symbols.len();
        symbols
            .into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                if i + 1 == n {
                    s.truncate(s.len() - END_OF_WORD.len());
                } else {
                    s.push_str(CONTINUATION);
                }
                s
            })
            .collect()
    }

    pub fn apply_sentence<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        tokens.iter().flat_map(|t| self.apply(t.as_ref())).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(HEADER);
        s.push('\n');
        for (l, r) in &self.merges {
            s.push_str(&format!("{l} {r}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::parse(1, format!("merge file must start with `{HEADER}`")));
        }
        let mut merges = Vec::new();
        for (i, line) in lines.enumerate() {
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => merges.push((l.to_string(), r.to_string())),
                _ => return Err(Error::parse(i + 2, "expected `left right`")),
            }
        }
        Ok(BpeModel::from_merges(merges))
    }
}

/// Inverse of [`BpeModel::apply`]: strips the continuation marker from every
/// unit but the last and concatenates.
pub fn join_subwords<S: AsRef<str>>(units: &[S]) -> String {
    let n = units.len();
    units
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let u = u.as_ref();
            if i + 1 < n {
                u.strip_suffix(CONTINUATION).unwrap_or(u)
            } else {
                u
            }
        })
        .collect()
}

/// Rejoins a segmented sentence into words.
pub fn detokenize<S: AsRef<str>>(units: &[S]) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for u in units {
        let u = u.as_ref();
        match u.strip_suffix(CONTINUATION) {
            Some(stem) => current.push_str(stem),
            None => {
                current.push_str(u);
                words.push(std::mem::take(&mut current));
            }
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}
