//! Toy translation tasks with generated predicate–argument annotations,
//! used for overfitting and role-sensitivity experiments.
//!
//! Every source sentence is `n_a v n_b f*`: two nouns around a verb,
//! followed by up to `max_fillers` filler words. The verb heads two
//! semantic edges labeled `A0` and `A1`. Target words are a fixed bijection
//! of source words.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::DecodeMode;
use crate::corpus::{EncodedPair, EncodedSource, LabeledEdge};
use crate::error::Result;
use crate::evaluation::{bleu, BleuReport};
use crate::model::{ModelSizes, Seq2Seq};

const FIRST: usize = 4;
pub const A0: usize = 1;
pub const A1: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// word-by-word translation in source order; `n_a` is always `A0`
    Dictionary,
    /// target is `A0 v A1 f*`; which noun is `A0` is drawn at random and
    /// visible only through the edge labels
    RoleReorder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Lexicon {
    pub nouns: usize,
    pub verbs: usize,
    pub fillers: usize,
    pub max_fillers: usize,
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            nouns: 24,
            verbs: 6,
            fillers: 8,
            max_fillers: 2,
        }
    }
}

impl Lexicon {
    fn words(&self) -> usize {
        self.nouns + self.verbs + self.fillers
    }

    /// Identical vocabulary sizes on both sides; labels are UNK, A0, A1.
    pub fn sizes(&self) -> ModelSizes {
        ModelSizes {
            source_vocab: FIRST + self.words(),
            target_vocab: FIRST + self.words(),
            sem_labels: 3,
            syn_labels: 1,
        }
    }

    /// Source word id → target word id (reverses the content range).
    pub fn translate(&self, id: usize) -> usize {
        FIRST + self.words() - 1 - (id - FIRST)
    }

    fn noun(&self, i: usize) -> usize {
        FIRST + i
    }

    fn verb(&self, i: usize) -> usize {
        FIRST + self.nouns + i
    }

    fn filler(&self, i: usize) -> usize {
        FIRST + self.nouns + self.verbs + i
    }

    pub fn sample(&self, task: Task, rng: &mut ChaCha8Rng) -> EncodedPair {
        let mut nouns: Vec<usize> = (0..self.nouns).collect();
        let (picked, _) = nouns.partial_shuffle(rng, 2);
        let (na, nb) = (self.noun(picked[0]), self.noun(picked[1]));
        let v = self.verb(rng.gen_range(0..self.verbs));
        let fillers: Vec<usize> = (0..rng.gen_range(0..=self.max_fillers))
            .map(|_| self.filler(rng.gen_range(0..self.fillers)))
            .collect();
        let mut ids = vec![na, v, nb];
        ids.extend(&fillers);

        let a_is_agent = match task {
            Task::Dictionary => true,
            Task::RoleReorder => rng.gen_bool(0.5),
        };
        let (la, lb) = if a_is_agent { (A0, A1) } else { (A1, A0) };
        let sem = vec![
            LabeledEdge { head: 1, dep: 0, label: la },
            LabeledEdge { head: 1, dep: 2, label: lb },
        ];
        let order: Vec<usize> = match task {
            Task::Dictionary => ids.clone(),
            Task::RoleReorder => {
                let (agent, patient) = if a_is_agent { (na, nb) } else { (nb, na) };
                [vec![agent, v, patient], fillers].concat()
            }
        };
        EncodedPair {
            source: EncodedSource { ids, sem, syn: vec![] },
            target: order.iter().map(|&i| self.translate(i)).collect(),
        }
    }

    pub fn corpus(&self, task: Task, n: usize, seed: u64) -> Vec<EncodedPair> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample(task, &mut rng)).collect()
    }
}

/// Corpus BLEU of `model` against the pairs' targets, over token ids.
pub fn corpus_bleu(model: &Seq2Seq, pairs: &[EncodedPair], mode: DecodeMode) -> Result<BleuReport> {
    let sources: Vec<EncodedSource> = pairs.iter().map(|p| p.source.clone()).collect();
    let hyps = model.translate_all(&sources, mode, model.config.max_decode_len)?;
    let refs: Vec<&[usize]> = pairs.iter().map(|p| p.target.as_slice()).collect();
    bleu(&hyps, &refs)
}
