use std::cmp::Ordering;

use crate::corpus::{BOS, EOS};
use crate::error::Result;

/// A left-to-right model over token ids, queried one step at a time.
pub trait StepModel {
    type State: Clone;

    fn start(&mut self) -> Result<Self::State>;

    /// Advances every `(state, previous token)` pair by one step, returning
    /// the next state and log-probabilities over the vocabulary.
    fn step(&mut self, queries: &[(&Self::State, usize)]) -> Result<Vec<(Self::State, Vec<f64>)>>;
}

#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    /// emitted tokens, without BOS or EOS
    pub tokens: Vec<usize>,
    pub score: f64,
    pub finished: bool,
    pub state: S,
}

/// Argmax decoding; ties go to the lowest id. Stops after EOS or `max_len`
/// steps.
pub fn greedy_decode<M: StepModel>(model: &mut M, max_len: usize) -> Result<Hypothesis<M::State>> {
    let mut hyp = Hypothesis {
        tokens: vec![],
        score: 0.0,
        finished: false,
        state: model.start()?,
    };
    let mut prev = BOS;
    for _ in 0..max_len {
        let (state, log_probs) = model.step(&[(&hyp.state, prev)])?.pop().expect("one query, one answer");
        let best = argmax(&log_probs);
        hyp.state = state;
        hyp.score += log_probs[best];
        if best == EOS {
            hyp.finished = true;
            break;
        }
        hyp.tokens.push(best);
        prev = best;
    }
    Ok(hyp)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

struct Candidate {
    parent: usize,
    token: usize,
    step: f64,
    score: f64,
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.step.total_cmp(&a.step))
        .then(a.token.cmp(&b.token))
        .then(a.parent.cmp(&b.parent))
}

fn better<S>(a: &Hypothesis<S>, b: &Hypothesis<S>) -> bool {
    match a.score.total_cmp(&b.score) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.tokens < b.tokens,
    }
}

/// Beam search with unnormalized cumulative log-probability.
///
/// Each step expands every live hypothesis over the whole vocabulary and
/// keeps the `beam` best candidates; those ending in EOS move to the
/// finished pool. Live hypotheses that already score below the best
/// finished one are dropped. The result is the best of the finished pool,
/// the survivors at `max_len` and the greedy hypothesis, so it never scores
/// below greedy decoding.
pub fn beam_decode<M: StepModel>(model: &mut M, beam: usize, max_len: usize) -> Result<Hypothesis<M::State>> {
    let beam = beam.max(1);
    let mut best = greedy_decode(model, max_len)?;
    let mut live = vec![Hypothesis {
        tokens: vec![],
        score: 0.0,
        finished: false,
        state: model.start()?,
    }];
    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let queries: Vec<_> = live.iter().map(|h| (&h.state, h.tokens.last().copied().unwrap_or(BOS))).collect();
        let expanded = model.step(&queries)?;
        let mut candidates = Vec::new();
        for (parent, (_, log_probs)) in expanded.iter().enumerate() {
            for (token, &lp) in log_probs.iter().enumerate() {
                if lp.is_finite() {
                    candidates.push(Candidate {
                        parent,
                        token,
                        step: lp,
                        score: live[parent].score + lp,
                    });
                }
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(beam);
        let mut next = Vec::with_capacity(beam);
        for c in candidates {
            let parent = &live[c.parent];
            let mut tokens = parent.tokens.clone();
            let finished = c.token == EOS;
            if !finished {
                tokens.push(c.token);
            }
            let hyp = Hypothesis {
                tokens,
                score: c.score,
                finished,
                state: expanded[c.parent].0.clone(),
            };
            if finished {
                if better(&hyp, &best) {
                    best = hyp;
                }
            } else {
                next.push(hyp);
            }
        }
        next.retain(|h| !(best.finished && h.score < best.score));
        live = next;
    }
    for h in live {
        if better(&h, &best) {
            best = h;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Log-probabilities depend on the full prefix through a hash, so the
    /// search tree has no exploitable structure.
    struct TableModel {
        pub vocab: usize,
        pub seed: u64,
    }

    impl TableModel {
        fn log_probs(&self, prefix: &[usize]) -> Vec<f64> {
            let mut h = self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
            for &t in prefix {
                h = (h ^ t as u64).wrapping_mul(0x1000_0000_01B3).rotate_left(17);
            }
            let logits: Vec<f64> = (0..self.vocab)
                .map(|v| {
                    let x = (h ^ (v as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9)).wrapping_mul(0x94D0_49BB_1331_11EB);
                    (x >> 11) as f64 / (1u64 << 53) as f64 * 4.0
                })
                .collect();
            let lse = crate::tensor::log_sum_exp(&logits);
            logits.iter().map(|l| l - lse).collect()
        }
    }

    impl StepModel for TableModel {
        /// emitted prefix, `None` before the first step
        type State = Option<Vec<usize>>;

        fn start(&mut self) -> Result<Self::State> {
            Ok(None)
        }

        fn step(&mut self, queries: &[(&Self::State, usize)]) -> Result<Vec<(Self::State, Vec<f64>)>> {
            Ok(queries
                .iter()
                .map(|(prefix, tok)| {
                    let p = match prefix {
                        None => vec![],
                        Some(p) => {
                            let mut p = p.clone();
                            p.push(*tok);
                            p
                        }
                    };
                    let lp = self.log_probs(&p);
                    (Some(p), lp)
                })
                .collect())
        }
    }

    /// Scores every sequence the decoder could emit within `max_len` steps.
    fn brute_force(model: &TableModel, max_len: usize) -> (Vec<usize>, f64) {
        let mut best: Option<(Vec<usize>, f64)> = None;
        let mut stack = vec![(vec![], 0.0)];
        while let Some((prefix, score)) = stack.pop() {
            let lp = model.log_probs(&prefix);
            for (v, &l) in lp.iter().enumerate() {
                let s = score + l;
                let mut seq: Vec<usize> = prefix.clone();
                if v == EOS || seq.len() + 1 == max_len {
                    if v != EOS {
                        seq.push(v);
                    }
                    let out: Vec<usize> = seq;
                    let wins = best.as_ref().is_none_or(|(bt, bs)| s > *bs || (s == *bs && out < *bt));
                    if wins {
                        best = Some((out, s));
                    }
                } else {
                    seq.push(v);
                    stack.push((seq, s));
                }
            }
        }
        best.unwrap()
    }

    struct Fixed(Vec<f64>);

    impl StepModel for Fixed {
        type State = ();
        fn start(&mut self) -> Result<()> {
            Ok(())
        }
        fn step(&mut self, queries: &[(&(), usize)]) -> Result<Vec<((), Vec<f64>)>> {
            Ok(queries.iter().map(|_| ((), self.0.clone())).collect())
        }
    }

    #[test]
    fn eos_first_gives_empty_output() {
        let mut m = Fixed(vec![-3.0, -3.0, -3.0, -0.1, -3.0]);
        let h = greedy_decode(&mut m, 10).unwrap();
        assert!(h.tokens.is_empty() && h.finished);
        assert_eq!(beam_decode(&mut m, 4, 10).unwrap().tokens, Vec::<usize>::new());
    }

    #[test]
    fn never_eos_stops_at_max_len() {
        let mut m = Fixed(vec![-3.0, -3.0, -3.0, -5.0, -0.1]);
        let h = greedy_decode(&mut m, 3).unwrap();
        assert_eq!(h.tokens, vec![4, 4, 4]);
        assert!(!h.finished);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let mut m = Fixed(vec![-9.0, -1.0, -1.0, -9.0, -1.0]);
        assert_eq!(greedy_decode(&mut m, 2).unwrap().tokens, vec![1, 1]);
    }

    #[test]
    fn beam_one_is_greedy() {
        for seed in 0..50 {
            let mut m = TableModel { vocab: 6, seed };
            let g = greedy_decode(&mut m, 6).unwrap();
            let b = beam_decode(&mut m, 1, 6).unwrap();
            assert_eq!(g.tokens, b.tokens);
            assert_eq!(g.score, b.score);
        }
    }

    #[test]
    fn wide_beam_is_exhaustive() {
        for seed in 0..30 {
            let mut m = TableModel { vocab: 4, seed };
            // at most 4^3 live prefixes, so only the final step truncates
            let b = beam_decode(&mut m, 64, 4).unwrap();
            let (tokens, score) = brute_force(&m, 4);
            assert_eq!(b.tokens, tokens, "seed {seed}");
            assert!((b.score - score).abs() < 1e-12);
        }
    }

    #[test]
    fn beam_never_below_greedy() {
        for seed in 0..50 {
            let mut m = TableModel { vocab: 7, seed };
            let g = greedy_decode(&mut m, 5).unwrap();
            for beam in [2, 3, 5] {
                assert!(beam_decode(&mut m, beam, 5).unwrap().score >= g.score);
            }
        }
    }
}
