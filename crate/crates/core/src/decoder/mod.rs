//! Attention GRU decoder.
//!
//! ```text
//! score_i = v · tanh(s_{t−1} U + enc_i V)        α = masked softmax(score)
//! c_t     = Σ_i α_i enc_i
//! s_t     = GRU([emb(y_{t−1}); c_t], s_{t−1})
//! logits  = [s_t; c_t; emb(y_{t−1})] W_out + b_out
//! s_0     = tanh(mean_i(enc_i) W_init + b_init)
//! ```

mod search;

pub use search::{beam_decode, greedy_decode, Hypothesis, StepModel};

use crate::corpus::{Batch, PAD};
use crate::encoders::{GruParams, EncoderOutput};
use crate::error::{Error, Result};
use crate::init::ParamBuilder;
use crate::tensor::{Graph, ParamId, ParamStore, Var};

#[derive(Debug, Clone)]
pub struct DecoderParams {
    pub vocab: usize,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub context_dim: usize,
    pub embedding: ParamId,
    pub gru: GruParams,
    /// `context_dim × hidden_dim`
    pub att_enc: ParamId,
    /// `hidden_dim × hidden_dim`
    pub att_dec: ParamId,
    /// `hidden_dim × 1`
    pub att_v: ParamId,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub init_w: ParamId,
    pub init_b: ParamId,
}

impl DecoderParams {
    pub(crate) fn build(
        p: &mut ParamBuilder,
        vocab: usize,
        embedding_dim: usize,
        hidden_dim: usize,
        context_dim: usize,
    ) -> Result<Self> {
        Ok(DecoderParams {
            vocab,
            embedding_dim,
            hidden_dim,
            context_dim,
            embedding: p.uniform("decoder.embedding", vocab, embedding_dim)?,
            gru: GruParams::build(p, "decoder.gru", embedding_dim + context_dim, hidden_dim)?,
            att_enc: p.uniform("decoder.att.enc", context_dim, hidden_dim)?,
            att_dec: p.uniform("decoder.att.dec", hidden_dim, hidden_dim)?,
            att_v: p.uniform("decoder.att.v", hidden_dim, 1)?,
            out_w: p.uniform("decoder.out.w", hidden_dim + context_dim + embedding_dim, vocab)?,
            out_b: p.uniform("decoder.out.b", 1, vocab)?,
            init_w: p.uniform("decoder.init.w", context_dim, hidden_dim)?,
            init_b: p.uniform("decoder.init.b", 1, hidden_dim)?,
        })
    }
}

/// Encoder states plus their attention projections.
#[derive(Debug, Clone)]
pub struct Memory {
    pub states: Var,
    pub keys: Var,
    pub mask: Vec<bool>,
    pub batch: usize,
    pub src_len: usize,
}

impl Memory {
    pub fn new(g: &mut Graph, store: &ParamStore, p: &DecoderParams, enc: &EncoderOutput) -> Result<Self> {
        let (rows, width) = g.shape(enc.states);
        if rows != enc.batch * enc.src_len || width != p.context_dim {
            return Err(Error::Data(format!(
                "encoder output is {rows}×{width}, decoder expects {}×{}",
                enc.batch * enc.src_len,
                p.context_dim
            )));
        }
        let v = g.param(store, p.att_enc);
        let keys = g.matmul(enc.states, v)?;
        Ok(Memory {
            states: enc.states,
            keys,
            mask: enc.mask.clone(),
            batch: enc.batch,
            src_len: enc.src_len,
        })
    }
}

/// Attention for queries `s_prev` (`k × hidden`); query `q` attends over
/// sentence `owner[q]` of the memory. Returns weights `k × src_len` and
/// context `k × context_dim`.
pub fn attention(
    g: &mut Graph,
    store: &ParamStore,
    p: &DecoderParams,
    mem: &Memory,
    s_prev: Var,
    owner: &[usize],
) -> Result<(Var, Var)> {
    let t_len = mem.src_len;
    if owner.iter().any(|&b| b >= mem.batch) {
        return Err(Error::Data("attention query refers to a missing sentence".into()));
    }
    let mut rows = Vec::with_capacity(owner.len() * t_len);
    let mut query_rows = Vec::with_capacity(owner.len() * t_len);
    let mut mask = Vec::with_capacity(owner.len() * t_len);
    let mut target = Vec::with_capacity(owner.len() * t_len);
    for (q, &b) in owner.iter().enumerate() {
        for t in 0..t_len {
            rows.push(Some(b * t_len + t));
            query_rows.push(Some(q));
            mask.push(mem.mask[b * t_len + t]);
            target.push(q);
        }
    }
    let u = g.param(store, p.att_dec);
    let query = g.matmul(s_prev, u)?;
    let query = g.gather_rows(query, &query_rows)?;
    let keys = g.gather_rows(mem.keys, &rows)?;
    let pre = g.add(keys, query)?;
    let act = g.tanh(pre);
    let v = g.param(store, p.att_v);
    let scores = g.matmul(act, v)?;
    let scores = g.reshape(scores, owner.len(), t_len)?;
    let weights = g.softmax_rows(scores, Some(&mask))?;
    let column = g.reshape(weights, owner.len() * t_len, 1)?;
    let values = g.gather_rows(mem.states, &rows)?;
    let weighted = g.scale_rows(values, column)?;
    let context = g.scatter_add_rows(weighted, &target, owner.len())?;
    Ok((weights, context))
}

/// `tanh(masked mean of encoder states · W_init + b_init)`, one row per
/// sentence in the memory.
pub fn initial_state(g: &mut Graph, store: &ParamStore, p: &DecoderParams, mem: &Memory) -> Result<Var> {
    let t_len = mem.src_len;
    let mut scale = vec![0.0; mem.batch * t_len];
    for b in 0..mem.batch {
        let row = &mem.mask[b * t_len..(b + 1) * t_len];
        let n = row.iter().filter(|&&m| m).count();
        if n == 0 {
            return Err(Error::Data(format!("sentence {b} has no source tokens")));
        }
        for (t, &m) in row.iter().enumerate() {
            if m {
                scale[b * t_len + t] = 1.0 / n as f64;
            }
        }
    }
    let scale = g.constant(mem.batch * t_len, 1, scale)?;
    let scaled = g.scale_rows(mem.states, scale)?;
    let owner: Vec<usize> = (0..mem.batch * t_len).map(|k| k / t_len).collect();
    let mean = g.scatter_add_rows(scaled, &owner, mem.batch)?;
    let (w, b) = (g.param(store, p.init_w), g.param(store, p.init_b));
    let pre = g.matmul(mean, w)?;
    let pre = g.add_row(pre, b)?;
    Ok(g.tanh(pre))
}

/// One decoder step for `k` queries. Returns the new state and logits
/// (`k × vocab`).
pub fn decoder_step(
    g: &mut Graph,
    store: &ParamStore,
    p: &DecoderParams,
    mem: &Memory,
    y_prev: &[usize],
    s_prev: Var,
    owner: &[usize],
) -> Result<(Var, Var)> {
    if let Some(&bad) = y_prev.iter().find(|&&y| y >= p.vocab) {
        return Err(Error::Data(format!("target id {bad} outside vocabulary of {}", p.vocab)));
    }
    let table = g.param(store, p.embedding);
    let emb = g.lookup(table, y_prev)?;
    let (_, context) = attention(g, store, p, mem, s_prev, owner)?;
    let input = g.concat_cols(&[emb, context])?;
    let s = crate::encoders::gru_cell(g, store, &p.gru, input, s_prev)?;
    let features = g.concat_cols(&[s, context, emb])?;
    let (w, b) = (g.param(store, p.out_w), g.param(store, p.out_b));
    let logits = g.matmul(features, w)?;
    let logits = g.add_row(logits, b)?;
    Ok((s, logits))
}

/// Mean token cross-entropy of the batch targets under teacher forcing.
/// `inputs` optionally replaces the fed-in target ids (word dropout); the
/// predicted ids always come from the batch.
pub fn teacher_forced_loss(
    g: &mut Graph,
    store: &ParamStore,
    p: &DecoderParams,
    mem: &Memory,
    batch: &Batch,
    inputs: Option<&[usize]>,
) -> Result<Var> {
    let inputs = inputs.unwrap_or(&batch.target);
    let (bsz, len) = (batch.size, batch.tgt_len);
    let owner: Vec<usize> = (0..bsz).collect();
    let mut s = initial_state(g, store, p, mem)?;
    let mut all_logits = Vec::with_capacity(len - 1);
    let mut targets = Vec::with_capacity((len - 1) * bsz);
    let mut mask = Vec::with_capacity((len - 1) * bsz);
    for t in 0..len - 1 {
        let y_prev: Vec<usize> = (0..bsz).map(|b| inputs[b * len + t]).collect();
        let (next, logits) = decoder_step(g, store, p, mem, &y_prev, s, &owner)?;
        s = next;
        all_logits.push(logits);
        for b in 0..bsz {
            let y = batch.target[b * len + t + 1];
            targets.push(y);
            mask.push(y != PAD);
        }
    }
    let logits = g.concat_rows(&all_logits)?;
    Ok(g.cross_entropy(logits, &targets, &mask)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(vocab: usize, emb: usize, hidden: usize, ctx: usize, seed: u64) -> (ParamStore, DecoderParams) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = DecoderParams::build(&mut ParamBuilder::fresh(&mut store, &mut rng), vocab, emb, hidden, ctx).unwrap();
        (store, p)
    }

    fn memory(g: &mut Graph, store: &ParamStore, p: &DecoderParams, states: Tensor, mask: Vec<bool>, batch: usize) -> Memory {
        let src_len = mask.len() / batch;
        let enc = EncoderOutput {
            states: g.input(&states),
            mask,
            batch,
            src_len,
        };
        Memory::new(g, store, p, &enc).unwrap()
    }

    #[test]
    fn single_position_gets_all_weight() {
        let (store, p) = build(5, 2, 3, 2, 1);
        let mut g = Graph::new();
        let mem = memory(&mut g, &store, &p, Tensor::matrix(3, 2, vec![0.5, -0.5, 9.0, 9.0, 1.0, 2.0]).unwrap(), vec![true, false, false], 1);
        let s = g.input(&Tensor::matrix(1, 3, vec![0.1, 0.2, 0.3]).unwrap());
        let (w, c) = attention(&mut g, &store, &p, &mem, s, &[0]).unwrap();
        assert_eq!(g.value(w), &[1.0, 0.0, 0.0]);
        assert_eq!(g.value(c), &[0.5, -0.5]);
    }

    #[test]
    fn two_positions_by_hand() {
        let (mut store, p) = build(5, 1, 1, 1, 2);
        store.get_mut(p.att_enc).values_mut()[0] = 0.7;
        store.get_mut(p.att_dec).values_mut()[0] = -1.2;
        store.get_mut(p.att_v).values_mut()[0] = 1.5;
        let (e0, e1, s) = (0.4, -0.9, 0.3);
        let mut g = Graph::new();
        let mem = memory(&mut g, &store, &p, Tensor::matrix(2, 1, vec![e0, e1]).unwrap(), vec![true, true], 1);
        let sv = g.input(&Tensor::scalar(s));
        let (w, c) = attention(&mut g, &store, &p, &mem, sv, &[0]).unwrap();
        let score = |e: f64| 1.5 * (-1.2 * s + 0.7 * e).tanh();
        let (a0, a1) = (score(e0).exp(), score(e1).exp());
        let (w0, w1) = (a0 / (a0 + a1), a1 / (a0 + a1));
        assert_abs_diff_eq!(g.value(w)[0], w0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.value(w)[1], w1, epsilon = 1e-15);
        assert_abs_diff_eq!(g.value(c)[0], w0 * e0 + w1 * e1, epsilon = 1e-15);
    }

    #[test]
    fn weights_are_a_distribution_over_unmasked_positions() {
        let (store, p) = build(5, 2, 4, 3, 3);
        let mut g = Graph::new();
        let states: Vec<f64> = (0..24).map(|k| ((k * 37 % 11) as f64 - 5.0) / 5.0).collect();
        let mask = vec![true, true, false, false, true, true, true, true];
        let mem = memory(&mut g, &store, &p, Tensor::matrix(8, 3, states).unwrap(), mask.clone(), 2);
        let s = g.input(&Tensor::matrix(3, 4, vec![0.3; 12]).unwrap());
        let (w, _) = attention(&mut g, &store, &p, &mem, s, &[0, 1, 0]).unwrap();
        for (q, b) in [0, 1, 0].into_iter().enumerate() {
            let row = &g.value(w)[q * 4..(q + 1) * 4];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for t in 0..4 {
                assert!(row[t] >= 0.0);
                if !mask[b * 4 + t] {
                    assert_eq!(row[t], 0.0);
                }
            }
        }
    }

    #[test]
    fn all_masked_source_is_an_error() {
        let (store, p) = build(5, 2, 3, 2, 4);
        let mut g = Graph::new();
        let mem = memory(&mut g, &store, &p, Tensor::matrix(2, 2, vec![0.0; 4]).unwrap(), vec![false, false], 1);
        let s = g.input(&Tensor::matrix(1, 3, vec![0.0; 3]).unwrap());
        assert!(attention(&mut g, &store, &p, &mem, s, &[0]).is_err());
    }

    #[test]
    fn zero_parameters_give_uniform_output() {
        let (mut store, p) = build(7, 2, 3, 2, 5);
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let mem = memory(&mut g, &store, &p, Tensor::matrix(2, 2, vec![0.3, 0.1, -0.2, 0.5]).unwrap(), vec![true; 2], 1);
        let s0 = initial_state(&mut g, &store, &p, &mem).unwrap();
        let (_, logits) = decoder_step(&mut g, &store, &p, &mem, &[2], s0, &[0]).unwrap();
        assert_eq!(g.shape(logits), (1, 7));
        let probs = crate::tensor::softmax(g.value(logits), None).unwrap();
        for q in probs {
            assert_abs_diff_eq!(q, 1.0 / 7.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn scalar_step_by_hand() {
        let (mut store, p) = build(2, 1, 1, 1, 6);
        let set = |s: &mut ParamStore, id: ParamId, v: &[f64]| s.get_mut(id).values_mut().copy_from_slice(v);
        set(&mut store, p.embedding, &[0.2, -0.6]);
        // GRU input is [emb; ctx], so W_* are 2×1
        set(&mut store, p.gru.w_z, &[0.3, -0.1]);
        set(&mut store, p.gru.w_r, &[0.5, 0.2]);
        set(&mut store, p.gru.w_n, &[-0.4, 0.9]);
        set(&mut store, p.gru.u_z, &[0.6]);
        set(&mut store, p.gru.u_r, &[-0.3]);
        set(&mut store, p.gru.u_n, &[0.8]);
        set(&mut store, p.gru.b_z, &[0.05]);
        set(&mut store, p.gru.b_r, &[-0.05]);
        set(&mut store, p.gru.b_n, &[0.1]);
        set(&mut store, p.out_w, &[1.0, -1.0, 0.5, 0.25, -0.7, 0.3]);
        set(&mut store, p.out_b, &[0.01, 0.02]);
        let (e, s_prev) = (0.8, 0.4);
        let mut g = Graph::new();
        let mem = memory(&mut g, &store, &p, Tensor::scalar(e), vec![true], 1);
        let sv = g.input(&Tensor::scalar(s_prev));
        let (s, logits) = decoder_step(&mut g, &store, &p, &mem, &[1], sv, &[0]).unwrap();

        let sig = |a: f64| 1.0 / (1.0 + (-a).exp());
        let (x, c) = (-0.6, e); // single source position: context is that state
        let z = sig(x * 0.3 + c * -0.1 + s_prev * 0.6 + 0.05);
        let r = sig(x * 0.5 + c * 0.2 + s_prev * -0.3 - 0.05);
        let n = (x * -0.4 + c * 0.9 + r * s_prev * 0.8 + 0.1).tanh();
        let s_new = (1.0 - z) * n + z * s_prev;
        assert_abs_diff_eq!(g.value(s)[0], s_new, epsilon = 1e-15);
        let l0 = s_new * 1.0 + c * 0.5 + x * -0.7 + 0.01;
        let l1 = s_new * -1.0 + c * 0.25 + x * 0.3 + 0.02;
        assert_abs_diff_eq!(g.value(logits)[0], l0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.value(logits)[1], l1, epsilon = 1e-15);
    }

    #[test]
    fn step_gradients_match_finite_differences() {
        let (mut store, p) = build(6, 4, 4, 4, 7);
        for id in store.ids().collect::<Vec<_>>() {
            store.get_mut(id).values_mut().iter_mut().for_each(|v| *v *= 10.0);
        }
        let states = Tensor::matrix(3, 4, (0..12).map(|k| (k as f64 * 0.37).sin()).collect()).unwrap();
        let report = crate::tensor::grad_check(
            &mut store,
            |g: &mut Graph, s: &ParamStore| -> crate::Result<Var> {
                let enc = EncoderOutput {
                    states: g.input(&states),
                    mask: vec![true, true, false],
                    batch: 1,
                    src_len: 3,
                };
                let mem = Memory::new(g, s, &p, &enc)?;
                let s0 = initial_state(g, s, &p, &mem)?;
                let (s1, _) = decoder_step(g, s, &p, &mem, &[2], s0, &[0])?;
                let (_, logits) = decoder_step(g, s, &p, &mem, &[4], s1, &[0])?;
                Ok(g.cross_entropy(logits, &[5], &[true])?)
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}
