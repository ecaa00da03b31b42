//! The full encoder–decoder.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{DecodeMode, ExperimentConfig};
use crate::corpus::{Batch, BatchOptions, EncodedSource, Vocabs, BOS, PAD};
use crate::decoder::{beam_decode, decoder_step, greedy_decode, initial_state, teacher_forced_loss, DecoderParams, Memory, StepModel};
use crate::encoders::{EncodeMode, EncoderSizes, EncoderStack};
use crate::error::{Error, Result};
use crate::init::ParamBuilder;
use crate::tensor::{load_checkpoint, log_sum_exp, save_checkpoint, Graph, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSizes {
    pub source_vocab: usize,
    pub target_vocab: usize,
    pub sem_labels: usize,
    pub syn_labels: usize,
}

impl ModelSizes {
    pub fn of(vocabs: &Vocabs) -> Self {
        ModelSizes {
            source_vocab: vocabs.source.len(),
            target_vocab: vocabs.target.len(),
            sem_labels: vocabs.sem_labels.len(),
            syn_labels: vocabs.syn_labels.len(),
        }
    }

    fn encoder(self) -> EncoderSizes {
        EncoderSizes {
            source_vocab: self.source_vocab,
            sem_labels: self.sem_labels,
            syn_labels: self.syn_labels,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Seq2Seq {
    pub config: ExperimentConfig,
    pub sizes: ModelSizes,
    pub store: ParamStore,
    pub encoder: EncoderStack,
    pub decoder: DecoderParams,
}

impl Seq2Seq {
    /// Freshly initialized parameters drawn from `seed`.
    pub fn new(config: &ExperimentConfig, sizes: ModelSizes, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (encoder, decoder) = {
            let mut p = ParamBuilder::fresh(&mut store, &mut rng);
            Self::layout(&mut p, config, sizes)?
        };
        Ok(Seq2Seq {
            config: config.clone(),
            sizes,
            store,
            encoder,
            decoder,
        })
    }

    /// Binds to loaded parameters, checking every name and shape.
    pub fn from_store(config: &ExperimentConfig, sizes: ModelSizes, mut store: ParamStore) -> Result<Self> {
        config.validate()?;
        let (encoder, decoder) = {
            let mut p = ParamBuilder::existing(&mut store);
            Self::layout(&mut p, config, sizes)?
        };
        let expected = Self::new(config, sizes, 0)?.store.len();
        if store.len() != expected {
            return Err(Error::Data(format!(
                "checkpoint holds {} parameters, the configured model has {expected}",
                store.len()
            )));
        }
        Ok(Seq2Seq {
            config: config.clone(),
            sizes,
            store,
            encoder,
            decoder,
        })
    }

    pub fn load(config: &ExperimentConfig, sizes: ModelSizes, path: &Path) -> Result<Self> {
        Self::from_store(config, sizes, load_checkpoint(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(save_checkpoint(&self.store, path)?)
    }

    fn layout(p: &mut ParamBuilder, config: &ExperimentConfig, sizes: ModelSizes) -> Result<(EncoderStack, DecoderParams)> {
        let encoder = EncoderStack::build(p, config, sizes.encoder())?;
        let decoder = DecoderParams::build(
            p,
            sizes.target_vocab,
            config.embedding_dim,
            config.hidden_dim,
            encoder.output_dim(),
        )?;
        Ok((encoder, decoder))
    }

    /// Teacher-forced mean token cross-entropy. `source` and `target_inputs`
    /// replace the ids fed to the encoder and decoder (word dropout).
    pub fn loss(
        &self,
        g: &mut Graph,
        batch: &Batch,
        source: Option<&[usize]>,
        target_inputs: Option<&[usize]>,
        mode: EncodeMode<'_>,
    ) -> Result<Var> {
        let enc = self.encoder.encode(g, &self.store, batch, source, mode)?;
        let mem = Memory::new(g, &self.store, &self.decoder, &enc)?;
        teacher_forced_loss(g, &self.store, &self.decoder, &mem, batch, target_inputs)
    }

    /// Decodes one sentence into target ids (without BOS/EOS).
    pub fn translate(&self, source: &EncodedSource, mode: DecodeMode, max_len: usize) -> Result<Vec<usize>> {
        let mut session = self.session(source)?;
        let hyp = match mode {
            DecodeMode::Greedy => greedy_decode(&mut session, max_len)?,
            DecodeMode::Beam(k) => beam_decode(&mut session, k, max_len)?,
        };
        Ok(hyp.tokens)
    }

    pub fn translate_all(&self, sources: &[EncodedSource], mode: DecodeMode, max_len: usize) -> Result<Vec<Vec<usize>>> {
        sources.par_iter().map(|s| self.translate(s, mode, max_len)).collect()
    }

    /// Step-by-step decoding interface for one source sentence.
    pub fn session(&self, source: &EncodedSource) -> Result<Session<'_>> {
        let opts = BatchOptions {
            max_len: source.ids.len().max(1),
            with_sem: self.config.recipe.needs_sem(),
            with_syn: self.config.recipe.needs_syn(),
        };
        let batch = Batch::from_encoded(&[(source, None)], opts)?;
        let mut graph = Graph::new();
        let enc = self.encoder.encode(&mut graph, &self.store, &batch, None, EncodeMode::Infer)?;
        let memory = Memory::new(&mut graph, &self.store, &self.decoder, &enc)?;
        Ok(Session {
            model: self,
            graph,
            memory,
        })
    }
}

/// Incremental decoder over one encoded sentence. PAD and BOS are never
/// proposed.
pub struct Session<'a> {
    model: &'a Seq2Seq,
    graph: Graph,
    memory: Memory,
}

impl StepModel for Session<'_> {
    type State = Vec<f64>;

    fn start(&mut self) -> Result<Vec<f64>> {
        let s = initial_state(&mut self.graph, &self.model.store, &self.model.decoder, &self.memory)?;
        Ok(self.graph.value(s).to_vec())
    }

    fn step(&mut self, queries: &[(&Vec<f64>, usize)]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        let h = self.model.decoder.hidden_dim;
        let k = queries.len();
        let prev: Vec<f64> = queries.iter().flat_map(|(s, _)| s.iter().copied()).collect();
        let tokens: Vec<usize> = queries.iter().map(|&(_, t)| t).collect();
        let g = &mut self.graph;
        let s_prev = g.constant(k, h, prev)?;
        let (s, logits) = decoder_step(g, &self.model.store, &self.model.decoder, &self.memory, &tokens, s_prev, &vec![0; k])?;
        let v = self.model.decoder.vocab;
        let out = (0..k)
            .map(|q| {
                let state = g.value(s)[q * h..(q + 1) * h].to_vec();
                let mut row = g.value(logits)[q * v..(q + 1) * v].to_vec();
                row[PAD] = f64::NEG_INFINITY;
                row[BOS] = f64::NEG_INFINITY;
                let lse = log_sum_exp(&row);
                row.iter_mut().for_each(|l| *l -= lse);
                (state, row)
            })
            .collect();
        Ok(out)
    }
}
