//! Source encoders: embeddings, a BiRNN or CNN base encoder, and GCN blocks
//! over semantic and/or syntactic graphs.

mod birnn;
mod cnn;
pub mod gcn;
pub mod gru;

pub use birnn::{birnn_encode, BirnnParams};
pub use cnn::{check_window, cnn_encode, CnnParams};
pub use gcn::{gcn_layer, Direction, EdgeDropout, GcnLayerParams, GraphKind, GraphParams};
pub use gru::{gru_cell, GruParams};

use rand_chacha::ChaCha8Rng;

use crate::config::{EncoderKind, ExperimentConfig, GraphUse, Recipe};
use crate::corpus::{Batch, LabeledEdge};
use crate::error::{Error, Result};
use crate::init::ParamBuilder;
use crate::tensor::{Graph, ParamId, ParamStore, Var};

#[derive(Debug, Clone)]
pub enum BaseEncoder {
    Birnn(BirnnParams),
    Cnn(CnnParams),
}

/// One GCN layer tagged with the graph(s) it reads.
#[derive(Debug, Clone)]
pub struct GcnBlockLayer {
    pub block: usize,
    pub layer: usize,
    pub uses: GraphUse,
    pub params: GcnLayerParams,
}

#[derive(Debug, Clone)]
pub struct EncoderStack {
    pub kind: EncoderKind,
    pub recipe: Recipe,
    pub embedding: ParamId,
    pub base: BaseEncoder,
    pub gcn: Vec<GcnBlockLayer>,
}

/// Sizes the encoder needs from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderSizes {
    pub source_vocab: usize,
    pub sem_labels: usize,
    pub syn_labels: usize,
}

pub enum EncodeMode<'a> {
    Train { rng: &'a mut ChaCha8Rng, edge_retain: f64 },
    Infer,
}

/// Final per-token states for a batch.
#[derive(Debug, Clone)]
pub struct EncoderOutput {
    /// `batch·src_len × state_dim`, row `b·src_len + t`
    pub states: Var,
    pub mask: Vec<bool>,
    pub batch: usize,
    pub src_len: usize,
}

impl EncoderStack {
    pub(crate) fn build(p: &mut ParamBuilder, config: &ExperimentConfig, sizes: EncoderSizes) -> Result<Self> {
        let embedding = p.uniform("encoder.embedding", sizes.source_vocab, config.embedding_dim)?;
        let base = match config.encoder {
            EncoderKind::Birnn => BaseEncoder::Birnn(BirnnParams::build(
                p,
                "encoder.gru",
                config.embedding_dim,
                config.hidden_dim,
            )?),
            EncoderKind::Cnn => BaseEncoder::Cnn(CnnParams::build(
                p,
                "encoder.cnn",
                config.embedding_dim,
                config.hidden_dim,
                config.cnn_window,
            )?),
        };
        let dim = config.state_dim();
        let mut gcn = Vec::new();
        for (block, (uses, count)) in config.recipe.blocks().into_iter().enumerate() {
            let graphs: Vec<(GraphKind, usize)> = match uses {
                GraphUse::Sem => vec![(GraphKind::Sem, sizes.sem_labels)],
                GraphUse::Syn => vec![(GraphKind::Syn, sizes.syn_labels)],
                GraphUse::Both => vec![(GraphKind::Sem, sizes.sem_labels), (GraphKind::Syn, sizes.syn_labels)],
                GraphUse::SelfLoop => vec![],
            };
            for layer in 0..count {
                let params = GcnLayerParams::build(p, &format!("gcn.{block}.{layer}"), dim, &graphs)?;
                gcn.push(GcnBlockLayer {
                    block,
                    layer,
                    uses,
                    params,
                });
            }
        }
        Ok(EncoderStack {
            kind: config.encoder,
            recipe: config.recipe,
            embedding,
            base,
            gcn,
        })
    }

    pub fn output_dim(&self) -> usize {
        match &self.base {
            BaseEncoder::Birnn(p) => p.output_dim(),
            BaseEncoder::Cnn(p) => p.hidden_dim,
        }
    }

    /// Embeddings and base encoder, without GCN layers.
    pub fn encode_base(&self, g: &mut Graph, store: &ParamStore, source: &[usize], src_len: usize, lengths: &[usize]) -> Result<Var> {
        let table = g.param(store, self.embedding);
        let x = g.lookup(table, source)?;
        match &self.base {
            BaseEncoder::Birnn(p) => birnn_encode(g, store, p, x, src_len, lengths),
            BaseEncoder::Cnn(p) => cnn_encode(g, store, p, x, src_len, lengths),
        }
    }

    /// Full pipeline. `source` overrides the batch's source ids (used for
    /// word dropout).
    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &Batch,
        source: Option<&[usize]>,
        mut mode: EncodeMode<'_>,
    ) -> Result<EncoderOutput> {
        let source = source.unwrap_or(&batch.source);
        let mut h = self.encode_base(g, store, source, batch.src_len, &batch.lengths)?;
        let sem = flatten(&batch.sem, batch.src_len);
        let syn = flatten(&batch.syn, batch.src_len);
        for layer in &self.gcn {
            let missing = |name| Error::Data(format!("recipe needs {name} graphs but the batch has none"));
            let edges: Vec<&[LabeledEdge]> = match layer.uses {
                GraphUse::Sem => vec![sem.as_deref().ok_or_else(|| missing("semantic"))?],
                GraphUse::Syn => vec![syn.as_deref().ok_or_else(|| missing("syntactic"))?],
                GraphUse::Both => vec![
                    sem.as_deref().ok_or_else(|| missing("semantic"))?,
                    syn.as_deref().ok_or_else(|| missing("syntactic"))?,
                ],
                GraphUse::SelfLoop => vec![],
            };
            let dropout = match &mut mode {
                EncodeMode::Train { rng, edge_retain } if *edge_retain < 1.0 => Some(EdgeDropout {
                    rng,
                    retain: *edge_retain,
                }),
                _ => None,
            };
            let out = gcn_layer(g, store, h, &layer.params, &edges, dropout)?;
            h = g.add(out, h)?;
        }
        Ok(EncoderOutput {
            states: h,
            mask: batch.mask.clone(),
            batch: batch.size,
            src_len: batch.src_len,
        })
    }
}

/// Shifts each sentence's edges into batch row space.
fn flatten(edges: &Option<Vec<Vec<LabeledEdge>>>, src_len: usize) -> Option<Vec<LabeledEdge>> {
    edges.as_ref().map(|per_sentence| {
        per_sentence
            .iter()
            .enumerate()
            .flat_map(|(b, es)| {
                es.iter().map(move |e| LabeledEdge {
                    head: b * src_len + e.head,
                    dep: b * src_len + e.dep,
                    label: e.label,
                })
            })
            .collect()
    })
}
