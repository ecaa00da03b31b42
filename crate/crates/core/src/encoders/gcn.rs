//! Graph convolution over labeled directed graphs.
//!
//! For node `v`:
//!
//! ```text
//! h'_v = ReLU( Σ_{u ∈ N(v)} g_{u,v} · (h_u W_dir(u,v) + b_{dir,lab(u,v)}) )
//! g_{u,v} = σ(h_u · w^gate_dir + b^gate_{dir,lab(u,v)})
//! ```
//!
//! `N(v)` holds `v` itself (direction `loop`), the head of every annotated
//! edge entering `v` (direction `in`) and the dependent of every edge
//! leaving `v` (direction `out`). Each graph read by a layer has its own
//! `in`/`out` matrices and label tables; the loop parameters are shared.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::LabeledEdge;
use crate::error::{Error, Result};
use crate::init::ParamBuilder;
use crate::tensor::{sigmoid, Graph, ParamId, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    In,
    Out,
    Loop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Sem,
    Syn,
}

impl GraphKind {
    pub fn name(self) -> &'static str {
        match self {
            GraphKind::Sem => "sem",
            GraphKind::Syn => "syn",
        }
    }
}

/// Direction-specific parameters for one graph inside a layer.
#[derive(Debug, Clone)]
pub struct GraphParams {
    pub kind: GraphKind,
    pub num_labels: usize,
    pub w_in: ParamId,
    pub w_out: ParamId,
    /// `num_labels × d`, one bias row per label
    pub b_in: ParamId,
    pub b_out: ParamId,
    /// `d × 1`
    pub gate_w_in: ParamId,
    pub gate_w_out: ParamId,
    /// `num_labels × 1`
    pub gate_b_in: ParamId,
    pub gate_b_out: ParamId,
}

#[derive(Debug, Clone)]
pub struct GcnLayerParams {
    pub dim: usize,
    pub w_loop: ParamId,
    pub b_loop: ParamId,
    pub gate_w_loop: ParamId,
    pub gate_b_loop: ParamId,
    pub graphs: Vec<GraphParams>,
}

impl GcnLayerParams {
    pub(crate) fn build(p: &mut ParamBuilder, prefix: &str, dim: usize, graphs: &[(GraphKind, usize)]) -> Result<Self> {
        let w_loop = p.near_identity(&format!("{prefix}.w_loop"), dim)?;
        let b_loop = p.uniform(&format!("{prefix}.b_loop"), 1, dim)?;
        let gate_w_loop = p.uniform(&format!("{prefix}.gate_w_loop"), dim, 1)?;
        let gate_b_loop = p.uniform(&format!("{prefix}.gate_b_loop"), 1, 1)?;
        let mut graph_params = Vec::new();
        for &(kind, num_labels) in graphs {
            let mut w = |n: &str, r, c| p.uniform(&format!("{prefix}.{n}.{}", kind.name()), r, c);
            graph_params.push(GraphParams {
                kind,
                num_labels,
                w_in: w("w_in", dim, dim)?,
                w_out: w("w_out", dim, dim)?,
                b_in: w("b_in", num_labels, dim)?,
                b_out: w("b_out", num_labels, dim)?,
                gate_w_in: w("gate_w_in", dim, 1)?,
                gate_w_out: w("gate_w_out", dim, 1)?,
                gate_b_in: w("gate_b_in", num_labels, 1)?,
                gate_b_out: w("gate_b_out", num_labels, 1)?,
            });
        }
        Ok(GcnLayerParams {
            dim,
            w_loop,
            b_loop,
            gate_w_loop,
            gate_b_loop,
            graphs: graph_params,
        })
    }

    /// Gate value for a message sent by a node with state `h_u`. For `In`
    /// and `Out`, `graph` indexes [`GcnLayerParams::graphs`]; labels outside
    /// the inventory use the UNK entry.
    pub fn gate(&self, store: &ParamStore, h_u: &[f64], dir: Direction, graph: usize, label: usize) -> f64 {
        let (w, b, row) = match dir {
            Direction::Loop => (self.gate_w_loop, self.gate_b_loop, 0),
            Direction::In | Direction::Out => {
                let gp = &self.graphs[graph];
                let row = if label < gp.num_labels { label } else { 0 };
                match dir {
                    Direction::In => (gp.gate_w_in, gp.gate_b_in, row),
                    _ => (gp.gate_w_out, gp.gate_b_out, row),
                }
            }
        };
        let dot: f64 = h_u.iter().zip(store.get(w).values()).map(|(a, b)| a * b).sum();
        sigmoid(dot + store.get(b).values()[row])
    }
}

/// Edge dropout applied to annotated-edge messages during training.
pub struct EdgeDropout<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub retain: f64,
}

struct Messages {
    senders: Vec<Option<usize>>,
    receivers: Vec<usize>,
    labels: Vec<Option<usize>>,
}

/// One GCN layer over node states `h` (`N × d`). `edges[i]` lists the
/// annotated edges of `layer.graphs[i]` in node-index space.
pub fn gcn_layer(
    g: &mut Graph,
    store: &ParamStore,
    h: Var,
    layer: &GcnLayerParams,
    edges: &[&[LabeledEdge]],
    mut dropout: Option<EdgeDropout<'_>>,
) -> Result<Var> {
    let (n, d) = g.shape(h);
    if d != layer.dim {
        return Err(Error::Data(format!("GCN layer expects width {}, got {d}", layer.dim)));
    }
    if edges.len() != layer.graphs.len() {
        return Err(Error::Data(format!(
            "GCN layer reads {} graphs but {} edge lists were given",
            layer.graphs.len(),
            edges.len()
        )));
    }

    // self-loop messages, never dropped
    let w_loop = g.param(store, layer.w_loop);
    let b_loop = g.param(store, layer.b_loop);
    let hw = g.matmul(h, w_loop)?;
    let loop_msg = g.add_row(hw, b_loop)?;
    let gw = g.param(store, layer.gate_w_loop);
    let gb = g.param(store, layer.gate_b_loop);
    let gate_pre = g.matmul(h, gw)?;
    let ones = vec![Some(0); n];
    let gb_rows = g.gather_rows(gb, &ones)?;
    let gate_pre = g.add(gate_pre, gb_rows)?;
    let gate = g.sigmoid(gate_pre);
    let mut total = g.scale_rows(loop_msg, gate)?;

    for (gp, graph_edges) in layer.graphs.iter().zip(edges) {
        let mut incoming = Messages {
            senders: vec![],
            receivers: vec![],
            labels: vec![],
        };
        let mut outgoing = Messages {
            senders: vec![],
            receivers: vec![],
            labels: vec![],
        };
        for e in graph_edges.iter() {
            if e.head >= n || e.dep >= n {
                return Err(Error::Data(format!("edge {}→{} out of range for {n} nodes", e.head, e.dep)));
            }
            let label = if e.label < gp.num_labels { e.label } else { 0 };
            let mut keep = || match dropout.as_mut() {
                Some(dp) => dp.rng.gen::<f64>() < dp.retain,
                None => true,
            };
            if keep() {
                incoming.senders.push(Some(e.head));
                incoming.receivers.push(e.dep);
                incoming.labels.push(Some(label));
            }
            if keep() {
                outgoing.senders.push(Some(e.dep));
                outgoing.receivers.push(e.head);
                outgoing.labels.push(Some(label));
            }
        }
        for (msgs, w, b, gw, gb) in [
            (&incoming, gp.w_in, gp.b_in, gp.gate_w_in, gp.gate_b_in),
            (&outgoing, gp.w_out, gp.b_out, gp.gate_w_out, gp.gate_b_out),
        ] {
            if msgs.senders.is_empty() {
                continue;
            }
            let (w, b, gw, gb) = (g.param(store, w), g.param(store, b), g.param(store, gw), g.param(store, gb));
            let hw = g.matmul(h, w)?;
            let sent = g.gather_rows(hw, &msgs.senders)?;
            let bias = g.gather_rows(b, &msgs.labels)?;
            let msg = g.add(sent, bias)?;
            let hg = g.matmul(h, gw)?;
            let hg_sent = g.gather_rows(hg, &msgs.senders)?;
            let gb_sent = g.gather_rows(gb, &msgs.labels)?;
            let gate_pre = g.add(hg_sent, gb_sent)?;
            let gate = g.sigmoid(gate_pre);
            let gated = g.scale_rows(msg, gate)?;
            let summed = g.scatter_add_rows(gated, &msgs.receivers, n)?;
            total = g.add(total, summed)?;
        }
    }
    Ok(g.relu(total))
}
