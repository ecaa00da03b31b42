use crate::error::{Error, Result};
use crate::init::ParamBuilder;
use crate::tensor::{Graph, ParamStore, Var};

use super::gru::{gru_update, project_inputs, GruParams, Projected};

#[derive(Debug, Clone)]
pub struct BirnnParams {
    pub fwd: GruParams,
    pub bwd: GruParams,
}

impl BirnnParams {
    pub(crate) fn build(p: &mut ParamBuilder, prefix: &str, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        Ok(BirnnParams {
            fwd: GruParams::build(p, &format!("{prefix}.fwd"), input_dim, hidden_dim)?,
            bwd: GruParams::build(p, &format!("{prefix}.bwd"), input_dim, hidden_dim)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.fwd.hidden_dim
    }
}

/// Runs both directions over `x` (`B·T × d_emb`, row `b·T + t`). Returns
/// `B·T × 2h`; rows past a sentence's length are zero.
pub fn birnn_encode(
    g: &mut Graph,
    store: &ParamStore,
    p: &BirnnParams,
    x: Var,
    src_len: usize,
    lengths: &[usize],
) -> Result<Var> {
    let batch = lengths.len();
    if src_len == 0 || lengths.iter().any(|&l| l == 0 || l > src_len) {
        return Err(Error::Data("BiRNN input must be non-empty".into()));
    }
    let fwd = run_direction(g, store, &p.fwd, x, src_len, lengths, false)?;
    let bwd = run_direction(g, store, &p.bwd, x, src_len, lengths, true)?;
    let both = g.concat_cols(&[fwd, bwd])?;
    // rows are time-major (t·B + b); reorder and zero the padding
    let index: Vec<Option<usize>> = (0..batch * src_len)
        .map(|k| {
            let (b, t) = (k / src_len, k % src_len);
            (t < lengths[b]).then_some(t * batch + b)
        })
        .collect();
    Ok(g.gather_rows(both, &index)?)
}

fn run_direction(
    g: &mut Graph,
    store: &ParamStore,
    p: &GruParams,
    x: Var,
    src_len: usize,
    lengths: &[usize],
    reverse: bool,
) -> Result<Var> {
    let batch = lengths.len();
    let proj = project_inputs(g, store, p, x)?;
    let mut h = g.constant(batch, p.hidden_dim, vec![0.0; batch * p.hidden_dim])?;
    let mut states = vec![h; src_len];
    let order: Vec<usize> = if reverse { (0..src_len).rev().collect() } else { (0..src_len).collect() };
    for t in order {
        let rows: Vec<Option<usize>> = (0..batch).map(|b| Some(b * src_len + t)).collect();
        let step = Projected {
            z: g.gather_rows(proj.z, &rows)?,
            r: g.gather_rows(proj.r, &rows)?,
            n: g.gather_rows(proj.n, &rows)?,
        };
        let next = gru_update(g, store, p, &step, h)?;
        let active: Vec<bool> = lengths.iter().map(|&l| t < l).collect();
        h = if active.iter().all(|&a| a) { next } else { g.select_rows(next, h, &active)? };
        states[t] = h;
    }
    Ok(g.concat_rows(&states)?)
}
