//! Gated recurrent unit:
//!
//! ```text
//! z  = σ(x W_z + h U_z + b_z)
//! r  = σ(x W_r + h U_r + b_r)
//! n  = tanh(x W_n + (r ⊙ h) U_n + b_n)
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use crate::error::Result;
use crate::init::ParamBuilder;
use crate::tensor::{Graph, ParamId, ParamStore, Var};

#[derive(Debug, Clone)]
pub struct GruParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_n: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_n: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_n: ParamId,
}

impl GruParams {
    pub(crate) fn build(p: &mut ParamBuilder, prefix: &str, input_dim: usize, hidden_dim: usize) -> Result<Self> {
        let mut w = |n: &str, r, c| p.uniform(&format!("{prefix}.{n}"), r, c);
        Ok(GruParams {
            input_dim,
            hidden_dim,
            w_z: w("w_z", input_dim, hidden_dim)?,
            w_r: w("w_r", input_dim, hidden_dim)?,
            w_n: w("w_n", input_dim, hidden_dim)?,
            u_z: w("u_z", hidden_dim, hidden_dim)?,
            u_r: w("u_r", hidden_dim, hidden_dim)?,
            u_n: w("u_n", hidden_dim, hidden_dim)?,
            b_z: w("b_z", 1, hidden_dim)?,
            b_r: w("b_r", 1, hidden_dim)?,
            b_n: w("b_n", 1, hidden_dim)?,
        })
    }
}

/// Input projections `x W_* + b_*` for a batch of inputs, computed once.
pub struct Projected {
    pub z: Var,
    pub r: Var,
    pub n: Var,
}

pub fn project_inputs(g: &mut Graph, store: &ParamStore, p: &GruParams, x: Var) -> Result<Projected> {
    let mut proj = |w, b| -> Result<Var> {
        let (w, b) = (g.param(store, w), g.param(store, b));
        let xw = g.matmul(x, w)?;
        Ok(g.add_row(xw, b)?)
    };
    Ok(Projected {
        z: proj(p.w_z, p.b_z)?,
        r: proj(p.w_r, p.b_r)?,
        n: proj(p.w_n, p.b_n)?,
    })
}

/// Recurrence given already projected inputs (`B × hidden` each).
pub fn gru_update(g: &mut Graph, store: &ParamStore, p: &GruParams, x: &Projected, h: Var) -> Result<Var> {
    let (u_z, u_r, u_n) = (g.param(store, p.u_z), g.param(store, p.u_r), g.param(store, p.u_n));
    let hz = g.matmul(h, u_z)?;
    let z_pre = g.add(x.z, hz)?;
    let z = g.sigmoid(z_pre);
    let hr = g.matmul(h, u_r)?;
    let r_pre = g.add(x.r, hr)?;
    let r = g.sigmoid(r_pre);
    let rh = g.mul(r, h)?;
    let rhu = g.matmul(rh, u_n)?;
    let n_pre = g.add(x.n, rhu)?;
    let n = g.tanh(n_pre);
    // (1 − z) n + z h = n + z (h − n)
    let diff = g.sub(h, n)?;
    let zd = g.mul(z, diff)?;
    Ok(g.add(n, zd)?)
}

/// One GRU step: `x` is `B × input_dim`, `h_prev` is `B × hidden_dim`.
pub fn gru_cell(g: &mut Graph, store: &ParamStore, p: &GruParams, x: Var, h_prev: Var) -> Result<Var> {
    let proj = project_inputs(g, store, p, x)?;
    gru_update(g, store, p, &proj, h_prev)
}
