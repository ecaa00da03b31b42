use crate::error::{Error, Result};
use crate::init::ParamBuilder;
use crate::tensor::{Graph, ParamId, ParamStore, Var};

/// Convolution over a window of `window` tokens centered on each position.
#[derive(Debug, Clone)]
pub struct CnnParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub window: usize,
    /// `window·input_dim × hidden_dim`; row block `k` sees offset `k − window/2`
    pub filter: ParamId,
    pub bias: ParamId,
}

impl CnnParams {
    pub(crate) fn build(
        p: &mut ParamBuilder,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        window: usize,
    ) -> Result<Self> {
        check_window(window)?;
        Ok(CnnParams {
            input_dim,
            hidden_dim,
            window,
            filter: p.uniform(&format!("{prefix}.filter"), window * input_dim, hidden_dim)?,
            bias: p.uniform(&format!("{prefix}.bias"), 1, hidden_dim)?,
        })
    }
}

pub fn check_window(window: usize) -> Result<()> {
    if window.is_multiple_of(2) {
        return Err(Error::Config(format!("CNN window must be odd, got {window}")));
    }
    Ok(())
}

/// `ReLU(affine([x_{t−w/2}; …; x_{t+w/2}]))` with zeros outside each
/// sentence. Input rows are `b·T + t`; padding rows of the output are zero.
pub fn cnn_encode(
    g: &mut Graph,
    store: &ParamStore,
    p: &CnnParams,
    x: Var,
    src_len: usize,
    lengths: &[usize],
) -> Result<Var> {
    check_window(p.window)?;
    if src_len == 0 || lengths.iter().any(|&l| l == 0 || l > src_len) {
        return Err(Error::Data("CNN input must be non-empty".into()));
    }
    let rows = lengths.len() * src_len;
    let half = (p.window / 2) as isize;
    let mut shifted = Vec::with_capacity(p.window);
    for offset in -half..=half {
        let index: Vec<Option<usize>> = (0..rows)
            .map(|k| {
                let (b, t) = (k / src_len, (k % src_len) as isize);
                let s = t + offset;
                (t < lengths[b] as isize && s >= 0 && s < lengths[b] as isize).then(|| b * src_len + s as usize)
            })
            .collect();
        shifted.push(g.gather_rows(x, &index)?);
    }
    let windows = g.concat_cols(&shifted)?;
    let (f, b) = (g.param(store, p.filter), g.param(store, p.bias));
    let pre = g.matmul(windows, f)?;
    let pre = g.add_row(pre, b)?;
    let out = g.relu(pre);
    let keep: Vec<Option<usize>> = (0..rows)
        .map(|k| (k % src_len < lengths[k / src_len]).then_some(k))
        .collect();
    Ok(g.gather_rows(out, &keep)?)
}
