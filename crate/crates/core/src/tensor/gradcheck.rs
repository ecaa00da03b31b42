use super::graph::{Graph, Var};
use super::store::{ParamId, ParamStore};
use super::TensorError;

/// Gradients smaller than this are compared in absolute terms, since
/// central differences cannot resolve them relatively.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// Worst disagreement found for one parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    /// Coordinates whose error exceeded the tolerance.
    pub flagged: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.flagged.is_empty())
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn flagged(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.flagged.is_empty())
    }

    pub fn num_checked(&self) -> usize {
        self.params.len()
    }
}

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// for every trainable coordinate in `store`. Relative error is
/// `|analytic - numeric| / max(|analytic|, |numeric|, REL_ERROR_FLOOR)`.
///
/// `loss_fn` must be deterministic: fix any dropout masks or RNG seeds.
pub fn grad_check<F, E>(store: &mut ParamStore, mut loss_fn: F, epsilon: f64, tolerance: f64) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var, E>,
    E: From<TensorError>,
{
    store.zero_grads();
    let mut g = Graph::new();
    let loss = loss_fn(&mut g, store)?;
    g.backward(loss, store)?;
    let analytic: Vec<(ParamId, Vec<f64>)> = store
        .ids()
        .filter(|&id| store.get(id).requires_grad())
        .map(|id| {
            let t = store.get(id);
            let grad = t.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]);
            (id, grad)
        })
        .collect();
    check_gradients(
        store,
        &analytic,
        |s| {
            let mut g = Graph::new();
            let l = loss_fn(&mut g, s)?;
            Ok(g.scalar(l))
        },
        epsilon,
        tolerance,
    )
}

/// Checks a supplied set of analytic gradients against central differences
/// of `value_fn`. Parameters are restored to their original values.
pub fn check_gradients<F, E>(
    store: &mut ParamStore,
    analytic: &[(ParamId, Vec<f64>)],
    mut value_fn: F,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport, E>
where
    F: FnMut(&ParamStore) -> Result<f64, E>,
    E: From<TensorError>,
{
    let mut params = Vec::with_capacity(analytic.len());
    for (id, grad) in analytic {
        let name = store.name(*id).to_string();
        let mut check = ParamCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            worst_index: 0,
            flagged: Vec::new(),
        };
        for (k, &a) in grad.iter().enumerate() {
            let orig = store.get(*id).values()[k];
            store.get_mut(*id).values_mut()[k] = orig + epsilon;
            let plus = value_fn(store);
            store.get_mut(*id).values_mut()[k] = orig - epsilon;
            let minus = value_fn(store);
            store.get_mut(*id).values_mut()[k] = orig;
            let (plus, minus) = (plus?, minus?);
            let numeric = (plus - minus) / (2.0 * epsilon);
            if !numeric.is_finite() || !a.is_finite() {
                return Err(TensorError::NonFinite(format!("{name}[{k}]")).into());
            }
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            if err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst_index = k;
            }
            if err > tolerance {
                check.flagged.push(k);
            }
        }
        params.push(check);
    }
    Ok(GradCheckReport { tolerance, params })
}
