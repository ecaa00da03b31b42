use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

/// Half-width of the uniform initializer.
pub const INIT_RANGE: f64 = 0.08;
/// Diagonal gain of the self-loop matrices at initialization.
pub const LOOP_GAIN: f64 = 0.5;
const LOOP_NOISE: f64 = 0.01;

/// Creates parameters with fresh values, or binds to existing ones in a
/// loaded store after checking their shapes.
pub(crate) struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> ParamBuilder<'a> {
    pub fn fresh(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        ParamBuilder { store, rng: Some(rng) }
    }

    pub fn existing(store: &'a mut ParamStore) -> Self {
        ParamBuilder { store, rng: None }
    }

    fn bind(&mut self, name: &str, rows: usize, cols: usize, make: impl FnOnce(&mut ChaCha8Rng) -> Vec<f64>) -> Result<ParamId> {
        match self.rng.as_deref_mut() {
            Some(rng) => {
                let values = make(rng);
                Ok(self.store.add(name, Tensor::matrix(rows, cols, values)?)?)
            }
            None => {
                let id = self
                    .store
                    .id(name)
                    .ok_or_else(|| Error::Data(format!("checkpoint lacks parameter `{name}`")))?;
                let t = self.store.get(id);
                if t.dims2() != (rows, cols) {
                    return Err(Error::Data(format!(
                        "parameter `{name}` has shape {:?}, model expects [{rows}, {cols}]",
                        t.shape()
                    )));
                }
                Ok(id)
            }
        }
    }

    pub fn uniform(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        self.bind(name, rows, cols, |rng| {
            (0..rows * cols).map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE)).collect()
        })
    }

    /// `LOOP_GAIN · I` plus small uniform noise.
    pub fn near_identity(&mut self, name: &str, dim: usize) -> Result<ParamId> {
        self.bind(name, dim, dim, |rng| {
            (0..dim * dim)
                .map(|k| {
                    let diag = if k / dim == k % dim { LOOP_GAIN } else { 0.0 };
                    diag + rng.gen_range(-LOOP_NOISE..=LOOP_NOISE)
                })
                .collect()
        })
    }
}
