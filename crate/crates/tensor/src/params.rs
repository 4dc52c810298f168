use serde::{Deserialize, Serialize};

use crate::graph::{Gradients, Graph, Var};
use crate::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Param {
    name: String,
    value: Tensor,
}

/// Named trainable tensors owned by one model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Zero-filled buffers with the shape of every parameter.
    pub fn zeros_like(&self) -> Vec<Tensor> {
        self.params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect()
    }
}

/// Graph leaves for every parameter of a store, indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Adds this pass's parameter gradients into `acc`, scaled by `scale`.
    pub fn accumulate(&self, grads: &Gradients, acc: &mut [Tensor], scale: f64) {
        for (var, buf) in self.vars.iter().zip(acc.iter_mut()) {
            if let Some(g) = grads.get(*var) {
                for (a, &x) in buf.data_mut().iter_mut().zip(g) {
                    *a += scale * x;
                }
            }
        }
    }
}

impl<'a> Graph<'a> {
    /// Borrows every parameter of `store` into the graph as a gradient leaf.
    pub fn bind(&mut self, store: &'a ParamStore) -> BoundParams {
        let vars = store.params.iter().map(|p| self.param(&p.value)).collect();
        BoundParams { vars }
    }
}
