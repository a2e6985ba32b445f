//! Named parameters and their binding onto a tape.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Result, TensorError};
use crate::graph::{Gradients, Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A named tensor owned by a model. Buffers (batch-norm running statistics)
/// are stored as params with `requires_grad == false`.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub requires_grad: bool,
    pub grad: Option<Tensor<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: Tensor<T>, requires_grad: bool) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(TensorError::Config(format!("duplicate parameter name `{name}`")));
        }
        self.params.push(Param {
            name: name.to_string(),
            value,
            requires_grad,
            grad: None,
        });
        self.by_name.insert(name.to_string(), self.params.len() - 1);
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.requires_grad)
            .map(|p| p.value.numel())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Same names, shapes and values converted to another element type.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    requires_grad: p.requires_grad,
                    grad: None,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization.
pub fn fan_in_uniform<T: Scalar, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::uniform(shape, -bound, bound, rng)
}

/// Lazily places store parameters on a tape, at most once each.
#[derive(Default)]
pub struct Binder {
    vars: HashMap<ParamId, Var>,
}

impl Binder {
    pub fn new() -> Self {
        Binder::default()
    }

    pub fn bind<T: Scalar>(&mut self, graph: &mut Graph<T>, store: &ParamStore<T>, id: ParamId) -> Var {
        *self.vars.entry(id).or_insert_with(|| {
            let p = store.get(id);
            if p.requires_grad {
                graph.leaf(p.value.clone())
            } else {
                graph.constant(p.value.clone())
            }
        })
    }

    /// Move tape gradients of bound parameters into `Param::grad`, summing
    /// with any gradient already there.
    pub fn collect_grads<T: Scalar>(&self, grads: &mut Gradients<T>, store: &mut ParamStore<T>) {
        for (&id, &var) in &self.vars {
            let p = store.get_mut(id);
            if !p.requires_grad {
                continue;
            }
            if let Some(g) = grads.take(var) {
                match &mut p.grad {
                    Some(existing) => existing.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
            }
        }
    }
}
