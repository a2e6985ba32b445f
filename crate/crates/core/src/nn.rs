//! Parameterized layers over a [`ParamStore`] and the per-pass context that
//! binds them onto a tape.

use rand::Rng;
use recap_tensor::{fan_in_uniform, Binder, BnMode, Graph, ParamId, ParamStore, RunningStats, Scalar, Tensor, Var};

use crate::error::{Error, Result};

/// One forward pass: a fresh tape plus lazily bound parameters.
pub struct Ctx<'s, T: Scalar> {
    pub graph: Graph<T>,
    pub store: &'s mut ParamStore<T>,
    pub mode: BnMode,
    /// Running-statistics momentum used by batch norm in train mode.
    pub bn_momentum: f64,
    binder: Binder,
}

impl<'s, T: Scalar> Ctx<'s, T> {
    pub fn new(store: &'s mut ParamStore<T>, mode: BnMode) -> Self {
        Ctx {
            graph: Graph::new(),
            store,
            mode,
            bn_momentum: RunningStats::<T>::DEFAULT_MOMENTUM,
            binder: Binder::new(),
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.binder.bind(&mut self.graph, self.store, id)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.graph.constant(value)
    }

    /// Backpropagate `loss` and add the parameter gradients into the store.
    pub fn backward(self, loss: Var) -> Result<()> {
        let mut grads = self.graph.backward(loss)?;
        self.binder.collect_grads(&mut grads, self.store);
        Ok(())
    }
}

fn add<T: Scalar>(store: &mut ParamStore<T>, name: &str, value: Tensor<T>, trainable: bool) -> Result<ParamId> {
    Ok(store.add(name, value, trainable)?)
}

/// Bias-free 2-D convolution.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let shape = [c_out, c_in, kernel, kernel];
        let w = fan_in_uniform(&shape, c_in * kernel * kernel, rng);
        Ok(Conv {
            weight: add(store, &format!("{name}.w"), w, true)?,
            stride,
            padding,
        })
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        Ok(ctx.graph.conv2d(x, w, self.stride, self.padding)?)
    }
}

/// Batch norm with affine parameters and running statistics kept in the
/// store as non-trainable buffers.
#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, features: usize) -> Result<Self> {
        Ok(BatchNorm {
            gamma: add(store, &format!("{name}.gamma"), Tensor::full(&[features], T::one()), true)?,
            beta: add(store, &format!("{name}.beta"), Tensor::zeros(&[features]), true)?,
            running_mean: add(store, &format!("{name}.running_mean"), Tensor::zeros(&[features]), false)?,
            running_var: add(store, &format!("{name}.running_var"), Tensor::full(&[features], T::one()), false)?,
        })
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        let mut stats = RunningStats::new(0);
        stats.mean = ctx.store.get(self.running_mean).value.data().to_vec();
        stats.var = ctx.store.get(self.running_var).value.data().to_vec();
        stats.momentum = ctx.bn_momentum;
        let mode = ctx.mode;
        let y = ctx.graph.batchnorm(x, gamma, beta, &mut stats, mode)?;
        if mode == BnMode::Train {
            ctx.store.get_mut(self.running_mean).value.data_mut().copy_from_slice(&stats.mean);
            ctx.store.get_mut(self.running_var).value.data_mut().copy_from_slice(&stats.var);
        }
        Ok(y)
    }
}

/// `y = x W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let w = fan_in_uniform(&[inputs, outputs], inputs, rng);
        let b = fan_in_uniform(&[outputs], inputs, rng);
        Ok(Linear {
            weight: add(store, &format!("{name}.w"), w, true)?,
            bias: add(store, &format!("{name}.b"), b, true)?,
        })
    }

    pub fn zeroed<T: Scalar>(store: &mut ParamStore<T>, name: &str, inputs: usize, outputs: usize) -> Result<Self> {
        Ok(Linear {
            weight: add(store, &format!("{name}.w"), Tensor::zeros(&[inputs, outputs]), true)?,
            bias: add(store, &format!("{name}.b"), Tensor::zeros(&[outputs]), true)?,
        })
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = ctx.param(self.bias);
        let xw = ctx.graph.matmul(x, w)?;
        Ok(ctx.graph.add_bias(xw, b)?)
    }
}

pub(crate) fn expect_rank(shape: &[usize], rank: usize, what: &str) -> Result<()> {
    if shape.len() != rank {
        return Err(Error::Shape(format!("{what}: expected rank {rank}, got {shape:?}")));
    }
    Ok(())
}
