use crate::error::{Result, TensorError};
use crate::param::ParamStore;
use crate::scalar::Scalar;

/// Adam with bias correction. Moments are kept per parameter in store order;
/// non-trainable entries get empty moment vectors.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
    pub step_count: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>, lr: f64) -> Self {
        let moments: Vec<Vec<T>> = store
            .iter()
            .map(|p| {
                if p.requires_grad {
                    vec![T::zero(); p.value.numel()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        AdamState {
            second_moment: moments.clone(),
            first_moment: moments,
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update over every trainable parameter that holds a gradient.
pub fn adam_step<T: Scalar>(params: &mut ParamStore<T>, state: &mut AdamState<T>) -> Result<()> {
    if state.first_moment.len() != params.len() {
        return Err(TensorError::Config(format!(
            "optimizer state tracks {} parameters, store has {}",
            state.first_moment.len(),
            params.len()
        )));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = T::of(1.0 - state.beta1.powi(t));
    let c2 = T::of(1.0 - state.beta2.powi(t));
    let (b1, b2) = (T::of(state.beta1), T::of(state.beta2));
    let (lr, eps) = (T::of(state.lr), T::of(state.epsilon));
    for ((p, m), v) in params
        .iter_mut()
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        if !p.requires_grad {
            continue;
        }
        let Some(g) = &p.grad else { continue };
        if g.shape() != p.value.shape() {
            return Err(TensorError::DimensionMismatch {
                op: "adam_step",
                lhs: p.value.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        for (((w, &gi), mi), vi) in p
            .value
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
