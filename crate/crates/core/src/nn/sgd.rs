//! Heavy-ball SGD with L2 weight decay and a step learning-rate schedule.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::nn::registry::{Gradients, ParamRegistry};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `base_lr · gamma^⌊iteration / step_size⌋`
pub fn lr_at(iteration: u64, base_lr: f64, step_size: u64, gamma: f64) -> f64 {
    if step_size == 0 {
        return base_lr;
    }
    let drops = (iteration / step_size).min(i32::MAX as u64) as i32;
    base_lr * gamma.powi(drops)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub step_size: u64,
    pub gamma: f64,
}

#[derive(Clone, Debug)]
pub struct SgdState<T> {
    pub config: SgdConfig,
    pub iteration: u64,
    velocity: IndexMap<String, Tensor<T>>,
}

impl<T: Scalar> SgdState<T> {
    pub fn new(config: SgdConfig, registry: &ParamRegistry<T>) -> Self {
        let velocity = registry.trainable().map(|(n, p)| (n.to_string(), p.value.zeros_like())).collect();
        Self { config, iteration: 0, velocity }
    }

    pub fn current_lr(&self) -> f64 {
        lr_at(self.iteration, self.config.base_lr, self.config.step_size, self.config.gamma)
    }

    pub fn velocity(&self, name: &str) -> Option<&Tensor<T>> {
        self.velocity.get(name)
    }
}

/// One update of every trainable parameter:
/// `v ← momentum·v + (grad + weight_decay·param)`, `param ← param − lr·v`.
///
/// Batch-norm moving averages are left untouched.
pub fn sgd_step<T: Scalar>(registry: &mut ParamRegistry<T>, grads: &Gradients<T>, state: &mut SgdState<T>) -> Result<()> {
    for (name, _) in registry.trainable() {
        match grads.get(name) {
            None => return Err(Error::MissingGradient(name.to_string())),
            Some(g) if g.shape() != registry.value(name)?.shape() => {
                return Err(Error::shape(format!("gradient for `{name}` has shape {:?}", g.shape())))
            }
            Some(_) => {}
        }
    }
    let lr = T::lit(state.current_lr());
    let momentum = T::lit(state.config.momentum);
    let decay = T::lit(state.config.weight_decay);
    for (name, p) in registry.iter_mut().filter(|(_, p)| p.role.is_trainable()) {
        let g = &grads[name];
        let v = state.velocity.entry(name.to_string()).or_insert_with(|| p.value.zeros_like());
        for ((w, vel), &gr) in p.value.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vel = momentum * *vel + (gr + decay * *w);
            *w -= lr * *vel;
        }
    }
    state.iteration += 1;
    Ok(())
}
