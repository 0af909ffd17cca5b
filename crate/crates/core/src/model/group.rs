use std::ops::Deref;

use super::layers::{Bound, Module};
use crate::autodiff::{sgd_step, Gradients, OptimizerState};
use crate::error::Result;

/// A module with its freeze flag and momentum buffers.
///
/// Only [`ParamGroup::step`] and [`ParamGroup::replace`] change parameter
/// values, and `step` leaves a frozen group bitwise untouched.
#[derive(Clone, Debug)]
pub struct ParamGroup<M> {
    module: M,
    frozen: bool,
    optimizer: Option<OptimizerState>,
}

impl<M: Module> ParamGroup<M> {
    pub fn new(module: M) -> Self {
        ParamGroup { module, frozen: false, optimizer: None }
    }

    pub fn module(&self) -> &M {
        &self.module
    }

    pub fn into_module(self) -> M {
        self.module
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    pub fn optimizer(&self) -> Option<&OptimizerState> {
        self.optimizer.as_ref()
    }

    /// Adds gradients from one backward pass. Frozen groups still collect
    /// gradients; they are discarded at the next `step`.
    pub fn accumulate(&mut self, bound: &Bound, grads: &Gradients) -> Result<()> {
        bound.accumulate(&mut self.module, grads)
    }

    pub fn zero_grad(&mut self) {
        self.module.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    /// One SGD update, or just a gradient reset when frozen.
    pub fn step(&mut self, learning_rate: f64, momentum: f64) -> Result<()> {
        if self.frozen {
            self.zero_grad();
            return Ok(());
        }
        let state = match &mut self.optimizer {
            Some(s) => s,
            slot @ None => slot.insert(OptimizerState::new(learning_rate, momentum, &self.module.params())?),
        };
        state.learning_rate = learning_rate;
        state.momentum = momentum;
        sgd_step(&mut self.module.params_mut(), state)
    }

    /// Forget momentum buffers; the next `step` starts from zero velocity.
    pub fn reset_optimizer(&mut self) {
        self.optimizer = None;
    }

    /// Swap in a new module and drop the momentum buffers.
    pub fn replace(&mut self, module: M) {
        self.module = module;
        self.optimizer = None;
    }

    /// Overwrites parameter values in place (used when loading weights).
    pub(crate) fn module_mut_unchecked(&mut self) -> &mut M {
        &mut self.module
    }
}

impl<M> Deref for ParamGroup<M> {
    type Target = M;

    fn deref(&self) -> &M {
        &self.module
    }
}
