use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::ops::RunningStats;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Weight,
    Bias,
    BnGamma,
    BnBeta,
    /// Batch-norm moving averages; never optimized.
    BnRunning,
}

impl Role {
    pub fn is_trainable(self) -> bool {
        !matches!(self, Role::BnRunning)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub role: Role,
}

/// Per-parameter gradients keyed by parameter name.
pub type Gradients<T> = IndexMap<String, Tensor<T>>;

/// Ordered, uniquely named collection of network parameters.
///
/// Names are slash-delimited paths such as `enc/stage1/conv0/weight`.
/// Iteration order is insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamRegistry<T> {
    entries: IndexMap<String, Param<T>>,
}

impl<T: Scalar> Default for ParamRegistry<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamRegistry<T> {
    pub fn new() -> Self {
        Self { entries: IndexMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>, role: Role) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::invalid(format!("duplicate parameter name `{name}`")));
        }
        self.entries.insert(name, Param { value, role });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.entries.get(name).ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param<T>> {
        self.entries.get_mut(name).ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.get(name)?.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn trainable(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.iter().filter(|(_, p)| p.role.is_trainable())
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.trainable().map(|(n, _)| n.to_string()).collect()
    }

    pub fn trainable_values(&self) -> Vec<Tensor<T>> {
        self.trainable().map(|(_, p)| p.value.clone()).collect()
    }

    /// Overwrites trainable parameters, in registry order.
    pub fn set_trainable_values(&mut self, values: &[Tensor<T>]) -> Result<()> {
        let mut it = values.iter();
        for (name, p) in self.entries.iter_mut().filter(|(_, p)| p.role.is_trainable()) {
            let v = it.next().ok_or_else(|| Error::invalid("too few parameter values supplied"))?;
            if v.shape() != p.value.shape() {
                return Err(Error::shape(format!("value for `{name}` has shape {:?}, expected {:?}", v.shape(), p.value.shape())));
            }
            p.value = v.clone();
        }
        if it.next().is_some() {
            return Err(Error::invalid("too many parameter values supplied"));
        }
        Ok(())
    }

    /// Records every trainable parameter on `tape` as a gradient-tracked leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> Result<Bindings> {
        let mut vars = IndexMap::new();
        for (name, p) in self.trainable() {
            vars.insert(name.to_string(), tape.param(p.value.clone())?);
        }
        Ok(Bindings { vars })
    }

    /// Snapshot of the moving averages stored under `prefix/running_mean` and `prefix/running_var`.
    pub fn running_stats(&self, prefix: &str) -> Result<RunningStats<T>> {
        Ok(RunningStats {
            mean: self.value(&format!("{prefix}/running_mean"))?.clone(),
            var: self.value(&format!("{prefix}/running_var"))?.clone(),
        })
    }

    pub fn store_running_stats(&mut self, prefix: &str, stats: RunningStats<T>) -> Result<()> {
        self.get_mut(&format!("{prefix}/running_mean"))?.value = stats.mean;
        self.get_mut(&format!("{prefix}/running_var"))?.value = stats.var;
        Ok(())
    }

    /// Element count of weights and biases, plus batch-norm affine parameters
    /// when `include_bn` is set. Moving averages are never counted.
    pub fn param_count(&self, include_bn: bool) -> usize {
        self.iter()
            .filter(|(_, p)| match p.role {
                Role::Weight | Role::Bias => true,
                Role::BnGamma | Role::BnBeta => include_bn,
                Role::BnRunning => false,
            })
            .map(|(_, p)| p.value.len())
            .sum()
    }

    pub fn count_role(&self, role: Role) -> usize {
        self.iter().filter(|(_, p)| p.role == role).map(|(_, p)| p.value.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamRegistry<U> {
        ParamRegistry {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| (k.clone(), Param { value: p.value.cast(), role: p.role }))
                .collect(),
        }
    }
}

/// Tape variables of a registry's trainable parameters.
#[derive(Clone, Debug, Default)]
pub struct Bindings {
    vars: IndexMap<String, Var>,
}

impl Bindings {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self { vars: pairs.into_iter().collect() }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars.get(name).copied().ok_or_else(|| Error::invalid(format!("parameter `{name}` is not bound")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }

    /// Moves the gradients of every bound parameter out of `tape`.
    ///
    /// Parameters the output did not depend on receive zero gradients.
    pub fn gradients<T: Scalar>(&self, tape: &mut Tape<T>) -> Gradients<T> {
        self.vars
            .iter()
            .map(|(name, &v)| {
                let g = tape.take_grad(v).unwrap_or_else(|| tape.value(v).zeros_like());
                (name.clone(), g)
            })
            .collect()
    }
}
