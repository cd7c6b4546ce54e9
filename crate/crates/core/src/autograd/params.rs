use std::collections::BTreeMap;

use crate::autograd::{Gradients, Graph, Real, Tensor, Var};
use crate::error::{bail, Result};

/// Named trainable tensors, iterated in name order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamStore<T: Real = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        match self.tensors.get(name) {
            Some(t) => Ok(t),
            None => bail!(Contract, "unknown parameter {name:?}"),
        }
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        match self.tensors.get_mut(name) {
            Some(t) => Ok(t),
            None => bail!(Contract, "unknown parameter {name:?}"),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Zero-filled store with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    /// Same names and shapes as `other`.
    pub fn same_layout<U: Real>(&self, other: &ParamStore<U>) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(other.tensors.iter())
                .all(|((ka, va), (kb, vb))| ka == kb && va.shape() == vb.shape())
    }

    /// Puts every tensor on the tape as a trainable leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Result<Bound> {
        let mut vars = BTreeMap::new();
        for (k, v) in &self.tensors {
            vars.insert(k.clone(), g.param(v.clone())?);
        }
        Ok(Bound { vars })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        for (k, v) in self.tensors.iter_mut() {
            v.add_assign(other.get(k)?)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for v in self.tensors.values_mut() {
            v.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors
            .values()
            .flat_map(|t| t.data())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}

/// Graph handles for a bound [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Names existing tape nodes, e.g. inputs handed to a gradient check.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        match self.vars.get(name) {
            Some(&v) => Ok(v),
            None => bail!(Contract, "parameter {name:?} is not bound"),
        }
    }

    pub fn opt(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    /// Collects the gradient of every bound parameter.
    pub fn gradients<T: Real>(&self, grads: &mut Gradients<T>) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (k, &v) in &self.vars {
            if let Some(g) = grads.take(v) {
                out.insert(k.clone(), g);
            }
        }
        out
    }
}
