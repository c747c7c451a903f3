//! Named parameter tensors and their binding onto a tape.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

/// Role of a parameter tensor; decides whether the L2 penalty applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ParamKind {
    Embedding,
    Weight,
    Bias,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// Ordered collection of named tensors. Order is insertion order and is part
/// of the checkpoint layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) {
        let name = name.into();
        if let Some(p) = self.params.iter_mut().find(|p| p.name == name) {
            p.kind = kind;
            p.value = value;
        } else {
            self.params.push(Param { name, kind, value });
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|p| p.name == name)
            .map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params
            .iter_mut()
            .find(|p| p.name == name)
            .map(|p| &mut p.value)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalars.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every tensor as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        let vars = self
            .params
            .iter()
            .map(|p| (p.name.clone(), p.kind, tape.param(p.value.clone())))
            .collect();
        Bindings { vars }
    }
}

/// Tape handles for a bound [`ParamStore`], in store order.
#[derive(Clone, Debug)]
pub struct Bindings {
    vars: Vec<(String, ParamKind, Var)>,
}

impl Bindings {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.try_get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.vars
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, _, v)| *v)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ParamKind, Var)> {
        self.vars.iter().map(|(n, k, v)| (n.as_str(), *k, *v))
    }

    /// Gradients in store order; parameters that did not reach the loss get
    /// zeros of their own shape.
    pub fn collect(&self, tape: &Tape, grads: &Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .map(|(_, _, v)| match grads.get(*v) {
                Some(g) => g.clone(),
                None => {
                    let [r, c] = tape.value(*v).shape();
                    Tensor::zeros(r, c)
                }
            })
            .collect()
    }
}
