use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

/// Ordered map of parameter names to tensors: the unit of checkpointing,
/// gradient exchange and transfer learning. Iteration order is insertion
/// order and names are unique.
#[derive(Debug, Clone, Default)]
pub struct NamedParameterSet {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl NamedParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(TensorError::DuplicateName(name));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i].1)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Total number of scalar parameters.
    pub fn count_params(&self) -> u64 {
        self.entries.iter().map(|(_, t)| t.numel() as u64).sum()
    }

    /// Entries whose name satisfies `pred`, cloned in order.
    pub fn subset(&self, pred: impl Fn(&str) -> bool) -> NamedParameterSet {
        let mut out = NamedParameterSet::new();
        for (name, t) in self.iter() {
            if pred(name) {
                out.insert(name, t.clone()).expect("names unique in source set");
            }
        }
        out
    }

    /// Rounds every tensor to `f32` precision (see [`Tensor::quantize_f32`]).
    pub fn quantize_f32(&mut self) {
        for (_, t) in self.iter_mut() {
            t.quantize_f32();
        }
    }

    /// Checks that `other` has exactly the same names and shapes, in order.
    pub fn check_aligned(&self, other: &NamedParameterSet, what: &str) -> Result<()> {
        if self.len() != other.len() {
            return Err(TensorError::ParamMismatch(format!(
                "{}: {} entries vs {}",
                what,
                self.len(),
                other.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb {
                return Err(TensorError::ParamMismatch(format!("{}: name {:?} vs {:?}", what, na, nb)));
            }
            if ta.shape() != tb.shape() {
                return Err(TensorError::ParamMismatch(format!(
                    "{}: {:?} has shape {:?} vs {:?}",
                    what,
                    na,
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }
}
