use serde::{Deserialize, Serialize};

use super::array::Array;
use super::graph::{Graph, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array) -> ParamId {
        let name = name.into();
        assert!(self.find(&name).is_none(), "duplicate parameter name {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Array {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Array::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn arrays(&self) -> &[Array] {
        &self.values
    }

    pub fn arrays_mut(&mut self) -> &mut [Array] {
        &mut self.values
    }

    /// Every parameter as a differentiable leaf; index the result by [`ParamId::index`].
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|v| g.leaf(v.clone())).collect()
    }

    /// Every parameter as a constant: the graph will not differentiate through them.
    pub fn bind_frozen(&self, g: &mut Graph) -> Vec<Var> {
        self.values.iter().map(|v| g.constant(v.clone())).collect()
    }

    /// Polyak averaging `self ← (1 − rate)·self + rate·online`.
    pub fn soft_update_from(&mut self, online: &ParamStore, rate: f64) {
        assert_eq!(self.names, online.names, "target/online parameter layouts differ");
        for (t, o) in self.values.iter_mut().zip(&online.values) {
            if rate == 1.0 {
                t.values_mut().copy_from_slice(o.values());
                continue;
            }
            for (tv, ov) in t.values_mut().iter_mut().zip(o.values()) {
                *tv = (1.0 - rate) * *tv + rate * ov;
            }
        }
    }

    pub fn from_named(entries: Vec<(String, Array)>) -> Self {
        let (names, values) = entries.into_iter().unzip();
        Self { names, values }
    }

    pub fn to_named(&self) -> Vec<(String, Array)> {
        self.names.iter().cloned().zip(self.values.iter().cloned()).collect()
    }
}
