use rand::Rng;
use serde::{Deserialize, Serialize};

use super::array::Array;
use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::AutodiffError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: &[usize], activation: Activation, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: hidden.to_vec(),
            activation,
            output_dim,
        }
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden);
        w.push(self.output_dim);
        w
    }
}

/// Fully connected network. Hidden layers use `spec.activation`, the output
/// layer is linear. Parameters live in a shared [`ParamStore`] so several
/// networks can be optimized together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers `prefix.l{i}.w` / `prefix.l{i}.b` in `store`.
    ///
    /// Weights are drawn uniformly from `±sqrt(6 / (fan_in + fan_out))`, biases start at zero.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, store: &mut ParamStore, prefix: &str, rng: &mut R) -> Self {
        assert!(spec.widths().iter().all(|&w| w >= 1), "all layer widths must be >= 1");
        let widths = spec.widths();
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            let w = store.add(format!("{prefix}.l{i}.w"), Array::matrix(fan_in, fan_out, w));
            let b = store.add(format!("{prefix}.l{i}.b"), Array::zeros(&[fan_out]));
            layers.push((w, b));
        }
        Self { spec, layers }
    }

    /// Rebinds an architecture to parameters already present in `store`
    /// (for example after loading a checkpoint).
    pub fn attach(spec: MlpSpec, store: &ParamStore, prefix: &str) -> Option<Self> {
        let widths = spec.widths();
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (i, pair) in widths.windows(2).enumerate() {
            let w = store.find(&format!("{prefix}.l{i}.w"))?;
            let b = store.find(&format!("{prefix}.l{i}.b"))?;
            if store.get(w).shape() != [pair[0], pair[1]] || store.get(b).shape() != [pair[1]] {
                return None;
            }
            layers.push((w, b));
        }
        Some(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }

    /// Graph forward; `bound[id]` must hold the graph node for parameter `id`
    /// (see [`ParamStore::bind`]).
    pub fn forward(&self, g: &mut Graph, bound: &[Var], x: Var) -> Result<Var, AutodiffError> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = g.matmul(h, bound[w.index()])?;
            h = g.add(h, bound[b.index()])?;
            if i < last {
                h = match self.spec.activation {
                    Activation::Relu => g.relu(h)?,
                    Activation::Tanh => g.tanh(h)?,
                    Activation::None => h,
                };
            }
        }
        Ok(h)
    }

    /// Single-row forward pass without a tape.
    ///
    /// Results depend only on the row, never on what else is batched with it,
    /// so incremental and from-scratch callers agree bitwise.
    pub fn forward_row(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.spec.input_dim);
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let w = store.get(w);
            let b = store.get(b);
            let (fan_in, fan_out) = w.dims2();
            let mut out = b.values().to_vec();
            let wv = w.values();
            for (r, &hr) in h.iter().enumerate().take(fan_in) {
                if hr == 0.0 {
                    continue;
                }
                let row = &wv[r * fan_out..(r + 1) * fan_out];
                for (o, &wrc) in out.iter_mut().zip(row) {
                    *o += hr * wrc;
                }
            }
            if i < last {
                match self.spec.activation {
                    Activation::Relu => out.iter_mut().for_each(|v| *v = v.max(0.0)),
                    Activation::Tanh => out.iter_mut().for_each(|v| *v = v.tanh()),
                    Activation::None => {}
                }
            }
            h = out;
        }
        h
    }
}
