use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, AutodiffError, Graph, Mlp, MlpSpec, ParamStore, Var};
use crate::estimators::History;
use crate::models::{Design, Model};

/// Sum-pooled history encoding `B_t = Σ_{k≤t} ENC(d_k, y_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub values: Vec<f64>,
    pub t: usize,
}

impl Summary {
    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![0.0; dim], t: 0 }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Per-pair network `ENC_ψ(d, y)` over the model's normalised features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    mlp: Mlp,
}

impl Encoder {
    pub fn spec(input_dim: usize, hidden: &[usize], summary_dim: usize) -> MlpSpec {
        MlpSpec::new(input_dim, hidden, Activation::Relu, summary_dim)
    }

    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, store: &mut ParamStore, prefix: &str, rng: &mut R) -> Self {
        Self { mlp: Mlp::new(spec, store, prefix, rng) }
    }

    pub fn attach(spec: MlpSpec, store: &ParamStore, prefix: &str) -> Option<Self> {
        Mlp::attach(spec, store, prefix).map(|mlp| Self { mlp })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn summary_dim(&self) -> usize {
        self.mlp.spec().output_dim
    }

    pub fn encode_pair(&self, store: &ParamStore, model: &Model, design: &Design, y: f64) -> Vec<f64> {
        self.mlp.forward_row(store, &model.features(design, y))
    }

    /// `B_t = B_{t−1} + ENC(d_t, y_t)`.
    pub fn update(&self, store: &ParamStore, summary: &mut Summary, model: &Model, design: &Design, y: f64) {
        let e = self.encode_pair(store, model, design, y);
        for (b, v) in summary.values.iter_mut().zip(&e) {
            *b += v;
        }
        summary.t += 1;
    }

    /// Encodes a whole history, summing in arrival order so the result equals
    /// the incrementally maintained summary bitwise.
    pub fn encode_history(&self, store: &ParamStore, model: &Model, history: &History) -> Summary {
        let mut s = Summary::zeros(self.summary_dim());
        for (d, y) in history.iter() {
            self.update(store, &mut s, model, d, y);
        }
        s
    }

    /// Order-free variant: encodings are summed after sorting them
    /// lexicographically, so any permutation of the history gives the same bits.
    pub fn encode_history_canonical(&self, store: &ParamStore, model: &Model, history: &History) -> Summary {
        let mut rows: Vec<Vec<f64>> = history.iter().map(|(d, y)| self.encode_pair(store, model, d, y)).collect();
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        });
        let mut s = Summary::zeros(self.summary_dim());
        for row in rows {
            for (b, v) in s.values.iter_mut().zip(&row) {
                *b += v;
            }
        }
        s.t = history.len();
        s
    }

    /// Graph version: `features` is `[pairs, input_dim]`; row `i` of the result
    /// sums the encodings of the pairs listed in `prefixes[i]`.
    pub fn forward_prefixes(
        &self,
        g: &mut Graph,
        bound: &[Var],
        features: Var,
        prefixes: Vec<Vec<usize>>,
    ) -> Result<Var, AutodiffError> {
        let e = self.mlp.forward(g, bound, features)?;
        g.sum_rows(e, prefixes)
    }
}
