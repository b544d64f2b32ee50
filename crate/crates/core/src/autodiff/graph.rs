//! Define-by-run reverse-mode tape.
//!
//! Every operation evaluates eagerly and records itself on the tape, so the
//! forward pass is the construction of the graph. [`Graph::backward`] then
//! walks the tape in reverse and accumulates gradients additively over
//! fan-out. Nodes that depend only on constants are never differentiated.

use std::f64::consts::PI;

use super::array::Array;
use super::AutodiffError;

type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    LogSumExp(Var),
    GaussianLogPdf(Var, Var, Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize, usize),
    SumRows(Var, Vec<Vec<usize>>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "multiply",
            Op::Scale(..) => "scale",
            Op::AddConst(..) => "add_const",
            Op::Relu(..) => "relu",
            Op::Tanh(..) => "tanh",
            Op::Exp(..) => "exp",
            Op::Log(..) => "log",
            Op::Softplus(..) => "softplus",
            Op::Clamp(..) => "clamp",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumLast(..) => "sum_last",
            Op::LogSumExp(..) => "log_sum_exp",
            Op::GaussianLogPdf(..) => "gaussian_log_pdf",
            Op::Concat(..) => "concatenate",
            Op::SliceCols(..) => "slice_cols",
            Op::SumRows(..) => "sum_rows",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Constant | Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::AddConst(a)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Softplus(a)
            | Op::Clamp(a, ..)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumLast(a)
            | Op::LogSumExp(a)
            | Op::SliceCols(a, ..)
            | Op::SumRows(a, _) => vec![*a],
            Op::GaussianLogPdf(x, m, s) => vec![*x, *m, *s],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Array,
    requires_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Array>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros when the output does not depend on it.
    pub fn wrt(&self, var: Var) -> Array {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => Array::zeros(&self.shapes[var.0]),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn broadcast_dims(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    let dim = |x: usize, y: usize| {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    Some((dim(a.0, b.0)?, dim(a.1, b.1)?))
}

/// Sum a broadcast gradient of shape `out` back down to `target`'s shape.
fn unbroadcast(grad: &Array, target: &[usize]) -> Array {
    if grad.shape() == target {
        return grad.clone();
    }
    let (gr, gc) = grad.dims2();
    let (tr, tc) = Array::zeros(target).dims2();
    let mut out = vec![0.0; tr * tc];
    let g = grad.values();
    for i in 0..gr {
        let oi = if tr == 1 { 0 } else { i };
        for j in 0..gc {
            let oj = if tc == 1 { 0 } else { j };
            out[oi * tc + oj] += g[i * gc + j];
        }
    }
    Array::from_shape(target, out)
}

/// `c = a(n×k) · b(k×m)` with optional transposes expressed through strides.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    n: usize,
    k: usize,
    m: usize,
    a: &[f64],
    a_transposed: bool,
    b: &[f64],
    b_transposed: bool,
    c: &mut [f64],
) {
    let (rsa, csa) = if a_transposed { (1, n as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_transposed { (1, k as isize) } else { (m as isize, 1) };
    // SAFETY: slices are sized n*k, k*m, n*m and strides stay within them.
    unsafe {
        matrixmultiply::dgemm(
            n,
            k,
            m,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            m as isize,
            1,
        );
    }
}

fn log_sum_exp_slice(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A value the output is not differentiated against.
    pub fn constant(&mut self, value: Array) -> Var {
        self.nodes.push(Node {
            op: Op::Constant,
            value,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable leaf (typically a parameter).
    pub fn leaf(&mut self, value: Array) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Array) -> Result<Var> {
        let id = self.nodes.len();
        if !value.all_finite() {
            return Err(AutodiffError::NonFinite {
                node: id,
                op: op.name(),
            });
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var(id))
    }

    fn mismatch(&self, op: &'static str, detail: String) -> AutodiffError {
        AutodiffError::ShapeMismatch {
            node: self.nodes.len(),
            op,
            detail,
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(self.mismatch(
                "matmul",
                format!("{:?} x {:?}", av.shape(), bv.shape()),
            ));
        }
        let (n, k) = av.dims2();
        let m = bv.shape()[1];
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, av.values(), false, bv.values(), false, &mut out);
        self.push(Op::MatMul(a, b), Array::matrix(n, m, out))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Array> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if av.shape() == bv.shape() {
            let values = av
                .values()
                .iter()
                .zip(bv.values())
                .map(|(&x, &y)| f(x, y))
                .collect();
            return Ok(Array::from_shape(av.shape(), values));
        }
        let (ad, bd) = (av.dims2(), bv.dims2());
        let Some((r, c)) = broadcast_dims(ad, bd) else {
            return Err(self.mismatch(name, format!("{:?} vs {:?}", av.shape(), bv.shape())));
        };
        let mut values = Vec::with_capacity(r * c);
        let (xa, xb) = (av.values(), bv.values());
        for i in 0..r {
            let ia = if ad.0 == 1 { 0 } else { i };
            let ib = if bd.0 == 1 { 0 } else { i };
            for j in 0..c {
                let ja = if ad.1 == 1 { 0 } else { j };
                let jb = if bd.1 == 1 { 0 } else { j };
                values.push(f(xa[ia * ad.1 + ja], xb[ib * bd.1 + jb]));
            }
        }
        let shape = match av.rank().max(bv.rank()) {
            0 => vec![],
            1 => vec![c],
            _ => vec![r, c],
        };
        Ok(Array::from_shape(&shape, values))
    }

    /// Elementwise addition with row/column broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |x, y| x + y)?;
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |x, y| x - y)?;
        self.push(Op::Sub(a, b), v)
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "multiply", |x, y| x * y)?;
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.nodes[a.0].value.map(|x| x * c);
        self.push(Op::Scale(a, c), v)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.nodes[a.0].value.map(|x| x + c);
        self.push(Op::AddConst(a), v)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.nodes[a.0].value.map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.nodes[a.0].value.map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.nodes[a.0].value.map(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let v = self.nodes[a.0].value.map(f64::ln);
        self.push(Op::Log(a), v)
    }

    /// `log(1 + exp(x))`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        let v = self.nodes[a.0].value.map(softplus);
        self.push(Op::Softplus(a), v)
    }

    /// Clamp into `[lo, hi]`; the gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let v = self.nodes[a.0].value.map(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.nodes[a.0].value.values().iter().sum();
        self.push(Op::Sum(a), Array::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        if av.is_empty() {
            return Err(self.mismatch("mean", "empty input".into()));
        }
        let s = av.values().iter().sum::<f64>() / av.len() as f64;
        self.push(Op::Mean(a), Array::scalar(s))
    }

    /// Row sums: `[n, k] -> [n, 1]`, `[k] -> []`.
    pub fn sum_last(&mut self, a: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let (n, k) = av.dims2();
        let sums: Vec<f64> = (0..n).map(|i| av.values()[i * k..(i + 1) * k].iter().sum()).collect();
        let shape = if av.rank() <= 1 { vec![] } else { vec![n, 1] };
        self.push(Op::SumLast(a), Array::from_shape(&shape, sums))
    }

    /// Overflow-safe log-sum-exp along the last axis: `[n, k] -> [n, 1]`, `[k] -> []`.
    pub fn log_sum_exp(&mut self, a: Var) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let (n, k) = av.dims2();
        if k == 0 {
            return Err(self.mismatch("log_sum_exp", "empty last axis".into()));
        }
        let out: Vec<f64> = (0..n)
            .map(|i| log_sum_exp_slice(&av.values()[i * k..(i + 1) * k]))
            .collect();
        let shape = if av.rank() <= 1 { vec![] } else { vec![n, 1] };
        self.push(Op::LogSumExp(a), Array::from_shape(&shape, out))
    }

    /// Elementwise Gaussian log-density of `x` under `N(mean, exp(log_std)^2)`.
    pub fn gaussian_log_pdf(&mut self, x: Var, mean: Var, log_std: Var) -> Result<Var> {
        let (xv, mv, sv) = (
            &self.nodes[x.0].value,
            &self.nodes[mean.0].value,
            &self.nodes[log_std.0].value,
        );
        if xv.shape() != mv.shape() || xv.shape() != sv.shape() {
            return Err(self.mismatch(
                "gaussian_log_pdf",
                format!("{:?}, {:?}, {:?}", xv.shape(), mv.shape(), sv.shape()),
            ));
        }
        let values = xv
            .values()
            .iter()
            .zip(mv.values())
            .zip(sv.values())
            .map(|((&x, &m), &s)| {
                let z = (x - m) * (-s).exp();
                -0.5 * z * z - s - HALF_LN_2PI
            })
            .collect();
        let out = Array::from_shape(xv.shape(), values);
        self.push(Op::GaussianLogPdf(x, mean, log_std), out)
    }

    /// Concatenate along the last axis. All parts must share the row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(self.mismatch("concatenate", "no inputs".into()));
        }
        let rows = self.nodes[parts[0].0].value.dims2().0;
        let mut total = 0;
        for p in parts {
            let (r, c) = self.nodes[p.0].value.dims2();
            if r != rows {
                return Err(self.mismatch(
                    "concatenate",
                    format!("row count {} vs {}", r, rows),
                ));
            }
            total += c;
        }
        let mut values = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for p in parts {
                values.extend_from_slice(self.nodes[p.0].value.row(i));
            }
        }
        let rank2 = parts.iter().any(|p| self.nodes[p.0].value.rank() == 2);
        let shape = if rank2 { vec![rows, total] } else { vec![total] };
        self.push(Op::Concat(parts.to_vec()), Array::from_shape(&shape, values))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let (n, k) = av.dims2();
        if start >= end || end > k {
            return Err(self.mismatch("slice_cols", format!("{start}..{end} of {k} columns")));
        }
        let mut values = Vec::with_capacity(n * (end - start));
        for i in 0..n {
            values.extend_from_slice(&av.row(i)[start..end]);
        }
        let shape = if av.rank() <= 1 { vec![end - start] } else { vec![n, end - start] };
        self.push(Op::SliceCols(a, start, end), Array::from_shape(&shape, values))
    }

    /// Output row `i` is the sum of the input rows listed in `groups[i]`.
    /// An empty group yields a zero row.
    pub fn sum_rows(&mut self, a: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let av = &self.nodes[a.0].value;
        let (n, k) = av.dims2();
        let mut values = vec![0.0; groups.len() * k];
        for (i, group) in groups.iter().enumerate() {
            let out = &mut values[i * k..(i + 1) * k];
            for &r in group {
                if r >= n {
                    return Err(AutodiffError::ShapeMismatch {
                        node: self.nodes.len(),
                        op: "sum_rows",
                        detail: format!("row {r} out of {n}"),
                    });
                }
                for (o, x) in out.iter_mut().zip(av.row(r)) {
                    *o += x;
                }
            }
        }
        let rows = groups.len();
        self.push(Op::SumRows(a, groups), Array::matrix(rows, k, values))
    }

    /// Reverse pass from a scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = &self.nodes[output.0];
        if out.value.len() != 1 {
            return Err(AutodiffError::NotScalar {
                node: output.0,
                shape: out.value.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Array>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Array::full(out.value.shape(), 1.0));

        for id in (0..=output.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            for (input, contribution) in self.local_grads(node, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => {
                        for (a, c) in acc.values_mut().iter_mut().zip(contribution.values()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn local_grads(&self, node: &Node, g: &Array) -> Vec<(Var, Array)> {
        let val = |v: Var| &self.nodes[v.0].value;
        let elementwise = |a: Var, f: &dyn Fn(f64, f64, f64) -> f64| {
            // f(input, output, upstream)
            let x = val(a);
            let values = x
                .values()
                .iter()
                .zip(node.value.values())
                .zip(g.values())
                .map(|((&xi, &yi), &gi)| f(xi, yi, gi))
                .collect();
            vec![(a, Array::from_shape(x.shape(), values))]
        };
        match &node.op {
            Op::Constant | Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (n, k) = av.dims2();
                let m = bv.shape()[1];
                let mut out = Vec::new();
                if self.nodes[a.0].requires_grad {
                    let mut da = vec![0.0; n * k];
                    gemm(n, m, k, g.values(), false, bv.values(), true, &mut da);
                    out.push((*a, Array::matrix(n, k, da)));
                }
                if self.nodes[b.0].requires_grad {
                    let mut db = vec![0.0; k * m];
                    gemm(k, n, m, av.values(), true, g.values(), false, &mut db);
                    out.push((*b, Array::matrix(k, m, db)));
                }
                out
            }
            Op::Add(a, b) => vec![
                (*a, unbroadcast(g, val(*a).shape())),
                (*b, unbroadcast(g, val(*b).shape())),
            ],
            Op::Sub(a, b) => vec![
                (*a, unbroadcast(g, val(*a).shape())),
                (*b, unbroadcast(&g.map(|x| -x), val(*b).shape())),
            ],
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (ad, bd) = (av.dims2(), bv.dims2());
                let (r, c) = g.dims2();
                let mut ga = vec![0.0; r * c];
                let mut gb = vec![0.0; r * c];
                for i in 0..r {
                    let ia = if ad.0 == 1 { 0 } else { i };
                    let ib = if bd.0 == 1 { 0 } else { i };
                    for j in 0..c {
                        let ja = if ad.1 == 1 { 0 } else { j };
                        let jb = if bd.1 == 1 { 0 } else { j };
                        let gij = g.values()[i * c + j];
                        ga[i * c + j] = gij * bv.values()[ib * bd.1 + jb];
                        gb[i * c + j] = gij * av.values()[ia * ad.1 + ja];
                    }
                }
                let shape = g.shape().to_vec();
                vec![
                    (*a, unbroadcast(&Array::from_shape(&shape, ga), av.shape())),
                    (*b, unbroadcast(&Array::from_shape(&shape, gb), bv.shape())),
                ]
            }
            Op::Scale(a, c) => vec![(*a, g.map(|x| x * c))],
            Op::AddConst(a) => vec![(*a, g.clone())],
            Op::Relu(a) => elementwise(*a, &|x, _, gi| if x > 0.0 { gi } else { 0.0 }),
            Op::Tanh(a) => elementwise(*a, &|_, y, gi| gi * (1.0 - y * y)),
            Op::Exp(a) => elementwise(*a, &|_, y, gi| gi * y),
            Op::Log(a) => elementwise(*a, &|x, _, gi| gi / x),
            Op::Softplus(a) => elementwise(*a, &|x, _, gi| gi * sigmoid(x)),
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                elementwise(*a, &move |x, _, gi| if x >= lo && x <= hi { gi } else { 0.0 })
            }
            Op::Sum(a) => {
                let gi = g.item();
                vec![(*a, Array::full(val(*a).shape(), gi))]
            }
            Op::Mean(a) => {
                let av = val(*a);
                let gi = g.item() / av.len() as f64;
                vec![(*a, Array::full(av.shape(), gi))]
            }
            Op::SumLast(a) => {
                let av = val(*a);
                let (n, k) = av.dims2();
                let values = (0..n * k).map(|idx| g.values()[idx / k]).collect();
                vec![(*a, Array::from_shape(av.shape(), values))]
            }
            Op::LogSumExp(a) => {
                let av = val(*a);
                let (n, k) = av.dims2();
                let mut values = vec![0.0; n * k];
                for i in 0..n {
                    let lse = node.value.values()[i];
                    let gi = g.values()[i];
                    for j in 0..k {
                        values[i * k + j] = gi * (av.values()[i * k + j] - lse).exp();
                    }
                }
                vec![(*a, Array::from_shape(av.shape(), values))]
            }
            Op::GaussianLogPdf(x, m, s) => {
                let (xv, mv, sv) = (val(*x), val(*m), val(*s));
                let len = xv.len();
                let (mut gx, mut gm, mut gs) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
                for i in 0..len {
                    let inv = (-sv.values()[i]).exp();
                    let z = (xv.values()[i] - mv.values()[i]) * inv;
                    let gi = g.values()[i];
                    gx[i] = -gi * z * inv;
                    gm[i] = gi * z * inv;
                    gs[i] = gi * (z * z - 1.0);
                }
                let shape = xv.shape();
                vec![
                    (*x, Array::from_shape(shape, gx)),
                    (*m, Array::from_shape(shape, gm)),
                    (*s, Array::from_shape(shape, gs)),
                ]
            }
            Op::Concat(parts) => {
                let (rows, total) = g.dims2();
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for p in parts {
                    let pv = val(*p);
                    let (_, c) = pv.dims2();
                    let mut values = Vec::with_capacity(rows * c);
                    for i in 0..rows {
                        values.extend_from_slice(&g.values()[i * total + offset..i * total + offset + c]);
                    }
                    out.push((*p, Array::from_shape(pv.shape(), values)));
                    offset += c;
                }
                out
            }
            Op::SliceCols(a, start, end) => {
                let av = val(*a);
                let (n, k) = av.dims2();
                let w = end - start;
                let mut values = vec![0.0; n * k];
                for i in 0..n {
                    values[i * k + start..i * k + end].copy_from_slice(&g.values()[i * w..(i + 1) * w]);
                }
                vec![(*a, Array::from_shape(av.shape(), values))]
            }
            Op::SumRows(a, groups) => {
                let av = val(*a);
                let (_, k) = av.dims2();
                let mut values = vec![0.0; av.len()];
                for (i, group) in groups.iter().enumerate() {
                    let gi = &g.values()[i * k..(i + 1) * k];
                    for &r in group {
                        for (v, x) in values[r * k..(r + 1) * k].iter_mut().zip(gi) {
                            *v += x;
                        }
                    }
                }
                vec![(*a, Array::from_shape(av.shape(), values))]
            }
        }
    }
}

/// Plain (non-graph) helpers shared with inference code.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    log_sum_exp_slice(xs)
}

pub fn stable_softplus(x: f64) -> f64 {
    softplus(x)
}

pub fn gaussian_log_density(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * PI).ln()
}
