use serde::{Deserialize, Serialize};

/// Dense row-major array of `f64` with rank at most 2 in practice.
///
/// Rank-0 (`[]`) is a scalar, rank-1 `[k]` behaves like a `[1, k]` row when
/// broadcasting, rank-2 `[n, k]` is a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Array {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl Array {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Option<Self> {
        if shape.iter().product::<usize>() != values.len() {
            return None;
        }
        Some(Self { shape, values })
    }

    /// Panicking constructor for call sites where the shape is known to fit.
    pub fn from_shape(shape: &[usize], values: Vec<f64>) -> Self {
        Self::new(shape.to_vec(), values).expect("shape does not match value count")
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: Vec::new(),
            values: vec![v],
        }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        Self {
            shape: vec![values.len()],
            values,
        }
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        Self::from_shape(&[rows, cols], values)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            values: vec![0.0; shape.iter().product()],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Self {
            shape: shape.to_vec(),
            values: vec![v; shape.iter().product()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The array viewed as a matrix: scalars are `1x1`, vectors are `1xk`.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [k] => (1, *k),
            [n, k] => (*n, *k),
            _ => {
                let k = *self.shape.last().unwrap();
                (self.values.len() / k.max(1), k)
            }
        }
    }

    pub fn item(&self) -> f64 {
        self.values[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let (_, k) = self.dims2();
        &self.values[i * k..(i + 1) * k]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Option<Self> {
        if shape.iter().product::<usize>() != self.values.len() {
            return None;
        }
        self.shape = shape.to_vec();
        Some(self)
    }
}
