//! Dense row-major tensors and the named parameter store.
//!
//! Activations are `f64`; parameters are stored as `f32` and widened on use,
//! so every stored weight is exactly representable in the weight file.

use alloc::string::String;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.iter().any(|&d| d == 0) && !data.is_empty() || n != data.len() {
            return Err(shape_err("tensor", &dims, &[data.len()]));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: alloc::vec![0.0; n],
        }
    }

    pub fn full(dims: Vec<usize>, value: f64) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: alloc::vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            dims: alloc::vec![1],
            data: alloc::vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            dims: alloc::vec![data.len()],
            data,
        }
    }

    /// Builds a `rows × cols` matrix from a flat buffer.
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(alloc::vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(shape_err("from_rows", &[cols], &[r.len()]));
            }
            data.extend_from_slice(r);
        }
        Self::new(alloc::vec![rows.len(), cols], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    /// Column count of a 2-D tensor (1 for vectors).
    pub fn cols(&self) -> usize {
        self.dims.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let c = self.cols();
        &self.data[t * c..(t + 1) * c]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[t * c..(t + 1) * c]
    }

    /// First `n` rows of a 2-D tensor.
    pub fn head_rows(&self, n: usize) -> Tensor {
        let c = self.cols();
        Tensor {
            dims: alloc::vec![n, c],
            data: self.data[..n * c].to_vec(),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
    pub grad: Option<Vec<f64>>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Insertion-ordered collection of named `f32` parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, dims: Vec<usize>, data: Vec<f32>) -> Result<ParamId> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(shape_err("param", &dims, &[data.len()]));
        }
        if self.find(name).is_some() {
            return Err(Error::Config(alloc::format!("duplicate parameter `{name}`")));
        }
        self.params.push(Param {
            name: name.into(),
            dims,
            data,
            grad: None,
        });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.find(name).ok_or_else(|| Error::MissingParam(name.into()))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn data(&self, id: ParamId) -> &[f32] {
        &self.params[id.0].data
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count over parameters whose name starts with `prefix`.
    pub fn element_count(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.name.starts_with(prefix))
            .map(Param::len)
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Global L2 norm over every populated gradient.
    pub fn grad_norm(&self) -> f64 {
        let sq: f64 = self
            .params
            .iter()
            .filter_map(|p| p.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum();
        libm::sqrt(sq)
    }

    /// Plain gradient descent with global-norm clipping; parameters without a
    /// gradient are left alone.
    pub fn sgd_step(&mut self, learning_rate: f64, clip_norm: f64) {
        let norm = self.grad_norm();
        let scale = if clip_norm > 0.0 && norm > clip_norm {
            clip_norm / norm
        } else {
            1.0
        };
        for p in &mut self.params {
            if let Some(g) = &p.grad {
                for (w, g) in p.data.iter_mut().zip(g) {
                    *w = (*w as f64 - learning_rate * scale * g) as f32;
                }
            }
        }
    }
}

/// Deterministic parameter initializer.
pub struct Initializer {
    rng: ChaCha8Rng,
}

impl Initializer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn unit(&mut self) -> f64 {
        unit_f64(&mut self.rng)
    }

    /// `n` values from uniform(-k, k) with `k = 1/sqrt(fan_in)`.
    pub fn fan_in(&mut self, n: usize, fan_in: usize) -> Vec<f32> {
        let k = 1.0 / libm::sqrt(fan_in.max(1) as f64);
        (0..n)
            .map(|_| ((self.unit() * 2.0 - 1.0) * k) as f32)
            .collect()
    }

    pub fn uniform(&mut self, n: usize, lo: f64, hi: f64) -> Vec<f32> {
        (0..n)
            .map(|_| (lo + (hi - lo) * self.unit()) as f32)
            .collect()
    }
}

/// Uniform sample in [0, 1) with 53 bits of precision.
pub(crate) fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
