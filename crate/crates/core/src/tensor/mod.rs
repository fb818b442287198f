//! Dense row-major `f64` tensors, the kernels that operate on them, and a
//! reverse-mode tape for training.

mod adam;
mod checkpoint;
pub mod kernels;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use tape::{Tape, Var};

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Dimension(format!("shape {shape:?} has a zero extent")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Dimension(format!("shape {shape:?} implies {numel} elements, got {}", data.len())));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; numel] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value] }
    }

    /// 2-D tensor from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Tensor::new(vec![m, n], rows.concat())
    }

    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * std
            })
            .collect();
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Extent of the last dimension.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("tensor has at least one dimension")
    }

    /// Product of all but the last dimension.
    pub fn rows(&self) -> usize {
        self.numel() / self.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    /// Single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1);
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn require_matrix(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [m, n] => Ok((m, n)),
            _ => Err(Error::Dimension(format!("{what} expects a matrix, got shape {:?}", self.shape))),
        }
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.require_matrix("matmul")?;
        let (k2, n) = other.require_matrix("matmul")?;
        if k != k2 {
            return Err(Error::Dimension(format!("matmul inner extents differ: {:?} x {:?}", self.shape, other.shape)));
        }
        Ok(Tensor { shape: vec![m, n], data: kernels::matmul(&self.data, &other.data, m, k, n) })
    }

    pub fn softmax_rows(&self) -> Result<Tensor> {
        if self.data.iter().any(|x| x.is_nan()) {
            return Err(Error::Numeric("softmax input contains NaN".into()));
        }
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.cols()) {
            kernels::softmax_in_place(row);
        }
        Ok(Tensor { shape: self.shape.clone(), data })
    }

    pub fn layer_norm(&self, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
        check_layer_norm(self, gain, bias, eps)?;
        let (out, _, _) = kernels::layer_norm_rows(&self.data, &gain.data, &bias.data, self.cols(), eps);
        Ok(Tensor { shape: self.shape.clone(), data: out })
    }
}

/// Ordered, named collection of parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    /// Appends a tensor and returns its index.
    pub fn push(&mut self, name: &str, tensor: Tensor) -> Result<usize> {
        if self.names.iter().any(|n| n == name) {
            return Err(Error::Parameter(format!("duplicate parameter name {name}")));
        }
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        Ok(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }
}

pub(crate) fn check_layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<()> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Parameter(format!("layer_norm eps must be positive, got {eps}")));
    }
    let d = x.cols();
    if gain.numel() != d || bias.numel() != d {
        return Err(Error::Dimension(format!(
            "layer_norm gain {:?} / bias {:?} do not match last dimension of {:?}",
            gain.shape, bias.shape, x.shape
        )));
    }
    Ok(())
}

/// Mean negative log-likelihood of `targets` under row-wise softmax of
/// `logits`, skipping positions whose target equals `ignore_id`.
pub fn cross_entropy(logits: &Tensor, targets: &[usize], ignore_id: usize) -> Result<f64> {
    let (loss, _) = kernels::cross_entropy(logits.data(), logits.cols(), targets, ignore_id)?;
    Ok(loss)
}

pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape != target.shape {
        return Err(Error::Dimension(format!("mse shapes differ: {:?} vs {:?}", pred.shape, target.shape)));
    }
    Ok(kernels::mse(&pred.data, &target.data))
}
