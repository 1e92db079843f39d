use std::fmt::Debug;
use std::io::{Read, Write};

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::ModelConfig;
use crate::error::{Error, Result};

/// Floating-point element type of a network.
pub trait Real:
    Float
    + FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + Debug
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to any float type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.numel()
    }

    fn is_bias_like(&self) -> bool {
        self.name.ends_with(".bias") || self.name.ends_with(".beta") || self.name == "output_bias"
    }

    fn is_gain(&self) -> bool {
        self.name.ends_with(".gamma")
    }
}

/// Tensor indices for one encoder layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlots {
    pub qkv_weight: usize,
    pub qkv_bias: usize,
    pub out_weight: usize,
    pub out_bias: usize,
    pub attn_norm_gamma: usize,
    pub attn_norm_beta: usize,
    pub ffn_in_weight: usize,
    pub ffn_in_bias: usize,
    pub ffn_out_weight: usize,
    pub ffn_out_bias: usize,
    pub ffn_norm_gamma: usize,
    pub ffn_norm_beta: usize,
}

/// Ordered tensor table for a [`ModelConfig`]; every tensor lives in one flat buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub token_embedding: usize,
    pub position_embedding: usize,
    pub layers: Vec<LayerSlots>,
    pub output_bias: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        let d = config.model_dim;
        let f = config.ffn_dim;
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let spec = TensorSpec {
                name,
                shape,
                offset,
            };
            offset += spec.numel();
            tensors.push(spec);
            tensors.len() - 1
        };
        let token_embedding = push("token_embedding".into(), vec![config.vocab_size, d]);
        let position_embedding = push(
            "position_embedding".into(),
            vec![config.max_sequence_length, d],
        );
        let layers = (0..config.layers)
            .map(|i| {
                let p = |s: &str| format!("layers.{i}.{s}");
                LayerSlots {
                    qkv_weight: push(p("attn_qkv.weight"), vec![d, 3 * d]),
                    qkv_bias: push(p("attn_qkv.bias"), vec![3 * d]),
                    out_weight: push(p("attn_out.weight"), vec![d, d]),
                    out_bias: push(p("attn_out.bias"), vec![d]),
                    attn_norm_gamma: push(p("attn_norm.gamma"), vec![d]),
                    attn_norm_beta: push(p("attn_norm.beta"), vec![d]),
                    ffn_in_weight: push(p("ffn_in.weight"), vec![d, f]),
                    ffn_in_bias: push(p("ffn_in.bias"), vec![f]),
                    ffn_out_weight: push(p("ffn_out.weight"), vec![f, d]),
                    ffn_out_bias: push(p("ffn_out.bias"), vec![d]),
                    ffn_norm_gamma: push(p("ffn_norm.gamma"), vec![d]),
                    ffn_norm_beta: push(p("ffn_norm.beta"), vec![d]),
                }
            })
            .collect();
        let output_bias = push("output_bias".into(), vec![config.vocab_size]);
        Self {
            tensors,
            token_embedding,
            position_embedding,
            layers,
            output_bias,
            len: offset,
        }
    }
}

/// Network weights (or gradients, or optimizer moments) laid out per [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    layout: Layout,
    data: Vec<T>,
}

impl<T: Real> ParameterSet<T> {
    pub fn zeros(layout: Layout) -> Self {
        let data = vec![T::zero(); layout.len];
        Self { layout, data }
    }

    /// Weights ~ N(0, std), biases zero, layer-norm gains one.
    pub fn init<R: Rng>(layout: Layout, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut params = Self::zeros(layout);
        for i in 0..params.layout.tensors.len() {
            let spec = params.layout.tensors[i].clone();
            let slice = &mut params.data[spec.range()];
            if spec.is_gain() {
                slice.fill(T::one());
            } else if !spec.is_bias_like() {
                for x in slice {
                    *x = T::of(normal.sample(rng));
                }
            }
        }
        params
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn tensor(&self, idx: usize) -> &[T] {
        &self.data[self.layout.tensors[idx].range()]
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut [T] {
        let range = self.layout.tensors[idx].range();
        &mut self.data[range]
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.layout.tensors.iter().position(|t| t.name == name)
    }

    pub fn vector(&self, idx: usize) -> ArrayView1<'_, T> {
        let spec = &self.layout.tensors[idx];
        ArrayView1::from_shape(spec.numel(), &self.data[spec.range()]).expect("1-d tensor")
    }

    pub fn matrix(&self, idx: usize) -> ArrayView2<'_, T> {
        let spec = &self.layout.tensors[idx];
        ArrayView2::from_shape((spec.shape[0], spec.shape[1]), &self.data[spec.range()])
            .expect("2-d tensor")
    }

    pub fn vector_mut(&mut self, idx: usize) -> ArrayViewMut1<'_, T> {
        let spec = &self.layout.tensors[idx];
        let n = spec.numel();
        let range = spec.range();
        ArrayViewMut1::from_shape(n, &mut self.data[range]).expect("1-d tensor")
    }

    pub fn matrix_mut(&mut self, idx: usize) -> ArrayViewMut2<'_, T> {
        let spec = &self.layout.tensors[idx];
        let shape = (spec.shape[0], spec.shape[1]);
        let range = spec.range();
        ArrayViewMut2::from_shape(shape, &mut self.data[range]).expect("2-d tensor")
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn fill_zero(&mut self) {
        self.data.fill(T::zero());
    }

    /// Converts element type, e.g. to run an f32 model in f64.
    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        ParameterSet {
            layout: self.layout.clone(),
            data: self.data.iter().map(|x| U::of(x.as_f64())).collect(),
        }
    }
}

impl ParameterSet<f32> {
    /// SHA-256 of the little-endian parameter bytes.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for x in &self.data {
            hasher.update(x.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Tensor table: count, then per tensor its name, shape and f32 data.
    pub fn write_tensors<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.layout.tensors.len() as u32).to_le_bytes())?;
        for spec in &self.layout.tensors {
            w.write_all(&(spec.name.len() as u32).to_le_bytes())?;
            w.write_all(spec.name.as_bytes())?;
            w.write_all(&(spec.shape.len() as u32).to_le_bytes())?;
            for &dim in &spec.shape {
                w.write_all(&(dim as u32).to_le_bytes())?;
            }
            for x in &self.data[spec.range()] {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a tensor table, checking it against `layout` name by name.
    pub fn read_tensors<R: Read>(mut r: R, layout: Layout) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32_buf)
                .map_err(|e| bad(format!("truncated tensor table: {e}")))?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let count = read_u32(&mut r)? as usize;
        if count != layout.tensors.len() {
            return Err(bad(format!(
                "expected {} tensors, found {count}",
                layout.tensors.len()
            )));
        }
        let mut params = Self::zeros(layout);
        for i in 0..count {
            let spec = params.layout.tensors[i].clone();
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)
                .map_err(|e| bad(format!("truncated tensor name: {e}")))?;
            if name != spec.name.as_bytes() {
                return Err(bad(format!(
                    "tensor {i} is {:?}, expected {:?}",
                    String::from_utf8_lossy(&name),
                    spec.name
                )));
            }
            let ndim = read_u32(&mut r)? as usize;
            let shape = (0..ndim)
                .map(|_| read_u32(&mut r).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if shape != spec.shape {
                return Err(bad(format!(
                    "tensor {} has shape {shape:?}, expected {:?}",
                    spec.name, spec.shape
                )));
            }
            let mut bytes = vec![0u8; spec.numel() * 4];
            r.read_exact(&mut bytes)
                .map_err(|e| bad(format!("truncated tensor {}: {e}", spec.name)))?;
            for (x, chunk) in params.data[spec.range()]
                .iter_mut()
                .zip(bytes.chunks_exact(4))
            {
                *x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            }
        }
        if !params.all_finite() {
            return Err(bad("non-finite parameter values".into()));
        }
        Ok(params)
    }
}
