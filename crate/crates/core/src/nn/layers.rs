use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Width of the cut-layer representation.
pub const CUT_DIM: usize = 32;
/// Width of the trunk's hidden layer.
pub const HIDDEN_DIM: usize = 64;

/// Anything that can be viewed as an ordered list of flat `f64` tensors.
///
/// Gradients reuse the parameter types, so a `TrunkParams` doubles as the
/// gradient container for a trunk.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// All values, concatenated in tensor order.
    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn zeroed(&self) -> Self
    where
        Self: Clone,
    {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.fill(0.0);
        }
        out
    }

    /// Order-sensitive hash of the exact bit patterns of every value.
    fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in self.tensors() {
            for v in t {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `out x in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(input: usize, output: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let mut layer = Self::zeros(input, output);
        for w in layer.weights.data_mut() {
            *w = rng.uniform_range(-limit, limit);
        }
        layer
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// `x W^T + b`
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim("DenseLayer::forward", self.input_dim(), x.cols()));
        }
        let mut out = x.matmul_transposed(&self.weights)?;
        out.add_row_vector(&self.bias)?;
        Ok(out)
    }

    /// Gradients for this layer and for its input, given the upstream gradient.
    pub fn backward(&self, input: &Matrix, grad_out: &Matrix) -> Result<(DenseLayer, Matrix)> {
        let grad_w = grad_out.transpose_matmul(input)?;
        let grad_b = grad_out.sum_rows();
        let grad_in = grad_out.matmul(&self.weights)?;
        Ok((
            DenseLayer {
                weights: grad_w,
                bias: grad_b,
            },
            grad_in,
        ))
    }
}

impl Parameters for DenseLayer {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.weights.data(), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.data_mut(), &mut self.bias]
    }
}

pub(crate) fn relu(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    out.map_inplace(|v| if v > 0.0 { v } else { 0.0 });
    out
}

/// Zeroes `grad` wherever the matching pre-activation was not positive.
pub(crate) fn relu_backward(pre: &Matrix, grad: &mut Matrix) {
    for (g, &p) in grad.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
}

/// The client-side trunk: `d -> 64 -> 32`, ReLU after each layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrunkParams {
    pub layer1: DenseLayer,
    pub layer2: DenseLayer,
}

impl TrunkParams {
    pub fn init(input_dim: usize, rng: &mut Rng) -> Self {
        Self {
            layer1: DenseLayer::glorot(input_dim, HIDDEN_DIM, rng),
            layer2: DenseLayer::glorot(HIDDEN_DIM, CUT_DIM, rng),
        }
    }

    pub fn zeros(input_dim: usize) -> Self {
        Self {
            layer1: DenseLayer::zeros(input_dim, HIDDEN_DIM),
            layer2: DenseLayer::zeros(HIDDEN_DIM, CUT_DIM),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer1.input_dim()
    }
}

impl Parameters for TrunkParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.layer1.tensors();
        v.extend(self.layer2.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.layer1.tensors_mut();
        v.extend(self.layer2.tensors_mut());
        v
    }
}

/// Intermediate values of a trunk forward pass.
#[derive(Debug, Clone)]
pub struct TrunkCache {
    pub input: Matrix,
    pub pre1: Matrix,
    pub hidden: Matrix,
    pub pre2: Matrix,
    /// Fingerprint of the parameters that produced this cache.
    pub(crate) params_fingerprint: u64,
}

pub fn forward_trunk(trunk: &TrunkParams, x: &Matrix) -> Result<(Matrix, TrunkCache)> {
    if x.cols() != trunk.input_dim() {
        return Err(Error::dim("forward_trunk", trunk.input_dim(), x.cols()));
    }
    if x.rows() == 0 {
        return Err(Error::Empty("forward_trunk batch".into()));
    }
    let pre1 = trunk.layer1.forward(x)?;
    let hidden = relu(&pre1);
    let pre2 = trunk.layer2.forward(&hidden)?;
    let z = relu(&pre2);
    Ok((
        z,
        TrunkCache {
            input: x.clone(),
            pre1,
            hidden,
            pre2,
            params_fingerprint: trunk.fingerprint(),
        },
    ))
}

/// One `32 -> 1` output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl HeadParams {
    pub fn init(rng: &mut Rng) -> Self {
        let limit = (6.0 / (CUT_DIM + 1) as f64).sqrt();
        Self {
            weights: (0..CUT_DIM).map(|_| rng.uniform_range(-limit, limit)).collect(),
            bias: 0.0,
        }
    }

    pub fn zeros() -> Self {
        Self {
            weights: vec![0.0; CUT_DIM],
            bias: 0.0,
        }
    }
}

impl Parameters for HeadParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.weights, std::slice::from_ref(&self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weights, std::slice::from_mut(&mut self.bias)]
    }
}

pub fn forward_head(head: &HeadParams, z: &Matrix) -> Result<Vec<f64>> {
    if z.cols() != head.weights.len() {
        return Err(Error::dim("forward_head", head.weights.len(), z.cols()));
    }
    Ok((0..z.rows())
        .map(|i| dot(&head.weights, z.row(i)) + head.bias)
        .collect())
}

/// The treated (`t = 1`) and control (`t = 0`) heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heads {
    pub treated: HeadParams,
    pub control: HeadParams,
}

impl Heads {
    pub fn init(rng: &mut Rng) -> Self {
        let treated = HeadParams::init(rng);
        let control = HeadParams::init(rng);
        Self { treated, control }
    }

    pub fn zeros() -> Self {
        Self {
            treated: HeadParams::zeros(),
            control: HeadParams::zeros(),
        }
    }

    pub fn for_arm(&self, t: u8) -> &HeadParams {
        if t == 1 {
            &self.treated
        } else {
            &self.control
        }
    }
}

impl Parameters for Heads {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.treated.tensors();
        v.extend(self.control.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.treated.tensors_mut();
        v.extend(self.control.tensors_mut());
        v
    }
}
