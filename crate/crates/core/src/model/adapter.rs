use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{relu, relu_backward};
use crate::nn::{DenseLayer, Matrix, Parameters, CUT_DIM};
use crate::rng::Rng;

/// Client-local residual correction `z + a(z)` at the cut layer, with
/// `a(z) = W_out relu(W_in z + b_in) + b_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterParams {
    pub inner: DenseLayer,
    pub outer: DenseLayer,
}

impl AdapterParams {
    /// Glorot inner layer and zero outer layer: the identity map at
    /// initialization, but with a non-zero gradient for the outer layer.
    pub fn init(rng: &mut Rng) -> Self {
        Self {
            inner: DenseLayer::glorot(CUT_DIM, CUT_DIM, rng),
            outer: DenseLayer::zeros(CUT_DIM, CUT_DIM),
        }
    }

    pub fn zeros() -> Self {
        Self {
            inner: DenseLayer::zeros(CUT_DIM, CUT_DIM),
            outer: DenseLayer::zeros(CUT_DIM, CUT_DIM),
        }
    }
}

impl Parameters for AdapterParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.inner.tensors();
        v.extend(self.outer.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.inner.tensors_mut();
        v.extend(self.outer.tensors_mut());
        v
    }
}

#[derive(Debug, Clone)]
pub struct AdapterCache {
    input: Matrix,
    pre: Matrix,
    hidden: Matrix,
    params_fingerprint: u64,
}

pub fn apply_adapter(z: &Matrix, adapter: &AdapterParams) -> Result<(Matrix, AdapterCache)> {
    if z.cols() != adapter.inner.input_dim() {
        return Err(Error::dim("apply_adapter", adapter.inner.input_dim(), z.cols()));
    }
    let pre = adapter.inner.forward(z)?;
    let hidden = relu(&pre);
    let correction = adapter.outer.forward(&hidden)?;
    let mut out = z.clone();
    for (o, c) in out.data_mut().iter_mut().zip(correction.data()) {
        *o += c;
    }
    Ok((
        out,
        AdapterCache {
            input: z.clone(),
            pre,
            hidden,
            params_fingerprint: adapter.fingerprint(),
        },
    ))
}

/// Adapter gradients and `dL/dz`, given `dL/dz~`.
pub fn adapter_backward(
    adapter: &AdapterParams,
    cache: &AdapterCache,
    grad_out: &Matrix,
) -> Result<(AdapterParams, Matrix)> {
    if cache.params_fingerprint != adapter.fingerprint() {
        return Err(Error::Contract("adapter cache was produced by different parameters".into()));
    }
    let (outer, mut d_hidden) = adapter.outer.backward(&cache.hidden, grad_out)?;
    relu_backward(&cache.pre, &mut d_hidden);
    let (inner, d_input) = adapter.inner.backward(&cache.input, &d_hidden)?;
    let mut grad_z = grad_out.clone();
    for (g, d) in grad_z.data_mut().iter_mut().zip(d_input.data()) {
        *g += d;
    }
    Ok((AdapterParams { inner, outer }, grad_z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::matrix::l2_norm;

    fn random_z(rng: &mut Rng, rows: usize) -> Matrix {
        Matrix::from_vec(rows, CUT_DIM, (0..rows * CUT_DIM).map(|_| rng.normal().abs()).collect()).unwrap()
    }

    #[test]
    fn zero_adapter_is_identity() {
        let mut rng = Rng::new(1);
        let z = random_z(&mut rng, 5);
        let (out, _) = apply_adapter(&z, &AdapterParams::zeros()).unwrap();
        assert_eq!(out, z);
        let (out, _) = apply_adapter(&z, &AdapterParams::init(&mut rng)).unwrap();
        assert_eq!(out, z);
    }

    #[test]
    fn residual_offset_is_the_correction() {
        let mut rng = Rng::new(2);
        let mut a = AdapterParams::init(&mut rng);
        a.outer = DenseLayer::glorot(CUT_DIM, CUT_DIM, &mut rng);
        let z = random_z(&mut rng, 3);
        let (out, _) = apply_adapter(&z, &a).unwrap();
        let correction = a.outer.forward(&relu(&a.inner.forward(&z).unwrap())).unwrap();
        for i in 0..3 {
            let diff: Vec<f64> = out.row(i).iter().zip(z.row(i)).map(|(o, zi)| o - zi).collect();
            assert!((l2_norm(&diff) - l2_norm(correction.row(i))).abs() < 1e-12);
        }
    }

    /// Central differences of `L = sum(w . z~)` against the analytic pass.
    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let mut a = AdapterParams::init(&mut rng);
        a.outer = DenseLayer::glorot(CUT_DIM, CUT_DIM, &mut rng);
        for b in &mut a.inner.bias {
            *b = 0.3 * rng.normal();
        }
        let z = random_z(&mut rng, 2);
        let w = Matrix::from_vec(2, CUT_DIM, (0..2 * CUT_DIM).map(|_| rng.normal()).collect()).unwrap();
        let loss = |a: &AdapterParams, z: &Matrix| -> f64 {
            let (out, _) = apply_adapter(z, a).unwrap();
            out.data().iter().zip(w.data()).map(|(o, wi)| o * wi).sum()
        };
        let (_, cache) = apply_adapter(&z, &a).unwrap();
        let (grads, grad_z) = adapter_backward(&a, &cache, &w).unwrap();
        let h = 1e-6;

        let analytic = grads.flatten();
        let base = a.flatten();
        for idx in (0..base.len()).step_by(7) {
            let mut plus = a.clone();
            let mut minus = a.clone();
            set_flat(&mut plus, idx, base[idx] + h);
            set_flat(&mut minus, idx, base[idx] - h);
            let fd = (loss(&plus, &z) - loss(&minus, &z)) / (2.0 * h);
            assert!((fd - analytic[idx]).abs() < 1e-6 * (1.0 + fd.abs()), "param {idx}: {fd} vs {}", analytic[idx]);
        }
        for idx in 0..z.data().len() {
            let mut plus = z.clone();
            let mut minus = z.clone();
            plus.data_mut()[idx] += h;
            minus.data_mut()[idx] -= h;
            let fd = (loss(&a, &plus) - loss(&a, &minus)) / (2.0 * h);
            assert!((fd - grad_z.data()[idx]).abs() < 1e-6 * (1.0 + fd.abs()));
            // residual path alone would give w; the adapter path adds to it
        }
        assert!(grad_z.data().iter().zip(w.data()).any(|(g, wi)| (g - wi).abs() > 1e-3));
    }

    fn set_flat(p: &mut AdapterParams, mut idx: usize, v: f64) {
        for t in p.tensors_mut() {
            if idx < t.len() {
                t[idx] = v;
                return;
            }
            idx -= t.len();
        }
    }
}
