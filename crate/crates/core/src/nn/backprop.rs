//! Analytic gradients of the factual cross-entropy objective.
//!
//! The pass is split at the cut layer: [`head_backward`] is what a server
//! computes from the transmitted representation and labels, [`trunk_backward`]
//! is what a client computes from the returned representation gradient.
//! [`backprop`] composes the two and is exactly the centralized gradient.

use super::layers::{relu_backward, Heads, Parameters, TrunkCache, TrunkParams};
use super::loss::{bce, sigmoid};
use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Server-side result: loss, head gradients and the gradient w.r.t. `z`.
#[derive(Debug, Clone)]
pub struct HeadPass {
    pub loss: f64,
    pub heads: Heads,
    pub grad_z: Matrix,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub trunk: TrunkParams,
    pub heads: Heads,
    pub grad_z: Matrix,
}

fn check_labels(n: usize, t: &[u8], y: &[u8]) -> Result<()> {
    if t.len() != n {
        return Err(Error::dim("treatment labels", n, t.len()));
    }
    if y.len() != n {
        return Err(Error::dim("outcome labels", n, y.len()));
    }
    Ok(())
}

/// Mean factual loss for a batch of cut representations.
pub fn head_loss(heads: &Heads, z: &Matrix, t: &[u8], y: &[u8]) -> Result<f64> {
    check_labels(z.rows(), t, y)?;
    let b = z.rows() as f64;
    let mut loss = 0.0;
    for i in 0..z.rows() {
        let head = heads.for_arm(t[i]);
        let p = sigmoid(dot(&head.weights, z.row(i)) + head.bias);
        loss += bce(y[i], p);
    }
    Ok(loss / b)
}

/// Loss and gradients of the heads, routing each row to the head of its arm.
pub fn head_backward(heads: &Heads, z: &Matrix, t: &[u8], y: &[u8]) -> Result<HeadPass> {
    if z.cols() != heads.treated.weights.len() {
        return Err(Error::dim("head_backward", heads.treated.weights.len(), z.cols()));
    }
    check_labels(z.rows(), t, y)?;
    if z.rows() == 0 {
        return Err(Error::Empty("head_backward batch".into()));
    }
    let b = z.rows() as f64;
    let mut grads = heads.zeroed();
    let mut grad_z = Matrix::zeros(z.rows(), z.cols());
    let mut loss = 0.0;
    for i in 0..z.rows() {
        let zi = z.row(i);
        let head = heads.for_arm(t[i]);
        let p = sigmoid(dot(&head.weights, zi) + head.bias);
        loss += bce(y[i], p);
        let d_logit = (p - f64::from(y[i])) / b;
        let g = if t[i] == 1 {
            &mut grads.treated
        } else {
            &mut grads.control
        };
        for (gw, &zj) in g.weights.iter_mut().zip(zi) {
            *gw += d_logit * zj;
        }
        g.bias += d_logit;
        for (gz, &w) in grad_z.row_mut(i).iter_mut().zip(&head.weights) {
            *gz = d_logit * w;
        }
    }
    Ok(HeadPass {
        loss: loss / b,
        heads: grads,
        grad_z,
    })
}

/// Trunk gradients given `dL/dz` and the cache of the forward pass that
/// produced `z` with these exact parameters.
pub fn trunk_backward(trunk: &TrunkParams, cache: &TrunkCache, grad_z: &Matrix) -> Result<TrunkParams> {
    if cache.params_fingerprint != trunk.fingerprint() {
        return Err(Error::Contract(
            "trunk cache was produced by different parameters".into(),
        ));
    }
    if grad_z.shape() != cache.pre2.shape() {
        return Err(Error::dim(
            "trunk_backward grad_z",
            format!("{:?}", cache.pre2.shape()),
            format!("{:?}", grad_z.shape()),
        ));
    }
    let mut d_pre2 = grad_z.clone();
    relu_backward(&cache.pre2, &mut d_pre2);
    let (layer2, mut d_hidden) = trunk.layer2.backward(&cache.hidden, &d_pre2)?;
    relu_backward(&cache.pre1, &mut d_hidden);
    let (layer1, _) = trunk.layer1.backward(&cache.input, &d_hidden)?;
    Ok(TrunkParams { layer1, layer2 })
}

/// Full gradient of the mean factual loss w.r.t. trunk and heads.
pub fn backprop(
    trunk: &TrunkParams,
    heads: &Heads,
    cache: &TrunkCache,
    z: &Matrix,
    t: &[u8],
    y: &[u8],
) -> Result<Gradients> {
    let pass = head_backward(heads, z, t, y)?;
    let trunk_grads = trunk_backward(trunk, cache, &pass.grad_z)?;
    Ok(Gradients {
        loss: pass.loss,
        trunk: trunk_grads,
        heads: pass.heads,
        grad_z: pass.grad_z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::forward_trunk;
    use crate::rng::Rng;

    fn batch(rng: &mut Rng, b: usize, d: usize) -> (Matrix, Vec<u8>, Vec<u8>) {
        let x = Matrix::from_vec(b, d, (0..b * d).map(|_| rng.normal()).collect()).unwrap();
        let t = (0..b).map(|_| rng.bernoulli(0.5) as u8).collect();
        let y = (0..b).map(|_| rng.bernoulli(0.5) as u8).collect();
        (x, t, y)
    }

    #[test]
    fn all_treated_batch_leaves_control_head_untouched() {
        let mut rng = Rng::new(5);
        let trunk = TrunkParams::init(3, &mut rng);
        let heads = Heads::init(&mut rng);
        let (x, _, y) = batch(&mut rng, 6, 3);
        let t = vec![1u8; 6];
        let (z, cache) = forward_trunk(&trunk, &x).unwrap();
        let g = backprop(&trunk, &heads, &cache, &z, &t, &y).unwrap();
        assert!(g.heads.control.flatten().iter().all(|&v| v == 0.0));
        assert!(g.heads.treated.flatten().iter().any(|&v| v != 0.0));

        let mut perturbed = heads.clone();
        perturbed.control.bias += 3.0;
        perturbed.control.weights[0] -= 1.0;
        assert_eq!(
            head_loss(&heads, &z, &t, &y).unwrap(),
            head_loss(&perturbed, &z, &t, &y).unwrap()
        );
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = Rng::new(6);
        let mut trunk = TrunkParams::init(3, &mut rng);
        let heads = Heads::init(&mut rng);
        let (x, t, y) = batch(&mut rng, 4, 3);
        let (z, cache) = forward_trunk(&trunk, &x).unwrap();
        trunk.layer1.bias[0] += 0.1;
        assert!(matches!(
            backprop(&trunk, &heads, &cache, &z, &t, &y),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn stationary_point_has_vanishing_gradient() {
        // Zero trunk: z = 0, so each head reduces to a bias-only fit whose
        // optimum is the logit of that arm's outcome rate.
        let trunk = TrunkParams::zeros(2);
        let mut heads = Heads::zeros();
        let t = vec![1, 1, 1, 1, 0, 0, 0];
        let y = vec![1, 1, 1, 0, 1, 0, 0];
        heads.treated.bias = (0.75f64 / 0.25).ln();
        heads.control.bias = (1.0f64 / 2.0).ln();
        let x = Matrix::zeros(7, 2);
        let (z, cache) = forward_trunk(&trunk, &x).unwrap();
        let g = backprop(&trunk, &heads, &cache, &z, &t, &y).unwrap();
        let norm: f64 = g.heads.flatten().iter().chain(&g.trunk.flatten()).map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm < 1e-6, "gradient norm {norm}");
    }
}
