use crate::error::{Error, Result};
use crate::nn::Parameters;

/// Data-size weighted average `sum_k (n_k / sum_j n_j) w_k`, accumulated in
/// client order.
pub fn fedavg_aggregate<P: Parameters + Clone>(param_sets: &[P], sizes: &[usize]) -> Result<P> {
    let first = param_sets
        .first()
        .ok_or_else(|| Error::Empty("fedavg_aggregate needs at least one parameter set".into()))?;
    if sizes.len() != param_sets.len() {
        return Err(Error::dim("fedavg_aggregate sizes", param_sets.len(), sizes.len()));
    }
    if sizes.iter().any(|&n| n == 0) {
        return Err(Error::Validation("fedavg_aggregate sizes must be positive".into()));
    }
    let shapes: Vec<usize> = first.tensors().iter().map(|t| t.len()).collect();
    for p in &param_sets[1..] {
        let s: Vec<usize> = p.tensors().iter().map(|t| t.len()).collect();
        if s != shapes {
            return Err(Error::dim("fedavg_aggregate shapes", format!("{shapes:?}"), format!("{s:?}")));
        }
    }
    let total: usize = sizes.iter().sum();
    let mut out = first.zeroed();
    for (p, &n) in param_sets.iter().zip(sizes) {
        let weight = n as f64 / total as f64;
        for (dst, src) in out.tensors_mut().into_iter().zip(p.tensors()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += weight * s;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{HeadParams, TrunkParams};
    use crate::rng::Rng;

    #[test]
    fn scalar_hand_value() {
        let mut a = HeadParams::zeros();
        let mut b = HeadParams::zeros();
        a.bias = 0.0;
        b.bias = 4.0;
        let out = fedavg_aggregate(&[a, b], &[1, 3]).unwrap();
        assert_eq!(out.bias, 3.0);
    }

    #[test]
    fn single_and_identical_inputs() {
        let mut rng = Rng::new(1);
        let t = TrunkParams::init(3, &mut rng);
        assert_eq!(fedavg_aggregate(std::slice::from_ref(&t), &[17]).unwrap(), t);
        let avg = fedavg_aggregate(&[t.clone(), t.clone(), t.clone()], &[2, 2, 2]).unwrap();
        for (x, y) in avg.flatten().iter().zip(t.flatten()) {
            assert!((x - y).abs() <= 1e-15 * y.abs().max(1.0));
        }
    }

    #[test]
    fn errors() {
        let mut rng = Rng::new(1);
        let a = TrunkParams::init(3, &mut rng);
        let b = TrunkParams::init(4, &mut rng);
        assert!(fedavg_aggregate::<TrunkParams>(&[], &[]).is_err());
        assert!(fedavg_aggregate(&[a.clone(), b], &[1, 1]).is_err());
        assert!(fedavg_aggregate(&[a.clone()], &[0]).is_err());
        assert!(fedavg_aggregate(&[a], &[1, 2]).is_err());
    }
}
