use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::matrix::{dot, l2_norm};
use crate::nn::Matrix;
use crate::rng::Rng;

/// Per-row L2 clipping followed by additive Gaussian noise on transmitted
/// activations. `clip_norm = f64::INFINITY` disables clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseConfig {
    pub clip_norm: f64,
    pub noise_sigma: f64,
}

impl DefenseConfig {
    pub const OFF: DefenseConfig = DefenseConfig {
        clip_norm: f64::INFINITY,
        noise_sigma: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Validation(format!("clip norm must be > 0, got {}", self.clip_norm)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Validation(format!(
                "noise sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    pub fn is_off(&self) -> bool {
        self.clip_norm == f64::INFINITY && self.noise_sigma == 0.0
    }
}

/// Per-row clip scales, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DefenseCache {
    scales: Vec<f64>,
}

pub fn apply_defense(z: &Matrix, defense: &DefenseConfig, rng: &mut Rng) -> Result<Matrix> {
    Ok(defend(z, defense, rng)?.0)
}

pub(crate) fn defend(z: &Matrix, defense: &DefenseConfig, rng: &mut Rng) -> Result<(Matrix, DefenseCache)> {
    defense.validate()?;
    let mut out = z.clone();
    let mut scales = Vec::with_capacity(z.rows());
    for i in 0..z.rows() {
        let row = out.row_mut(i);
        let norm = l2_norm(row);
        let scale = if norm > defense.clip_norm { defense.clip_norm / norm } else { 1.0 };
        if scale < 1.0 {
            for v in row.iter_mut() {
                *v *= scale;
            }
        }
        scales.push(scale);
    }
    if defense.noise_sigma > 0.0 {
        for v in out.data_mut() {
            *v += defense.noise_sigma * rng.normal();
        }
    }
    Ok((out, DefenseCache { scales }))
}

/// Gradient w.r.t. the pre-defense activations: exact through the clip
/// scaling, straight-through on the noise.
pub(crate) fn defense_backward(z: &Matrix, cache: &DefenseCache, grad_sent: &Matrix) -> Matrix {
    let mut grad = grad_sent.clone();
    for (i, &scale) in cache.scales.iter().enumerate() {
        if scale < 1.0 {
            let zi = z.row(i);
            let norm_sq = dot(zi, zi);
            let proj = dot(zi, grad_sent.row(i)) / norm_sq;
            for (g, &zv) in grad.row_mut(i).iter_mut().zip(zi) {
                *g = scale * (*g - proj * zv);
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_region_is_bit_exact() {
        let z = Matrix::from_rows(&[vec![0.3, 0.4], vec![0.0, 0.0], vec![-0.6, 0.8]]).unwrap();
        let d = DefenseConfig {
            clip_norm: 1.0,
            noise_sigma: 0.0,
        };
        assert_eq!(apply_defense(&z, &d, &mut Rng::new(0)).unwrap(), z);
        assert_eq!(apply_defense(&z, &DefenseConfig::OFF, &mut Rng::new(0)).unwrap(), z);
    }

    #[test]
    fn clips_to_norm() {
        let z = Matrix::from_rows(&[vec![1.2, 1.6]]).unwrap();
        let d = DefenseConfig {
            clip_norm: 1.0,
            noise_sigma: 0.0,
        };
        let out = apply_defense(&z, &d, &mut Rng::new(0)).unwrap();
        assert!((out.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((out.get(0, 1) - 0.8).abs() < 1e-15);
        assert!((l2_norm(out.row(0)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn noise_variance() {
        let z = Matrix::zeros(1000, 100);
        let d = DefenseConfig {
            clip_norm: 1.0,
            noise_sigma: 0.05,
        };
        let out = apply_defense(&z, &d, &mut Rng::new(17)).unwrap();
        let msq = out.data().iter().map(|v| v * v).sum::<f64>() / out.data().len() as f64;
        assert!((msq / 0.0025 - 1.0).abs() < 0.05, "{msq}");
    }

    #[test]
    fn invalid_configs_rejected() {
        let z = Matrix::zeros(1, 2);
        for d in [
            DefenseConfig { clip_norm: 0.0, noise_sigma: 0.0 },
            DefenseConfig { clip_norm: 1.0, noise_sigma: -0.1 },
            DefenseConfig { clip_norm: f64::NAN, noise_sigma: 0.0 },
        ] {
            assert!(apply_defense(&z, &d, &mut Rng::new(0)).is_err());
        }
    }

    #[test]
    fn clip_gradient_matches_finite_differences() {
        let mut rng = Rng::new(5);
        let z = Matrix::from_vec(3, 4, (0..12).map(|_| 2.0 * rng.normal()).collect()).unwrap();
        let w = Matrix::from_vec(3, 4, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let d = DefenseConfig {
            clip_norm: 1.0,
            noise_sigma: 0.0,
        };
        let f = |z: &Matrix| -> f64 {
            let out = apply_defense(z, &d, &mut Rng::new(0)).unwrap();
            out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = defend(&z, &d, &mut Rng::new(0)).unwrap();
        let g = defense_backward(&z, &cache, &w);
        let h = 1e-6;
        for idx in 0..12 {
            let mut p = z.clone();
            let mut m = z.clone();
            p.data_mut()[idx] += h;
            m.data_mut()[idx] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - g.data()[idx]).abs() < 1e-7, "{idx}: {fd} vs {}", g.data()[idx]);
        }
    }
}
