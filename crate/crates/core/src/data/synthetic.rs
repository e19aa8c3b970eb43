//! Synthetic non-IID clients with known treatment effects.

use serde::{Deserialize, Serialize};

use super::table::DataTable;
use crate::error::{Error, Result};
use crate::nn::sigmoid;
use crate::rng::Rng;

/// Lower edge of the generated propensity range; the upper edge is `1 - PROPENSITY_FLOOR`.
pub const PROPENSITY_FLOOR: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_per_client: usize,
    pub clients: usize,
    pub features: usize,
    /// Scale of each client's random feature-mean offset.
    pub client_shift_scale: f64,
    pub propensity_weights: Vec<f64>,
    pub baseline_weights: Vec<f64>,
    pub effect_weights: Vec<f64>,
    pub effect_scale: f64,
}

impl SyntheticSpec {
    /// Moderately confounded data with a heterogeneous effect carried by
    /// features 2 and 3.
    pub fn with_defaults(n_per_client: usize, clients: usize, features: usize) -> Self {
        let pattern = |vals: &[f64]| -> Vec<f64> {
            (0..features).map(|j| vals.get(j).copied().unwrap_or(0.0)).collect()
        };
        Self {
            n_per_client,
            clients,
            features,
            client_shift_scale: 0.5,
            propensity_weights: pattern(&[0.8, -0.6, 0.0, 0.3]),
            baseline_weights: pattern(&[0.4, 0.3, -0.3, 0.0, 0.2]),
            effect_weights: pattern(&[0.0, 0.0, 1.0, -0.7]),
            effect_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_client == 0 || self.clients == 0 || self.features == 0 {
            return Err(Error::Validation(
                "synthetic spec needs positive n_per_client, clients and features".into(),
            ));
        }
        for (name, w) in [
            ("propensity_weights", &self.propensity_weights),
            ("baseline_weights", &self.baseline_weights),
            ("effect_weights", &self.effect_weights),
        ] {
            if w.len() != self.features {
                return Err(Error::Validation(format!(
                    "{name} has {} entries, expected {}",
                    w.len(),
                    self.features
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("{name} must be finite")));
            }
        }
        if !self.client_shift_scale.is_finite() || !self.effect_scale.is_finite() {
            return Err(Error::Validation("synthetic scales must be finite".into()));
        }
        Ok(())
    }
}

/// Per-row quantities the learner never sees.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTruth {
    pub tau: Vec<f64>,
    pub propensity: Vec<f64>,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
}

pub fn client_label(k: usize) -> String {
    format!("client_{k:03}")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn generate_synthetic(spec: &SyntheticSpec, rng: &mut Rng) -> Result<(DataTable, HiddenTruth)> {
    spec.validate()?;
    let d = spec.features;
    let n = spec.n_per_client * spec.clients;
    let mut features = Vec::with_capacity(n * d);
    let mut treatment = Vec::with_capacity(n);
    let mut outcome = Vec::with_capacity(n);
    let mut client_id = Vec::with_capacity(n);
    let mut truth = HiddenTruth {
        tau: Vec::with_capacity(n),
        propensity: Vec::with_capacity(n),
        mu0: Vec::with_capacity(n),
        mu1: Vec::with_capacity(n),
    };
    let shifts: Vec<Vec<f64>> = (0..spec.clients)
        .map(|_| (0..d).map(|_| spec.client_shift_scale * rng.normal()).collect())
        .collect();
    let mut x = vec![0.0; d];
    for (k, shift) in shifts.iter().enumerate() {
        let label = client_label(k);
        for _ in 0..spec.n_per_client {
            for (xj, s) in x.iter_mut().zip(shift) {
                *xj = s + rng.normal();
            }
            let e = PROPENSITY_FLOOR + (1.0 - 2.0 * PROPENSITY_FLOOR) * sigmoid(dot(&spec.propensity_weights, &x));
            let base = dot(&spec.baseline_weights, &x);
            let mu0 = sigmoid(base);
            let mu1 = sigmoid(base + spec.effect_scale * dot(&spec.effect_weights, &x));
            let t = rng.bernoulli(e) as u8;
            let y = rng.bernoulli(if t == 1 { mu1 } else { mu0 }) as u8;
            features.extend_from_slice(&x);
            treatment.push(t);
            outcome.push(y);
            client_id.push(label.clone());
            truth.tau.push(mu1 - mu0);
            truth.propensity.push(e);
            truth.mu0.push(mu0);
            truth.mu1.push(mu1);
        }
    }
    let names = (0..d).map(|j| format!("x{j}")).collect();
    let table = DataTable::new(names, features, treatment, outcome, client_id)?;
    Ok((table, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_effect_has_zero_truth() {
        let mut spec = SyntheticSpec::with_defaults(200, 2, 5);
        spec.effect_scale = 0.0;
        let (_, truth) = generate_synthetic(&spec, &mut Rng::new(1)).unwrap();
        assert!(truth.tau.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn propensities_stay_bounded() {
        let mut spec = SyntheticSpec::with_defaults(500, 2, 4);
        spec.propensity_weights = vec![20.0, -20.0, 5.0, 0.0];
        let (_, truth) = generate_synthetic(&spec, &mut Rng::new(2)).unwrap();
        assert!(truth.propensity.iter().all(|&e| e > 0.019 && e < 0.981));
        assert!(truth.propensity.iter().all(|&e| (PROPENSITY_FLOOR..=1.0 - PROPENSITY_FLOOR).contains(&e)));
    }

    #[test]
    fn treated_fraction_matches_mean_propensity() {
        let spec = SyntheticSpec::with_defaults(5000, 2, 6);
        let (table, truth) = generate_synthetic(&spec, &mut Rng::new(3)).unwrap();
        let n = table.n_rows() as f64;
        let treated = table.treatment().iter().filter(|&&t| t == 1).count() as f64 / n;
        let mean_e = truth.propensity.iter().sum::<f64>() / n;
        // Var of a sum of independent Bernoulli(e_i) is sum e_i (1 - e_i).
        let var = truth.propensity.iter().map(|e| e * (1.0 - e)).sum::<f64>() / (n * n);
        assert!((treated - mean_e).abs() < 3.0 * var.sqrt(), "{treated} vs {mean_e}");
    }

    #[test]
    fn labels_sort_lexicographically() {
        let labels: Vec<String> = (0..12).map(client_label).collect();
        let mut sorted = labels.clone();
        sorted.sort();
        assert_eq!(labels, sorted);
    }

    #[test]
    fn wrong_weight_length_rejected() {
        let mut spec = SyntheticSpec::with_defaults(10, 1, 3);
        spec.effect_weights.push(1.0);
        assert!(generate_synthetic(&spec, &mut Rng::new(0)).is_err());
    }
}
