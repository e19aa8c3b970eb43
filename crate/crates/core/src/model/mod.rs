//! Two-head uplift estimator, propensity model and the doubly robust
//! pseudo-effect diagnostic.

pub mod adapter;

pub use adapter::{adapter_backward, apply_adapter, AdapterCache, AdapterParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    forward_head, forward_trunk, sigmoid, train_logistic, Heads, LogisticConfig, LogisticModel, Matrix,
    TrunkParams,
};
use crate::rng::Rng;

/// Shared trunk, treated/control heads and an optional client adapter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoHeadModel {
    pub trunk: TrunkParams,
    pub heads: Heads,
    #[serde(default)]
    pub adapter: Option<AdapterParams>,
}

impl TwoHeadModel {
    /// Trunk layers first, then treated and control heads, from one stream.
    pub fn init(input_dim: usize, rng: &mut Rng) -> Self {
        let trunk = TrunkParams::init(input_dim, rng);
        let heads = Heads::init(rng);
        Self {
            trunk,
            heads,
            adapter: None,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    /// Cut-layer representation, after the adapter when one is attached.
    pub fn representation(&self, x: &Matrix) -> Result<Matrix> {
        let (z, _) = forward_trunk(&self.trunk, x)?;
        match &self.adapter {
            Some(a) => Ok(apply_adapter(&z, a)?.0),
            None => Ok(z),
        }
    }

    pub fn with_adapter(&self, adapter: Option<&AdapterParams>) -> TwoHeadModel {
        TwoHeadModel {
            trunk: self.trunk.clone(),
            heads: self.heads.clone(),
            adapter: adapter.cloned(),
        }
    }
}

/// `(mu1, mu0)`: both heads evaluated on the same representation.
pub fn predict_mu(model: &TwoHeadModel, x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let z = model.representation(x)?;
    let mu1 = forward_head(&model.heads.treated, &z)?.into_iter().map(sigmoid).collect();
    let mu0 = forward_head(&model.heads.control, &z)?.into_iter().map(sigmoid).collect();
    Ok((mu1, mu0))
}

/// `t * mu1 + (1 - t) * mu0`, row-wise.
pub fn factual_prob(mu1: &[f64], mu0: &[f64], t: &[u8]) -> Result<Vec<f64>> {
    if mu1.len() != mu0.len() || mu1.len() != t.len() {
        return Err(Error::dim("factual_prob", mu1.len(), mu0.len().min(t.len())));
    }
    Ok(t.iter()
        .zip(mu1.iter().zip(mu0))
        .map(|(&ti, (&a, &b))| if ti == 1 { a } else { b })
        .collect())
}

/// `mu1 - mu0`, row-wise.
pub fn uplift_score(mu1: &[f64], mu0: &[f64]) -> Result<Vec<f64>> {
    if mu1.len() != mu0.len() {
        return Err(Error::dim("uplift_score", mu1.len(), mu0.len()));
    }
    Ok(mu1.iter().zip(mu0).map(|(a, b)| a - b).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpliftScores {
    pub mu1: Vec<f64>,
    pub mu0: Vec<f64>,
    pub tau: Vec<f64>,
    pub p_factual: Vec<f64>,
}

pub fn score(model: &TwoHeadModel, x: &Matrix, t: &[u8]) -> Result<UpliftScores> {
    let (mu1, mu0) = predict_mu(model, x)?;
    let tau = uplift_score(&mu1, &mu0)?;
    let p_factual = factual_prob(&mu1, &mu0, t)?;
    Ok(UpliftScores {
        mu1,
        mu0,
        tau,
        p_factual,
    })
}

/// Clamp on propensity predictions.
pub const PROPENSITY_EPS: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub logistic: LogisticModel,
}

impl PropensityModel {
    /// Predicted treatment probability, clamped into `[eps, 1 - eps]`.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        Ok(self
            .logistic
            .predict_proba(x)?
            .into_iter()
            .map(|p| p.clamp(PROPENSITY_EPS, 1.0 - PROPENSITY_EPS))
            .collect())
    }
}

pub fn fit_propensity(x: &Matrix, t: &[u8]) -> Result<PropensityModel> {
    let treated = t.iter().filter(|&&v| v == 1).count();
    if treated == 0 || treated == t.len() {
        return Err(Error::DegenerateLabels(format!(
            "propensity fit needs both arms, got {treated} treated of {}",
            t.len()
        )));
    }
    Ok(PropensityModel {
        logistic: train_logistic(x, t, &LogisticConfig::default())?,
    })
}

/// Doubly robust pseudo-effect per row:
/// `(mu1 - mu0) + (t - e) / (e (1 - e)) * (y - mu_t)`.
pub fn dr_pseudo_effect(mu1: &[f64], mu0: &[f64], e: &[f64], t: &[u8], y: &[u8]) -> Result<Vec<f64>> {
    let n = mu1.len();
    if mu0.len() != n || e.len() != n || t.len() != n || y.len() != n {
        return Err(Error::dim("dr_pseudo_effect", n, mu0.len().min(e.len()).min(t.len()).min(y.len())));
    }
    if let Some(bad) = e.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Contract(format!(
            "propensity {bad} must be clamped strictly inside (0, 1)"
        )));
    }
    let mu_t = factual_prob(mu1, mu0, t)?;
    Ok((0..n)
        .map(|i| {
            let ti = f64::from(t[i]);
            (mu1[i] - mu0[i]) + (ti - e[i]) / (e[i] * (1.0 - e[i])) * (f64::from(y[i]) - mu_t[i])
        })
        .collect())
}
