//! Membership inference audit at the cut layer and the privacy/utility
//! sweep over activation defenses.
//!
//! The audit measures one lightweight attacker only: its AUC is an empirical
//! audit signal rather than a proof of privacy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collab::defense::DefenseConfig;
use crate::collab::apply_defense;
use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::eval::auroc;
use crate::model::TwoHeadModel;
use crate::nn::{train_logistic, LogisticConfig, Matrix};
use crate::rng::{stream, Rng};

pub const AUDIT_CAVEAT: &str =
    "MIA AUC is an empirical audit signal rather than a proof of privacy; it measures one logistic attacker on cut-layer representations.";

pub const DEFAULT_SAMPLE_CAP: usize = 500;
pub const MIN_SAMPLE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    /// Rows per class; `None` uses `min(500, member pool, non-member pool)`.
    #[serde(default)]
    pub sample_size: Option<usize>,
    #[serde(default = "default_attacker_fraction")]
    pub attacker_train_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Shuffle membership labels before fitting (a calibration control).
    #[serde(default)]
    pub permute_labels: bool,
}

fn default_attacker_fraction() -> f64 {
    0.5
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            sample_size: None,
            attacker_train_fraction: 0.5,
            seed: 0,
            permute_labels: false,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.attacker_train_fraction > 0.0 && self.attacker_train_fraction < 1.0) {
            return Err(Error::Validation(format!(
                "attacker_train_fraction must be in (0, 1), got {}",
                self.attacker_train_fraction
            )));
        }
        if let Some(m) = self.sample_size {
            if m < MIN_SAMPLE {
                return Err(Error::Validation(format!("audit sample size must be >= {MIN_SAMPLE}, got {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub client_id: String,
    pub attack_auc: f64,
    pub m: usize,
    pub converged: bool,
}

fn sample_size(config: &AuditConfig, members: usize, non_members: usize) -> Result<usize> {
    let pool = members.min(non_members);
    let m = match config.sample_size {
        Some(m) if m > pool => {
            return Err(Error::AuditInfeasible(format!(
                "requested {m} rows per class but pools hold {members} members and {non_members} non-members"
            )))
        }
        Some(m) => m,
        None => DEFAULT_SAMPLE_CAP.min(pool),
    };
    if m < MIN_SAMPLE {
        return Err(Error::AuditInfeasible(format!(
            "pools hold {members} members and {non_members} non-members, need {MIN_SAMPLE} of each"
        )));
    }
    Ok(m)
}

/// Standardizes columns of `z` in place with statistics of `rows`.
fn standardize(z: &mut Matrix, rows: &[usize]) {
    let n = rows.len() as f64;
    for c in 0..z.cols() {
        let mean = rows.iter().map(|&r| z.get(r, c)).sum::<f64>() / n;
        let var = rows.iter().map(|&r| (z.get(r, c) - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for r in 0..z.rows() {
            let v = if std > 1e-12 { (z.get(r, c) - mean) / std } else { 0.0 };
            z.set(r, c, v);
        }
    }
}

/// Membership inference on cut-layer representations of one client.
///
/// Members come from the client's train split and non-members from its
/// test split. Representations pass through the model's adapter, and
/// through `defense` when given, so the attacker sees what the server saw.
/// The model is only read.
pub fn mia_audit(
    model: &TwoHeadModel,
    client: &ClientDataset,
    defense: Option<&DefenseConfig>,
    config: &AuditConfig,
) -> Result<AuditResult> {
    config.validate()?;
    if client.input_dim() != model.input_dim() {
        return Err(Error::dim("mia_audit features", model.input_dim(), client.input_dim()));
    }
    if client.train.iter().any(|r| client.test.binary_search(r).is_ok()) {
        return Err(Error::Contract("member and non-member pools overlap".into()));
    }
    let m = sample_size(config, client.train.len(), client.test.len())?;
    let mut rng = Rng::derive(config.seed, &[stream::AUDIT]);
    let mut members = client.train.clone();
    rng.shuffle(&mut members);
    let mut non_members = client.test.clone();
    rng.shuffle(&mut non_members);
    let rows: Vec<usize> = members[..m].iter().chain(&non_members[..m]).copied().collect();
    let mut labels: Vec<u8> = (0..2 * m).map(|i| u8::from(i < m)).collect();

    let mut z = model.representation(&client.x.select_rows(&rows))?;
    if let Some(d) = defense {
        z = apply_defense(&z, d, &mut Rng::derive(config.seed, &[stream::AUDIT, stream::DEFENSE]))?;
    }
    if config.permute_labels {
        rng.shuffle(&mut labels);
    }

    // stratified attacker split
    let mut fit = Vec::new();
    let mut held = Vec::new();
    for class in [1u8, 0u8] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        rng.shuffle(&mut idx);
        let n_fit = ((idx.len() as f64 * config.attacker_train_fraction).round() as usize).clamp(1, idx.len() - 1);
        fit.extend_from_slice(&idx[..n_fit]);
        held.extend_from_slice(&idx[n_fit..]);
    }
    fit.sort_unstable();
    held.sort_unstable();
    standardize(&mut z, &fit);

    let attacker = train_logistic(
        &z.select_rows(&fit),
        &fit.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
        &LogisticConfig::default(),
    )?;
    let scores: Vec<f64> = held.iter().map(|&i| attacker.logit(z.row(i))).collect();
    let attack_auc = auroc(&scores, &held.iter().map(|&i| labels[i]).collect::<Vec<_>>())?;
    Ok(AuditResult {
        client_id: client.client_id.clone(),
        attack_auc,
        m,
        converged: attacker.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub seed: u64,
    pub auuc: f64,
    pub mia_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub defense: DefenseConfig,
    pub samples: Vec<SweepSample>,
    pub mean_auuc: f64,
    pub mean_mia_auc: f64,
}

/// One train, audit and evaluate cycle per defense point and seed. `cell`
/// returns `(AUUC, MIA AUC)`; points come back sigma-major, clip-minor.
pub fn privacy_utility_sweep<F>(sigmas: &[f64], clips: &[f64], seeds: &[u64], cell: F) -> Result<Vec<SweepPoint>>
where
    F: Fn(&DefenseConfig, u64) -> Result<(f64, f64)> + Sync,
{
    if sigmas.is_empty() || clips.is_empty() || seeds.is_empty() {
        return Err(Error::Empty("sweep needs at least one sigma, clip and seed".into()));
    }
    let points: Vec<DefenseConfig> = sigmas
        .iter()
        .flat_map(|&s| {
            clips.iter().map(move |&c| DefenseConfig {
                clip_norm: c,
                noise_sigma: s,
            })
        })
        .collect();
    for p in &points {
        p.validate()?;
    }
    let jobs: Vec<(usize, u64)> = (0..points.len()).flat_map(|p| seeds.iter().map(move |&s| (p, s))).collect();
    let results: Vec<Result<(f64, f64)>> = jobs.par_iter().map(|&(p, s)| cell(&points[p], s)).collect();
    let mut results = results.into_iter();
    points
        .into_iter()
        .map(|defense| {
            let samples = seeds
                .iter()
                .map(|&seed| {
                    let (auuc, mia_auc) = results.next().expect("one result per job")?;
                    Ok(SweepSample { seed, auuc, mia_auc })
                })
                .collect::<Result<Vec<_>>>()?;
            let n = samples.len() as f64;
            Ok(SweepPoint {
                defense,
                mean_auuc: samples.iter().map(|s| s.auuc).sum::<f64>() / n,
                mean_mia_auc: samples.iter().map(|s| s.mia_auc).sum::<f64>() / n,
                samples,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_size_rules() {
        let c = AuditConfig::default();
        assert_eq!(sample_size(&c, 800, 900).unwrap(), 500);
        assert_eq!(sample_size(&c, 40, 30).unwrap(), 30);
        assert!(matches!(sample_size(&c, 40, 9), Err(Error::AuditInfeasible(_))));
        let c = AuditConfig {
            sample_size: Some(50),
            ..AuditConfig::default()
        };
        assert!(matches!(sample_size(&c, 40, 100), Err(Error::AuditInfeasible(_))));
    }

    #[test]
    fn sweep_cardinality_and_order() {
        let pts = privacy_utility_sweep(&[0.0, 0.05, 0.5], &[1.0, f64::INFINITY], &[1, 2], |d, s| {
            Ok((d.noise_sigma + s as f64, d.clip_norm.min(9.0)))
        })
        .unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1].defense.clip_norm, f64::INFINITY);
        assert_eq!(pts[2].defense.noise_sigma, 0.05);
        assert_eq!(pts[5].samples[1].auuc, 2.5);
        assert_eq!(pts[0].mean_auuc, 1.5);
    }
}
