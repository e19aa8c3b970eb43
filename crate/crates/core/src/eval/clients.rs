use serde::{Deserialize, Serialize};

use super::curve::uplift_curve;
use super::rank::auroc;
use crate::error::{Error, Result};

/// Mean, population standard deviation and minimum of a set of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub worst: f64,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let worst = values.iter().copied().fold(f64::INFINITY, f64::min);
    Some(Summary {
        mean,
        std: var.sqrt(),
        // guards mean < worst by one ulp when all values are equal
        worst: worst.min(mean),
    })
}

/// One client's evaluation rows (already trimmed).
#[derive(Debug, Clone)]
pub struct ClientEval {
    pub client_id: String,
    pub p_factual: Vec<f64>,
    pub tau: Vec<f64>,
    pub t: Vec<u8>,
    pub y: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientScore {
    pub client_id: String,
    pub n: usize,
    pub auroc: f64,
    pub auuc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub clients: Vec<ClientScore>,
    /// `(client_id, reason)` for clients left out of the summary.
    pub excluded: Vec<(String, String)>,
    pub auroc: Summary,
    pub auuc: Summary,
}

pub fn client_metrics(evals: &[ClientEval], grid: &[f64]) -> Result<ClientMetrics> {
    let mut clients = Vec::new();
    let mut excluded = Vec::new();
    for e in evals {
        let scored = auroc(&e.p_factual, &e.y).and_then(|a| Ok((a, uplift_curve(&e.tau, &e.t, &e.y, grid)?.auuc)));
        match scored {
            Ok((auroc, auuc)) => clients.push(ClientScore {
                client_id: e.client_id.clone(),
                n: e.y.len(),
                auroc,
                auuc,
            }),
            Err(err) => {
                log::warn!("client {} excluded from per-client metrics: {err}", e.client_id);
                excluded.push((e.client_id.clone(), err.to_string()));
            }
        }
    }
    let aurocs: Vec<f64> = clients.iter().map(|c| c.auroc).collect();
    let auucs: Vec<f64> = clients.iter().map(|c| c.auuc).collect();
    match (summarize(&aurocs), summarize(&auucs)) {
        (Some(auroc), Some(auuc)) => Ok(ClientMetrics {
            clients,
            excluded,
            auroc,
            auuc,
        }),
        _ => Err(Error::EvaluationInfeasible("no client has evaluable test rows".into())),
    }
}
