//! Ranking and uplift metrics: AUROC, positivity trimming, uplift curves,
//! random-ranking baselines and per-client summaries.

pub mod clients;
pub mod curve;
pub mod rank;
pub mod trim;

pub use clients::{client_metrics, summarize, ClientEval, ClientMetrics, ClientScore, Summary};
pub use curve::{default_grid, random_ranking_auuc, trapezoid_auuc, uplift_curve, UpliftCurve};
pub use rank::{auroc, mid_ranks, spearman};
pub use trim::{apply_trim, trim_positivity, trim_quantile, TrimResult, TrimRule};

use serde::{Deserialize, Serialize};

use crate::collab::TrainOutcome;
use crate::data::PreparedData;
use crate::error::Result;
use crate::model::{dr_pseudo_effect, score, PropensityModel, UpliftScores};

/// Test-split evaluation of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// AUROC of the factual probability on every test row.
    pub auroc: f64,
    /// Curve over the positivity-kept test rows.
    pub curve: UpliftCurve,
    pub trim_rate: f64,
    /// Kept positions within the test split.
    pub kept: Vec<usize>,
    pub clients: ClientMetrics,
    /// Mean doubly robust pseudo-effect and mean predicted uplift over the
    /// kept rows.
    pub dr_mean: f64,
    pub tau_mean: f64,
}

/// Scores of the given global rows (in the given order), each row scored
/// with its own client's view of the model. Also returns each row's client.
pub fn score_rows(outcome: &TrainOutcome, data: &PreparedData, rows: &[usize]) -> Result<(UpliftScores, Vec<usize>)> {
    let client_of = data.client_index();
    let n = rows.len();
    let mut scores = UpliftScores {
        mu1: vec![0.0; n],
        mu0: vec![0.0; n],
        tau: vec![0.0; n],
        p_factual: vec![0.0; n],
    };
    let mut by_client: Vec<Vec<usize>> = vec![Vec::new(); data.clients.len()];
    for (p, &g) in rows.iter().enumerate() {
        by_client[client_of[g]].push(p);
    }
    for (k, positions) in by_client.iter().enumerate() {
        if positions.is_empty() {
            continue;
        }
        let global: Vec<usize> = positions.iter().map(|&p| rows[p]).collect();
        let (x, t, _) = data.subset(&global);
        let s = score(&outcome.client_model(k), &x, &t)?;
        for (j, &p) in positions.iter().enumerate() {
            scores.mu1[p] = s.mu1[j];
            scores.mu0[p] = s.mu0[j];
            scores.tau[p] = s.tau[j];
            scores.p_factual[p] = s.p_factual[j];
        }
    }
    let clients = rows.iter().map(|&g| client_of[g]).collect();
    Ok((scores, clients))
}

pub fn evaluate(
    outcome: &TrainOutcome,
    data: &PreparedData,
    propensity: &PropensityModel,
    rule: TrimRule,
    grid: &[f64],
) -> Result<Evaluation> {
    let (scores, client_of) = score_rows(outcome, data, &data.split.test)?;
    let (x, t, y) = data.subset(&data.split.test);
    let e = propensity.predict(&x)?;
    let trim = apply_trim(&e, rule)?;
    let pick = |v: &[f64]| -> Vec<f64> { trim.keep.iter().map(|&i| v[i]).collect() };
    let pick_u8 = |v: &[u8]| -> Vec<u8> { trim.keep.iter().map(|&i| v[i]).collect() };

    let auroc_all = auroc(&scores.p_factual, &y)?;
    let (tau_k, t_k, y_k) = (pick(&scores.tau), pick_u8(&t), pick_u8(&y));
    let curve = uplift_curve(&tau_k, &t_k, &y_k, grid)?;
    let dr = dr_pseudo_effect(&pick(&scores.mu1), &pick(&scores.mu0), &pick(&e), &t_k, &y_k)?;
    let kept = trim.keep.len() as f64;

    let evals: Vec<ClientEval> = data
        .clients
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let rows: Vec<usize> = trim.keep.iter().copied().filter(|&i| client_of[i] == k).collect();
            ClientEval {
                client_id: c.client_id.clone(),
                p_factual: rows.iter().map(|&i| scores.p_factual[i]).collect(),
                tau: rows.iter().map(|&i| scores.tau[i]).collect(),
                t: rows.iter().map(|&i| t[i]).collect(),
                y: rows.iter().map(|&i| y[i]).collect(),
            }
        })
        .collect();
    Ok(Evaluation {
        auroc: auroc_all,
        trim_rate: trim.trim_rate,
        kept: trim.keep.clone(),
        clients: client_metrics(&evals, grid)?,
        dr_mean: dr.iter().sum::<f64>() / kept,
        tau_mean: tau_k.iter().sum::<f64>() / kept,
        curve,
    })
}
