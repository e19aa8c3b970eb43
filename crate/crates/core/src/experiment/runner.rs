use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Method};
use crate::collab::{train, DefenseConfig, TrainOutcome};
use crate::data::{generate_synthetic, load_csv, prepare, CsvSchema, DataTable, PreparedData};
use crate::error::{Error, Result};
use crate::eval::{auroc, evaluate, random_ranking_auuc, score_rows, Evaluation};
use crate::model::{fit_propensity, PropensityModel};
use crate::privacy::{mia_audit, privacy_utility_sweep, AuditResult, SweepPoint};
use crate::rng::{stream, Rng};

pub fn load_dataset(config: &ExperimentConfig) -> Result<DataTable> {
    if let Some(s) = config.dataset.synthetic_section() {
        return Ok(generate_synthetic(&s.spec(), &mut Rng::derive(s.seed, &[stream::SYNTHETIC]))?.0);
    }
    match &config.dataset.csv {
        Some(c) => load_csv(
            &c.path,
            &CsvSchema {
                treatment: c.treatment.clone(),
                outcome: c.outcome.clone(),
                client: c.client.clone(),
                features: c.features.clone(),
            },
        ),
        None => Err(Error::config("dataset", "no dataset source configured")),
    }
}

/// Split, preprocessing and propensity model of one seed, shared by every
/// method run under that seed.
#[derive(Debug, Clone)]
pub struct SeedData {
    pub seed: u64,
    pub data: PreparedData,
    pub propensity: PropensityModel,
    pub split_hash: String,
}

pub fn split_hash(data: &PreparedData) -> String {
    let mut h = Sha256::new();
    for (name, rows) in [("train", &data.split.train), ("valid", &data.split.valid), ("test", &data.split.test)] {
        h.update(name.as_bytes());
        for r in rows.iter() {
            h.update((*r as u64).to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn prepare_seed(table: &DataTable, config: &ExperimentConfig, seed: u64) -> Result<SeedData> {
    let data = prepare(table, config.split, seed)?;
    let (x, t, _) = data.subset(&data.split.train);
    let propensity = fit_propensity(&x, &t)?;
    let split_hash = split_hash(&data);
    Ok(SeedData {
        seed,
        data,
        propensity,
        split_hash,
    })
}

#[derive(Debug, Clone)]
pub struct AuditRow {
    pub client_id: String,
    /// `Err` holds the reason the audit was infeasible.
    pub result: std::result::Result<AuditResult, String>,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub method: Method,
    pub seed: u64,
    pub split_hash: String,
    pub outcome: TrainOutcome,
    pub defense: Option<DefenseConfig>,
    pub evaluation: Evaluation,
    pub valid_auroc: Option<f64>,
    pub baseline_auuc: (f64, f64),
    pub audits: Vec<AuditRow>,
    /// Mean attack AUC over feasible client audits (split-based methods).
    pub mia_auc: Option<f64>,
}

impl CellResult {
    pub fn comm_bytes(&self) -> u64 {
        self.outcome.ledger.total_bytes()
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub method: Method,
    pub seed: u64,
    pub result: std::result::Result<CellResult, String>,
}

/// Audits every client with training rows against the view of the model
/// the server saw.
pub fn audit_clients(
    config: &ExperimentConfig,
    seed_data: &SeedData,
    outcome: &TrainOutcome,
    defense: Option<&DefenseConfig>,
) -> Vec<AuditRow> {
    seed_data
        .data
        .clients
        .iter()
        .enumerate()
        .map(|(k, client)| {
            let audit_seed = Rng::derive(seed_data.seed, &[stream::AUDIT, k as u64]).next_u64();
            let result = mia_audit(&outcome.client_model(k), client, defense, &config.audit.config(audit_seed))
                .map_err(|e| e.to_string());
            if let Err(reason) = &result {
                log::warn!("audit of {} skipped: {reason}", client.client_id);
            }
            AuditRow {
                client_id: client.client_id.clone(),
                result,
            }
        })
        .collect()
}

pub fn mean_audit_auc(audits: &[AuditRow]) -> Option<f64> {
    let aucs: Vec<f64> = audits.iter().filter_map(|a| a.result.as_ref().ok().map(|r| r.attack_auc)).collect();
    (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64)
}

pub fn run_cell_with(
    config: &ExperimentConfig,
    seed_data: &SeedData,
    method: Method,
    defense_override: Option<DefenseConfig>,
) -> Result<CellResult> {
    let mut rc = config.round_config(method, seed_data.seed);
    if defense_override.is_some() {
        rc.defense = defense_override;
    }
    let data = &seed_data.data;
    let outcome = train(&data.clients, &rc)?;
    let grid = config.evaluation.grid();
    let evaluation = evaluate(&outcome, data, &seed_data.propensity, config.evaluation.rule(), &grid)?;

    let (scores, _) = score_rows(&outcome, data, &data.split.valid)?;
    let valid_y: Vec<u8> = data.split.valid.iter().map(|&g| data.y[g]).collect();
    let valid_auroc = auroc(&scores.p_factual, &valid_y).ok();

    let kept: Vec<usize> = evaluation.kept.iter().map(|&p| data.split.test[p]).collect();
    let t: Vec<u8> = kept.iter().map(|&g| data.t[g]).collect();
    let y: Vec<u8> = kept.iter().map(|&g| data.y[g]).collect();
    let mut baseline_rng = Rng::derive(seed_data.seed, &[stream::BASELINE]);
    let baseline_auuc = random_ranking_auuc(&t, &y, &grid, config.evaluation.baseline_reps, &mut baseline_rng)?;

    let (audits, mia_auc) = if method.is_split_based() && config.audit.enabled {
        let audits = audit_clients(config, seed_data, &outcome, rc.defense.as_ref());
        let mean = mean_audit_auc(&audits);
        (audits, mean)
    } else {
        (Vec::new(), None)
    };
    Ok(CellResult {
        method,
        seed: seed_data.seed,
        split_hash: seed_data.split_hash.clone(),
        outcome,
        defense: rc.defense,
        evaluation,
        valid_auroc,
        baseline_auuc,
        audits,
        mia_auc,
    })
}

pub fn run_cell(config: &ExperimentConfig, seed_data: &SeedData, method: Method) -> Result<CellResult> {
    run_cell_with(config, seed_data, method, None)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt() })
    }
}

/// One method's across-seed row of the main results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub method: Method,
    pub seeds: usize,
    pub auroc: Stat,
    pub auuc: Stat,
    pub end_uplift: Stat,
    pub trim_pct: Stat,
    pub worst_client_auuc: Stat,
    pub comm_mb: Stat,
    pub rounds: Stat,
    /// `None` for methods that transmit no activations.
    pub mia_auc: Option<Stat>,
}

/// One method's across-seed row of the per-client table: the mean over
/// seeds of each seed's across-client mean, std and worst.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRow {
    pub dataset: String,
    pub method: Method,
    pub seeds: usize,
    pub auuc_mean: f64,
    pub auuc_std: f64,
    pub auuc_worst: f64,
    pub auroc_mean: f64,
    pub auroc_std: f64,
    pub auroc_worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub clients: Vec<ClientRow>,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub feature_names: Vec<String>,
    pub cells: Vec<Cell>,
    pub report: ExperimentReport,
}

impl ExperimentRun {
    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.result.is_err()).count()
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn build_report(config: &ExperimentConfig, cells: &[Cell]) -> ExperimentReport {
    let mut rows = Vec::new();
    let mut clients = Vec::new();
    for &method in &config.methods.list {
        let ok: Vec<&CellResult> = cells
            .iter()
            .filter(|c| c.method == method)
            .filter_map(|c| c.result.as_ref().ok())
            .collect();
        if ok.is_empty() {
            continue;
        }
        let stat = |f: &dyn Fn(&CellResult) -> f64| Stat::of(&ok.iter().map(|c| f(c)).collect::<Vec<_>>()).unwrap();
        let mia: Vec<f64> = ok.iter().filter_map(|c| c.mia_auc).collect();
        rows.push(ReportRow {
            dataset: config.dataset.name.clone(),
            method,
            seeds: ok.len(),
            auroc: stat(&|c| c.evaluation.auroc),
            auuc: stat(&|c| c.evaluation.curve.auuc),
            end_uplift: stat(&|c| c.evaluation.curve.end_uplift),
            trim_pct: stat(&|c| 100.0 * c.evaluation.trim_rate),
            worst_client_auuc: stat(&|c| c.evaluation.clients.auuc.worst),
            comm_mb: stat(&|c| c.outcome.ledger.total_mb()),
            rounds: stat(&|c| c.outcome.rounds as f64),
            mia_auc: if method.is_split_based() { Stat::of(&mia) } else { None },
        });
        let cm = |f: &dyn Fn(&CellResult) -> f64| mean(ok.iter().map(|c| f(c)));
        clients.push(ClientRow {
            dataset: config.dataset.name.clone(),
            method,
            seeds: ok.len(),
            auuc_mean: cm(&|c| c.evaluation.clients.auuc.mean),
            auuc_std: cm(&|c| c.evaluation.clients.auuc.std),
            auuc_worst: cm(&|c| c.evaluation.clients.auuc.worst),
            auroc_mean: cm(&|c| c.evaluation.clients.auroc.mean),
            auroc_std: cm(&|c| c.evaluation.clients.auroc.std),
            auroc_worst: cm(&|c| c.evaluation.clients.auroc.worst),
        });
    }
    ExperimentReport { rows, clients }
}

/// Prepares every seed once; a seed whose preparation fails fails all of
/// its cells.
pub fn prepare_seeds(config: &ExperimentConfig, table: &DataTable) -> BTreeMap<u64, std::result::Result<SeedData, String>> {
    config
        .seeds
        .par_iter()
        .map(|&seed| (seed, prepare_seed(table, config, seed).map_err(|e| e.to_string())))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Trains, evaluates and audits every (method, seed) cell. Cells run
/// concurrently and are reported in config order; a failing cell is
/// recorded with its reason and does not affect the others.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let table = load_dataset(config)?;
    let seeds = prepare_seeds(config, &table);
    let jobs: Vec<(Method, u64)> = config
        .methods
        .list
        .iter()
        .flat_map(|&m| config.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(method, seed)| {
            let result = match &seeds[&seed] {
                Ok(sd) => run_cell(config, sd, method).map_err(|e| e.to_string()),
                Err(reason) => Err(format!("seed preparation failed: {reason}")),
            };
            if let Err(reason) = &result {
                log::error!("cell {} seed {seed} failed: {reason}", method.key());
            }
            Cell { method, seed, result }
        })
        .collect();
    let report = build_report(config, &cells);
    Ok(ExperimentRun {
        config: config.clone(),
        feature_names: table.feature_names().to_vec(),
        cells,
        report,
    })
}

/// Privacy/utility grid over `config.sweep` for the configured split-based
/// method. Each point reports the AUUC and the mean client audit AUC.
pub fn run_sweep(config: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    config.validate()?;
    let mut config = config.clone();
    config.audit.enabled = true;
    let config = &config;
    let table = load_dataset(config)?;
    let seeds: BTreeMap<u64, SeedData> = config
        .seeds
        .iter()
        .map(|&s| Ok((s, prepare_seed(&table, config, s)?)))
        .collect::<Result<_>>()?;
    let method = config.sweep.method;
    privacy_utility_sweep(&config.sweep.sigmas, &config.sweep.clips, &config.seeds, |defense, seed| {
        let cell = run_cell_with(config, &seeds[&seed], method, Some(*defense))?;
        let mia = cell
            .mia_auc
            .ok_or_else(|| Error::AuditInfeasible("no client could be audited".into()))?;
        Ok((cell.evaluation.curve.auuc, mia))
    })
}

/// Audits a saved model again on the client pools of its seed. Fails if
/// the config no longer reproduces the split the model was trained on.
pub fn reaudit(config: &ExperimentConfig, saved: &super::artifacts::SavedModel) -> Result<Vec<AuditRow>> {
    config.validate()?;
    let table = load_dataset(config)?;
    let seed_data = prepare_seed(&table, config, saved.seed)?;
    if seed_data.split_hash != saved.split_sha256 {
        return Err(Error::Contract(format!(
            "config reproduces split {} but the model was trained on split {}",
            seed_data.split_hash, saved.split_sha256
        )));
    }
    if !saved.feature_names.is_empty() && saved.feature_names != seed_data.data.feature_names {
        return Err(Error::Schema("saved model was trained on different feature columns".into()));
    }
    if saved.adapters.len() != seed_data.data.clients.len() {
        return Err(Error::dim("reaudit clients", saved.adapters.len(), seed_data.data.clients.len()));
    }
    let outcome = TrainOutcome {
        model: saved.model.clone(),
        adapters: saved.adapters.clone(),
        ledger: Default::default(),
        history: Vec::new(),
        rounds: 0,
    };
    Ok(audit_clients(config, &seed_data, &outcome, saved.defense().as_ref()))
}
