use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Method};
use super::runner::{AuditRow, Cell, ExperimentRun, ReportRow, Stat};
use crate::collab::DefenseConfig;
use crate::error::{Error, Result};
use crate::eval::UpliftCurve;
use crate::model::{AdapterParams, TwoHeadModel};
use crate::privacy::{SweepPoint, AUDIT_CAVEAT};

/// Writes files under one root and remembers the SHA-256 of each.
#[derive(Debug)]
pub struct ArtifactWriter {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl ArtifactWriter {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self {
            root,
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.insert(relative.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io {
        path: PathBuf::from("<memory>"),
        source: e.into_error(),
    })
}

fn f(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_else(|| "N/A".into())
}

// ---- uplift points ----

pub fn uplift_points_csv(curve: &UpliftCurve) -> Result<Vec<u8>> {
    csv_bytes(
        &["q", "u", "defined"],
        curve.grid.iter().zip(&curve.values).map(|(q, u)| {
            vec![
                f(*q),
                u.map(f).unwrap_or_else(|| "NaN".into()),
                u8::from(u.is_some()).to_string(),
            ]
        }),
    )
}

/// Writes `(q, u(q), defined)` rows for external plotting.
pub fn emit_uplift_points(curve: &UpliftCurve, path: &Path) -> Result<()> {
    let bytes = uplift_points_csv(curve)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Grid and values back from an uplift point file.
pub fn read_uplift_points(path: &Path) -> Result<(Vec<f64>, Vec<Option<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |col: usize, name: &str| -> Result<f64> {
            rec.get(col).unwrap_or("").parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: name.into(),
                message: format!("not a number: {:?}", rec.get(col)),
            })
        };
        grid.push(parse(0, "q")?);
        let defined = rec.get(2) == Some("1");
        values.push(if defined { Some(parse(1, "u")?) } else { None });
    }
    Ok((grid, values))
}

// ---- privacy sweep ----

fn clip_text(c: f64) -> String {
    if c == f64::INFINITY {
        "inf".into()
    } else {
        f(c)
    }
}

pub fn privacy_sweep_csv(points: &[SweepPoint]) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for p in points {
        for s in &p.samples {
            rows.push(vec![
                "detail".into(),
                f(p.defense.noise_sigma),
                clip_text(p.defense.clip_norm),
                s.seed.to_string(),
                f(s.auuc),
                f(s.mia_auc),
            ]);
        }
    }
    for p in points {
        rows.push(vec![
            "mean".into(),
            f(p.defense.noise_sigma),
            clip_text(p.defense.clip_norm),
            String::new(),
            f(p.mean_auuc),
            f(p.mean_mia_auc),
        ]);
    }
    csv_bytes(&["kind", "sigma", "clip", "seed", "auuc", "mia_auc"], rows)
}

/// Writes one row per defense point and seed, then one mean row per point.
pub fn emit_privacy_sweep(points: &[SweepPoint], path: &Path) -> Result<()> {
    let bytes = privacy_sweep_csv(points)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub kind: String,
    pub sigma: f64,
    pub clip: f64,
    pub seed: Option<u64>,
    pub auuc: f64,
    pub mia_auc: f64,
}

pub fn read_privacy_sweep(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let num = |col: usize, name: &str| -> Result<f64> {
            rec.get(col).unwrap_or("").parse().map_err(|_| Error::Parse {
                row: i + 1,
                column: name.into(),
                message: "not a number".into(),
            })
        };
        out.push(SweepRow {
            kind: rec.get(0).unwrap_or("").to_string(),
            sigma: num(1, "sigma")?,
            clip: num(2, "clip")?,
            seed: rec.get(3).and_then(|s| s.parse().ok()),
            auuc: num(4, "auuc")?,
            mia_auc: num(5, "mia_auc")?,
        });
    }
    Ok(out)
}

// ---- saved models ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub method: Method,
    pub seed: u64,
    pub dataset: String,
    pub feature_names: Vec<String>,
    pub split_sha256: String,
    pub model: TwoHeadModel,
    pub adapters: Vec<Option<AdapterParams>>,
    /// `None` means no clipping.
    pub clip_norm: Option<f64>,
    /// `None` means the run had no activation defense.
    pub noise_sigma: Option<f64>,
}

impl SavedModel {
    pub fn defense(&self) -> Option<DefenseConfig> {
        self.noise_sigma.map(|noise_sigma| DefenseConfig {
            clip_norm: self.clip_norm.unwrap_or(f64::INFINITY),
            noise_sigma,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }
}

// ---- report tables ----

pub const AUDIT_HEADER: [&str; 10] = ["method", "seed", "client", "sigma", "clip", "status", "auc", "m", "converged", "reason"];

pub const REPORT_HEADER: [&str; 19] = [
    "dataset",
    "method",
    "seeds",
    "auroc_mean",
    "auroc_std",
    "auuc_mean",
    "auuc_std",
    "end_uplift_mean",
    "end_uplift_std",
    "trim_pct_mean",
    "trim_pct_std",
    "worst_client_auuc_mean",
    "worst_client_auuc_std",
    "comm_mb_mean",
    "comm_mb_std",
    "rounds_mean",
    "rounds_std",
    "mia_auc_mean",
    "mia_auc_std",
];

pub const CLIENT_HEADER: [&str; 9] = [
    "dataset",
    "method",
    "seeds",
    "auuc_mean",
    "auuc_std",
    "auuc_worst",
    "auroc_mean",
    "auroc_std",
    "auroc_worst",
];

fn report_record(r: &ReportRow) -> Vec<String> {
    let mut v = vec![r.dataset.clone(), r.method.label().into(), r.seeds.to_string()];
    for s in [r.auroc, r.auuc, r.end_uplift, r.trim_pct, r.worst_client_auuc, r.comm_mb, r.rounds] {
        v.push(f(s.mean));
        v.push(f(s.std));
    }
    v.push(opt(r.mia_auc.map(|s| s.mean)));
    v.push(opt(r.mia_auc.map(|s| s.std)));
    v
}

/// The main results table as CSV, one row per method.
pub fn report_csv(run: &ExperimentRun) -> Result<Vec<u8>> {
    csv_bytes(&REPORT_HEADER, run.report.rows.iter().map(report_record))
}

fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("| {} |\n", parts.join(" | "))
    };
    let mut out = line(header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&format!("|-{}-|\n", rule.join("-|-")));
    for r in rows {
        out.push_str(&line(r));
    }
    out
}

fn pm(s: Stat, digits: usize) -> String {
    format!("{:.*} ± {:.*}", digits, s.mean, digits, s.std)
}

pub fn render_report(run: &ExperimentRun) -> String {
    let header: Vec<String> = [
        "Dataset",
        "Method",
        "AUROC",
        "AUUC",
        "End Uplift",
        "Trim %",
        "Worst AUUC",
        "Comm (MB)",
        "Rounds",
        "MIA AUC",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = run
        .report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.dataset.clone(),
                r.method.label().into(),
                pm(r.auroc, 2),
                pm(r.auuc, 2),
                pm(r.end_uplift, 2),
                pm(r.trim_pct, 2),
                pm(r.worst_client_auuc, 2),
                pm(r.comm_mb, 2),
                format!("{:.0}", r.rounds.mean),
                r.mia_auc.map(|s| pm(s, 2)).unwrap_or_else(|| "N/A".into()),
            ]
        })
        .collect();
    let mut out = String::from("Main results (mean ± std across seeds)\n\n");
    out.push_str(&render_table(&header, &rows));

    let header: Vec<String> = [
        "Dataset",
        "Method",
        "AUUC Mean",
        "AUUC Std",
        "AUUC Worst",
        "AUROC Mean",
        "AUROC Std",
        "AUROC Worst",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows: Vec<Vec<String>> = run
        .report
        .clients
        .iter()
        .map(|r| {
            let mut v = vec![r.dataset.clone(), r.method.label().to_string()];
            for x in [r.auuc_mean, r.auuc_std, r.auuc_worst, r.auroc_mean, r.auroc_std, r.auroc_worst] {
                v.push(format!("{x:.4}"));
            }
            v
        })
        .collect();
    out.push_str("\nAcross-client robustness (mean over seeds of across-client statistics)\n\n");
    out.push_str(&render_table(&header, &rows));
    let _ = writeln!(out, "\nNote: {AUDIT_CAVEAT}");
    let failed: Vec<&Cell> = run.cells.iter().filter(|c| c.result.is_err()).collect();
    if !failed.is_empty() {
        out.push_str("\nFailed cells:\n");
        for c in failed {
            let _ = writeln!(out, "- {} seed {}: {}", c.method.label(), c.seed, c.result.as_ref().unwrap_err());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub method: Method,
    pub seed: u64,
    pub status: String,
    pub reason: Option<String>,
    pub split_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: String,
    pub config_sha256: String,
    pub cells: Vec<ManifestCell>,
    /// Relative path to SHA-256 of every emitted file except the manifest.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn config_echo(config: &ExperimentConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::config("<document>", e.to_string()))
}

fn write_manifest(w: &mut ArtifactWriter, name: &str, config: &ExperimentConfig, cells: Vec<ManifestCell>) -> Result<Manifest> {
    let echo = config_echo(config)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: sha256_hex(echo.as_bytes()),
        config: echo,
        cells,
        files: w.files().clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    let path = w.root().join(name);
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn audit_records(method: Method, seed: u64, defense: Option<&DefenseConfig>, audits: &[AuditRow]) -> Vec<Vec<String>> {
    let sigma = defense.map(|d| f(d.noise_sigma)).unwrap_or_else(|| "0".into());
    let clip = defense.map(|d| clip_text(d.clip_norm)).unwrap_or_else(|| "inf".into());
    audits
        .iter()
        .map(|a| {
            let mut r = vec![method.key().to_string(), seed.to_string(), a.client_id.clone(), sigma.clone(), clip.clone()];
            match &a.result {
                Ok(res) => r.extend([
                    "ok".into(),
                    f(res.attack_auc),
                    res.m.to_string(),
                    res.converged.to_string(),
                    String::new(),
                ]),
                Err(reason) => r.extend([
                    "infeasible".into(),
                    String::new(),
                    String::new(),
                    String::new(),
                    reason.clone(),
                ]),
            }
            r
        })
        .collect()
}

/// Writes every artifact of a run and the manifest listing them.
pub fn write_run(run: &ExperimentRun, out_dir: &Path) -> Result<Manifest> {
    let mut w = ArtifactWriter::new(out_dir)?;
    w.write("report.csv", &report_csv(run)?)?;
    w.write(
        "clients.csv",
        &csv_bytes(
            &CLIENT_HEADER,
            run.report.clients.iter().map(|r| {
                vec![
                    r.dataset.clone(),
                    r.method.label().into(),
                    r.seeds.to_string(),
                    f(r.auuc_mean),
                    f(r.auuc_std),
                    f(r.auuc_worst),
                    f(r.auroc_mean),
                    f(r.auroc_std),
                    f(r.auroc_worst),
                ]
            }),
        )?,
    )?;
    w.write("report.txt", render_report(run).as_bytes())?;

    let mut cells_rows = Vec::new();
    let mut client_rows = Vec::new();
    let mut audit_rows = Vec::new();
    let mut history_rows = Vec::new();
    let mut manifest_cells = Vec::new();
    for cell in &run.cells {
        let stem = format!("{}_seed{}", cell.method.key(), cell.seed);
        match &cell.result {
            Ok(c) => {
                let e = &c.evaluation;
                cells_rows.push(vec![
                    cell.method.key().into(),
                    cell.seed.to_string(),
                    "ok".into(),
                    String::new(),
                    c.split_hash.clone(),
                    f(e.auroc),
                    f(e.curve.auuc),
                    f(e.curve.end_uplift),
                    f(100.0 * e.trim_rate),
                    f(e.clients.auuc.worst),
                    c.comm_bytes().to_string(),
                    c.outcome.rounds.to_string(),
                    opt(c.mia_auc),
                    opt(c.valid_auroc),
                    f(c.baseline_auuc.0),
                    f(c.baseline_auuc.1),
                    f(e.dr_mean),
                    f(e.tau_mean),
                ]);
                for s in &e.clients.clients {
                    client_rows.push(vec![
                        cell.method.key().into(),
                        cell.seed.to_string(),
                        s.client_id.clone(),
                        "ok".into(),
                        s.n.to_string(),
                        f(s.auroc),
                        f(s.auuc),
                        String::new(),
                    ]);
                }
                for (id, reason) in &e.clients.excluded {
                    client_rows.push(vec![
                        cell.method.key().into(),
                        cell.seed.to_string(),
                        id.clone(),
                        "excluded".into(),
                        String::new(),
                        String::new(),
                        String::new(),
                        reason.clone(),
                    ]);
                }
                audit_rows.extend(audit_records(cell.method, cell.seed, c.defense.as_ref(), &c.audits));
                for h in &c.outcome.history {
                    history_rows.push(vec![
                        cell.method.key().into(),
                        cell.seed.to_string(),
                        h.round.to_string(),
                        f(h.mean_train_loss),
                        h.bytes.to_string(),
                    ]);
                }
                w.write(&format!("curves/{stem}.csv"), &uplift_points_csv(&e.curve)?)?;
                let ledger = csv_bytes(
                    &["round", "client", "direction", "kind", "elements", "bytes"],
                    c.outcome.ledger.messages().iter().map(|m| {
                        vec![
                            m.round.to_string(),
                            m.client.to_string(),
                            m.direction.as_str().into(),
                            m.kind.as_str().into(),
                            m.elements.to_string(),
                            m.bytes.to_string(),
                        ]
                    }),
                )?;
                w.write(&format!("ledgers/{stem}.csv"), &ledger)?;
                let saved = SavedModel {
                    method: cell.method,
                    seed: cell.seed,
                    dataset: run.config.dataset.name.clone(),
                    feature_names: run.feature_names.clone(),
                    split_sha256: c.split_hash.clone(),
                    model: c.outcome.model.clone(),
                    adapters: c.outcome.adapters.clone(),
                    clip_norm: c.defense.and_then(|d| d.clip_norm.is_finite().then_some(d.clip_norm)),
                    noise_sigma: c.defense.map(|d| d.noise_sigma),
                };
                w.write(&format!("models/{stem}.json"), &saved.to_json()?)?;
                manifest_cells.push(ManifestCell {
                    method: cell.method,
                    seed: cell.seed,
                    status: "ok".into(),
                    reason: None,
                    split_sha256: Some(c.split_hash.clone()),
                });
            }
            Err(reason) => {
                let mut row = vec![
                    cell.method.key().to_string(),
                    cell.seed.to_string(),
                    "failed".into(),
                    reason.clone(),
                ];
                row.extend(std::iter::repeat_n(String::new(), 14));
                cells_rows.push(row);
                manifest_cells.push(ManifestCell {
                    method: cell.method,
                    seed: cell.seed,
                    status: "failed".into(),
                    reason: Some(reason.clone()),
                    split_sha256: None,
                });
            }
        }
    }
    w.write(
        "cells.csv",
        &csv_bytes(
            &[
                "method",
                "seed",
                "status",
                "reason",
                "split_sha256",
                "auroc",
                "auuc",
                "end_uplift",
                "trim_pct",
                "worst_client_auuc",
                "comm_bytes",
                "rounds",
                "mia_auc",
                "valid_auroc",
                "baseline_auuc_mean",
                "baseline_auuc_std",
                "dr_mean",
                "tau_mean",
            ],
            cells_rows,
        )?,
    )?;
    w.write(
        "client_scores.csv",
        &csv_bytes(&["method", "seed", "client", "status", "n", "auroc", "auuc", "reason"], client_rows)?,
    )?;
    w.write(
        "audit.csv",
        &csv_bytes(&AUDIT_HEADER, audit_rows)?,
    )?;
    w.write(
        "history.csv",
        &csv_bytes(&["method", "seed", "round", "mean_train_loss", "bytes"], history_rows)?,
    )?;
    write_manifest(&mut w, "manifest.json", &run.config, manifest_cells)
}

/// Writes the sweep table and its own manifest.
pub fn write_sweep(config: &ExperimentConfig, points: &[SweepPoint], out_dir: &Path) -> Result<Manifest> {
    let mut w = ArtifactWriter::new(out_dir)?;
    w.write("privacy_sweep.csv", &privacy_sweep_csv(points)?)?;
    let mut text = String::from("Privacy/utility sweep (means across seeds)\n\n");
    let header: Vec<String> = ["Sigma", "Clip", "AUUC", "MIA AUC"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                f(p.defense.noise_sigma),
                clip_text(p.defense.clip_norm),
                format!("{:.4}", p.mean_auuc),
                format!("{:.4}", p.mean_mia_auc),
            ]
        })
        .collect();
    text.push_str(&render_table(&header, &rows));
    let _ = writeln!(text, "\nNote: {AUDIT_CAVEAT}");
    w.write("privacy_sweep.txt", text.as_bytes())?;
    write_manifest(&mut w, "sweep_manifest.json", config, Vec::new())
}
