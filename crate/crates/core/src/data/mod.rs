//! Tabular ingestion, leakage-free preprocessing, stratified splits,
//! non-IID client partitions and synthetic data with known effects.

pub mod partition;
pub mod preprocess;
pub mod split;
pub mod synthetic;
pub mod table;

pub use partition::{partition_clients, ClientDataset};
pub use preprocess::{apply_preprocess, fit_preprocess, PreprocessStats, STD_EPS};
pub use split::{stratified_split, SplitFractions, SplitIndices};
pub use synthetic::{generate_synthetic, HiddenTruth, SyntheticSpec};
pub use table::{load_csv, read_csv, write_csv, CsvSchema, DataTable, MISSING};

use crate::error::Result;
use crate::nn::Matrix;
use crate::rng::{stream, Rng};

/// A table after splitting, preprocessing and partitioning. Every training
/// mode of one seed consumes the same instance.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub feature_names: Vec<String>,
    /// All rows, preprocessed with training statistics.
    pub x: Matrix,
    pub t: Vec<u8>,
    pub y: Vec<u8>,
    pub client_ids: Vec<String>,
    pub split: SplitIndices,
    pub stats: PreprocessStats,
    pub clients: Vec<ClientDataset>,
}

impl PreparedData {
    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn subset(&self, rows: &[usize]) -> (Matrix, Vec<u8>, Vec<u8>) {
        (
            self.x.select_rows(rows),
            rows.iter().map(|&i| self.t[i]).collect(),
            rows.iter().map(|&i| self.y[i]).collect(),
        )
    }

    /// Client index of every row.
    pub fn client_index(&self) -> Vec<usize> {
        let mut out = vec![0; self.t.len()];
        for (k, c) in self.clients.iter().enumerate() {
            for &g in &c.global_rows {
                out[g] = k;
            }
        }
        out
    }
}

/// Splits (stratified on outcome), fits preprocessing on the training rows
/// and partitions by client.
pub fn prepare(table: &DataTable, fractions: SplitFractions, seed: u64) -> Result<PreparedData> {
    let mut rng = Rng::derive(seed, &[stream::SPLIT]);
    let split = stratified_split(table.outcome(), fractions, &mut rng)?;
    let stats = fit_preprocess(table, &split.train)?;
    let all: Vec<usize> = (0..table.n_rows()).collect();
    let x = apply_preprocess(&stats, table, &all)?;
    let clients = partition_clients(&x, table.treatment(), table.outcome(), table.client_ids(), &split)?;
    Ok(PreparedData {
        feature_names: table.feature_names().to_vec(),
        x,
        t: table.treatment().to_vec(),
        y: table.outcome().to_vec(),
        client_ids: table.client_ids().to_vec(),
        split,
        stats,
        clients,
    })
}
