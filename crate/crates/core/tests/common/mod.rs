#![allow(dead_code)]

use splitfed_uplift::data::{generate_synthetic, prepare, DataTable, HiddenTruth, PreparedData, SplitFractions, SyntheticSpec};
use splitfed_uplift::nn::{Matrix, Parameters};
use splitfed_uplift::Rng;

pub fn synthetic(n_per_client: usize, clients: usize, features: usize, seed: u64) -> (DataTable, HiddenTruth) {
    let spec = SyntheticSpec::with_defaults(n_per_client, clients, features);
    generate_synthetic(&spec, &mut Rng::new(seed)).unwrap()
}

pub fn prepared(n_per_client: usize, clients: usize, features: usize, seed: u64) -> PreparedData {
    let (table, _) = synthetic(n_per_client, clients, features, seed);
    prepare(&table, SplitFractions::default(), seed).unwrap()
}

pub fn max_abs_diff<P: Parameters>(a: &P, b: &P) -> f64 {
    a.flatten()
        .iter()
        .zip(b.flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}
