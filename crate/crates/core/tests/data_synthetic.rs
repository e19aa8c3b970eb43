use splitfed_uplift::data::{generate_synthetic, DataTable, SyntheticSpec};
use splitfed_uplift::eval::auroc;
use splitfed_uplift::model::{dr_pseudo_effect, fit_propensity};
use splitfed_uplift::nn::Matrix;
use splitfed_uplift::Rng;

fn features(table: &DataTable) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..table.n_rows()).map(|i| table.row(i).to_vec()).collect();
    Matrix::from_rows(&rows).unwrap()
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Largest two-sample z statistic over every feature and client pair.
fn max_client_z(table: &DataTable, clients: usize, per_client: usize) -> f64 {
    let d = table.n_features();
    let mut worst: f64 = 0.0;
    for j in 0..d {
        let stats: Vec<(f64, f64)> = (0..clients)
            .map(|k| mean_se(&(0..per_client).map(|i| table.value(k * per_client + i, j)).collect::<Vec<_>>()))
            .collect();
        for a in 0..clients {
            for b in a + 1..clients {
                let z = (stats[a].0 - stats[b].0) / (stats[a].1.powi(2) + stats[b].1.powi(2)).sqrt();
                worst = worst.max(z.abs());
            }
        }
    }
    worst
}

#[test]
fn zero_shift_gives_exchangeable_clients() {
    let (clients, n, d) = (3, 2000, 6);
    let mut spec = SyntheticSpec::with_defaults(n, clients, d);
    spec.client_shift_scale = 0.0;
    let (table, _) = generate_synthetic(&spec, &mut Rng::new(3)).unwrap();
    // two-sided 0.01 level, Bonferroni over every (feature, pair) test
    let tests = (d * clients * (clients - 1) / 2) as f64;
    let critical = 2.576 + 0.5 * tests.ln();
    let z = max_client_z(&table, clients, n);
    assert!(z < critical, "max z {z:.2} >= {critical:.2}");

    spec.client_shift_scale = 1.0;
    let (shifted, _) = generate_synthetic(&spec, &mut Rng::new(3)).unwrap();
    assert!(max_client_z(&shifted, clients, n) > critical);
}

#[test]
fn randomized_gap_matches_mean_effect() {
    let mut spec = SyntheticSpec::with_defaults(4000, 3, 6);
    spec.propensity_weights = vec![0.0; 6];
    let (table, truth) = generate_synthetic(&spec, &mut Rng::new(8)).unwrap();
    let (t, y) = (table.treatment(), table.outcome());
    let arm = |a: u8| -> (f64, f64) {
        let ys: Vec<f64> = (0..t.len()).filter(|&i| t[i] == a).map(|i| f64::from(y[i])).collect();
        let p = ys.iter().sum::<f64>() / ys.len() as f64;
        (p, p * (1.0 - p) / ys.len() as f64)
    };
    let ((p1, v1), (p0, v0)) = (arm(1), arm(0));
    let gap = p1 - p0;
    let se = (v1 + v0).sqrt();
    let tau = truth.tau.iter().sum::<f64>() / truth.tau.len() as f64;
    assert!((gap - tau).abs() <= 3.0 * se, "gap {gap:.4} vs tau {tau:.4} (se {se:.4})");
    let treated = t.iter().filter(|&&v| v == 1).count() as f64 / t.len() as f64;
    assert!((treated - 0.5).abs() < 0.02);
}

#[test]
fn dr_mean_is_consistent_with_correct_models() {
    let spec = SyntheticSpec::with_defaults(5000, 2, 6);
    let (table, truth) = generate_synthetic(&spec, &mut Rng::new(21)).unwrap();
    assert_eq!(table.n_rows(), 10_000);
    let dr = dr_pseudo_effect(&truth.mu1, &truth.mu0, &truth.propensity, table.treatment(), table.outcome()).unwrap();
    let (m, se) = mean_se(&dr);
    let tau = truth.tau.iter().sum::<f64>() / truth.tau.len() as f64;
    assert!((m - tau).abs() <= 3.0 * se, "DR mean {m:.4} vs tau {tau:.4} (se {se:.4})");
}

#[test]
fn confounded_propensity_is_recoverable() {
    let mut spec = SyntheticSpec::with_defaults(2000, 2, 4);
    spec.propensity_weights = vec![2.0, -1.5, 0.0, 1.0];
    let (table, _) = generate_synthetic(&spec, &mut Rng::new(4)).unwrap();
    let x = features(&table);
    let model = fit_propensity(&x, table.treatment()).unwrap();
    let e = model.predict(&x).unwrap();
    let a = auroc(&e, table.treatment()).unwrap();
    assert!(a > 0.75, "propensity AUROC {a:.3}");

    spec.propensity_weights = vec![0.0; 4];
    let (table, _) = generate_synthetic(&spec, &mut Rng::new(4)).unwrap();
    let x = features(&table);
    let e = fit_propensity(&x, table.treatment()).unwrap().predict(&x).unwrap();
    let treated = table.treatment().iter().filter(|&&v| v == 1).count() as f64 / table.n_rows() as f64;
    assert!(e.iter().all(|&p| (p - treated).abs() < 0.06));
}
