use proptest::prelude::*;
use splitfed_uplift::eval::{
    apply_trim, auroc, default_grid, random_ranking_auuc, trapezoid_auuc, trim_positivity, uplift_curve, TrimRule,
};
use splitfed_uplift::experiment::{emit_privacy_sweep, emit_uplift_points, read_privacy_sweep, read_uplift_points};
use splitfed_uplift::privacy::{SweepPoint, SweepSample};
use splitfed_uplift::collab::DefenseConfig;
use splitfed_uplift::Rng;

fn brute_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Scores drawn from a small integer set so ties are common.
fn tied_instance(rng: &mut Rng) -> (Vec<f64>, Vec<u8>) {
    let n = 2 + rng.below(199);
    let levels = 1 + rng.below(12);
    let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 * 0.25).collect();
    let mut labels: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.4) as u8).collect();
    labels[0] = 1;
    labels[1] = 0;
    (scores, labels)
}

#[test]
fn auroc_matches_pairwise_count() {
    let mut rng = Rng::new(2024);
    for _ in 0..200 {
        let (s, l) = tied_instance(&mut rng);
        assert!((auroc(&s, &l).unwrap() - brute_auroc(&s, &l)).abs() <= 1e-9);
    }
}

#[test]
fn auroc_ignores_monotone_transforms() {
    let mut rng = Rng::new(5);
    for _ in 0..50 {
        let (s, l) = tied_instance(&mut rng);
        let warped: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 7.0).collect();
        assert_eq!(auroc(&s, &l).unwrap(), auroc(&warped, &l).unwrap());
        let flipped: Vec<f64> = s.iter().map(|v| -v).collect();
        assert!((auroc(&flipped, &l).unwrap() - (1.0 - auroc(&s, &l).unwrap())).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn auroc_is_a_pairwise_probability(
        raw in proptest::collection::vec((0u8..6, any::<bool>()), 2..120)
    ) {
        let scores: Vec<f64> = raw.iter().map(|(s, _)| f64::from(*s)).collect();
        let labels: Vec<u8> = raw.iter().map(|(_, l)| u8::from(*l)).collect();
        let pos = labels.iter().filter(|&&l| l == 1).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let a = auroc(&scores, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - brute_auroc(&scores, &labels)).abs() <= 1e-9);
    }

    #[test]
    fn trim_rate_counts_removed_rows(e in proptest::collection::vec(0.001f64..0.999, 1..300), q in 0.0f64..0.5) {
        let r = apply_trim(&e, TrimRule::Quantile(q));
        if let Ok(r) = r {
            prop_assert_eq!(r.trimmed(), ((q * e.len() as f64).round() as usize).min(e.len()));
            prop_assert_eq!(r.trim_rate, r.trimmed() as f64 / e.len() as f64);
            prop_assert!(r.keep.windows(2).all(|w| w[0] < w[1]));
        }
    }
}

#[test]
fn four_row_fixture_and_flat_curve() {
    let grid = [0.5, 1.0];
    let c = uplift_curve(&[0.4, 0.3, 0.2, 0.1], &[1, 0, 1, 0], &[1, 0, 0, 1], &grid).unwrap();
    assert_eq!(c.values, vec![Some(1.0), Some(0.0)]);
    assert_eq!(c.end_uplift, 0.0);

    let mut rng = Rng::new(3);
    let n = 400;
    let t: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();
    let y: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.3) as u8).collect();
    let flat = uplift_curve(&vec![0.2; n], &t, &y, &default_grid()).unwrap();
    assert!(flat.values.iter().all(|v| *v == Some(flat.end_uplift)));
    assert_eq!(flat.auuc, flat.end_uplift);
}

#[test]
fn end_uplift_does_not_depend_on_ranking() {
    let mut rng = Rng::new(17);
    let n = 300;
    let t: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();
    let y: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.4) as u8).collect();
    let reference = uplift_curve(&vec![0.0; n], &t, &y, &default_grid()).unwrap().end_uplift;
    for _ in 0..20 {
        let tau: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let c = uplift_curve(&tau, &t, &y, &default_grid()).unwrap();
        assert_eq!(c.end_uplift, reference);
        assert_eq!(*c.values.last().unwrap(), Some(reference));
    }
}

#[test]
fn random_baseline_centres_on_the_flat_curve() {
    let mut rng = Rng::new(8);
    let n = 2000;
    let t: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();
    let y: Vec<u8> = (0..n)
        .map(|i| rng.bernoulli(if t[i] == 1 { 0.45 } else { 0.3 }) as u8)
        .collect();
    let grid = default_grid();
    let flat = uplift_curve(&vec![1.0; n], &t, &y, &grid).unwrap().auuc;
    let reps = 200;
    let (mean, std) = random_ranking_auuc(&t, &y, &grid, reps, &mut Rng::new(1)).unwrap();
    assert!(std > 0.0);
    assert!((mean - flat).abs() <= 3.0 * std / (reps as f64).sqrt(), "{mean} vs {flat} (std {std})");
    let again = random_ranking_auuc(&t, &y, &grid, reps, &mut Rng::new(1)).unwrap();
    assert_eq!((mean, std), again);
}

#[test]
fn trimming_fixtures() {
    let r = trim_positivity(&[0.01, 0.5, 0.99], 0.05).unwrap();
    assert_eq!(r.keep, vec![1]);
    assert_eq!(r.trimmed(), 2);

    let mut rng = Rng::new(4);
    for n in [1000usize, 1537, 4000] {
        let e: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.01, 0.99)).collect();
        let r = apply_trim(&e, TrimRule::Quantile(0.10)).unwrap();
        assert!((r.trim_rate - 0.10).abs() <= 0.005);
        let kept_min = r.keep.iter().map(|&i| e[i].min(1.0 - e[i])).fold(f64::INFINITY, f64::min);
        let mask = r.mask();
        let dropped_max = (0..n)
            .filter(|&i| !mask[i])
            .map(|i| e[i].min(1.0 - e[i]))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(dropped_max <= kept_min);
    }
}

#[test]
fn uplift_points_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(21);
    let n = 500;
    let t: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();
    let y: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();
    let tau: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let curve = uplift_curve(&tau, &t, &y, &default_grid()).unwrap();
    let path = dir.path().join("points.csv");
    emit_uplift_points(&curve, &path).unwrap();
    let (grid, values) = read_uplift_points(&path).unwrap();
    assert_eq!(grid.len(), 100);
    for ((q, v), (q0, v0)) in grid.iter().zip(&values).zip(curve.grid.iter().zip(&curve.values)) {
        assert!((q - q0).abs() <= 1e-9);
        match (v, v0) {
            (Some(a), Some(b)) => assert!((a - b).abs() <= 1e-9),
            (None, None) => {}
            other => panic!("definedness changed: {other:?}"),
        }
    }
    assert!((trapezoid_auuc(&grid, &values).unwrap() - curve.auuc).abs() <= 1e-9);

    let flat = uplift_curve(&vec![0.0; n], &t, &y, &default_grid()).unwrap();
    emit_uplift_points(&flat, &path).unwrap();
    let (_, values) = read_uplift_points(&path).unwrap();
    assert!(values.iter().all(|v| *v == Some(flat.end_uplift)));
}

#[test]
fn privacy_sweep_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::new(9);
    let mut points = Vec::new();
    for sigma in [0.0, 0.05, 0.5] {
        for clip in [1.0, f64::INFINITY] {
            let samples: Vec<SweepSample> = (0..2u64)
                .map(|seed| SweepSample {
                    seed,
                    auuc: rng.normal() * 0.1,
                    mia_auc: 0.5 + rng.normal() * 0.05,
                })
                .collect();
            points.push(SweepPoint {
                defense: DefenseConfig {
                    clip_norm: clip,
                    noise_sigma: sigma,
                },
                mean_auuc: samples.iter().map(|s| s.auuc).sum::<f64>() / 2.0,
                mean_mia_auc: samples.iter().map(|s| s.mia_auc).sum::<f64>() / 2.0,
                samples,
            });
        }
    }
    let path = dir.path().join("sweep.csv");
    emit_privacy_sweep(&points, &path).unwrap();
    let rows = read_privacy_sweep(&path).unwrap();
    assert_eq!(rows.len(), 12 + 6);
    let details: Vec<_> = rows.iter().filter(|r| r.kind == "detail").collect();
    let means: Vec<_> = rows.iter().filter(|r| r.kind == "mean").collect();
    assert_eq!((details.len(), means.len()), (12, 6));
    let flat: Vec<(&SweepPoint, &SweepSample)> =
        points.iter().flat_map(|p| p.samples.iter().map(move |s| (p, s))).collect();
    for (row, (p, s)) in details.iter().zip(flat) {
        assert_eq!(row.sigma, p.defense.noise_sigma);
        assert_eq!(row.clip, p.defense.clip_norm);
        assert_eq!(row.seed, Some(s.seed));
        assert_eq!(row.auuc, s.auuc);
        assert_eq!(row.mia_auc, s.mia_auc);
    }
    for (row, p) in means.iter().zip(&points) {
        assert_eq!(row.seed, None);
        assert_eq!(row.auuc, p.mean_auuc);
        assert_eq!(row.mia_auc, p.mean_mia_auc);
    }
}
