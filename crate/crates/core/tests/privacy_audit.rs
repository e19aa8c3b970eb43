mod common;

use common::random_matrix;
use splitfed_uplift::collab::{init_model, run_split, AdapterParams, DefenseConfig, Mode, RoundConfig};
use splitfed_uplift::data::{partition_clients, ClientDataset, SplitIndices};
use splitfed_uplift::nn::{DenseLayer, Matrix, Parameters, CUT_DIM};
use splitfed_uplift::privacy::{mia_audit, privacy_utility_sweep, AuditConfig, AUDIT_CAVEAT};
use splitfed_uplift::{Error, Rng};

fn client(x: Matrix, members: usize, rng: &mut Rng) -> ClientDataset {
    let n = x.rows();
    let t: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();
    let y: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.5) as u8).collect();
    let split = SplitIndices {
        train: (0..members).collect(),
        valid: vec![],
        test: (members..n).collect(),
    };
    partition_clients(&x, &t, &y, &vec!["c".to_string(); n], &split).unwrap().remove(0)
}

#[test]
fn random_trunk_on_one_distribution_is_near_chance() {
    let mut aucs = Vec::new();
    for seed in 0..10u64 {
        let mut rng = Rng::new(900 + seed);
        let c = client(random_matrix(&mut rng, 1000, 6), 500, &mut rng);
        let r = mia_audit(&init_model(6, seed), &c, None, &AuditConfig { seed, ..Default::default() }).unwrap();
        assert_eq!(r.m, 500);
        assert!((0.40..=0.60).contains(&r.attack_auc), "seed {seed}: {}", r.attack_auc);
        aucs.push(r.attack_auc);
    }
    let mean = aucs.iter().sum::<f64>() / 10.0;
    assert!((0.45..=0.55).contains(&mean), "{mean}");
}

#[test]
fn disjoint_supports_are_detected() {
    let mut rng = Rng::new(1);
    let mut x = random_matrix(&mut rng, 400, 5);
    for i in 0..400 {
        x.set(i, 1, x.get(i, 1).abs() * if i < 200 { 1.0 } else { -1.0 });
    }
    let c = client(x, 200, &mut rng);
    let r = mia_audit(&init_model(5, 2), &c, None, &AuditConfig::default()).unwrap();
    assert!(r.attack_auc >= 0.95, "{}", r.attack_auc);
}

fn overfit(seed: u64) -> (splitfed_uplift::collab::TrainOutcome, Vec<ClientDataset>) {
    let mut rng = Rng::new(seed);
    let n = 800;
    let x = random_matrix(&mut rng, n, 8);
    let clients = vec![client(x, 300, &mut rng)];
    let mut c = RoundConfig::new(Mode::Split, seed);
    c.rounds = 60;
    c.batch_size = 16;
    c.lr_client = 1e-2;
    c.lr_server = 1e-2;
    (run_split(&clients, &c).unwrap(), clients)
}

#[test]
fn permuted_membership_labels_are_near_chance() {
    for seed in 0..3u64 {
        let (out, clients) = overfit(seed);
        let control = AuditConfig {
            seed,
            permute_labels: true,
            ..Default::default()
        };
        let permuted = mia_audit(&out.model, &clients[0], None, &control).unwrap();
        assert_eq!(permuted.m, 300);
        assert!((0.4..=0.6).contains(&permuted.attack_auc), "seed {seed}: {}", permuted.attack_auc);
    }
}

#[test]
fn audit_is_read_only_and_deterministic() {
    let (out, clients) = overfit(4);
    let mut model = out.model.clone();
    let mut rng = Rng::new(5);
    let mut adapter = AdapterParams::init(&mut rng);
    adapter.outer = DenseLayer::glorot(CUT_DIM, CUT_DIM, &mut rng);
    model.adapter = Some(adapter);
    let before = (model.trunk.fingerprint(), model.heads.fingerprint(), model.adapter.as_ref().unwrap().fingerprint());
    let snapshot = clients[0].x.clone();
    let defense = DefenseConfig {
        clip_norm: 1.0,
        noise_sigma: 0.5,
    };
    let a = mia_audit(&model, &clients[0], Some(&defense), &AuditConfig::default()).unwrap();
    let b = mia_audit(&model, &clients[0], Some(&defense), &AuditConfig::default()).unwrap();
    let after = (model.trunk.fingerprint(), model.heads.fingerprint(), model.adapter.as_ref().unwrap().fingerprint());
    assert_eq!(before, after);
    assert_eq!(clients[0].x, snapshot);
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a.attack_auc));
}

#[test]
fn defense_off_matches_no_defense() {
    let (out, clients) = overfit(6);
    let none = mia_audit(&out.model, &clients[0], None, &AuditConfig::default()).unwrap();
    let off = mia_audit(&out.model, &clients[0], Some(&DefenseConfig::OFF), &AuditConfig::default()).unwrap();
    assert_eq!(none, off);
}

#[test]
fn infeasible_and_invalid_audits() {
    let mut rng = Rng::new(2);
    let small = client(random_matrix(&mut rng, 30, 3), 25, &mut rng);
    let model = init_model(3, 0);
    assert!(matches!(
        mia_audit(&model, &small, None, &AuditConfig::default()),
        Err(Error::AuditInfeasible(_))
    ));
    let c = client(random_matrix(&mut rng, 100, 3), 50, &mut rng);
    let too_many = AuditConfig {
        sample_size: Some(60),
        ..Default::default()
    };
    assert!(matches!(mia_audit(&model, &c, None, &too_many), Err(Error::AuditInfeasible(_))));
    let tiny = AuditConfig {
        sample_size: Some(5),
        ..Default::default()
    };
    assert!(mia_audit(&model, &c, None, &tiny).is_err());
    let mut overlapping = c.clone();
    overlapping.test.push(0);
    overlapping.test.sort_unstable();
    assert!(matches!(
        mia_audit(&model, &overlapping, None, &AuditConfig::default()),
        Err(Error::Contract(_))
    ));
}

#[test]
fn sweep_undefended_point_equals_plain_cell() {
    let (out, clients) = overfit(7);
    let plain = mia_audit(&out.model, &clients[0], None, &AuditConfig::default()).unwrap().attack_auc;
    let points = privacy_utility_sweep(&[0.0, 0.5], &[1.0, f64::INFINITY], &[0, 1], |d, _seed| {
        let defense = (!d.is_off()).then_some(*d);
        let auc = mia_audit(&out.model, &clients[0], defense.as_ref(), &AuditConfig::default())?.attack_auc;
        Ok((0.0, auc))
    })
    .unwrap();
    assert_eq!(points.len(), 4);
    let off = points
        .iter()
        .find(|p| p.defense.noise_sigma == 0.0 && p.defense.clip_norm == f64::INFINITY)
        .unwrap();
    assert!(off.samples.iter().all(|s| s.mia_auc == plain));
    assert!(AUDIT_CAVEAT.contains("empirical audit signal rather than a proof of privacy"));
}
