//! The four training protocols as deterministic loops over simulated
//! client/server state.
//!
//! All modes share the same initialization stream and the same per-client
//! batch streams keyed by `(seed, client, round, epoch)`, and all of them
//! compute gradients with the same cut-layer split of the backward pass.
//! With one client this makes centralized, FedAvg, split and hybrid
//! training follow the same parameter trajectory.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Mode, RoundConfig};
use super::defense::{defend, defense_backward, DefenseConfig};
use super::fedavg::fedavg_aggregate;
use super::ledger::{CommLedger, Direction, MessageKind};
use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::model::{adapter_backward, apply_adapter, AdapterParams, TwoHeadModel};
use crate::nn::{forward_trunk, head_backward, trunk_backward, AdamState, Heads, Parameters, TrunkParams, CUT_DIM};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub mode: Mode,
    pub mean_train_loss: f64,
    pub bytes: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Shared trunk and heads; never carries an adapter.
    pub model: TwoHeadModel,
    /// Client-local adapters, indexed like the input clients.
    pub adapters: Vec<Option<AdapterParams>>,
    pub ledger: CommLedger,
    pub history: Vec<RoundRecord>,
    pub rounds: usize,
}

impl TrainOutcome {
    /// Model as seen by client `k` (its adapter attached when it has one).
    pub fn client_model(&self, k: usize) -> TwoHeadModel {
        self.model.with_adapter(self.adapters.get(k).and_then(Option::as_ref))
    }
}

/// Shuffled mini-batches of `train` for one epoch of one client.
pub fn epoch_batches(train: &[usize], batch_size: usize, seed: u64, client: usize, round: usize, epoch: usize) -> Vec<Vec<usize>> {
    let mut order = train.to_vec();
    Rng::derive(seed, &[stream::BATCH, client as u64, round as u64, epoch as u64]).shuffle(&mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn init_model(input_dim: usize, seed: u64) -> TwoHeadModel {
    TwoHeadModel::init(input_dim, &mut Rng::derive(seed, &[stream::INIT]))
}

fn init_adapter(seed: u64, client: usize) -> AdapterParams {
    AdapterParams::init(&mut Rng::derive(seed, &[stream::ADAPTER, client as u64]))
}

/// Adam states for a full model trained in one place.
#[derive(Debug, Clone)]
pub struct LocalOptimizer {
    pub trunk: AdamState,
    pub heads: AdamState,
}

impl LocalOptimizer {
    pub fn new(model: &TwoHeadModel, lr_client: f64, lr_server: f64) -> Self {
        Self {
            trunk: AdamState::new(&model.trunk, lr_client),
            heads: AdamState::new(&model.heads, lr_server),
        }
    }
}

/// One mini-batch Adam step on the full model; returns the batch loss.
pub fn centralized_step(
    model: &mut TwoHeadModel,
    opt: &mut LocalOptimizer,
    data: &ClientDataset,
    batch: &[usize],
) -> Result<f64> {
    let (x, t, y) = data.subset(batch);
    let (z, cache) = forward_trunk(&model.trunk, &x)?;
    let pass = head_backward(&model.heads, &z, &t, &y)?;
    let trunk_grads = trunk_backward(&model.trunk, &cache, &pass.grad_z)?;
    opt.heads.step(&mut model.heads, &pass.heads)?;
    opt.trunk.step(&mut model.trunk, &trunk_grads)?;
    Ok(pass.loss)
}

/// Server side of split-based training.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub heads: Heads,
    pub opt: AdamState,
    pub ledger: CommLedger,
}

impl ServerState {
    pub fn new(heads: Heads, lr_server: f64) -> Self {
        let opt = AdamState::new(&heads, lr_server);
        Self {
            heads,
            opt,
            ledger: CommLedger::new(),
        }
    }
}

/// Client side of split-based training.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub index: usize,
    pub trunk: TrunkParams,
    pub trunk_opt: AdamState,
    /// Never transmitted.
    pub adapter: Option<AdapterParams>,
    pub adapter_opt: Option<AdamState>,
    pub defense_rng: Rng,
}

impl ClientState {
    pub fn new(index: usize, trunk: TrunkParams, adapter: Option<AdapterParams>, lr_client: f64, seed: u64) -> Self {
        let trunk_opt = AdamState::new(&trunk, lr_client);
        let adapter_opt = adapter.as_ref().map(|a| AdamState::new(a, lr_client));
        Self {
            index,
            trunk,
            trunk_opt,
            adapter,
            adapter_opt,
            defense_rng: Rng::derive(seed, &[stream::DEFENSE, index as u64]),
        }
    }

    fn reseed_defense(&mut self, seed: u64, round: usize) {
        self.defense_rng = Rng::derive(seed, &[stream::DEFENSE, self.index as u64, round as u64]);
    }
}

/// One split-learning exchange on a mini-batch.
///
/// The client sends (possibly adapted and defended) activations plus the
/// batch's `(t, y)`; the server updates the heads and returns the
/// activation gradient; the client finishes backpropagation. Returns the
/// batch loss.
pub fn split_round(
    client: &mut ClientState,
    server: &mut ServerState,
    data: &ClientDataset,
    batch: &[usize],
    defense: Option<&DefenseConfig>,
    round: usize,
) -> Result<f64> {
    let (x, t, y) = data.subset(batch);
    let b = batch.len() as u64;

    // client forward
    let (z, trunk_cache) = forward_trunk(&client.trunk, &x)?;
    let (z_adapted, adapter_cache) = match &client.adapter {
        Some(a) => {
            let (out, cache) = apply_adapter(&z, a)?;
            (out, Some(cache))
        }
        None => (z.clone(), None),
    };
    let (sent, defense_cache) = match defense {
        Some(d) => {
            let (out, cache) = defend(&z_adapted, d, &mut client.defense_rng)?;
            (out, Some(cache))
        }
        None => (z_adapted.clone(), None),
    };
    if sent.cols() != CUT_DIM {
        return Err(Error::dim("split_round activations", CUT_DIM, sent.cols()));
    }
    server.ledger.record(round, client.index, Direction::Up, MessageKind::Activations, b * CUT_DIM as u64);
    server.ledger.record(round, client.index, Direction::Up, MessageKind::Labels, b * 2);

    // server
    let pass = head_backward(&server.heads, &sent, &t, &y)?;
    server.opt.step(&mut server.heads, &pass.heads)?;
    server
        .ledger
        .record(round, client.index, Direction::Down, MessageKind::ActivationGrads, b * CUT_DIM as u64);

    // client backward
    let grad_adapted = match &defense_cache {
        Some(cache) => defense_backward(&z_adapted, cache, &pass.grad_z),
        None => pass.grad_z,
    };
    let (grad_z, adapter_grads) = match (&client.adapter, &adapter_cache) {
        (Some(a), Some(cache)) => {
            let (grads, grad_z) = adapter_backward(a, cache, &grad_adapted)?;
            (grad_z, Some(grads))
        }
        _ => (grad_adapted, None),
    };
    let trunk_grads = trunk_backward(&client.trunk, &trunk_cache, &grad_z)?;
    if let (Some(grads), Some(adapter), Some(opt)) = (adapter_grads, client.adapter.as_mut(), client.adapter_opt.as_mut()) {
        opt.step(adapter, &grads)?;
    }
    client.trunk_opt.step(&mut client.trunk, &trunk_grads)?;
    Ok(pass.loss)
}

fn active_clients(clients: &[ClientDataset]) -> Vec<usize> {
    (0..clients.len()).filter(|&k| clients[k].n_train() > 0).collect()
}

fn check_clients(clients: &[ClientDataset]) -> Result<usize> {
    let first = clients
        .first()
        .ok_or_else(|| Error::Empty("no clients".into()))?;
    let d = first.input_dim();
    if clients.iter().any(|c| c.input_dim() != d) {
        return Err(Error::dim("client feature width", d, "mixed"));
    }
    if active_clients(clients).is_empty() {
        return Err(Error::Empty("every client has an empty training split".into()));
    }
    Ok(d)
}

fn participants(active: &[usize], fraction: f64, seed: u64, round: usize) -> Vec<usize> {
    if fraction >= 1.0 {
        return active.to_vec();
    }
    let m = ((fraction * active.len() as f64).ceil() as usize).clamp(1, active.len());
    let mut picked = active.to_vec();
    Rng::derive(seed, &[stream::PARTICIPATION, round as u64]).shuffle(&mut picked);
    picked.truncate(m);
    picked.sort_unstable();
    picked
}

/// Pooled-data training; nothing is transmitted.
pub fn run_centralized(clients: &[ClientDataset], config: &RoundConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let d = check_clients(clients)?;
    let active: Vec<ClientDataset> = active_clients(clients).into_iter().map(|k| clients[k].clone()).collect();
    let pooled = ClientDataset::pool(&active)?;
    let mut model = init_model(d, config.seed);
    let mut opt = LocalOptimizer::new(&model, config.lr_client, config.lr_server);
    let mut history = Vec::with_capacity(config.rounds);
    for round in 0..config.rounds {
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for epoch in 0..config.local_epochs {
            for batch in epoch_batches(&pooled.train, config.batch_size, config.seed, 0, round, epoch) {
                loss_sum += centralized_step(&mut model, &mut opt, &pooled, &batch)?;
                batches += 1;
            }
        }
        history.push(RoundRecord {
            round,
            mode: Mode::Centralized,
            mean_train_loss: loss_sum / batches as f64,
            bytes: 0,
        });
    }
    Ok(TrainOutcome {
        model,
        adapters: vec![None; clients.len()],
        ledger: CommLedger::new(),
        history,
        rounds: config.rounds,
    })
}

/// FedAvg over full models (trunk and heads). Client optimizer state
/// persists across rounds; local training runs concurrently.
pub fn run_fedavg(clients: &[ClientDataset], config: &RoundConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let d = check_clients(clients)?;
    let active = active_clients(clients);
    let mut global = init_model(d, config.seed);
    let payload = global.trunk.num_params() as u64 + global.heads.num_params() as u64;
    let mut optimizers: Vec<LocalOptimizer> = clients
        .iter()
        .map(|_| LocalOptimizer::new(&global, config.lr_client, config.lr_server))
        .collect();
    let mut ledger = CommLedger::new();
    let mut history = Vec::with_capacity(config.rounds);

    for round in 0..config.rounds {
        let selected = participants(&active, config.participation, config.seed, round);
        let before = ledger.total_bytes();
        for &k in &selected {
            ledger.record(round, k, Direction::Down, MessageKind::Weights, payload);
        }
        let results: Vec<Result<(TwoHeadModel, f64, usize)>> = optimizers
            .par_iter_mut()
            .enumerate()
            .filter(|(k, _)| selected.contains(k))
            .map(|(k, opt)| {
                let mut local = global.clone();
                let mut loss_sum = 0.0;
                let mut batches = 0;
                for epoch in 0..config.local_epochs {
                    for batch in epoch_batches(&clients[k].train, config.batch_size, config.seed, k, round, epoch) {
                        loss_sum += centralized_step(&mut local, opt, &clients[k], &batch)?;
                        batches += 1;
                    }
                }
                Ok((local, loss_sum, batches))
            })
            .collect();
        let mut trunks = Vec::with_capacity(selected.len());
        let mut heads = Vec::with_capacity(selected.len());
        let mut sizes = Vec::with_capacity(selected.len());
        let (mut loss_sum, mut batches) = (0.0, 0);
        for (&k, result) in selected.iter().zip(results) {
            let (local, l, b) = result?;
            ledger.record(round, k, Direction::Up, MessageKind::Weights, payload);
            trunks.push(local.trunk);
            heads.push(local.heads);
            sizes.push(clients[k].n_train());
            loss_sum += l;
            batches += b;
        }
        global.trunk = fedavg_aggregate(&trunks, &sizes)?;
        global.heads = fedavg_aggregate(&heads, &sizes)?;
        history.push(RoundRecord {
            round,
            mode: Mode::Fedavg,
            mean_train_loss: loss_sum / batches as f64,
            bytes: ledger.total_bytes() - before,
        });
    }
    Ok(TrainOutcome {
        model: global,
        adapters: vec![None; clients.len()],
        ledger,
        history,
        rounds: config.rounds,
    })
}

fn client_states(clients: &[ClientDataset], model: &TwoHeadModel, config: &RoundConfig) -> Vec<ClientState> {
    (0..clients.len())
        .map(|k| {
            let adapter = config.personalization.then(|| init_adapter(config.seed, k));
            ClientState::new(k, model.trunk.clone(), adapter, config.lr_client, config.seed)
        })
        .collect()
}

fn local_split_epochs(
    state: &mut ClientState,
    server: &mut ServerState,
    data: &ClientDataset,
    config: &RoundConfig,
    round: usize,
) -> Result<(f64, usize)> {
    state.reseed_defense(config.seed, round);
    let mut loss_sum = 0.0;
    let mut batches = 0;
    for epoch in 0..config.local_epochs {
        for batch in epoch_batches(&data.train, config.batch_size, config.seed, state.index, round, epoch) {
            loss_sum += split_round(state, server, data, &batch, config.defense.as_ref(), round)?;
            batches += 1;
        }
    }
    Ok((loss_sum, batches))
}

/// Sequential split learning: one trunk relayed from client to client
/// through the server, one server-side pair of heads.
pub fn run_split(clients: &[ClientDataset], config: &RoundConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let d = check_clients(clients)?;
    let active = active_clients(clients);
    let model = init_model(d, config.seed);
    let trunk_size = model.trunk.num_params() as u64;
    let mut server = ServerState::new(model.heads.clone(), config.lr_server);
    let mut states = client_states(clients, &model, config);
    let mut trunk = model.trunk;
    let mut history = Vec::with_capacity(config.rounds);

    for round in 0..config.rounds {
        let before = server.ledger.total_bytes();
        let (mut loss_sum, mut batches) = (0.0, 0);
        for &k in &active {
            server.ledger.record(round, k, Direction::Down, MessageKind::Weights, trunk_size);
            let state = &mut states[k];
            state.trunk = trunk;
            let (l, b) = local_split_epochs(state, &mut server, &clients[k], config, round)?;
            loss_sum += l;
            batches += b;
            trunk = state.trunk.clone();
            server.ledger.record(round, k, Direction::Up, MessageKind::Weights, trunk_size);
        }
        history.push(RoundRecord {
            round,
            mode: Mode::Split,
            mean_train_loss: loss_sum / batches as f64,
            bytes: server.ledger.total_bytes() - before,
        });
    }
    Ok(TrainOutcome {
        model: TwoHeadModel {
            trunk,
            heads: server.heads,
            adapter: None,
        },
        adapters: states.into_iter().map(|s| s.adapter).collect(),
        ledger: server.ledger,
        history,
        rounds: config.rounds,
    })
}

/// Hybrid federated-split training: split execution against a shared server
/// head, FedAvg of client trunks at the end of each round. Clients run in
/// fixed order within a round so head updates are serialized.
pub fn run_hybrid(clients: &[ClientDataset], config: &RoundConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let d = check_clients(clients)?;
    let active = active_clients(clients);
    let model = init_model(d, config.seed);
    let trunk_size = model.trunk.num_params() as u64;
    let mut server = ServerState::new(model.heads.clone(), config.lr_server);
    let mut states = client_states(clients, &model, config);
    let mut global_trunk = model.trunk;
    let mut history = Vec::with_capacity(config.rounds);

    for round in 0..config.rounds {
        let selected = participants(&active, config.participation, config.seed, round);
        let before = server.ledger.total_bytes();
        for &k in &selected {
            server.ledger.record(round, k, Direction::Down, MessageKind::Weights, trunk_size);
        }
        let (mut loss_sum, mut batches) = (0.0, 0);
        let mut trunks = Vec::with_capacity(selected.len());
        let mut sizes = Vec::with_capacity(selected.len());
        for &k in &selected {
            let state = &mut states[k];
            state.trunk = global_trunk.clone();
            let (l, b) = local_split_epochs(state, &mut server, &clients[k], config, round)?;
            loss_sum += l;
            batches += b;
            // adapters stay on the client
            server.ledger.record(round, k, Direction::Up, MessageKind::Weights, trunk_size);
            trunks.push(state.trunk.clone());
            sizes.push(clients[k].n_train());
        }
        global_trunk = fedavg_aggregate(&trunks, &sizes)?;
        history.push(RoundRecord {
            round,
            mode: Mode::Hybrid,
            mean_train_loss: loss_sum / batches as f64,
            bytes: server.ledger.total_bytes() - before,
        });
    }
    Ok(TrainOutcome {
        model: TwoHeadModel {
            trunk: global_trunk,
            heads: server.heads,
            adapter: None,
        },
        adapters: states.into_iter().map(|s| s.adapter).collect(),
        ledger: server.ledger,
        history,
        rounds: config.rounds,
    })
}

pub fn train(clients: &[ClientDataset], config: &RoundConfig) -> Result<TrainOutcome> {
    match config.mode {
        Mode::Centralized => run_centralized(clients, config),
        Mode::Fedavg => run_fedavg(clients, config),
        Mode::Split => run_split(clients, config),
        Mode::Hybrid => run_hybrid(clients, config),
    }
}
