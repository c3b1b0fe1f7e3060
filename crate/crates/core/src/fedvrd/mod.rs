//! FedVRD: federated aggregation where clients delegate by model similarity
//! and the server averages only the models of clients whose viscous-retained
//! vote exceeds a threshold.
//!
//! The network is simulated as a deterministic single-threaded event loop.
//! Local training inside a round runs in parallel; results are collected in
//! client order so the history does not depend on the worker count.

mod client;
mod server;

pub use client::{
    cosine_similarity, local_train, squared_loss, squared_loss_gradient, ClientState, ModelVector, Sample,
};
pub use server::{
    aggregate, choose_tau, delegation_round, protocol_order_ok, server_round, LearningRate, RoundMessage,
    RoundPolicy, ServerRound, ServerState, TauPolicy,
};

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{CostModel, SearchLimits};
use crate::delegation_graph::{composite_graph, SocialGraph, TopologySpec, VoterId};
use crate::error::{Error, Result};
use crate::rng;
use crate::weight_engine::Mechanism;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub c: f64,
    /// Per-round transfer budget used when choosing the optimal threshold.
    pub budget: f64,
    /// Adversary budget assumed by the robustness analysis.
    pub c_adv: f64,
}

/// Synthetic least-squares data: every client has its own true weights,
/// drawn around a shared vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientDataSpec {
    pub samples: usize,
    pub noise: f64,
    /// Spread of client true weights around the shared vector.
    pub heterogeneity: f64,
}

impl Default for ClientDataSpec {
    fn default() -> Self {
        Self {
            samples: 20,
            noise: 0.1,
            heterogeneity: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedVrdConfig {
    pub topology: TopologySpec,
    pub alpha: f64,
    pub beta: f64,
    pub tau_policy: TauPolicy,
    pub cost: CostConfig,
    pub rounds: usize,
    pub d_model: usize,
    pub seed: u64,
    pub learning_rate: LearningRate,
    #[serde(default)]
    pub client_data: ClientDataSpec,
    #[serde(default)]
    pub search: SearchLimits,
}

impl FedVrdConfig {
    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        Mechanism::new(self.alpha, self.beta)?;
        CostModel::new(self.cost.c, self.cost.c_adv)?;
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.d_model == 0 {
            return Err(Error::Config("d_model must be >= 1".into()));
        }
        if self.client_data.samples == 0 {
            return Err(Error::Config("client_data.samples must be >= 1".into()));
        }
        if !(self.learning_rate.initial > 0.0) || self.learning_rate.decay < 0.0 {
            return Err(Error::Config("learning_rate.initial must be > 0 and decay >= 0".into()));
        }
        if let TauPolicy::Fixed(tau) = self.tau_policy {
            if !(tau >= 0.0) {
                return Err(Error::Config(format!("fixed tau must be >= 0, got {tau}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub tau: Option<f64>,
    pub electors: Vec<VoterId>,
    pub votes: Vec<f64>,
    pub similarities: Vec<Option<f64>>,
    pub delegations: Vec<Option<VoterId>>,
    pub global_model: ModelVector,
    /// Mean squared error over the union of all client datasets.
    pub loss: f64,
    pub round_cost: f64,
    pub cost_cum: f64,
    /// Set when the round had no electors and the previous model was kept.
    pub aborted: Option<String>,
    #[serde(skip)]
    pub transcript: Vec<RoundMessage>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunHistory {
    pub initial_model: ModelVector,
    pub initial_loss: f64,
    pub rounds: Vec<RoundRecord>,
    /// Error that stopped the run early; completed rounds are kept.
    pub halted: Option<String>,
}

impl RunHistory {
    pub fn final_loss(&self) -> f64 {
        self.rounds.last().map_or(self.initial_loss, |r| r.loss)
    }
}

pub struct Simulation {
    graph: SocialGraph,
    clients: Vec<ClientState>,
    server: ServerState,
    policy: RoundPolicy,
}

impl Simulation {
    pub fn new(config: &FedVrdConfig) -> Result<Self> {
        config.validate()?;
        let graph = composite_graph(&config.topology)?;
        let mut data_rng = rng::stream(config.seed, 0);
        let shared: Vec<f64> = normal_vec(config.d_model, &mut data_rng);
        let spec = config.client_data;
        let clients = (0..graph.n())
            .map(|id| {
                let truth: Vec<f64> = shared
                    .iter()
                    .map(|w| w + spec.heterogeneity * data_rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let dataset = (0..spec.samples)
                    .map(|_| {
                        let x = normal_vec(config.d_model, &mut data_rng);
                        let clean: f64 = truth.iter().zip(&x).map(|(w, x)| w * x).sum();
                        let y = clean + spec.noise * data_rng.sample::<f64, _>(StandardNormal);
                        Sample { x, y }
                    })
                    .collect();
                ClientState::new(id, dataset, graph.neighbors(id).to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        let initial = ModelVector::random(config.d_model, &mut rng::stream(config.seed, 1));
        Ok(Self {
            graph,
            clients,
            server: ServerState::new(initial, config.learning_rate),
            policy: RoundPolicy {
                mechanism: Mechanism::new(config.alpha, config.beta)?,
                cost: CostModel::new(config.cost.c, config.cost.c_adv)?,
                cost_budget: config.cost.budget,
                tau_policy: config.tau_policy,
                search: config.search,
            },
        })
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn global_loss(&self) -> f64 {
        let model = &self.server.global_model;
        let (sum, count) = self.clients.iter().fold((0.0, 0usize), |(s, c), client| {
            (s + squared_loss(model, &client.dataset) * client.dataset.len() as f64, c + client.dataset.len())
        });
        sum / count as f64
    }

    /// Runs one protocol round. `round` is 1-based.
    pub fn step(&mut self, round: usize) -> Result<RoundRecord> {
        let broadcast = self.server.global_model.clone();
        let mut transcript = vec![RoundMessage::Broadcast(broadcast.clone())];

        let rate = self.server.learning_rate.at(round - 1);
        let trained = self
            .clients
            .par_iter()
            .map(|c| local_train(c, &broadcast, rate))
            .collect::<Result<Vec<_>>>()?;
        for (client, model) in self.clients.iter_mut().zip(trained) {
            client.similarity = cosine_similarity(&model, &broadcast).ok();
            client.local_model = Some(model);
        }
        transcript.extend(self.clients.iter().map(|c| RoundMessage::SimilarityShare {
            id: c.id,
            similarity: c.similarity,
        }));

        let delegation = delegation_round(&self.clients, &self.graph)?;
        transcript.extend((0..self.clients.len()).map(|id| RoundMessage::DelegationDecision {
            id,
            target: delegation.delegate_of(id),
        }));

        let clients = &self.clients;
        let outcome = server_round(&mut self.server, &delegation, &self.policy, &mut transcript, |id| {
            clients[id]
                .local_model
                .clone()
                .ok_or_else(|| Error::Structural(format!("client {id} has no local model")))
        });
        let similarities = self.clients.iter().map(|c| c.similarity).collect();
        let delegations = delegation.delegations().to_vec();
        let (tau, electors, votes, round_cost, aborted) = match outcome {
            Ok(r) => (Some(r.tau), r.electors, r.votes, r.round_cost, None),
            Err(e @ (Error::DegenerateElection | Error::BudgetInfeasible { .. })) => {
                warn!("round {round} aborted: {e}; keeping previous global model");
                (None, Vec::new(), Vec::new(), 0.0, Some(e.to_string()))
            }
            Err(e) => return Err(e),
        };
        Ok(RoundRecord {
            round,
            tau,
            electors,
            votes,
            similarities,
            delegations,
            global_model: self.server.global_model.clone(),
            loss: self.global_loss(),
            round_cost,
            cost_cum: self.server.cost_ledger,
            aborted,
            transcript,
        })
    }
}

fn normal_vec<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Runs all configured rounds. Setup errors are returned; an error during a
/// round stops the run and is recorded in [`RunHistory::halted`].
pub fn run(config: &FedVrdConfig) -> Result<RunHistory> {
    let mut sim = Simulation::new(config)?;
    let mut history = RunHistory {
        initial_model: sim.server().global_model.clone(),
        initial_loss: sim.global_loss(),
        rounds: Vec::with_capacity(config.rounds),
        halted: None,
    };
    for t in 1..=config.rounds {
        match sim.step(t) {
            Ok(record) => history.rounds.push(record),
            Err(e) => {
                history.halted = Some(e.to_string());
                break;
            }
        }
    }
    Ok(history)
}
