use serde::{Deserialize, Serialize};

use crate::adversary::{default_tau_grid, optimal_tau, sweep_tau_with, CostModel, SearchLimits};
use crate::delegation_graph::{upward_targets, CompetenceProfile, DelegationGraph, SocialGraph, VoterId};
use crate::error::{Error, Result};
use crate::weight_engine::{compute_weights, select_electors, Mechanism};

use super::client::{ClientState, ModelVector};

/// Messages exchanged in one round, in protocol order.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundMessage {
    Broadcast(ModelVector),
    SimilarityShare { id: VoterId, similarity: Option<f64> },
    DelegationDecision { id: VoterId, target: Option<VoterId> },
    WeightRequest { id: VoterId },
    WeightUpload { id: VoterId, model: ModelVector },
}

impl RoundMessage {
    fn phase(&self) -> u8 {
        match self {
            Self::Broadcast(_) => 0,
            Self::SimilarityShare { .. } => 1,
            Self::DelegationDecision { .. } => 2,
            Self::WeightRequest { .. } => 3,
            Self::WeightUpload { .. } => 4,
        }
    }
}

/// True if the transcript never goes back to an earlier protocol phase.
pub fn protocol_order_ok(transcript: &[RoundMessage]) -> bool {
    transcript.windows(2).all(|w| w[0].phase() <= w[1].phase())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauPolicy {
    Fixed(f64),
    /// Most adversary-robust threshold affordable within the cost budget.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningRate {
    pub initial: f64,
    /// `r_t = initial / (1 + decay * t)`.
    #[serde(default)]
    pub decay: f64,
}

impl LearningRate {
    pub fn at(&self, round: usize) -> f64 {
        self.initial / (1.0 + self.decay * round as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub round: usize,
    pub global_model: ModelVector,
    pub tau: f64,
    pub votes: Vec<f64>,
    pub cost_ledger: f64,
    pub learning_rate: LearningRate,
}

impl ServerState {
    pub fn new(global_model: ModelVector, learning_rate: LearningRate) -> Self {
        Self {
            round: 0,
            global_model,
            tau: 0.0,
            votes: Vec::new(),
            cost_ledger: 0.0,
            learning_rate,
        }
    }
}

/// Upward delegation on this round's similarities. Clients only delegate to a
/// neighbour with strictly higher similarity; among equally similar best
/// neighbours the lower id wins. Undefined similarities rank lowest.
pub fn delegation_round(clients: &[ClientState], social_graph: &SocialGraph) -> Result<DelegationGraph> {
    if clients.len() != social_graph.n() {
        return Err(Error::Structural(format!(
            "{} clients on a graph of {} voters",
            clients.len(),
            social_graph.n()
        )));
    }
    let score: Vec<f64> = clients.iter().map(|c| c.similarity.unwrap_or(f64::NEG_INFINITY)).collect();
    let targets = upward_targets(social_graph, &score);
    // strictly order-preserving, distinct stand-in competencies
    let mut order: Vec<usize> = (0..clients.len()).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(b.cmp(&a)));
    let n = clients.len();
    let mut q = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        q[i] = (rank + 1) as f64 / (n + 1) as f64;
    }
    DelegationGraph::from_parts(social_graph.clone(), CompetenceProfile::new(q)?, targets)
}

/// What the server did in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerRound {
    pub tau: f64,
    pub votes: Vec<f64>,
    pub electors: Vec<VoterId>,
    pub round_cost: f64,
}

pub struct RoundPolicy {
    pub mechanism: Mechanism,
    pub cost: CostModel,
    pub cost_budget: f64,
    pub tau_policy: TauPolicy,
    pub search: SearchLimits,
}

/// Threshold for this round's votes.
pub fn choose_tau(delegation: &DelegationGraph, policy: &RoundPolicy) -> Result<f64> {
    match policy.tau_policy {
        TauPolicy::Fixed(tau) => Ok(tau),
        TauPolicy::Optimal => {
            let w = compute_weights(delegation, policy.mechanism);
            let grid = default_tau_grid(&w);
            let rows = sweep_tau_with(delegation, policy.mechanism, policy.cost, &grid, policy.search)?;
            // a threshold that elects nobody cannot aggregate anything
            let rows: Vec<_> = rows.into_iter().filter(|r| r.elector_count > 0).collect();
            optimal_tau(&rows, policy.cost_budget)
        }
    }
}

/// Component-wise vote-weighted average `sum(v_i * w_i) / sum(v_i)`.
pub fn aggregate(uploads: &[(f64, ModelVector)]) -> Result<ModelVector> {
    let Some((_, first)) = uploads.first() else {
        return Err(Error::DegenerateElection);
    };
    let mut acc = vec![0.0; first.dim()];
    let mut total_votes = 0.0;
    for (v, model) in uploads {
        for (a, x) in acc.iter_mut().zip(model.as_slice()) {
            *a += v * x;
        }
        total_votes += v;
    }
    if !(total_votes > 0.0) {
        return Err(Error::Numerical(format!("total vote weight {total_votes} is not positive")));
    }
    let next = ModelVector(acc.into_iter().map(|a| a / total_votes).collect());
    if !next.is_finite() {
        return Err(Error::Numerical("aggregated model is not finite".into()));
    }
    Ok(next)
}

/// Server side of one round: votes from the delegation graph, threshold,
/// weight requests, and the vote-weighted average of the uploaded models.
///
/// `upload` is called once per requested client and must return that client's
/// local model. On a round with no electors the server state is unchanged.
pub fn server_round(
    server: &mut ServerState,
    delegation: &DelegationGraph,
    policy: &RoundPolicy,
    transcript: &mut Vec<RoundMessage>,
    mut upload: impl FnMut(VoterId) -> Result<ModelVector>,
) -> Result<ServerRound> {
    let w = compute_weights(delegation, policy.mechanism);
    let tau = choose_tau(delegation, policy)?;
    let electors = select_electors(&w, tau);
    if electors.is_empty() {
        return Err(Error::DegenerateElection);
    }
    transcript.extend(electors.members.iter().map(|&id| RoundMessage::WeightRequest { id }));

    let dim = server.global_model.dim();
    let mut uploads = Vec::with_capacity(electors.len());
    for &id in &electors.members {
        let model = upload(id)?;
        if model.dim() != dim {
            return Err(Error::Structural(format!("client {id} uploaded a {}-dim model", model.dim())));
        }
        transcript.push(RoundMessage::WeightUpload { id, model: model.clone() });
        uploads.push((w.cast_weight[id], model));
    }
    let next = aggregate(&uploads)?;

    let round_cost = policy.cost.transfer_cost(electors.len());
    server.round += 1;
    server.global_model = next;
    server.tau = tau;
    server.votes = w.cast_weight.clone();
    server.cost_ledger += round_cost;
    Ok(ServerRound {
        tau,
        votes: w.cast_weight,
        electors: electors.members,
        round_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fedvrd::client::Sample;

    fn clients_with(similarities: &[f64]) -> Vec<ClientState> {
        similarities
            .iter()
            .enumerate()
            .map(|(id, &s)| {
                let mut c = ClientState::new(id, vec![Sample { x: vec![1.0], y: 1.0 }], vec![]).unwrap();
                c.similarity = Some(s);
                c
            })
            .collect()
    }

    fn fixed(tau: f64, mechanism: Mechanism) -> RoundPolicy {
        RoundPolicy {
            mechanism,
            cost: CostModel::new(0.1, 0.4).unwrap(),
            cost_budget: 10.0,
            tau_policy: TauPolicy::Fixed(tau),
            search: SearchLimits::default(),
        }
    }

    #[test]
    fn isolated_clients_all_vote() {
        let d = delegation_round(&clients_with(&[0.1, 0.5, 0.3]), &SocialGraph::empty(3)).unwrap();
        assert_eq!(d.gurus(), vec![0, 1, 2]);
    }

    #[test]
    fn chain_delegates_toward_most_similar() {
        let g = SocialGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let d = delegation_round(&clients_with(&[0.2, 0.5, 0.9]), &g).unwrap();
        assert_eq!(d.delegations(), &[Some(1), Some(2), None]);
    }

    #[test]
    fn equal_similarities_do_not_delegate() {
        let g = SocialGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let d = delegation_round(&clients_with(&[0.4; 4]), &g).unwrap();
        assert_eq!(d.gurus().len(), 4);
    }

    #[test]
    fn ties_between_better_neighbours_go_to_lower_id() {
        // 1 sits between 0 and 2, both more similar and equal
        let g = SocialGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let d = delegation_round(&clients_with(&[0.8, 0.1, 0.8]), &g).unwrap();
        assert_eq!(d.delegate_of(1), Some(0));
    }

    #[test]
    fn aggregate_examples() {
        let out = aggregate(&[(2.0, ModelVector(vec![0.0, 0.0])), (5.5, ModelVector(vec![1.0, 1.0]))]).unwrap();
        for v in out.0 {
            assert!((v - 5.5 / 7.5).abs() < 1e-15);
            assert!((v - 0.733_333_333_333_333_3).abs() < 1e-12);
        }
        let same = ModelVector(vec![0.3, -1.7]);
        let out = aggregate(&[(1.0, same.clone()), (9.25, same.clone()), (0.5, same.clone())]).unwrap();
        for (a, b) in out.0.iter().zip(&same.0) {
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
        assert!(matches!(aggregate(&[]), Err(Error::DegenerateElection)));
    }

    #[test]
    fn server_round_weights_uploads_by_votes() {
        let g = SocialGraph::from_edges(3, [(0, 1)]).unwrap();
        let d = delegation_round(&clients_with(&[0.9, 0.1, 0.5]), &g).unwrap();
        // votes under viscous(1/3): client 0 gets 1 + 1/3, client 2 gets 1
        let mechanism = Mechanism::viscous(1.0 / 3.0).unwrap();
        let mut server = ServerState::new(ModelVector(vec![0.0]), LearningRate { initial: 0.1, decay: 0.0 });
        let models = [ModelVector(vec![1.0]), ModelVector(vec![7.0]), ModelVector(vec![0.0])];
        let mut transcript = Vec::new();
        let out = server_round(&mut server, &d, &fixed(0.0, mechanism), &mut transcript, |id| {
            Ok(models[id].clone())
        })
        .unwrap();
        assert_eq!(out.electors, vec![0, 2]);
        let expected = (4.0 / 3.0) / (4.0 / 3.0 + 1.0);
        assert!((server.global_model.0[0] - expected).abs() < 1e-15);
        assert!((server.cost_ledger - 0.2).abs() < 1e-15);
        assert!(protocol_order_ok(&transcript));
    }

    #[test]
    fn degenerate_round_keeps_state() {
        let d = delegation_round(&clients_with(&[0.1, 0.2]), &SocialGraph::empty(2)).unwrap();
        let mut server = ServerState::new(ModelVector(vec![3.0]), LearningRate { initial: 0.1, decay: 0.0 });
        let before = server.clone();
        let res = server_round(
            &mut server,
            &d,
            &fixed(5.0, Mechanism::liquid()),
            &mut Vec::new(),
            |_| Ok(ModelVector(vec![0.0])),
        );
        assert!(matches!(res, Err(Error::DegenerateElection)));
        assert_eq!(server, before);
    }

    #[test]
    fn transcript_order() {
        let ok = vec![
            RoundMessage::Broadcast(ModelVector(vec![0.0])),
            RoundMessage::SimilarityShare { id: 0, similarity: Some(1.0) },
            RoundMessage::DelegationDecision { id: 0, target: None },
            RoundMessage::WeightRequest { id: 0 },
            RoundMessage::WeightUpload { id: 0, model: ModelVector(vec![0.0]) },
        ];
        assert!(protocol_order_ok(&ok));
        let mut bad = ok.clone();
        bad.swap(1, 2);
        assert!(!protocol_order_ok(&bad));
    }
}
