//! Transfer-cost accounting and the adversary's best response to a threshold.
//!
//! Honest electors are the voters whose viscous-retained cast weight exceeds
//! `tau`; each one transmits at cost `c`. An adversary with budget `c_adv` can
//! afford `floor(c_adv / c)` voting agents ("cores") and may deploy any number
//! of sub-threshold helpers that delegate weight toward those cores.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::delegation_graph::{CompetenceProfile, DelegationGraph, SocialGraph};
use crate::error::{Error, Result};
use crate::weight_engine::{compute_weights, select_electors, Mechanism, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Cost of one model-weight transfer.
    pub c: f64,
    /// Adversary budget.
    pub c_adv: f64,
}

impl CostModel {
    pub fn new(c: f64, c_adv: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(c_adv >= 0.0 && c_adv.is_finite()) {
            return Err(Error::Config(format!("need c > 0 and c_adv >= 0, got c = {c}, c_adv = {c_adv}")));
        }
        Ok(Self { c, c_adv })
    }

    /// Number of adversarial agents that can afford to transmit.
    pub fn n_adv(&self) -> usize {
        (self.c_adv / self.c).floor() as usize
    }

    pub fn transfer_cost(&self, electors: usize) -> f64 {
        self.c * electors as f64
    }
}

/// Total cast weight of the honest electors at threshold `tau`.
pub fn honest_cast_weight(d: &DelegationGraph, m: Mechanism, tau: f64) -> f64 {
    let w = compute_weights(d, m);
    let e = select_electors(&w, tau);
    e.members.iter().map(|&i| w.cast_weight[i]).fold(0.0, |acc, w| acc + w)
}

/// Adversarial forest. Agents are numbered tree by tree, breadth first, so
/// every parent precedes its children.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdversaryTopology {
    pub parent: Vec<Option<usize>>,
    pub cores: Vec<usize>,
    pub core_weights: Vec<f64>,
    pub total_agents: usize,
    /// Agents per depth for each tree, root excluded.
    pub profiles: Vec<Vec<usize>>,
}

impl AdversaryTopology {
    pub fn total_weight(&self) -> f64 {
        self.core_weights.iter().sum()
    }

    /// Realises the forest as a delegation graph. Competencies decrease with
    /// agent index, which makes every delegation upward.
    pub fn delegation_graph(&self) -> DelegationGraph {
        let n = self.total_agents;
        let edges = self.parent.iter().enumerate().filter_map(|(i, p)| p.map(|p| (i, p)));
        let base = SocialGraph::from_edges(n, edges).expect("forest edges are valid");
        let q = (0..n).map(|i| (n - i) as f64 / (n + 1) as f64).collect();
        let q = CompetenceProfile::new(q).expect("distinct competencies");
        DelegationGraph::from_parts(base, q, self.parent.clone()).expect("parents precede children")
    }

    /// Re-checks the topology through the weight engine: exactly the cores
    /// exceed `tau`, there are at most `core_budget` of them, and together they
    /// outweigh `target`.
    pub fn verify(&self, alpha: f64, tau: f64, target: f64, core_budget: usize) -> Result<WeightVector> {
        let w = compute_weights(&self.delegation_graph(), Mechanism::viscous_retained(alpha)?);
        let above = select_electors(&w, tau);
        if above.members != self.cores {
            return Err(Error::Structural(format!(
                "agents above threshold {:?} differ from cores {:?}",
                above.members, self.cores
            )));
        }
        if self.cores.len() > core_budget {
            return Err(Error::Structural(format!(
                "{} cores exceed budget {core_budget}",
                self.cores.len()
            )));
        }
        let total: f64 = self.cores.iter().map(|&i| w.cast_weight[i]).sum();
        if total <= target {
            return Err(Error::Structural(format!("core weight {total} does not exceed {target}")));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum AdversarySearch {
    Found(AdversaryTopology),
    /// Nothing within the agent bound succeeds; larger forests were not tried.
    ExceedsBound { bound: usize },
    /// No forest of any size succeeds.
    Infeasible,
}

impl AdversarySearch {
    pub fn total_agents(&self) -> Option<usize> {
        match self {
            Self::Found(t) => Some(t.total_agents),
            _ => None,
        }
    }

    pub fn status(&self) -> &'static str {
        match self {
            Self::Found(_) => "found",
            Self::ExceedsBound { .. } => "exceeds_bound",
            Self::Infeasible => "infeasible",
        }
    }

    /// Larger is harder for the adversary.
    fn robustness_key(&self) -> (u8, usize) {
        match self {
            Self::Found(t) => (0, t.total_agents),
            Self::ExceedsBound { bound } => (1, *bound),
            Self::Infeasible => (2, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchLimits {
    pub max_agents: usize,
    /// Deepest helper level considered in a tree profile.
    pub max_depth: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            max_agents: 200,
            max_depth: 2,
        }
    }
}

pub fn min_adversaries(alpha: f64, tau: f64, target_weight: f64, core_budget: usize) -> Result<AdversarySearch> {
    min_adversaries_with(alpha, tau, target_weight, core_budget, SearchLimits::default())
}

/// Best single tree of a given size.
#[derive(Debug, Clone)]
struct TreeCandidate {
    weight: f64,
    profile: Vec<usize>,
}

/// Child counts per parent when `children` nodes are spread over `parents`.
fn balanced_split(children: usize, parents: usize) -> impl Iterator<Item = usize> {
    let (base, extra) = (children / parents, children % parents);
    (0..parents).map(move |p| base + usize::from(p < extra))
}

/// Flows of every level under the balanced arrangement, deepest level last.
/// Leaves are spread evenly; above that, heaviest children go to the
/// lightest parents.
fn profile_flows(profile: &[usize], alpha: f64) -> Vec<Vec<f64>> {
    let depth = profile.len();
    let mut levels: Vec<Vec<f64>> = vec![Vec::new(); depth];
    if depth == 0 {
        return levels;
    }
    levels[depth - 1] = vec![1.0; profile[depth - 1]];
    for d in (0..depth - 1).rev() {
        let parents = profile[d];
        levels[d] = if d + 1 == depth - 1 {
            balanced_split(profile[d + 1], parents)
                .map(|k| 1.0 + alpha * k as f64)
                .collect()
        } else {
            lightest_first(&levels[d + 1], parents)
                .into_iter()
                .map(|(s, _)| 1.0 + alpha * s)
                .collect()
        };
    }
    levels
}

/// Greedy assignment of `children` flows (heaviest first) to the parent with
/// the smallest incoming flow. Returns per-parent (incoming, assigned children).
fn lightest_first(children: &[f64], parents: usize) -> Vec<(f64, Vec<usize>)> {
    let mut order: Vec<usize> = (0..children.len()).collect();
    order.sort_by(|&a, &b| children[b].total_cmp(&children[a]).then(a.cmp(&b)));
    let mut slots = vec![(0.0, Vec::new()); parents];
    // incoming flows are non-negative, so their bit patterns sort like the values
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = (0..parents).map(|p| Reverse((0u64, p))).collect();
    for c in order {
        let Reverse((_, p)) = heap.pop().expect("at least one parent");
        slots[p].0 += children[c];
        slots[p].1.push(c);
        heap.push(Reverse((slots[p].0.to_bits(), p)));
    }
    slots
}

/// Enumerates helper profiles of at most `limits.max_depth` levels and keeps,
/// for every tree size, the heaviest root among profiles whose helpers all
/// stay at or below `tau`.
fn best_trees(alpha: f64, tau: f64, limits: SearchLimits) -> Vec<Option<TreeCandidate>> {
    let retained = 1.0 - alpha;
    let bound = limits.max_agents;
    let mut best: Vec<Option<TreeCandidate>> = vec![None; bound + 1];
    if bound == 0 {
        return best;
    }
    let helper_ok = |flow: f64| retained * flow <= tau;

    let mut consider = |profile: &[usize]| {
        let size = 1 + profile.iter().sum::<usize>();
        let levels = profile_flows(profile, alpha);
        if !levels.iter().flatten().all(|&f| helper_ok(f)) {
            return;
        }
        let weight = 1.0 + alpha * levels.first().map_or(0.0, |l| l.iter().sum::<f64>());
        let better = match &best[size] {
            None => true,
            Some(c) => weight > c.weight,
        };
        if better {
            best[size] = Some(TreeCandidate {
                weight,
                profile: profile.to_vec(),
            });
        }
    };

    consider(&[]);
    if !helper_ok(1.0) {
        // even a lone leaf would be above threshold
        return best;
    }
    // a parent level with k children per node has flow at least 1 + alpha * k
    let admissible = |profile: &[usize], count: usize| match profile.last() {
        None => true,
        Some(&parents) => helper_ok(1.0 + alpha * count.div_ceil(parents) as f64),
    };
    let mut profile = Vec::new();
    extend_profiles(&mut profile, bound - 1, limits.max_depth, &admissible, &mut consider);
    best
}

fn extend_profiles(
    profile: &mut Vec<usize>,
    remaining: usize,
    depth_left: usize,
    admissible: &impl Fn(&[usize], usize) -> bool,
    visit: &mut impl FnMut(&[usize]),
) {
    if depth_left == 0 {
        return;
    }
    for count in 1..=remaining {
        if !admissible(profile, count) {
            // larger levels only get heavier
            break;
        }
        profile.push(count);
        visit(profile);
        extend_profiles(profile, remaining - count, depth_left - 1, admissible, visit);
        profile.pop();
    }
}

/// Smallest adversarial forest whose cores together cast more than
/// `target_weight`, with at most `core_budget` agents above `tau` and every
/// other agent at or below it. Weights follow viscous-retained propagation.
pub fn min_adversaries_with(
    alpha: f64,
    tau: f64,
    target_weight: f64,
    core_budget: usize,
    limits: SearchLimits,
) -> Result<AdversarySearch> {
    Mechanism::viscous_retained(alpha)?;
    if core_budget == 0 {
        return Err(Error::Config("core budget must be >= 1".into()));
    }
    if !(tau >= 0.0) || !(target_weight >= 0.0) {
        return Err(Error::Config(format!("need tau >= 0 and target >= 0, got {tau}, {target_weight}")));
    }

    let helpers_possible = (1.0 - alpha) <= tau && alpha > 0.0;
    if !helpers_possible {
        // every tree is a lone agent of weight 1
        let reachable = if 1.0 > tau { core_budget as f64 } else { 0.0 };
        if reachable <= target_weight {
            return Ok(AdversarySearch::Infeasible);
        }
    }

    let trees = best_trees(alpha, tau, limits);
    let usable: Vec<(usize, &TreeCandidate)> = trees
        .iter()
        .enumerate()
        .filter_map(|(m, c)| c.as_ref().filter(|c| c.weight > tau).map(|c| (m, c)))
        .collect();

    let bound = limits.max_agents;
    let max_trees = core_budget.min(bound);
    // best[j][n]: heaviest total over exactly j trees using n agents, with the
    // size of the last tree for traceback
    let mut best = vec![vec![None::<(f64, usize)>; bound + 1]; max_trees + 1];
    best[0][0] = Some((0.0, 0));
    for n in 1..=bound {
        for j in 1..=max_trees {
            let mut cell: Option<(f64, usize)> = None;
            for &(m, cand) in &usable {
                if m > n {
                    break;
                }
                if let Some((prev, _)) = best[j - 1][n - m] {
                    let total = prev + cand.weight;
                    if cell.is_none_or(|(w, _)| total > w) {
                        cell = Some((total, m));
                    }
                }
            }
            best[j][n] = cell;
        }
        let winner = (1..=max_trees)
            .filter_map(|j| best[j][n].map(|(w, _)| (j, w)))
            .filter(|&(_, w)| w > target_weight)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, _)) = winner {
            let mut sizes = Vec::with_capacity(j);
            let (mut jj, mut nn) = (j, n);
            while jj > 0 {
                let (_, m) = best[jj][nn].expect("traceback cell");
                sizes.push(m);
                jj -= 1;
                nn -= m;
            }
            sizes.sort_unstable_by(|a, b| b.cmp(a));
            let profiles: Vec<Vec<usize>> = sizes
                .iter()
                .map(|&m| trees[m].as_ref().expect("used tree").profile.clone())
                .collect();
            let found = assemble(profiles.clone(), alpha);
            // equal-size stars are as heavy in total and maximise the lightest core
            if profiles.iter().all(|p| p.len() <= 1) {
                let leaves: usize = profiles.iter().flatten().sum();
                let even = balanced_split(leaves, j)
                    .map(|k| if k == 0 { Vec::new() } else { vec![k] })
                    .collect();
                let balanced = assemble(even, alpha);
                if balanced.core_weights.iter().all(|&w| w > tau) && balanced.total_weight() > target_weight {
                    return Ok(AdversarySearch::Found(balanced));
                }
            }
            return Ok(AdversarySearch::Found(found));
        }
    }
    if helpers_possible {
        Ok(AdversarySearch::ExceedsBound { bound })
    } else {
        Ok(AdversarySearch::Infeasible)
    }
}

fn assemble(profiles: Vec<Vec<usize>>, alpha: f64) -> AdversaryTopology {
    let mut parent = Vec::new();
    let mut cores = Vec::new();
    let mut core_weights = Vec::new();
    for profile in &profiles {
        let root = parent.len();
        parent.push(None);
        cores.push(root);
        let levels = profile_flows(profile, alpha);
        let mut previous: Vec<usize> = vec![root];
        for (d, &count) in profile.iter().enumerate() {
            let start = parent.len();
            let mut assigned = vec![0usize; count];
            if d + 1 == profile.len() {
                let mut next = 0;
                for (p, k) in balanced_split(count, previous.len()).enumerate() {
                    for slot in &mut assigned[next..next + k] {
                        *slot = previous[p];
                    }
                    next += k;
                }
            } else {
                for (p, (_, children)) in lightest_first(&levels[d], previous.len()).into_iter().enumerate() {
                    for c in children {
                        assigned[c] = previous[p];
                    }
                }
            }
            parent.extend(assigned.into_iter().map(Some));
            previous = (start..start + count).collect();
        }
        core_weights.push(1.0 + alpha * levels.first().map_or(0.0, |l| l.iter().sum::<f64>()));
    }
    let total_agents = parent.len();
    AdversaryTopology {
        parent,
        cores,
        core_weights,
        total_agents,
        profiles,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub elector_count: usize,
    pub c_total: f64,
    pub honest_weight: f64,
    pub min_adversaries: Option<usize>,
    pub search: AdversarySearch,
}

impl SweepRow {
    pub fn feasible(&self) -> bool {
        matches!(self.search, AdversarySearch::Found(_))
    }
}

/// Distinct cast weights plus the midpoints between neighbours, ascending.
pub fn default_tau_grid(w: &WeightVector) -> Vec<f64> {
    let mut values = w.cast_weight.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut grid = Vec::with_capacity(values.len() * 2);
    for (k, &v) in values.iter().enumerate() {
        if k > 0 {
            grid.push(0.5 * (values[k - 1] + v));
        }
        grid.push(v);
    }
    grid
}

pub fn sweep_tau(d: &DelegationGraph, m: Mechanism, cost: CostModel, tau_grid: &[f64]) -> Result<Vec<SweepRow>> {
    sweep_tau_with(d, m, cost, tau_grid, SearchLimits::default())
}

pub fn sweep_tau_with(
    d: &DelegationGraph,
    m: Mechanism,
    cost: CostModel,
    tau_grid: &[f64],
    limits: SearchLimits,
) -> Result<Vec<SweepRow>> {
    if tau_grid.is_empty() {
        return Err(Error::Config("tau grid is empty".into()));
    }
    let w = compute_weights(d, m);
    let core_budget = cost.n_adv();
    tau_grid
        .iter()
        .map(|&tau| {
            let electors = select_electors(&w, tau);
            let honest_weight: f64 = electors.members.iter().map(|&i| w.cast_weight[i]).fold(0.0, |acc, w| acc + w);
            let search = if core_budget == 0 {
                AdversarySearch::Infeasible
            } else {
                min_adversaries_with(m.alpha, tau, honest_weight, core_budget, limits)?
            };
            Ok(SweepRow {
                tau,
                elector_count: electors.len(),
                c_total: cost.transfer_cost(electors.len()),
                honest_weight,
                min_adversaries: search.total_agents(),
                search,
            })
        })
        .collect()
}

/// Among rows affordable within `cost_budget`, the threshold that forces the
/// adversary to deploy the most agents; ties go to the larger threshold.
pub fn optimal_tau(rows: &[SweepRow], cost_budget: f64) -> Result<f64> {
    rows.iter()
        .filter(|r| r.c_total <= cost_budget)
        .max_by(|a, b| {
            a.search
                .robustness_key()
                .cmp(&b.search.robustness_key())
                .then(a.tau.total_cmp(&b.tau))
        })
        .map(|r| r.tau)
        .ok_or(Error::BudgetInfeasible { budget: cost_budget })
}

/// Writes `tau,elector_count,c_total,honest_weight,min_adversaries,feasible`.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "tau,elector_count,c_total,honest_weight,min_adversaries,feasible")?;
    for r in rows {
        let adv = r.min_adversaries.map(|n| n.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.tau,
            r.elector_count,
            r.c_total,
            r.honest_weight,
            adv,
            r.feasible()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn found(s: AdversarySearch) -> AdversaryTopology {
        match s {
            AdversarySearch::Found(t) => t,
            other => panic!("expected a topology, got {other:?}"),
        }
    }

    #[test]
    fn twelve_agent_anchor() {
        let t = found(min_adversaries(0.5, 1.0, 7.992, 4).unwrap());
        assert_eq!(t.total_agents, 12);
        assert_eq!(t.cores.len(), 4);
        assert!(t.core_weights.iter().all(|&w| w == 2.0));
        t.verify(0.5, 1.0, 7.992, 4).unwrap();
    }

    #[test]
    fn zero_target_needs_one_agent() {
        let t = found(min_adversaries(0.5, 0.0, 0.0, 3).unwrap());
        assert_eq!(t.total_agents, 1);
        t.verify(0.5, 0.0, 0.0, 3).unwrap();
    }

    #[test]
    fn below_retention_floor_only_cores() {
        let t = found(min_adversaries(0.5, 0.4, 2.5, 4).unwrap());
        assert_eq!(t.total_agents, 3);
        assert_eq!(t.cores.len(), 3);
        assert_eq!(min_adversaries(0.5, 0.4, 4.0, 4).unwrap(), AdversarySearch::Infeasible);
    }

    #[test]
    fn bound_exhaustion_is_not_infeasibility() {
        let limits = SearchLimits {
            max_agents: 10,
            max_depth: 2,
        };
        let s = min_adversaries_with(0.5, 1.0, 7.992, 4, limits).unwrap();
        assert_eq!(s, AdversarySearch::ExceedsBound { bound: 10 });
    }

    #[test]
    fn invalid_arguments() {
        assert!(min_adversaries(0.5, 1.0, 1.0, 0).is_err());
        assert!(min_adversaries(1.5, 1.0, 1.0, 1).is_err());
        assert!(min_adversaries(0.5, -1.0, 1.0, 1).is_err());
        assert!(CostModel::new(0.0, 1.0).is_err());
    }

    #[test]
    fn cost_arithmetic() {
        let cost = CostModel::new(0.045, 0.2).unwrap();
        assert_eq!(cost.n_adv(), 4);
        assert_eq!(cost.transfer_cost(4), 0.045 * 4.0);
        assert_eq!(CostModel::new(0.05, 0.0).unwrap().n_adv(), 0);
    }

    #[test]
    fn balanced_split_is_even() {
        let counts: Vec<usize> = balanced_split(7, 3).collect();
        assert_eq!(counts, vec![3, 2, 2]);
    }

    #[test]
    fn grid_has_midpoints() {
        let w = WeightVector {
            flow: vec![1.0, 1.5, 1.75],
            cast_weight: vec![0.5, 0.75, 1.75],
            is_guru: vec![false, false, true],
        };
        assert_eq!(default_tau_grid(&w), vec![0.5, 0.625, 0.75, 1.25, 1.75]);
    }

    fn row(tau: f64, c_total: f64, search: AdversarySearch) -> SweepRow {
        SweepRow {
            tau,
            elector_count: 0,
            c_total,
            honest_weight: 0.0,
            min_adversaries: search.total_agents(),
            search,
        }
    }

    fn fake(total: usize) -> AdversarySearch {
        AdversarySearch::Found(AdversaryTopology {
            parent: vec![None; total],
            cores: vec![],
            core_weights: vec![],
            total_agents: total,
            profiles: vec![],
        })
    }

    #[test]
    fn optimal_tau_rules() {
        let rows = vec![row(1.0, 0.2, fake(12)), row(0.4, 2.0, fake(41))];
        assert_eq!(optimal_tau(&rows, 0.5).unwrap(), 1.0);
        assert_eq!(optimal_tau(&rows, 10.0).unwrap(), 0.4);
        assert!(matches!(optimal_tau(&rows, 0.1), Err(Error::BudgetInfeasible { .. })));

        let tied = vec![row(0.5, 0.3, fake(12)), row(0.9, 0.2, fake(12))];
        assert_eq!(optimal_tau(&tied, 1.0).unwrap(), 0.9);

        let blocked = vec![row(0.5, 0.3, AdversarySearch::Infeasible), row(0.9, 0.2, fake(100))];
        assert_eq!(optimal_tau(&blocked, 1.0).unwrap(), 0.5);
    }
}
