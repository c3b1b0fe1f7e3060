//! Voter populations, social graphs and upward delegation.
//!
//! Voters are densely indexed `0..n`. A [`DelegationGraph`] is a forest: every
//! voter delegates to at most one strictly more competent neighbour, so chasing
//! delegations always ends at a guru.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VoterId = usize;

/// Undirected voter network. Edges are stored normalised as `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    n: usize,
    edges: Vec<(VoterId, VoterId)>,
    adjacency: Vec<Vec<VoterId>>,
}

impl SocialGraph {
    /// Graph on `n` voters with no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: Vec::new(),
            adjacency: vec![Vec::new(); n],
        }
    }

    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (VoterId, VoterId)>,
    {
        let mut seen = HashSet::new();
        let mut normalised = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::Structural(format!(
                    "edge ({a}, {b}) has an endpoint outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::Structural(format!("self-loop at voter {a}")));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(Error::Structural(format!("duplicate edge ({}, {})", e.0, e.1)));
            }
            normalised.push(e);
        }
        normalised.sort_unstable();
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in &normalised {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            n,
            edges: normalised,
            adjacency,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(VoterId, VoterId)] {
        &self.edges
    }

    /// Neighbours of `i`, sorted ascending.
    pub fn neighbors(&self, i: VoterId) -> &[VoterId] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, a: VoterId, b: VoterId) -> bool {
        a < self.n && self.adjacency[a].binary_search(&b).is_ok()
    }
}

/// Per-voter probability of voting for the correct alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CompetenceProfile(Vec<f64>);

impl CompetenceProfile {
    /// Validates that every value lies in `[0, 1]` and that values are pairwise distinct.
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = q.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("competence q[{i}] = {v} is outside [0, 1]")));
        }
        let mut sorted = q.clone();
        sorted.sort_by(f64::total_cmp);
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("competence value {} appears twice", w[0])));
        }
        Ok(Self(q))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: VoterId) -> f64 {
        self.0[i]
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }
}

impl TryFrom<Vec<f64>> for CompetenceProfile {
    type Error = Error;

    fn try_from(q: Vec<f64>) -> Result<Self> {
        Self::new(q)
    }
}

impl From<CompetenceProfile> for Vec<f64> {
    fn from(q: CompetenceProfile) -> Self {
        q.0
    }
}

/// Sampling interval for competencies. Draws are from the open interval
/// `(lo, hi)`; a degenerate interval `lo == hi` always yields `lo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    fn validate(&self, role: &str) -> Result<()> {
        if !(0.0 <= self.lo && self.lo <= self.hi && self.hi <= 1.0) {
            return Err(Error::Config(format!(
                "{role} interval ({}, {}) must satisfy 0 <= lo <= hi <= 1",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    /// True if `v` could have been produced by [`Interval::sample`] (degenerate
    /// intervals tolerate the ulp nudges used to keep values distinct).
    pub fn contains(&self, v: f64) -> bool {
        if self.is_degenerate() {
            (v - self.lo).abs() <= 1e-9
        } else {
            self.lo < v && v < self.hi
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_degenerate() {
            return self.lo;
        }
        loop {
            let v = rng.gen_range(self.lo..self.hi);
            if v > self.lo {
                return v;
            }
        }
    }
}

/// Competence intervals per role in a star/chain composite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetenceIntervals {
    pub star_guru: Interval,
    pub star_leaf: Interval,
    pub chain: Interval,
}

impl Default for CompetenceIntervals {
    fn default() -> Self {
        Self {
            star_guru: Interval::new(0.6, 0.9),
            star_leaf: Interval::new(0.3, 0.6),
            chain: Interval::new(0.3, 0.9),
        }
    }
}

/// `stars` stars of `star_size` nodes followed by `chains` chains of
/// `chain_size` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub stars: usize,
    pub star_size: usize,
    pub chains: usize,
    pub chain_size: usize,
    #[serde(default)]
    pub intervals: CompetenceIntervals,
}

impl TopologySpec {
    pub fn n(&self) -> usize {
        self.stars * self.star_size + self.chains * self.chain_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.stars > 0 && self.star_size == 0 {
            return Err(Error::Config("star_size must be >= 1 when stars > 0".into()));
        }
        if self.chains > 0 && self.chain_size == 0 {
            return Err(Error::Config("chain_size must be >= 1 when chains > 0".into()));
        }
        if self.n() == 0 {
            return Err(Error::Config("topology has no voters".into()));
        }
        self.intervals.star_guru.validate("star guru")?;
        self.intervals.star_leaf.validate("star leaf")?;
        self.intervals.chain.validate("chain")?;
        Ok(())
    }

    /// First voter index of star `k`; the centre sits at this index.
    pub fn star_offset(&self, k: usize) -> VoterId {
        k * self.star_size
    }

    /// First voter index of chain `k`; the guru end is `chain_offset(k) + chain_size - 1`.
    pub fn chain_offset(&self, k: usize) -> VoterId {
        self.stars * self.star_size + k * self.chain_size
    }
}

const MAX_REDRAWS: usize = 10_000;

struct DistinctSampler {
    used: HashSet<u64>,
}

impl DistinctSampler {
    fn new() -> Self {
        Self { used: HashSet::new() }
    }

    fn draw<R: Rng + ?Sized>(
        &mut self,
        interval: &Interval,
        rng: &mut R,
        accept: impl Fn(f64) -> bool,
    ) -> Result<f64> {
        if interval.is_degenerate() {
            // nudge down by ulps until unused
            let mut v = interval.lo;
            for _ in 0..MAX_REDRAWS {
                if accept(v) && !self.used.contains(&v.to_bits()) {
                    self.used.insert(v.to_bits());
                    return Ok(v);
                }
                v = v.next_down();
            }
        } else {
            for _ in 0..MAX_REDRAWS {
                let v = interval.sample(rng);
                if accept(v) && self.used.insert(v.to_bits()) {
                    return Ok(v);
                }
            }
        }
        Err(Error::Config(format!(
            "cannot draw distinct competencies from ({}, {})",
            interval.lo, interval.hi
        )))
    }
}

/// Builds the star/chain composite described by `spec`.
///
/// Star centres must end up strictly above their leaves and chain competencies
/// increase toward the guru end, so [`upward_delegate`] recovers exactly one
/// guru per component.
pub fn build_composite<R: Rng + ?Sized>(
    spec: &TopologySpec,
    rng: &mut R,
) -> Result<(SocialGraph, CompetenceProfile)> {
    let graph = composite_graph(spec)?;
    let mut q = vec![0.0; spec.n()];
    let mut sampler = DistinctSampler::new();

    for k in 0..spec.stars {
        let centre = spec.star_offset(k);
        let cq = sampler.draw(&spec.intervals.star_guru, rng, |_| true)?;
        q[centre] = cq;
        for leaf in &mut q[centre + 1..centre + spec.star_size] {
            *leaf = sampler.draw(&spec.intervals.star_leaf, rng, |v| v < cq)?;
        }
    }

    for k in 0..spec.chains {
        let start = spec.chain_offset(k);
        let mut values = (0..spec.chain_size)
            .map(|_| sampler.draw(&spec.intervals.chain, rng, |_| true))
            .collect::<Result<Vec<_>>>()?;
        values.sort_by(f64::total_cmp);
        q[start..start + spec.chain_size].copy_from_slice(&values);
    }

    Ok((graph, CompetenceProfile::new(q)?))
}

/// Edges of the composite without competencies: star centres joined to their
/// leaves, chain nodes joined to their successors.
pub fn composite_graph(spec: &TopologySpec) -> Result<SocialGraph> {
    spec.validate()?;
    let mut edges = Vec::with_capacity(spec.n());
    for k in 0..spec.stars {
        let centre = spec.star_offset(k);
        edges.extend((centre + 1..centre + spec.star_size).map(|leaf| (centre, leaf)));
    }
    for k in 0..spec.chains {
        let start = spec.chain_offset(k);
        edges.extend((start + 1..start + spec.chain_size).map(|i| (i - 1, i)));
    }
    SocialGraph::from_edges(spec.n(), edges)
}

/// Directed delegation forest over a social graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DelegationGraph {
    base: SocialGraph,
    competence: CompetenceProfile,
    delegate_of: Vec<Option<VoterId>>,
    children: Vec<Vec<VoterId>>,
    // every voter appears after all of its delegators
    topo_order: Vec<VoterId>,
}

impl DelegationGraph {
    /// Validates all delegation invariants: each delegation follows a social
    /// edge to a strictly more competent voter, and the result is acyclic.
    pub fn from_parts(
        base: SocialGraph,
        competence: CompetenceProfile,
        delegate_of: Vec<Option<VoterId>>,
    ) -> Result<Self> {
        let n = base.n();
        if competence.len() != n || delegate_of.len() != n {
            return Err(Error::Structural(format!(
                "size mismatch: graph {n}, competence {}, delegations {}",
                competence.len(),
                delegate_of.len()
            )));
        }
        let mut children = vec![Vec::new(); n];
        for (i, d) in delegate_of.iter().enumerate() {
            if let Some(j) = *d {
                if !base.has_edge(i, j) {
                    return Err(Error::Structural(format!("delegation {i} -> {j} is not a social edge")));
                }
                if competence.get(j) <= competence.get(i) {
                    return Err(Error::Structural(format!(
                        "delegation {i} -> {j} is not upward ({} -> {})",
                        competence.get(i),
                        competence.get(j)
                    )));
                }
                children[j].push(i);
            }
        }
        let topo_order = topological_order(&delegate_of, &children)?;
        Ok(Self {
            base,
            competence,
            delegate_of,
            children,
            topo_order,
        })
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn base(&self) -> &SocialGraph {
        &self.base
    }

    pub fn competence(&self) -> &CompetenceProfile {
        &self.competence
    }

    /// The delegation function `d`; `None` for gurus.
    pub fn delegate_of(&self, i: VoterId) -> Option<VoterId> {
        self.delegate_of[i]
    }

    pub fn delegations(&self) -> &[Option<VoterId>] {
        &self.delegate_of
    }

    /// Direct delegators of `i`, sorted ascending.
    pub fn delegators(&self, i: VoterId) -> &[VoterId] {
        &self.children[i]
    }

    pub fn is_guru(&self, i: VoterId) -> bool {
        self.delegate_of[i].is_none()
    }

    pub fn gurus(&self) -> Vec<VoterId> {
        (0..self.n()).filter(|&i| self.is_guru(i)).collect()
    }

    /// Voters ordered so that each voter follows everyone who delegates to it.
    pub fn topological_order(&self) -> &[VoterId] {
        &self.topo_order
    }

    /// Iterated delegation `d*(i)`.
    pub fn guru_of(&self, mut i: VoterId) -> VoterId {
        while let Some(j) = self.delegate_of[i] {
            i = j;
        }
        i
    }

    /// Hop count from `i` to its guru.
    pub fn depth(&self, mut i: VoterId) -> usize {
        let mut hops = 0;
        while let Some(j) = self.delegate_of[i] {
            i = j;
            hops += 1;
        }
        hops
    }

    /// Smallest competence increase over all delegation edges.
    pub fn min_delegation_gain(&self) -> Option<f64> {
        self.delegate_of
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.map(|j| self.competence.get(j) - self.competence.get(i)))
            .min_by(f64::total_cmp)
    }
}

fn topological_order(delegate_of: &[Option<VoterId>], children: &[Vec<VoterId>]) -> Result<Vec<VoterId>> {
    let n = delegate_of.len();
    let mut pending: Vec<usize> = children.iter().map(Vec::len).collect();
    let mut order = Vec::with_capacity(n);
    let mut stack: Vec<VoterId> = (0..n).rev().filter(|&i| pending[i] == 0).collect();
    while let Some(i) = stack.pop() {
        order.push(i);
        if let Some(j) = delegate_of[i] {
            pending[j] -= 1;
            if pending[j] == 0 {
                stack.push(j);
            }
        }
    }
    if order.len() != n {
        return Err(Error::Structural("delegation graph contains a cycle".into()));
    }
    Ok(order)
}

/// For each voter, the strictly higher-scoring neighbour with the highest
/// score (lowest id among equal scores), or `None` if there is no such neighbour.
pub(crate) fn upward_targets(graph: &SocialGraph, score: &[f64]) -> Vec<Option<VoterId>> {
    (0..graph.n())
        .map(|i| {
            let mut best: Option<VoterId> = None;
            for &j in graph.neighbors(i) {
                if score[j] > score[i] && best.is_none_or(|b| score[j] > score[b]) {
                    best = Some(j);
                }
            }
            best
        })
        .collect()
}

/// Upward delegation: every voter with a strictly more competent neighbour
/// delegates to the most competent one; everyone else is a guru.
pub fn upward_delegate(graph: &SocialGraph, competence: &CompetenceProfile) -> Result<DelegationGraph> {
    if graph.n() != competence.len() {
        return Err(Error::Structural(format!(
            "graph has {} voters but competence profile has {}",
            graph.n(),
            competence.len()
        )));
    }
    let targets = upward_targets(graph, competence.as_slice());
    DelegationGraph::from_parts(graph.clone(), competence.clone(), targets)
}

/// Maximum hop count from any voter to its guru.
pub fn longest_delegation_path(d: &DelegationGraph) -> usize {
    let mut depth = vec![0usize; d.n()];
    // reverse topological order visits gurus before their delegators
    for &i in d.topological_order().iter().rev() {
        if let Some(j) = d.delegate_of(i) {
            depth[i] = depth[j] + 1;
        }
    }
    depth.into_iter().max().unwrap_or(0)
}

/// Random delegation forest on `n` voters. Voter `i` delegates with
/// probability `p_delegate` to a uniformly chosen earlier voter; competencies
/// decrease with index so every delegation is upward.
pub fn random_forest<R: Rng + ?Sized>(n: usize, p_delegate: f64, rng: &mut R) -> DelegationGraph {
    let mut delegate_of = vec![None; n];
    let mut edges = Vec::new();
    for (i, slot) in delegate_of.iter_mut().enumerate().skip(1) {
        if rng.gen_bool(p_delegate) {
            let j = rng.gen_range(0..i);
            *slot = Some(j);
            edges.push((i, j));
        }
    }
    let q = (0..n).map(|i| (n - i) as f64 / (n + 1) as f64).collect();
    let base = SocialGraph::from_edges(n, edges).expect("forest edges are valid");
    let competence = CompetenceProfile::new(q).expect("competencies are distinct");
    DelegationGraph::from_parts(base, competence, delegate_of).expect("forest is upward")
}
