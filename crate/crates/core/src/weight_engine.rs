//! Vote propagation under the unified `(alpha, beta)` mechanism.
//!
//! A delegator passes `alpha` of everything that reaches it to its delegate and
//! keeps `beta * (1 - alpha)` of it to cast itself. Gurus cast everything that
//! reaches them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::delegation_graph::{CompetenceProfile, DelegationGraph, VoterId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub alpha: f64,
    pub beta: f64,
}

impl Mechanism {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&beta) {
            return Err(Error::Config(format!(
                "mechanism parameters must lie in [0, 1], got alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub const fn liquid() -> Self {
        Self { alpha: 1.0, beta: 0.0 }
    }

    pub fn viscous(alpha: f64) -> Result<Self> {
        Self::new(alpha, 0.0)
    }

    pub fn viscous_retained(alpha: f64) -> Result<Self> {
        Self::new(alpha, 1.0)
    }

    /// Fraction of arriving flow a non-guru casts itself.
    pub fn retained(&self) -> f64 {
        self.beta * (1.0 - self.alpha)
    }

    pub fn label(&self) -> String {
        if self.alpha == 1.0 {
            "liquid".to_string()
        } else if self.beta == 0.0 {
            "viscous".to_string()
        } else if self.beta == 1.0 {
            "viscous-retained".to_string()
        } else {
            format!("beta={}", self.beta)
        }
    }
}

/// Per-voter propagated flow and cast weight.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector {
    /// Path-discounted vote mass arriving at each voter, own vote included.
    pub flow: Vec<f64>,
    pub cast_weight: Vec<f64>,
    pub is_guru: Vec<bool>,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.flow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flow.is_empty()
    }

    pub fn total_cast(&self) -> f64 {
        self.cast_weight.iter().sum()
    }

    fn from_flow(flow: Vec<f64>, d: &DelegationGraph, m: Mechanism) -> Self {
        let retained = m.retained();
        let is_guru: Vec<bool> = (0..d.n()).map(|i| d.is_guru(i)).collect();
        let cast_weight = flow
            .iter()
            .zip(&is_guru)
            .map(|(&f, &guru)| if guru { f } else { retained * f })
            .collect();
        Self {
            flow,
            cast_weight,
            is_guru,
        }
    }

    /// Writes `voter_id,flow,cast_weight,is_guru,is_elector` rows.
    pub fn write_csv<W: Write>(&self, electors: &ElectorSet, mut out: W) -> std::io::Result<()> {
        writeln!(out, "voter_id,flow,cast_weight,is_guru,is_elector")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                i,
                self.flow[i],
                self.cast_weight[i],
                self.is_guru[i],
                electors.contains(i)
            )?;
        }
        Ok(())
    }
}

/// Propagates votes in one pass over the topological order:
/// `flow_i = 1 + alpha * sum(flow_j for j delegating to i)`.
pub fn compute_weights(d: &DelegationGraph, m: Mechanism) -> WeightVector {
    let mut flow = vec![0.0; d.n()];
    for &i in d.topological_order() {
        let incoming: f64 = d.delegators(i).iter().map(|&j| flow[j]).sum();
        flow[i] = 1.0 + m.alpha * incoming;
    }
    WeightVector::from_flow(flow, d, m)
}

/// Reference implementation that walks every delegation path explicitly:
/// each voter's own vote travels hop by hop toward its guru, adding
/// `alpha^hops` to every voter it passes through.
pub fn weights_by_path_enumeration(d: &DelegationGraph, m: Mechanism) -> WeightVector {
    let mut flow = vec![0.0; d.n()];
    for origin in 0..d.n() {
        let mut at = origin;
        let mut hops = 0i32;
        loop {
            flow[at] += m.alpha.powi(hops);
            match d.delegate_of(at) {
                Some(next) => {
                    at = next;
                    hops += 1;
                }
                None => break,
            }
        }
    }
    WeightVector::from_flow(flow, d, m)
}

/// Voters whose cast weight strictly exceeds `tau`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElectorSet {
    pub tau: f64,
    pub members: Vec<VoterId>,
    #[serde(skip)]
    mask: Vec<bool>,
}

impl ElectorSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: VoterId) -> bool {
        self.mask.get(i).copied().unwrap_or(false)
    }

    pub fn is_subset(&self, other: &ElectorSet) -> bool {
        self.members.iter().all(|&i| other.contains(i))
    }
}

pub fn select_electors(w: &WeightVector, tau: f64) -> ElectorSet {
    let mask: Vec<bool> = w.cast_weight.iter().map(|&c| c > tau).collect();
    let members = mask.iter().enumerate().filter(|(_, &e)| e).map(|(i, _)| i).collect();
    ElectorSet { tau, members, mask }
}

pub fn max_weight(w: &WeightVector) -> f64 {
    w.cast_weight.iter().copied().fold(0.0, f64::max)
}

/// `sum(cast_i * q_i) - sum(q_i)`: positive and growing linearly in `n` when
/// delegation shifts weight toward competent voters.
pub fn dnh_margin(w: &WeightVector, q: &CompetenceProfile) -> f64 {
    let weighted: f64 = w.cast_weight.iter().zip(q.as_slice()).map(|(c, q)| c * q).sum();
    let plain: f64 = q.as_slice().iter().sum();
    weighted - plain
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::delegation_graph::{upward_delegate, SocialGraph};

    fn chain(n: usize) -> DelegationGraph {
        let g = SocialGraph::from_edges(n, (1..n).map(|i| (i - 1, i))).unwrap();
        let q = CompetenceProfile::new((0..n).map(|i| 0.3 + 0.6 * i as f64 / n as f64).collect()).unwrap();
        upward_delegate(&g, &q).unwrap()
    }

    fn star(n: usize) -> DelegationGraph {
        let g = SocialGraph::from_edges(n, (1..n).map(|l| (0, l))).unwrap();
        let q = CompetenceProfile::new((0..n).map(|i| if i == 0 { 0.95 } else { 0.05 * i as f64 }).collect())
            .unwrap();
        upward_delegate(&g, &q).unwrap()
    }

    #[test]
    fn star_under_viscous() {
        let w = compute_weights(&star(10), Mechanism::viscous(0.5).unwrap());
        assert_eq!(w.cast_weight[0], 5.5);
        assert!(w.cast_weight[1..].iter().all(|&c| c == 0.0));
        assert_eq!(max_weight(&w), 5.5);
    }

    #[test]
    fn chain_under_liquid() {
        let w = compute_weights(&chain(10), Mechanism::liquid());
        assert_eq!(w.cast_weight[9], 10.0);
        assert!(w.cast_weight[..9].iter().all(|&c| c == 0.0));
        assert_eq!(w.total_cast(), 10.0);
        assert_eq!(max_weight(&w), 10.0);
    }

    #[test]
    fn three_chain_viscous_retained() {
        let w = compute_weights(&chain(3), Mechanism::viscous_retained(0.5).unwrap());
        assert_eq!(w.cast_weight, vec![0.5, 0.75, 1.75]);
        assert_eq!(w.total_cast(), 3.0);
    }

    #[test]
    fn ten_chain_viscous_guru() {
        let w = compute_weights(&chain(10), Mechanism::viscous(0.5).unwrap());
        let direct: f64 = (0..10).map(|k| 0.5f64.powi(k)).sum();
        assert_eq!(direct, 1.998046875);
        assert_eq!(w.cast_weight[9], 1.998046875);
    }

    #[test]
    fn path_enumeration_small_cases() {
        let single = chain(1);
        let w = weights_by_path_enumeration(&single, Mechanism::viscous(0.5).unwrap());
        assert_eq!((w.flow[0], w.cast_weight[0]), (1.0, 1.0));

        let w = weights_by_path_enumeration(&chain(2), Mechanism::viscous(0.5).unwrap());
        assert_eq!(w.cast_weight, vec![0.0, 1.5]);
    }

    #[test]
    fn electors_at_threshold_one_on_chains() {
        let d = chain(10);
        let w = compute_weights(&d, Mechanism::viscous_retained(0.5).unwrap());
        let e = select_electors(&w, 1.0);
        assert_eq!(e.members, vec![9]);
        let all = select_electors(&w, 0.0);
        assert_eq!(all.len(), 10);
        let none = select_electors(&w, max_weight(&w));
        assert!(none.is_empty());
    }

    #[test]
    fn margins() {
        let g = SocialGraph::empty(4);
        let q = CompetenceProfile::new(vec![0.2, 0.4, 0.6, 0.8]).unwrap();
        let d = upward_delegate(&g, &q).unwrap();
        let w = compute_weights(&d, Mechanism::viscous_retained(0.3).unwrap());
        assert_eq!(max_weight(&w), 1.0);
        assert_eq!(dnh_margin(&w, &q), 0.0);

        let g = SocialGraph::from_edges(2, [(0, 1)]).unwrap();
        let q = CompetenceProfile::new(vec![0.3, 0.6]).unwrap();
        let d = upward_delegate(&g, &q).unwrap();
        let w = compute_weights(&d, Mechanism::liquid());
        assert!((dnh_margin(&w, &q) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn mechanism_validation_and_labels() {
        assert!(Mechanism::new(1.5, 0.0).is_err());
        assert!(Mechanism::new(0.5, -0.1).is_err());
        assert_eq!(Mechanism::liquid().label(), "liquid");
        assert_eq!(Mechanism::viscous(0.5).unwrap().label(), "viscous");
        assert_eq!(Mechanism::viscous_retained(0.5).unwrap().label(), "viscous-retained");
    }

    #[test]
    fn csv_rows() {
        let w = compute_weights(&chain(3), Mechanism::viscous_retained(0.5).unwrap());
        let e = select_electors(&w, 0.6);
        let mut buf = Vec::new();
        w.write_csv(&e, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "voter_id,flow,cast_weight,is_guru,is_elector\n0,1,0.5,false,false\n1,1.5,0.75,false,true\n2,1.75,1.75,true,true\n"
        );
    }
}
