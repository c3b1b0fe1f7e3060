//! Monte Carlo election accuracy under weighted plurality.
//!
//! Every trial draws one ballot per voter in index order from its own seeded
//! stream, so accuracies estimated with the same master seed are paired across
//! mechanisms and do not depend on the number of worker threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::delegation_graph::{
    build_composite, upward_delegate, CompetenceIntervals, CompetenceProfile, DelegationGraph, Interval,
    TopologySpec,
};
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};
use crate::weight_engine::{compute_weights, select_electors, ElectorSet, Mechanism, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alternative {
    Correct,
    Incorrect,
}

/// One ballot per voter; `true` is a vote for the correct alternative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BallotDraw {
    pub choice: Vec<bool>,
}

impl BallotDraw {
    pub fn draw<R: Rng + ?Sized>(q: &[f64], rng: &mut R) -> Self {
        Self {
            choice: q.iter().map(|&p| rng.gen::<f64>() < p).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccuracyEstimate {
    pub p_hat: f64,
    pub trials: u64,
    /// 95% normal-approximation half width.
    pub half_width: f64,
}

impl AccuracyEstimate {
    pub fn from_wins(wins: u64, trials: u64) -> Self {
        let p_hat = wins as f64 / trials as f64;
        Self {
            p_hat,
            trials,
            half_width: 1.96 * (p_hat * (1.0 - p_hat) / trials as f64).sqrt(),
        }
    }
}

fn decide<R: Rng + ?Sized>(for_correct: f64, for_incorrect: f64, rng: &mut R) -> Alternative {
    if for_correct > for_incorrect {
        Alternative::Correct
    } else if for_incorrect > for_correct {
        Alternative::Incorrect
    } else if rng.gen_bool(0.5) {
        Alternative::Correct
    } else {
        Alternative::Incorrect
    }
}

/// Weighted plurality over the electors; exact ties go to a fair coin.
pub fn tally<R: Rng + ?Sized>(
    w: &WeightVector,
    electors: &ElectorSet,
    ballots: &BallotDraw,
    rng: &mut R,
) -> Result<Alternative> {
    if electors.is_empty() {
        return Err(Error::DegenerateElection);
    }
    let (mut yes, mut no) = (0.0, 0.0);
    for &i in &electors.members {
        if ballots.choice[i] {
            yes += w.cast_weight[i];
        } else {
            no += w.cast_weight[i];
        }
    }
    Ok(decide(yes, no, rng))
}

/// Counts trials won by the correct alternative. `weights[i] == 0` voters still
/// draw a ballot so the random stream stays aligned across mechanisms.
fn count_wins(q: &[f64], weights: &[f64], electors: &[bool], trials: u64, seed: u64) -> u64 {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::stream(seed, t);
            let (mut yes, mut no) = (0.0, 0.0);
            for ((&p, &w), &e) in q.iter().zip(weights).zip(electors) {
                let correct = rng.gen::<f64>() < p;
                if e {
                    if correct {
                        yes += w;
                    } else {
                        no += w;
                    }
                }
            }
            u64::from(decide(yes, no, &mut rng) == Alternative::Correct)
        })
        .sum()
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return Err(Error::Config("trials must be >= 1".into()));
    }
    Ok(())
}

/// Accuracy of mechanism `m` when only voters with cast weight above `tau` vote.
pub fn estimate_accuracy(
    d: &DelegationGraph,
    m: Mechanism,
    tau: f64,
    trials: u64,
    seed: u64,
) -> Result<AccuracyEstimate> {
    check_trials(trials)?;
    let w = compute_weights(d, m);
    let electors = select_electors(&w, tau);
    if electors.is_empty() {
        return Err(Error::DegenerateElection);
    }
    let mask: Vec<bool> = (0..d.n()).map(|i| electors.contains(i)).collect();
    let wins = count_wins(d.competence().as_slice(), &w.cast_weight, &mask, trials, seed);
    Ok(AccuracyEstimate::from_wins(wins, trials))
}

/// Unweighted majority over every voter.
pub fn direct_accuracy(q: &CompetenceProfile, trials: u64, seed: u64) -> Result<AccuracyEstimate> {
    check_trials(trials)?;
    let n = q.len();
    if n == 0 {
        return Err(Error::DegenerateElection);
    }
    let wins = count_wins(q.as_slice(), &vec![1.0; n], &vec![true; n], trials, seed);
    Ok(AccuracyEstimate::from_wins(wins, trials))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainEstimate {
    pub mechanism: AccuracyEstimate,
    pub direct: AccuracyEstimate,
    pub gain: f64,
}

/// Mechanism accuracy minus direct accuracy, both from the same seed.
pub fn gain(d: &DelegationGraph, m: Mechanism, tau: f64, trials: u64, seed: u64) -> Result<GainEstimate> {
    let mechanism = estimate_accuracy(d, m, tau, trials, seed)?;
    let direct = direct_accuracy(d.competence(), trials, seed)?;
    Ok(GainEstimate {
        mechanism,
        direct,
        gain: mechanism.p_hat - direct.p_hat,
    })
}

pub fn weighted_mean_competence(w: &WeightVector, electors: &ElectorSet, q: &CompetenceProfile) -> Result<f64> {
    if electors.is_empty() {
        return Err(Error::DegenerateElection);
    }
    let (num, den) = electors.members.iter().fold((0.0, 0.0), |(num, den), &i| {
        (num + w.cast_weight[i] * q.get(i), den + w.cast_weight[i])
    });
    Ok(num / den)
}

/// Largest elector set [`exact_accuracy`] will enumerate.
pub const MAX_EXACT_ELECTORS: usize = 24;

/// Probability that the correct alternative wins, by enumerating every ballot
/// combination of the electors. Ties count one half.
pub fn exact_accuracy(w: &WeightVector, electors: &ElectorSet, q: &CompetenceProfile) -> Result<f64> {
    let k = electors.len();
    if k == 0 {
        return Err(Error::DegenerateElection);
    }
    if k > MAX_EXACT_ELECTORS {
        return Err(Error::Config(format!(
            "exact enumeration limited to {MAX_EXACT_ELECTORS} electors, got {k}"
        )));
    }
    let members = &electors.members;
    let mut total = 0.0;
    for mask in 0u32..(1u32 << k) {
        let (mut prob, mut yes, mut no) = (1.0, 0.0, 0.0);
        for (bit, &i) in members.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                prob *= q.get(i);
                yes += w.cast_weight[i];
            } else {
                prob *= 1.0 - q.get(i);
                no += w.cast_weight[i];
            }
        }
        total += if yes > no {
            prob
        } else if yes == no {
            0.5 * prob
        } else {
            0.0
        };
    }
    Ok(total)
}

/// Two equal halves of 10-chains and 10-stars on which viscous delegation
/// lowers the weighted mean competence below one half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Theorem1Spec {
    pub n: usize,
    pub alpha: f64,
    pub q_low: f64,
    pub a_star: f64,
    pub b_chain: f64,
    pub c_chain: f64,
}

impl Default for Theorem1Spec {
    fn default() -> Self {
        Self {
            n: 2000,
            alpha: 0.5,
            q_low: 0.39,
            a_star: 0.4,
            b_chain: 0.65,
            c_chain: 0.7,
        }
    }
}

impl Theorem1Spec {
    pub fn topology(&self) -> Result<TopologySpec> {
        if self.n == 0 || !self.n.is_multiple_of(20) {
            return Err(Error::Config(format!("n must be a positive multiple of 20, got {}", self.n)));
        }
        Ok(TopologySpec {
            stars: self.n / 20,
            star_size: 10,
            chains: self.n / 20,
            chain_size: 10,
            intervals: CompetenceIntervals {
                star_guru: Interval::point(self.a_star),
                star_leaf: Interval::new(self.q_low, self.a_star),
                chain: Interval::new(self.b_chain, self.c_chain),
            },
        })
    }
}

pub fn build_theorem1<R: Rng + ?Sized>(spec: &Theorem1Spec, rng: &mut R) -> Result<DelegationGraph> {
    let topology = spec.topology()?;
    let (g, q) = build_composite(&topology, rng)?;
    upward_delegate(&g, &q)
}

/// Random star/chain composite on exactly `n` voters with components of
/// 2..=`max_component` nodes. Competencies centre on a random level in
/// [0.45, 0.55] with half-width in [0.1, 0.25]; star centres sit above their leaves.
pub fn random_bounded_composite<R: Rng + ?Sized>(n: usize, max_component: usize, rng: &mut R) -> Result<TopologySpec> {
    if max_component < 2 || n < 2 {
        return Err(Error::Config("need n >= 2 and max_component >= 2".into()));
    }
    for _ in 0..1000 {
        let star_size = rng.gen_range(2..=max_component);
        let chain_size = rng.gen_range(2..=max_component);
        let splits: Vec<(usize, usize)> = (0..=n / star_size)
            .filter(|s| (n - s * star_size).is_multiple_of(chain_size))
            .map(|s| (s, (n - s * star_size) / chain_size))
            .collect();
        if splits.is_empty() {
            continue;
        }
        let (stars, chains) = splits[rng.gen_range(0..splits.len())];
        let centre = rng.gen_range(0.45..0.55);
        let half = rng.gen_range(0.1..0.25);
        return Ok(TopologySpec {
            stars,
            star_size,
            chains,
            chain_size,
            intervals: CompetenceIntervals {
                star_guru: Interval::new(centre, centre + half),
                star_leaf: Interval::new(centre - half, centre),
                chain: Interval::new(centre - half, centre + half),
            },
        });
    }
    Err(Error::Config(format!("no star/chain split of {n} voters found")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DnhSuiteConfig {
    pub composites: usize,
    pub sizes: Vec<usize>,
    pub max_component: usize,
    pub alpha: f64,
    pub trials: u64,
}

impl Default for DnhSuiteConfig {
    fn default() -> Self {
        Self {
            composites: 50,
            sizes: vec![200, 2000],
            max_component: 10,
            alpha: 0.5,
            trials: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DnhRow {
    pub composite: usize,
    pub n: usize,
    pub stars: usize,
    pub star_size: usize,
    pub chains: usize,
    pub chain_size: usize,
    pub mechanism: String,
    pub alpha: f64,
    pub p_mechanism: f64,
    pub p_direct: f64,
    pub gain: f64,
}

/// Gains of liquid and viscous-retained (tau = 0) over direct voting on random
/// bounded-component composites. Composite `k` draws its shape from the same
/// stream at every size.
pub fn dnh_suite(config: &DnhSuiteConfig, seed: u64) -> Result<Vec<DnhRow>> {
    check_trials(config.trials)?;
    let mechanisms = [Mechanism::liquid(), Mechanism::viscous_retained(config.alpha)?];
    let mut rows = Vec::new();
    for &n in &config.sizes {
        for k in 0..config.composites {
            let mut shape_rng: SimRng = rng::stream(seed, k as u64);
            let topology = random_bounded_composite(n, config.max_component, &mut shape_rng)?;
            let mut build_rng = rng::stream(seed ^ 0xC0FF_EE00, ((n as u64) << 32) | k as u64);
            let (g, q) = build_composite(&topology, &mut build_rng)?;
            let d = upward_delegate(&g, &q)?;
            let trial_seed = rng::derive_seed(seed, ((n as u64) << 32) | k as u64);
            for m in mechanisms {
                let est = gain(&d, m, 0.0, config.trials, trial_seed)?;
                rows.push(DnhRow {
                    composite: k,
                    n,
                    stars: topology.stars,
                    star_size: topology.star_size,
                    chains: topology.chains,
                    chain_size: topology.chain_size,
                    mechanism: m.label(),
                    alpha: m.alpha,
                    p_mechanism: est.mechanism.p_hat,
                    p_direct: est.direct.p_hat,
                    gain: est.gain,
                });
            }
        }
    }
    Ok(rows)
}
