use fluid_democracy::adversary::{min_adversaries, AdversarySearch, CostModel};
use fluid_democracy::delegation_graph::{
    build_composite, longest_delegation_path, random_forest, upward_delegate, CompetenceIntervals, DelegationGraph,
    Interval, TopologySpec,
};
use fluid_democracy::fedvrd::{squared_loss, squared_loss_gradient, ModelVector, Sample};
use fluid_democracy::rng;
use fluid_democracy::weight_engine::{compute_weights, select_electors, weights_by_path_enumeration, Mechanism};
use proptest::prelude::*;

fn forest(n: usize, p: f64, seed: u64) -> DelegationGraph {
    random_forest(n, p, &mut rng::seeded(seed))
}

fn topology() -> impl Strategy<Value = TopologySpec> {
    (0usize..6, 1usize..8, 0usize..6, 1usize..8)
        .prop_filter("at least one voter", |(s, _, c, _)| s + c > 0)
        .prop_map(|(stars, star_size, chains, chain_size)| TopologySpec {
            stars,
            star_size,
            chains,
            chain_size,
            intervals: CompetenceIntervals::default(),
        })
}

fn alpha() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), 0.0f64..1.0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn upward_delegation_is_acyclic_and_increasing(spec in topology(), seed in any::<u64>()) {
        let (g, q) = build_composite(&spec, &mut rng::seeded(seed)).unwrap();
        let d = upward_delegate(&g, &q).unwrap();
        prop_assert_eq!(d.topological_order().len(), d.n());
        for i in 0..d.n() {
            if let Some(j) = d.delegate_of(i) {
                prop_assert!(q.get(j) > q.get(i));
                prop_assert!(g.has_edge(i, j));
            }
        }
        if let Some(c_min) = d.min_delegation_gain() {
            prop_assert!(c_min > 0.0);
        }
        prop_assert_eq!(d.gurus().len(), spec.stars + spec.chains);
        prop_assert!(longest_delegation_path(&d) < spec.star_size.max(spec.chain_size));
    }

    #[test]
    fn composite_construction_is_deterministic(spec in topology(), seed in any::<u64>()) {
        let a = build_composite(&spec, &mut rng::seeded(seed)).unwrap();
        let b = build_composite(&spec, &mut rng::seeded(seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn weights_match_path_enumeration(n in 1usize..=50, p in 0.0f64..1.0, seed in any::<u64>(), a in alpha(), b in 0.0f64..=1.0) {
        let d = forest(n, p, seed);
        let m = Mechanism::new(a, b).unwrap();
        let fast = compute_weights(&d, m);
        let slow = weights_by_path_enumeration(&d, m);
        for i in 0..n {
            prop_assert!((fast.flow[i] - slow.flow[i]).abs() <= 1e-12 * slow.flow[i].max(1.0));
            prop_assert!((fast.cast_weight[i] - slow.cast_weight[i]).abs() <= 1e-12 * slow.flow[i].max(1.0));
        }
    }

    #[test]
    fn conservation(n in 1usize..=200, p in 0.0f64..1.0, seed in any::<u64>(), a in alpha()) {
        let d = forest(n, p, seed);
        let nf = n as f64;
        let vr = compute_weights(&d, Mechanism::viscous_retained(a).unwrap());
        prop_assert!((vr.total_cast() - nf).abs() <= 1e-9);
        let liquid = compute_weights(&d, Mechanism::liquid());
        prop_assert!((liquid.total_cast() - nf).abs() <= 1e-9);
        let viscous = compute_weights(&d, Mechanism::viscous(a).unwrap());
        let guru_flow: f64 = d.gurus().iter().map(|&g| viscous.flow[g]).sum();
        prop_assert!((viscous.total_cast() - guru_flow).abs() <= 1e-9);
        prop_assert!(viscous.total_cast() <= nf + 1e-9);
        let delegated = d.gurus().len() < n;
        if delegated && a < 1.0 {
            prop_assert!(viscous.total_cast() < nf - 1e-12);
        } else {
            prop_assert!((viscous.total_cast() - nf).abs() <= 1e-9);
        }
    }

    #[test]
    fn full_alpha_reduces_to_liquid(n in 1usize..=100, p in 0.0f64..1.0, seed in any::<u64>(), b in 0.0f64..=1.0) {
        let d = forest(n, p, seed);
        let w = compute_weights(&d, Mechanism::new(1.0, b).unwrap());
        let liquid = compute_weights(&d, Mechanism::liquid());
        prop_assert_eq!(w.cast_weight, liquid.cast_weight);
    }

    #[test]
    fn gurus_agree_between_viscous_variants(n in 1usize..=100, p in 0.0f64..1.0, seed in any::<u64>(), a in alpha()) {
        let d = forest(n, p, seed);
        let v = compute_weights(&d, Mechanism::viscous(a).unwrap());
        let vr = compute_weights(&d, Mechanism::viscous_retained(a).unwrap());
        for g in d.gurus() {
            prop_assert!((v.cast_weight[g] - vr.cast_weight[g]).abs() <= 1e-12);
        }
    }

    #[test]
    fn electors_shrink_as_threshold_rises(n in 1usize..=100, p in 0.0f64..1.0, seed in any::<u64>(), a in alpha(), t1 in 0.0f64..5.0, dt in 0.0f64..5.0) {
        let d = forest(n, p, seed);
        let w = compute_weights(&d, Mechanism::viscous_retained(a).unwrap());
        let low = select_electors(&w, t1);
        let high = select_electors(&w, t1 + dt);
        prop_assert!(high.is_subset(&low));
    }

    #[test]
    fn unit_threshold_recovers_viscous_gurus(
        stars in 0usize..5, star_size in 2usize..8, chains in 0usize..5, chain_size in 2usize..8,
        a in 0.05f64..0.95, seed in any::<u64>(),
    ) {
        prop_assume!(stars + chains > 0);
        let spec = TopologySpec { stars, star_size, chains, chain_size, intervals: CompetenceIntervals::default() };
        let (g, q) = build_composite(&spec, &mut rng::seeded(seed)).unwrap();
        let d = upward_delegate(&g, &q).unwrap();
        let vr = compute_weights(&d, Mechanism::viscous_retained(a).unwrap());
        let v = compute_weights(&d, Mechanism::viscous(a).unwrap());
        let gurus = d.gurus();
        let precondition = gurus.iter().all(|&g| !d.delegators(g).is_empty())
            && (0..d.n()).filter(|&i| !d.is_guru(i)).all(|i| vr.cast_weight[i] <= 1.0);
        prop_assume!(precondition);
        let electors = select_electors(&vr, 1.0);
        let heavy: Vec<usize> = gurus.into_iter().filter(|&g| v.cast_weight[g] > 1.0).collect();
        prop_assert_eq!(&electors.members, &heavy);
        for g in heavy {
            prop_assert!((vr.cast_weight[g] - v.cast_weight[g]).abs() <= 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences(
        rows in prop::collection::vec((prop::collection::vec(-2.0f64..2.0, 3), -3.0f64..3.0), 1..8),
        w in prop::collection::vec(-2.0f64..2.0, 3),
    ) {
        let data: Vec<Sample> = rows.into_iter().map(|(x, y)| Sample { x, y }).collect();
        let model = ModelVector(w);
        let grad = squared_loss_gradient(&model, &data);
        let h = 1e-5;
        for k in 0..3 {
            let mut up = model.clone();
            let mut down = model.clone();
            up.0[k] += h;
            down.0[k] -= h;
            let numeric = (squared_loss(&up, &data) - squared_loss(&down, &data)) / (2.0 * h);
            let scale = grad[k].abs().max(1.0);
            prop_assert!((numeric - grad[k]).abs() <= 1e-6 * scale, "k={} analytic={} numeric={}", k, grad[k], numeric);
        }
    }

    #[test]
    fn cost_arithmetic(c in 0.001f64..1.0, c_adv in 0.0f64..10.0, electors in 0usize..1000) {
        let cost = CostModel::new(c, c_adv).unwrap();
        prop_assert_eq!(cost.n_adv(), (c_adv / c).floor() as usize);
        prop_assert_eq!(cost.transfer_cost(electors), c * electors as f64);
    }
}

/// Viscous-retained cast weights of a parent array whose parents precede
/// their children.
fn forest_casts(parent: &[Option<usize>], alpha: f64) -> Vec<f64> {
    let n = parent.len();
    let mut flow = vec![1.0; n];
    for i in (0..n).rev() {
        if let Some(p) = parent[i] {
            flow[p] += alpha * flow[i];
        }
    }
    (0..n)
        .map(|i| if parent[i].is_some() { (1.0 - alpha) * flow[i] } else { flow[i] })
        .collect()
}

fn admissible(parent: &[Option<usize>], alpha: f64, tau: f64, target: f64, budget: usize) -> bool {
    let casts = forest_casts(parent, alpha);
    let above: Vec<f64> = casts.into_iter().filter(|&w| w > tau).collect();
    !above.is_empty() && above.len() <= budget && above.iter().sum::<f64>() > target
}

fn any_forest(parent: &mut Vec<Option<usize>>, n: usize, ok: &dyn Fn(&[Option<usize>]) -> bool) -> bool {
    if parent.len() == n {
        return ok(parent);
    }
    let i = parent.len();
    for choice in std::iter::once(None).chain((0..i).map(Some)) {
        parent.push(choice);
        if any_forest(parent, n, ok) {
            parent.pop();
            return true;
        }
        parent.pop();
    }
    false
}

/// Exhaustive minimum over every labelled forest of up to `max_n` agents.
fn brute_force_min(alpha: f64, tau: f64, target: f64, budget: usize, max_n: usize) -> Option<usize> {
    (1..=max_n).find(|&n| {
        let ok = |p: &[Option<usize>]| admissible(p, alpha, tau, target, budget);
        any_forest(&mut Vec::with_capacity(n), n, &ok)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn adversary_search_matches_exhaustive_forests(
        alpha in prop::sample::select(vec![0.2, 0.25, 0.5, 0.6, 0.75, 0.9]),
        tau in prop::sample::select(vec![0.3, 0.5, 0.8, 1.0, 1.3, 1.6, 2.0]),
        target_steps in 0usize..24,
        budget in 1usize..5,
    ) {
        let target = target_steps as f64 * 0.25 + 0.013;
        let oracle = brute_force_min(alpha, tau, target, budget, 7);
        let search = min_adversaries(alpha, tau, target, budget).unwrap();
        match (oracle, &search) {
            (Some(k), AdversarySearch::Found(t)) => {
                prop_assert_eq!(t.total_agents, k);
                prop_assert!(t.verify(alpha, tau, target, budget).is_ok());
            }
            (Some(k), other) => prop_assert!(false, "oracle found {} agents, search returned {:?}", k, other),
            (None, AdversarySearch::Found(t)) => {
                prop_assert!(t.total_agents > 7);
                prop_assert!(t.verify(alpha, tau, target, budget).is_ok());
            }
            (None, _) => {}
        }
    }

    #[test]
    fn returned_topologies_verify(
        alpha in 0.05f64..0.95,
        tau in 0.0f64..3.0,
        target in 0.0f64..40.0,
        budget in 1usize..8,
    ) {
        if let AdversarySearch::Found(t) = min_adversaries(alpha, tau, target, budget).unwrap() {
            prop_assert!(t.verify(alpha, tau, target, budget).is_ok());
            prop_assert_eq!(t.core_weights.len(), t.cores.len());
            if tau < 1.0 - alpha {
                prop_assert_eq!(t.total_agents, t.cores.len());
            }
        }
    }
}

#[test]
fn degenerate_intervals_still_give_distinct_competencies() {
    let spec = TopologySpec {
        stars: 30,
        star_size: 4,
        chains: 0,
        chain_size: 0,
        intervals: CompetenceIntervals {
            star_guru: Interval::point(0.4),
            star_leaf: Interval::new(0.39, 0.4),
            chain: Interval::new(0.65, 0.7),
        },
    };
    let (g, q) = build_composite(&spec, &mut rng::seeded(3)).unwrap();
    let d = upward_delegate(&g, &q).unwrap();
    assert_eq!(d.gurus().len(), 30);
}
