mod oracles;

use ctmap_core::cellnet::CellTower;
use ctmap_core::geo::LatLon;
use ctmap_core::graph::{Layer, Node};
use ctmap_core::mapper::{
    complete_path, emission_at_distance, emission_score, viterbi, Candidate, Lattice, MapperParams, SkeletonPath,
    TransitionCache, TransitionModel,
};
use ctmap_core::synth::brute_force;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Lattice with small integer log scores: sums are exact, so ties are real
/// ties and dead transitions are common.
fn random_lattice(rng: &mut ChaCha8Rng, steps: usize, max_k: usize) -> Lattice {
    let candidates: Vec<Vec<Candidate>> = (0..steps)
        .map(|_| {
            let k = rng.gen_range(1..=max_k);
            let mut nodes: Vec<usize> = (0..12).collect();
            for i in 0..k {
                let j = rng.gen_range(i..nodes.len());
                nodes.swap(i, j);
            }
            nodes[..k]
                .iter()
                .map(|&node| Candidate { node, emission: 1.0, distance_km: 0.0 })
                .collect()
        })
        .collect();
    let level = |rng: &mut ChaCha8Rng| [f64::NEG_INFINITY, -2.0, -1.0, 0.0, 1.0][rng.gen_range(0..5)];
    let log_emission = candidates.iter().map(|cs| cs.iter().map(|_| level(rng)).collect()).collect();
    let mut log_transition = vec![Vec::new()];
    for t in 1..steps {
        log_transition.push(
            (0..candidates[t - 1].len())
                .map(|_| (0..candidates[t].len()).map(|_| level(rng)).collect())
                .collect(),
        );
    }
    Lattice { candidates, log_emission, log_transition }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn viterbi_agrees_with_exhaustive_search(seed in any::<u64>(), steps in 1usize..=6, max_k in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lattice = random_lattice(&mut rng, steps, max_k);
        match (viterbi(&lattice), brute_force(&lattice)) {
            (Ok((a, sa)), Ok((b, sb))) => {
                prop_assert_eq!(lattice.nodes_of(&a), lattice.nodes_of(&b));
                prop_assert!((sa - sb).abs() < 1e-9);
                prop_assert_eq!(sa, lattice.sequence_score(&a));
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "decoder {:?} vs search {:?}", a, b),
        }
    }

    #[test]
    fn emission_is_one_inside_zero_outside_and_decays_between(
        r_max in 0.05f64..4.9,
        d1 in 0.0f64..7.0,
        d2 in 0.0f64..7.0,
        beta in prop::sample::select(vec![1.0, 2.0, 3.0]),
    ) {
        let p = MapperParams { beta, ..MapperParams::default() };
        let (e1, e2) = (emission_at_distance(d1, r_max, &p), emission_at_distance(d2, r_max, &p));
        prop_assert_eq!(e1 == 1.0, d1 <= r_max);
        prop_assert_eq!(e1 == 0.0, d1 > p.tau_km);
        prop_assert!((0.0..=1.0).contains(&e1));
        let inside = |d: f64| d > r_max && d <= p.tau_km;
        if inside(d1) && inside(d2) && d1 < d2 {
            prop_assert!(e1 > e2);
        }
    }

    #[test]
    fn emission_of_placed_nodes_follows_their_distance(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = MapperParams::default();
        let tower = CellTower { id: "a".into(), lat: 48.85, lon: 2.35, r_max: rng.gen_range(0.2..3.0) };
        let at = oracles::offset(tower.position(), rng.gen_range(0.0..6.0), rng.gen_range(0.0..360.0));
        let node = Node::new("n", at.lat, at.lon, Layer::Road);
        let d = p.distance.distance(tower.position(), LatLon::new(node.lat, node.lon));
        prop_assert_eq!(emission_score(&tower, &node, &p), emission_at_distance(d, tower.r_max, &p));
    }

    #[test]
    fn transitions_are_symmetric_inverse_costs(seed in any::<u64>(), n in 2usize..=10, extra in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = oracles::random_graph(&mut rng, n, extra);
        let p = MapperParams::default();
        let mut cache = TransitionCache::new(&g, &p, TransitionModel::CtMapper);
        for a in 0..n {
            let costs = oracles::least_costs(&g, a);
            for b in (0..n).filter(|&b| b != a) {
                let s = cache.score(a, b);
                prop_assert!((s - 1.0 / costs[b]).abs() <= 1e-9 * s);
                // the two directions add the same edge costs in opposite order
                prop_assert!((s - cache.score(b, a)).abs() <= 1e-12 * s);
            }
        }
    }

    #[test]
    fn baseline_transitions_are_at_most_one(seed in any::<u64>(), n in 2usize..=10, extra in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = oracles::random_graph(&mut rng, n, extra);
        let mut cache = TransitionCache::new(&g, &MapperParams::default(), TransitionModel::Baseline2);
        for a in 0..n {
            for b in 0..n {
                let s = cache.score(a, b);
                prop_assert!(s > 0.0 && s <= 1.0);
            }
        }
    }

    #[test]
    fn completed_paths_walk_edges(seed in any::<u64>(), n in 2usize..=10, extra in 0usize..10, picks in prop::collection::vec(any::<prop::sample::Index>(), 1..6)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = oracles::random_graph(&mut rng, n, extra);
        let skeleton = SkeletonPath { trajectory_id: "t".into(), nodes: picks.iter().map(|i| i.index(n)).collect(), log_score: None };
        let path = complete_path(&g, &skeleton).unwrap();
        for w in path.nodes.windows(2) {
            prop_assert!(g.are_adjacent(w[0], w[1]));
        }
        prop_assert_eq!(path.skeleton_indices.len(), skeleton.nodes.len());
        for (k, &i) in path.skeleton_indices.iter().enumerate() {
            prop_assert_eq!(path.nodes[i], skeleton.nodes[k]);
        }
        prop_assert!(path.skeleton_indices.windows(2).all(|w| w[0] <= w[1]));
    }
}
