mod oracles;

use ctmap_core::entropy::{pair_search_information, randomize_preserving_degrees, search_entropy, EntropyOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pair_information_matches_enumerated_paths(seed in any::<u64>(), n in 2usize..=10, extra in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = oracles::random_graph(&mut rng, n, extra);
        for s in 0..n {
            for t in (0..n).filter(|&t| t != s) {
                let want = oracles::search_information(&g, s, t).unwrap();
                let got = pair_search_information(&g, s, t).unwrap();
                prop_assert!((got - want).abs() < 1e-9, "{s}->{t}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn exhaustive_mean_matches_oracle(seed in any::<u64>(), n in 2usize..=9, extra in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = oracles::random_graph(&mut rng, n, extra);
        let (report, samples) = search_entropy(&g, &EntropyOptions { swap_factor: None, ..Default::default() });
        prop_assert!(report.exact);
        prop_assert_eq!(samples.len(), n * (n - 1));
        prop_assert!((report.s_avg - oracles::mean_search_information(&g)).abs() < 1e-9);
        prop_assert!(report.sigma >= 0.0);
    }

    #[test]
    fn rewiring_keeps_every_degree(seed in any::<u64>(), n in 4usize..=14, extra in 0usize..14, swap_seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = oracles::random_graph(&mut rng, n, extra);
        let r = randomize_preserving_degrees(&g, 10, swap_seed);
        prop_assert_eq!(r.edge_count(), g.edge_count());
        for v in 0..n {
            prop_assert_eq!(r.degree_of(v), g.degree_of(v));
            prop_assert!(r.edge_between(v, v).is_none());
        }
        prop_assert_eq!(&r, &randomize_preserving_degrees(&g, 10, swap_seed));
    }
}

#[test]
fn star_needs_a_bit_from_the_hub_side() {
    let g = ctmap_core::graph::MultilayerGraph::new(
        (0..4)
            .map(|i| ctmap_core::graph::Node::new(format!("s{i}"), 48.0 + 0.01 * i as f64, 2.0, ctmap_core::graph::Layer::Road))
            .collect(),
        (1..4)
            .map(|i| ctmap_core::graph::EdgeSpec::new("s0", format!("s{i}"), ctmap_core::graph::EdgeClass::RoadLocal, Some(1.0)))
            .collect(),
    )
    .unwrap();
    // hub -> leaf: 1/3; leaf -> hub: 1; leaf -> leaf: 1 * 1/2
    let want = (3.0 * 3f64.log2() + 0.0 * 3.0 + 6.0 * 1.0) / 12.0;
    let (report, _) = search_entropy(&g, &EntropyOptions { swap_factor: None, ..Default::default() });
    assert!((report.s_avg - want).abs() < 1e-12);
}
