mod oracles;

use ctmap_core::eval::{
    default_epsilon_grid, edit_distance_count, edit_distance_km, edit_similarity, evaluate_trajectory, precision_recall,
    rmse_km,
};
use ctmap_core::mapper::NodePath;
use proptest::prelude::*;

const ALPHABET_KM: [f64; 5] = [0.0, 0.15, 0.4, 0.9, 1.6];

fn seq() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..5, 0..=6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metrics_match_exhaustive_oracles(pred in seq(), truth in seq(), eps_i in 0usize..6) {
        let g = oracles::line_graph(&ALPHABET_KM);
        let eps = [0.0, 0.1, 0.2, 0.3, 0.5, 1.0][eps_i];
        let same = |a: usize, b: usize| g.distance(a, b) <= eps;
        let lev = oracles::levenshtein(&pred, &truth, &same);
        prop_assert_eq!(edit_distance_count(&g, &pred, &truth, eps), lev);
        let longest = pred.len().max(truth.len());
        let sim = if longest == 0 { 1.0 } else { 1.0 - lev as f64 / longest as f64 };
        prop_assert_eq!(edit_similarity(&g, &pred, &truth, eps), sim);

        let km = edit_distance_km(&g, &pred, &truth);
        prop_assert!((km - oracles::weighted_alignment(&g, &pred, &truth)).abs() < 1e-9);
        prop_assert!((rmse_km(&g, &pred, &truth) - oracles::rmse(&g, &pred, &truth)).abs() < 1e-9);

        let pr = precision_recall(&g, &pred, &truth, eps);
        prop_assert_eq!(pr.matched, oracles::closest_pair_matching(&g, &pred, &truth, eps));
        prop_assert!(pr.matched <= oracles::maximum_matching(&g, &pred, &truth, eps));
        prop_assert_eq!(pr.precision_undefined, pred.is_empty());
    }

    #[test]
    fn identical_sequences_score_perfectly(s in prop::collection::vec(0usize..5, 1..=6)) {
        let g = oracles::line_graph(&ALPHABET_KM);
        prop_assert_eq!(edit_distance_count(&g, &s, &s, 0.0), 0);
        prop_assert_eq!(edit_distance_km(&g, &s, &s), 0.0);
        prop_assert_eq!(rmse_km(&g, &s, &s), 0.0);
        let pr = precision_recall(&g, &s, &s, 0.0);
        prop_assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
    }

    #[test]
    fn weighted_edit_distance_is_symmetric(pred in seq(), truth in seq()) {
        let g = oracles::line_graph(&ALPHABET_KM);
        prop_assert!((edit_distance_km(&g, &pred, &truth) - edit_distance_km(&g, &truth, &pred)).abs() < 1e-12);
    }

    #[test]
    fn match_metrics_never_drop_as_epsilon_grows(pred in seq(), truth in seq()) {
        let g = oracles::line_graph(&ALPHABET_KM);
        let path = |id: &str, nodes: &[usize]| NodePath {
            trajectory_id: id.into(),
            nodes: nodes.to_vec(),
            skeleton_indices: (0..nodes.len()).step_by(2).collect(),
        };
        let e = evaluate_trajectory(&g, &path("t", &pred), &path("t", &truth), &default_epsilon_grid());
        for w in e.scores.windows(2) {
            prop_assert!(w[1].precision >= w[0].precision);
            prop_assert!(w[1].recall >= w[0].recall);
            prop_assert!(w[1].skeleton_similarity >= w[0].skeleton_similarity);
            prop_assert!(w[1].complete_similarity >= w[0].complete_similarity);
        }
    }

    #[test]
    fn equal_sized_sets_give_equal_precision_and_recall(
        (a, b) in (1usize..=5).prop_flat_map(|k| {
            let pool = vec![0usize, 1, 2, 3, 4];
            (prop::sample::subsequence(pool.clone(), k), prop::sample::subsequence(pool, k))
        }),
        eps in 0.0f64..2.0,
    ) {
        let g = oracles::line_graph(&ALPHABET_KM);
        let pr = precision_recall(&g, &a, &b, eps);
        prop_assert_eq!(pr.precision, pr.recall);
    }
}
