//! Cross-checks the tree trainer against the exhaustive-search CART
//! reference on randomized datasets.

use coloshape::forest::{train_tree, ForestParams, Sample};
use coloshape::geometry::Point3;
use coloshape::oracles::{exhaustive_cart_tree, trees_match_bitwise};
use rand::Rng;

fn random_dataset(seed: u64, n: usize, d: usize) -> Vec<Sample<f64>> {
    let mut rng = coloshape::rng::substream(seed, &[17]);
    (0..n)
        .map(|_| {
            (
                (0..d).map(|_| rng.gen_range(-50.0..50.0)).collect(),
                Point3::new(
                    rng.gen_range(-30.0..30.0),
                    rng.gen_range(-30.0..30.0),
                    rng.gen_range(-30.0..30.0),
                ),
            )
        })
        .collect()
}

#[test]
fn trainer_matches_exhaustive_cart_on_random_datasets() {
    let mut rng = coloshape::rng::substream(2_000, &[0]);
    for round in 0..25u64 {
        let n = rng.gen_range(4..=50);
        let d = rng.gen_range(1..=6);
        let msl = rng.gen_range(1..=2);
        let depth = Some(2);
        let samples = random_dataset(round, n, d);

        let params = ForestParams {
            n_trees: 1,
            max_depth: depth,
            min_samples_leaf: msl,
            mtry: Some(d),
            bootstrap: false,
            seed: round,
        };
        let trained = train_tree(&samples, &params, 0).unwrap();
        let oracle = exhaustive_cart_tree(&samples, msl, depth);

        assert!(
            trees_match_bitwise(&trained, &oracle),
            "structure mismatch on round {round} (n={n}, d={d}, msl={msl})"
        );
        for (x, _) in &samples {
            let dist = trained.predict(x).distance(&oracle.predict(x));
            assert!(dist <= 1e-12, "prediction drift {dist} on round {round}");
        }
    }
}

#[test]
fn trainer_matches_oracle_with_duplicate_feature_values() {
    // Quantized features force repeated values and threshold ties.
    let mut rng = coloshape::rng::substream(2_001, &[0]);
    for round in 0..10u64 {
        let n = rng.gen_range(6..=40);
        let d = rng.gen_range(1..=4);
        let samples: Vec<Sample<f64>> = (0..n)
            .map(|_| {
                (
                    (0..d).map(|_| rng.gen_range(-3i32..=3) as f64).collect(),
                    Point3::new(
                        rng.gen_range(-2i32..=2) as f64,
                        rng.gen_range(-2i32..=2) as f64,
                        rng.gen_range(-2i32..=2) as f64,
                    ),
                )
            })
            .collect();

        let params = ForestParams {
            n_trees: 1,
            max_depth: Some(2),
            min_samples_leaf: 1,
            mtry: Some(d),
            bootstrap: false,
            seed: round,
        };
        let trained = train_tree(&samples, &params, 0).unwrap();
        let oracle = exhaustive_cart_tree(&samples, 1, Some(2));
        assert!(
            trees_match_bitwise(&trained, &oracle),
            "structure mismatch on quantized round {round}"
        );
        for (x, _) in &samples {
            assert!(trained.predict(x).distance(&oracle.predict(x)) <= 1e-12);
        }
    }
}
