//! Structural guarantees of the voxel-wise GLM output.

use perfmap_core::glm::{run_glm, DesignMatrix, GlmOptions};
use perfmap_core::{GridGeometry, ScalarVolume};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cohort(seed: u64, n: usize, effect: f64) -> (Vec<ScalarVolume>, DesignMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = GridGeometry::unit([8, 8, 6]);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            vec![
                1.0,
                rng.random_range(0..5) as f64,
                rng.random_range(40..90) as f64,
                (i % 2) as f64,
            ]
        })
        .collect();
    let vols = rows
        .iter()
        .map(|r| {
            ScalarVolume::from_fn(g.clone(), |[i, j, _]| {
                let signal = if (2..5).contains(&i) && (2..6).contains(&j) {
                    effect * r[1]
                } else {
                    0.0
                };
                (signal + rng.random_range(-1.0..1.0)) as f32
            })
            .unwrap()
        })
        .collect();
    (vols, DesignMatrix::new(&rows, &[0.0, 1.0, 0.0, 0.0]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn clusters_partition_the_significant_mask(
        seed in 0u64..10_000,
        effect in prop_oneof![Just(0.0), 0.2f64..1.0],
        min_extent in 1usize..12,
        two_sided in any::<bool>(),
    ) {
        let (vols, design) = cohort(seed, 16, effect);
        let opts = GlmOptions { n_perm: 100, min_extent, two_sided, rng_seed: seed, ..GlmOptions::default() };
        let res = run_glm(&vols, &design, &opts).unwrap();
        let stat = |idx: usize| {
            let t = res.t_map.data()[idx] as f64;
            if two_sided { t.abs() } else { t }
        };
        for idx in res.significant_mask.indices() {
            prop_assert!(stat(idx) >= res.fwe_threshold);
        }
        prop_assert!(res.clusters.iter().all(|c| c.size >= min_extent));
        prop_assert_eq!(res.clusters.iter().map(|c| c.size).sum::<usize>(), res.significant_mask.count());
        prop_assert_eq!(res.max_stats.len(), opts.n_perm);

        let again = run_glm(&vols, &design, &opts).unwrap();
        prop_assert_eq!(&again.t_map, &res.t_map);
        prop_assert_eq!(&again.max_stats, &res.max_stats);
        prop_assert_eq!(&again.clusters, &res.clusters);
    }
}

#[test]
fn strong_effect_is_found_where_it_was_planted() {
    let (vols, design) = cohort(3, 24, 2.0);
    let opts = GlmOptions {
        n_perm: 200,
        min_extent: 10,
        ..GlmOptions::default()
    };
    let res = run_glm(&vols, &design, &opts).unwrap();
    assert_eq!(res.clusters.len(), 1, "{:?}", res.clusters);
    let g = res.t_map.geometry();
    for idx in res.significant_mask.indices() {
        let [i, j, _] = g.coords(idx);
        assert!((2..5).contains(&i) && (2..6).contains(&j));
    }
}
