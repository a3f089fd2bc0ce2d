//! Sampling uniformity and pruning algebra of search spaces.

mod common;

use padnas_core::SearchSpace;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Upper 1% point of chi-square with `df` degrees of freedom.
fn chi2_critical_01(df: usize) -> f64 {
    // Wilson-Hilferty; accurate to well under 1% for df >= 2.
    let z = 2.326_347_874;
    let k = df as f64;
    k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
}

#[test]
fn uniform_sampling_passes_chi_square_per_layer() {
    let space = common::toy_space(3, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 10_000;
    let mut counts = vec![vec![0usize; 7]; 3];
    for _ in 0..n {
        let arch = space.sample_uniform(&mut rng);
        for (j, choice) in arch.choices.iter().enumerate() {
            counts[j][space.candidate_index(j, choice).unwrap()] += 1;
        }
    }
    let expected = n as f64 / 7.0;
    for (j, row) in counts.iter().enumerate() {
        let stat: f64 = row.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(stat < chi2_critical_01(6), "layer {j}: chi2 {stat:.2} over {row:?}");
    }
}

#[test]
fn chi_square_critical_value_is_accurate() {
    // Tabulated upper 1% points.
    assert!((chi2_critical_01(6) - 16.812).abs() < 0.05);
    assert!((chi2_critical_01(10) - 23.209).abs() < 0.05);
}

#[test]
fn single_candidate_layers_force_the_architecture() {
    let space = common::toy_space(4, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let only = space.enumerate().next().unwrap();
    assert_eq!(space.enumerate().count(), 1);
    for _ in 0..20 {
        assert_eq!(space.sample_uniform(&mut rng), only);
    }
}

/// A toy space plus removals that never empty a layer.
fn space_and_removals() -> impl Strategy<Value = (SearchSpace, Vec<(usize, usize)>)> {
    (1usize..6, 2usize..9).prop_flat_map(|(layers, ops)| {
        let removals = prop::collection::vec((0..layers, 0..ops), 1..8);
        removals.prop_map(move |r| {
            let space = common::toy_space(layers, ops);
            // Keep at most ops - 1 removals per layer.
            let mut per_layer = vec![0usize; layers];
            let mut seen = std::collections::BTreeSet::new();
            let r = r
                .into_iter()
                .filter(|&(l, o)| {
                    if seen.contains(&(l, o)) || per_layer[l] + 1 >= ops {
                        return false;
                    }
                    seen.insert((l, o));
                    per_layer[l] += 1;
                    true
                })
                .collect();
            (space, r)
        })
    })
}

fn apply(space: &SearchSpace, removals: &[(usize, usize)]) -> SearchSpace {
    let ids: Vec<(usize, String)> = removals
        .iter()
        .map(|&(l, o)| (l, space.layers()[l].candidates[o].clone()))
        .collect();
    ids.iter()
        .fold(space.clone(), |s, (l, id)| s.prune_operation(*l, id).unwrap())
}

proptest! {
    #[test]
    fn every_removal_strictly_shrinks_the_space((space, removals) in space_and_removals()) {
        let mut current = space.clone();
        for (l, o) in &removals {
            let id = space.layers()[*l].candidates[*o].clone();
            let next = current.prune_operation(*l, &id).unwrap();
            prop_assert!(next.size() < current.size());
            prop_assert!(next.is_subspace_of(&current));
            prop_assert!(current.validate(&next.sample_uniform(&mut ChaCha8Rng::seed_from_u64(1))).unwrap());
            current = next;
        }
    }

    #[test]
    fn pruning_order_does_not_matter((space, removals) in space_and_removals(), seed in any::<u64>()) {
        let mut shuffled = removals.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(apply(&space, &removals), apply(&space, &shuffled));
    }

    #[test]
    fn emptying_a_layer_is_refused(layers in 1usize..5, ops in 1usize..6, layer in 0usize..5) {
        let layer = layer % layers;
        let space = common::toy_space(layers, ops);
        let ids = space.layers()[layer].candidates.clone();
        let mut current = space;
        for id in &ids[..ids.len() - 1] {
            current = current.prune_operation(layer, id).unwrap();
        }
        prop_assert!(current.prune_operation(layer, ids.last().unwrap()).is_err());
    }
}
