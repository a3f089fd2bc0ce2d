//! Shared builders and brute-force references for the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use padnas_core::evolution::{dominates, Objectives};
use padnas_core::space::{LayerSpec, Operation};
use padnas_core::{LatencyTable, SearchSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Menu of distinct convolution ops, cheapest first.
pub fn menu(n: usize) -> Vec<Operation> {
    let mut ops = Vec::new();
    for e in [1u8, 3, 6] {
        for k in [3u8, 5, 7] {
            ops.push(Operation::conv(k, e));
        }
    }
    ops.truncate(n);
    ops
}

/// `layers` layers sharing a menu of `ops` candidates.
pub fn toy_space(layers: usize, ops: usize) -> SearchSpace {
    let ops = menu(ops);
    let catalog: BTreeMap<String, Operation> = ops.iter().map(|o| (o.id.clone(), o.clone())).collect();
    let layers = (0..layers)
        .map(|j| LayerSpec {
            index: j,
            stage_name: format!("T{j}"),
            allows_identity: false,
            fixed_expansion_one: false,
            candidates: ops.iter().map(|o| o.id.clone()).collect(),
        })
        .collect();
    SearchSpace::new(layers, catalog).unwrap()
}

/// Random positive latencies for every (layer, candidate).
pub fn toy_table(space: &SearchSpace, seed: u64) -> LatencyTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = LatencyTable::new("toy", 224);
    for layer in space.layers() {
        for op in &layer.candidates {
            table.insert(layer.index, op.clone(), rng.gen_range(0.5..5.0)).unwrap();
        }
    }
    table
}

/// Exhaustive O(n^2) pair counts: (concordant - discordant, ties in x,
/// ties in y, pairs).
pub fn brute_counts(x: &[f64], y: &[f64]) -> (i64, u64, u64, u64) {
    let (mut score, mut tx, mut ty, mut pairs) = (0i64, 0u64, 0u64, 0u64);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            pairs += 1;
            let dx = x[i].partial_cmp(&x[j]).unwrap();
            let dy = y[i].partial_cmp(&y[j]).unwrap();
            tx += u64::from(dx.is_eq());
            ty += u64::from(dy.is_eq());
            if !dx.is_eq() && !dy.is_eq() {
                score += if dx == dy { 1 } else { -1 };
            }
        }
    }
    (score, tx, ty, pairs)
}

pub fn brute_tau_b(x: &[f64], y: &[f64]) -> Option<f64> {
    let (score, tx, ty, pairs) = brute_counts(x, y);
    let (nx, ny) = (pairs - tx, pairs - ty);
    (nx > 0 && ny > 0).then(|| score as f64 / ((nx as f64) * (ny as f64)).sqrt())
}

/// Fronts by repeatedly peeling the non-dominated set: O(n^3) but obvious.
pub fn brute_fronts<T: Objectives>(pop: &[T]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..pop.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| dominates(&pop[j], &pop[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}
