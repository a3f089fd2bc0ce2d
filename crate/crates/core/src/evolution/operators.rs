use rand::Rng;

use super::{CesConfig, Individual, Problem};
use crate::error::Result;
use crate::space::{Architecture, SearchSpace};

/// Binary tournament: lower rank wins, then larger crowding distance, then
/// the first drawn.
pub fn tournament<'p, R: Rng + ?Sized>(pop: &'p [Individual], rng: &mut R) -> &'p Individual {
    let a = &pop[rng.gen_range(0..pop.len())];
    let b = &pop[rng.gen_range(0..pop.len())];
    if b.rank < a.rank || (b.rank == a.rank && b.crowding > a.crowding) {
        b
    } else {
        a
    }
}

/// Swaps the layer segment `[c1, c2)` of `first` for `second`'s. Cut points
/// are drawn uniformly with `c1 < c2`; a coincident draw is redrawn once and
/// then degenerates to a copy of `first`.
pub fn two_point_crossover<R: Rng + ?Sized>(
    first: &Architecture,
    second: &Architecture,
    rng: &mut R,
) -> Architecture {
    let len = first.len();
    let draw = |rng: &mut R| {
        let a = rng.gen_range(0..=len);
        let b = rng.gen_range(0..=len);
        (a.min(b), a.max(b))
    };
    let (mut c1, mut c2) = draw(rng);
    if c1 == c2 {
        (c1, c2) = draw(rng);
    }
    let mut child = first.clone();
    child.choices[c1..c2].clone_from_slice(&second.choices[c1..c2]);
    child
}

/// Polynomial mutation of one candidate index treated as a real in
/// `[0, n - 1]`, rounded back to the nearest index. A no-op draw is retried
/// once.
pub fn polynomial_index_mutation<R: Rng + ?Sized>(
    index: usize,
    n: usize,
    eta: f64,
    rng: &mut R,
) -> usize {
    if n <= 1 {
        return index;
    }
    let span = (n - 1) as f64;
    let perturb = |rng: &mut R| {
        let u: f64 = rng.gen();
        let delta = if u < 0.5 {
            (2.0 * u).powf(1.0 / (eta + 1.0)) - 1.0
        } else {
            1.0 - (2.0 * (1.0 - u)).powf(1.0 / (eta + 1.0))
        };
        (index as f64 + delta * span).round().clamp(0.0, span) as usize
    };
    let first = perturb(rng);
    if first != index {
        first
    } else {
        perturb(rng)
    }
}

pub(crate) fn mutate<R: Rng + ?Sized>(
    arch: &mut Architecture,
    space: &SearchSpace,
    per_gene: f64,
    eta: f64,
    rng: &mut R,
) {
    for (j, layer) in space.layers().iter().enumerate() {
        if rng.gen::<f64>() >= per_gene {
            continue;
        }
        let n = layer.candidates.len();
        // A gene outside the current menu (cannot happen for valid parents)
        // is mutated from the middle of the menu.
        let idx = layer
            .candidates
            .iter()
            .position(|c| *c == arch.choices[j])
            .unwrap_or(n / 2);
        let next = polynomial_index_mutation(idx, n, eta, rng);
        arch.choices[j] = layer.candidates[next].clone();
    }
}

/// Produces `population_size` feasible children by tournament, two-point
/// crossover and polynomial index mutation. A child that is invalid or
/// outside the band is regenerated up to `retry_budget` times, after which
/// the last tournament winner is copied.
pub fn make_offspring<R: Rng + ?Sized>(
    parents: &[Individual],
    cfg: &CesConfig,
    problem: &Problem<'_>,
    rng: &mut R,
) -> Result<Vec<Architecture>> {
    let per_gene = cfg.mutation_prob_for(problem.space.num_layers());
    let mut children = Vec::with_capacity(cfg.population_size);
    for _ in 0..cfg.population_size {
        let mut fallback = None;
        let mut accepted = None;
        for _ in 0..cfg.retry_budget {
            let p1 = tournament(parents, rng);
            let p2 = tournament(parents, rng);
            let mut child = if rng.gen::<f64>() < cfg.crossover_prob {
                two_point_crossover(&p1.architecture, &p2.architecture, rng)
            } else {
                p1.architecture.clone()
            };
            mutate(&mut child, problem.space, per_gene, cfg.eta, rng);
            if problem.feasible(&child)? {
                accepted = Some(child);
                break;
            }
            fallback = Some(p1.architecture.clone());
        }
        children.push(accepted.or(fallback).expect("retry_budget >= 1"));
    }
    Ok(children)
}
