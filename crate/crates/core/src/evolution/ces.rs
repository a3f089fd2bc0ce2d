use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    assign_ranks, dedup, feasible_initial, make_offspring, Archive, CesConfig, Individual,
    Problem, SearchResult,
};
use crate::error::Result;

/// Seeds a fresh generator from `cfg.seed` and runs [`ces_search_with`].
pub fn ces_search(problem: &Problem<'_>, cfg: &CesConfig) -> Result<SearchResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    ces_search_with(problem, cfg, &mut rng)
}

/// NSGA-II main loop with feasibility-filtered variation.
pub fn ces_search_with(
    problem: &Problem<'_>,
    cfg: &CesConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SearchResult> {
    cfg.validate()?;
    let stats_before = problem.oracle.stats();
    let n = cfg.population_size;

    let init = feasible_initial(problem, n, rng)?;
    let mut population = problem.evaluate(&init)?;
    let mut archive = Archive::default();
    archive.record(&population, 0);
    assign_ranks(&mut population);

    let mut combined = population.clone();
    let mut snapshots = Vec::with_capacity(cfg.iterations);
    for iteration in 1..=cfg.iterations {
        let children = make_offspring(&population, cfg, problem, rng)?;
        let children = problem.evaluate(&children)?;
        archive.record(&children, iteration);

        combined = dedup(population.into_iter().chain(children));
        let fronts = assign_ranks(&mut combined);
        population = select(&combined, &fronts, n);
        snapshots.push(front_of(&population));
    }

    Ok(SearchResult {
        population,
        combined,
        archive: archive.into_entries(),
        snapshots,
        oracle_stats: problem.oracle.stats().since(&stats_before),
    })
}

/// Fills `n` slots front by front; the front that does not fit is cut by
/// descending crowding distance. Ranks and crowding are recomputed on the
/// survivors so tournaments see the new population's structure.
fn select(combined: &[Individual], fronts: &[Vec<usize>], n: usize) -> Vec<Individual> {
    let mut next = Vec::with_capacity(n);
    for front in fronts {
        if next.len() + front.len() <= n {
            next.extend(front.iter().map(|&i| combined[i].clone()));
            continue;
        }
        let mut rest: Vec<usize> = front.clone();
        rest.sort_by(|&a, &b| {
            combined[b]
                .crowding
                .total_cmp(&combined[a].crowding)
                .then(a.cmp(&b))
        });
        let room = n - next.len();
        next.extend(rest.into_iter().take(room).map(|i| combined[i].clone()));
        break;
    }
    assign_ranks(&mut next);
    next
}

fn front_of(pop: &[Individual]) -> Vec<Individual> {
    pop.iter().filter(|i| i.rank == 1).cloned().collect()
}
