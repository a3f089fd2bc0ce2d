use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::operators::{mutate, two_point_crossover};
use super::{assign_ranks, dedup, feasible_initial, Archive, CesConfig, Individual, Problem, SearchResult};
use crate::error::Result;
use crate::space::Architecture;

pub fn spos_search(problem: &Problem<'_>, cfg: &CesConfig) -> Result<SearchResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    spos_search_with(problem, cfg, &mut rng)
}

/// Single-objective truncation EA: each generation keeps the `spos_top_k`
/// most accurate feasible candidates seen so far and breeds the next
/// candidates from them, half by mutation and half by crossover.
pub fn spos_search_with(
    problem: &Problem<'_>,
    cfg: &CesConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SearchResult> {
    cfg.validate()?;
    let stats_before = problem.oracle.stats();
    let n = cfg.population_size;
    let k = cfg.spos_top_k;
    // Mutation is the only source of novelty here, so it runs hotter than
    // the NSGA-II default.
    let per_gene = cfg.mutation_prob.unwrap_or(0.1);

    let init = feasible_initial(problem, n, rng)?;
    let mut candidates = problem.evaluate(&init)?;
    let mut archive = Archive::default();
    archive.record(&candidates, 0);
    let mut top = truncate(candidates.clone(), k);
    let mut snapshots = Vec::with_capacity(cfg.iterations);

    for iteration in 1..=cfg.iterations {
        let mut children = Vec::with_capacity(n);
        for c in 0..n {
            let by_mutation = c < n / 2;
            children.push(breed(&top, by_mutation, cfg, per_gene, problem, rng)?);
        }
        candidates = problem.evaluate(&children)?;
        archive.record(&candidates, iteration);
        top = truncate(top.into_iter().chain(candidates.iter().cloned()), k);
        snapshots.push(top.clone());
    }

    let mut combined = dedup(top.iter().cloned().chain(candidates));
    assign_ranks(&mut combined);
    let mut population = top;
    assign_ranks(&mut population);
    Ok(SearchResult {
        population,
        combined,
        archive: archive.into_entries(),
        snapshots,
        oracle_stats: problem.oracle.stats().since(&stats_before),
    })
}

fn breed(
    top: &[Individual],
    by_mutation: bool,
    cfg: &CesConfig,
    per_gene: f64,
    problem: &Problem<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<Architecture> {
    let mut fallback = None;
    for _ in 0..cfg.retry_budget {
        let p1 = &top[rng.gen_range(0..top.len())];
        let child = if by_mutation {
            let mut c = p1.architecture.clone();
            mutate(&mut c, problem.space, per_gene, cfg.eta, rng);
            c
        } else {
            let p2 = &top[rng.gen_range(0..top.len())];
            two_point_crossover(&p1.architecture, &p2.architecture, rng)
        };
        if problem.feasible(&child)? {
            return Ok(child);
        }
        fallback = Some(p1.architecture.clone());
    }
    Ok(fallback.expect("retry_budget >= 1"))
}

/// Distinct individuals sorted by descending accuracy (then latency), cut to `k`.
fn truncate(pool: impl IntoIterator<Item = Individual>, k: usize) -> Vec<Individual> {
    let mut pool = dedup(pool);
    pool.sort_by(|a, b| {
        b.accuracy
            .total_cmp(&a.accuracy)
            .then(a.latency_ms.total_cmp(&b.latency_ms))
            .then_with(|| a.architecture.cmp(&b.architecture))
    });
    pool.truncate(k);
    pool
}
