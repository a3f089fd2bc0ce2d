//! Constrained evolutionary search over (accuracy up, latency down).
//!
//! [`ces_search`] is NSGA-II with latency-infeasible offspring rejected
//! during variation. [`spos_search`] is the accuracy-truncation EA used as a
//! comparison baseline.

mod ces;
mod operators;
mod sort;
mod spos;

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use ces::{ces_search, ces_search_with};
pub use operators::{make_offspring, polynomial_index_mutation, tournament, two_point_crossover};
pub use sort::{assign_crowding, assign_ranks, crowding_distance, dominates, non_dominated_sort, Objectives};
pub use spos::{spos_search, spos_search_with};

use crate::error::{Error, Result};
use crate::latency::{LatencyBand, LatencyTable};
use crate::oracle::{CacheStats, Evaluation, Oracle};
use crate::par::Execution;
use crate::space::{Architecture, SearchSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub architecture: Architecture,
    pub accuracy: f64,
    pub latency_ms: f64,
    /// Nondomination rank; 1 is the Pareto front, 0 means not yet sorted.
    pub rank: usize,
    /// Written as `null` in JSON when infinite (front boundaries).
    #[serde(with = "infinite_as_null")]
    pub crowding: f64,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Individual {
    pub fn new(architecture: Architecture, accuracy: f64, latency_ms: f64) -> Self {
        Individual {
            architecture,
            accuracy,
            latency_ms,
            rank: 0,
            crowding: 0.0,
        }
    }
}

impl From<Evaluation> for Individual {
    fn from(e: Evaluation) -> Self {
        Individual::new(e.architecture, e.accuracy, e.latency_ms)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CesConfig {
    pub population_size: usize,
    pub iterations: usize,
    pub crossover_prob: f64,
    /// Per-gene mutation probability; `None` means `1 / layers`.
    pub mutation_prob: Option<f64>,
    /// Distribution index of polynomial mutation.
    pub eta: f64,
    /// Variation attempts per child before falling back to a parent copy.
    pub retry_budget: usize,
    /// Survivors kept by the truncation baseline.
    pub spos_top_k: usize,
    pub seed: u64,
}

impl Default for CesConfig {
    fn default() -> Self {
        CesConfig {
            population_size: 64,
            iterations: 40,
            crossover_prob: 0.9,
            mutation_prob: None,
            eta: 20.0,
            retry_budget: 10,
            spos_top_k: 16,
            seed: 0,
        }
    }
}

impl CesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 || !self.population_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "population_size = {} must be even and >= 2",
                self.population_size
            )));
        }
        for (name, p) in [
            ("crossover_prob", Some(self.crossover_prob)),
            ("mutation_prob", self.mutation_prob),
        ] {
            if let Some(p) = p {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
                }
            }
        }
        if self.retry_budget < 1 {
            return Err(Error::Config("retry_budget must be >= 1".into()));
        }
        if self.eta.is_nan() || self.eta < 0.0 {
            return Err(Error::Config(format!("eta = {} must be >= 0", self.eta)));
        }
        if self.spos_top_k < 1 || self.spos_top_k > self.population_size {
            return Err(Error::Config(format!(
                "spos_top_k = {} must lie in 1..=population_size",
                self.spos_top_k
            )));
        }
        Ok(())
    }

    pub fn mutation_prob_for(&self, layers: usize) -> f64 {
        self.mutation_prob.unwrap_or(1.0 / layers.max(1) as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    #[serde(flatten)]
    pub individual: Individual,
    /// Generation that first evaluated this architecture (0 = initial).
    pub iteration: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Population after the last selection step.
    pub population: Vec<Individual>,
    /// Deduplicated union the last selection step chose from.
    pub combined: Vec<Individual>,
    /// Every distinct architecture evaluated, in first-evaluation order.
    pub archive: Vec<ArchiveEntry>,
    /// Rank-1 members of the population after each generation.
    pub snapshots: Vec<Vec<Individual>>,
    /// Oracle cache traffic caused by this search.
    pub oracle_stats: CacheStats,
}

impl SearchResult {
    /// Highest-accuracy archive members, ties broken by lower latency.
    pub fn top_by_accuracy(&self, n: usize) -> Vec<Individual> {
        let mut all: Vec<&Individual> = self.archive.iter().map(|e| &e.individual).collect();
        all.sort_by(|a, b| {
            b.accuracy
                .total_cmp(&a.accuracy)
                .then(a.latency_ms.total_cmp(&b.latency_ms))
                .then_with(|| a.architecture.cmp(&b.architecture))
        });
        all.into_iter().take(n).cloned().collect()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("result serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// CSV rows of `arch,acc,latency_ms,rank,iteration`, where rank is the
    /// nondomination rank over the whole archive.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        let members: Vec<&Individual> = self.archive.iter().map(|e| &e.individual).collect();
        let mut ranks = vec![0usize; members.len()];
        for (r, front) in non_dominated_sort(&members).iter().enumerate() {
            for &i in front {
                ranks[i] = r + 1;
            }
        }
        writeln!(out, "arch,acc,latency_ms,rank,iteration")?;
        for (entry, rank) in self.archive.iter().zip(ranks) {
            writeln!(
                out,
                "{},{:.6},{:.2},{},{}",
                entry.individual.architecture,
                entry.individual.accuracy,
                entry.individual.latency_ms,
                rank,
                entry.iteration
            )?;
        }
        Ok(())
    }
}

/// Everything a search needs besides its configuration.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub space: &'a SearchSpace,
    pub table: &'a LatencyTable,
    pub band: &'a LatencyBand,
    pub oracle: &'a Oracle,
    pub exec: Execution,
}

impl<'a> Problem<'a> {
    pub fn new(
        space: &'a SearchSpace,
        table: &'a LatencyTable,
        band: &'a LatencyBand,
        oracle: &'a Oracle,
    ) -> Self {
        Problem {
            space,
            table,
            band,
            oracle,
            exec: Execution::default(),
        }
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub(crate) fn feasible(&self, arch: &Architecture) -> Result<bool> {
        Ok(self.space.validate(arch)? && self.table.is_feasible(self.band, arch)?)
    }

    pub(crate) fn infeasible_error(&self) -> Result<Error> {
        let (achievable_min, achievable_max) = self.table.bounds(self.space)?;
        Ok(Error::InfeasibleBand {
            lat_min: self.band.lat_min,
            lat_max: self.band.lat_max,
            achievable_min,
            achievable_max,
        })
    }

    pub(crate) fn evaluate(&self, archs: &[Architecture]) -> Result<Vec<Individual>> {
        Ok(self
            .oracle
            .evaluate_batch(self.table, archs, self.exec)?
            .into_iter()
            .map(Individual::from)
            .collect())
    }
}

/// Rejection-samples up to `n` distinct feasible architectures.
pub(crate) fn feasible_initial<R: rand::Rng>(
    problem: &Problem<'_>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Architecture>> {
    problem.table.check_coverage(problem.space)?;
    let max_attempts = 1000 * n;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    for _ in 0..max_attempts {
        if out.len() == n {
            break;
        }
        let arch = problem.space.sample_uniform(rng);
        if problem.table.is_feasible(problem.band, &arch)? && seen.insert(arch.clone()) {
            out.push(arch);
        }
    }
    if out.is_empty() {
        return Err(problem.infeasible_error()?);
    }
    Ok(out)
}

/// Keeps the first occurrence of each architecture.
pub(crate) fn dedup(individuals: impl IntoIterator<Item = Individual>) -> Vec<Individual> {
    let mut seen = HashSet::new();
    individuals
        .into_iter()
        .filter(|i| seen.insert(i.architecture.clone()))
        .collect()
}

/// Archive bookkeeping shared by both searches.
#[derive(Default)]
pub(crate) struct Archive {
    seen: HashSet<Architecture>,
    entries: Vec<ArchiveEntry>,
}

impl Archive {
    pub(crate) fn record(&mut self, individuals: &[Individual], iteration: usize) {
        for ind in individuals {
            if self.seen.insert(ind.architecture.clone()) {
                self.entries.push(ArchiveEntry {
                    individual: Individual::new(
                        ind.architecture.clone(),
                        ind.accuracy,
                        ind.latency_ms,
                    ),
                    iteration,
                });
            }
        }
    }

    pub(crate) fn into_entries(self) -> Vec<ArchiveEntry> {
        self.entries
    }
}
