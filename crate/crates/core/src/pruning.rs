//! Operation-frequency estimation over low-rank search results and
//! threshold pruning.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{non_dominated_sort, Individual, SearchResult};
use crate::space::{Architecture, SearchSpace};

/// Which individuals of a search result the frequencies are counted over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountingSource {
    /// The deduplicated parents+children union of the last generation.
    #[default]
    Combined,
    /// Every architecture evaluated during the search.
    Archive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerDistribution {
    pub layer: usize,
    pub probs: BTreeMap<String, f64>,
    pub support_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    pub layer: usize,
    pub op: String,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub removed: Vec<PruneDecision>,
    pub kept: Vec<PruneDecision>,
    pub threshold: f64,
    pub rank_cutoff: usize,
    /// Layers where every candidate fell at or below the threshold and the
    /// most frequent one was kept anyway.
    pub floor_triggers: Vec<usize>,
}

/// Unique architectures with nondomination rank `< rank_cutoff`, ranks
/// recomputed over the chosen source.
pub fn select_counting_set(
    result: &SearchResult,
    rank_cutoff: usize,
    source: CountingSource,
) -> Result<Vec<Architecture>> {
    if rank_cutoff < 1 {
        return Err(Error::Config("rank_cutoff must be >= 1".into()));
    }
    let pool: Vec<&Individual> = match source {
        CountingSource::Combined => result.combined.iter().collect(),
        CountingSource::Archive => result.archive.iter().map(|e| &e.individual).collect(),
    };
    let mut seen = HashSet::new();
    let pool: Vec<&Individual> = pool
        .into_iter()
        .filter(|i| seen.insert(&i.architecture))
        .collect();
    if pool.is_empty() {
        return Err(Error::Empty("search result has no individuals"));
    }
    let fronts = non_dominated_sort(&pool);
    Ok(fronts
        .iter()
        .take(rank_cutoff.saturating_sub(1))
        .flat_map(|front| front.iter().map(|&i| pool[i].architecture.clone()))
        .collect())
}

/// Per-layer normalized frequency of every current candidate.
pub fn estimate_distributions(
    archs: &[Architecture],
    space: &SearchSpace,
) -> Result<Vec<LayerDistribution>> {
    if archs.is_empty() {
        return Err(Error::Empty("no architectures to count"));
    }
    for arch in archs {
        if !space.validate(arch)? {
            return Err(Error::Config(format!("architecture {arch} is not valid in the space")));
        }
    }
    let total = archs.len() as f64;
    Ok(space
        .layers()
        .iter()
        .map(|layer| {
            let mut counts: BTreeMap<String, usize> =
                layer.candidates.iter().map(|c| (c.clone(), 0)).collect();
            for arch in archs {
                *counts.get_mut(&arch.choices[layer.index]).expect("validated") += 1;
            }
            LayerDistribution {
                layer: layer.index,
                probs: counts
                    .into_iter()
                    .map(|(op, c)| (op, c as f64 / total))
                    .collect(),
                support_count: archs.len(),
            }
        })
        .collect())
}

/// Removes every candidate with `p <= threshold`, keeping at least the most
/// frequent candidate of each layer.
pub fn prune_below_threshold(
    space: &SearchSpace,
    dists: &[LayerDistribution],
    threshold: f64,
    rank_cutoff: usize,
) -> Result<(SearchSpace, PruneReport)> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} outside [0, 1)")));
    }
    if dists.len() != space.num_layers() {
        return Err(Error::ShapeMismatch(format!(
            "{} distributions for {} layers",
            dists.len(),
            space.num_layers()
        )));
    }
    let mut next = space.clone();
    let mut report = PruneReport {
        removed: Vec::new(),
        kept: Vec::new(),
        threshold,
        rank_cutoff,
        floor_triggers: Vec::new(),
    };
    for (layer, dist) in space.layers().iter().zip(dists) {
        let j = layer.index;
        let p = |op: &str| dist.probs.get(op).copied().unwrap_or(0.0);
        let mut doomed: Vec<&String> = layer.candidates.iter().filter(|c| p(c) <= threshold).collect();
        if doomed.len() == layer.candidates.len() {
            // Floor: spare the most frequent candidate, first in menu order on ties.
            let best = layer
                .candidates
                .iter()
                .fold(None::<&String>, |best, c| match best {
                    Some(b) if p(b) >= p(c) => Some(b),
                    _ => Some(c),
                })
                .expect("non-empty layer");
            doomed.retain(|c| *c != best);
            report.floor_triggers.push(j);
        }
        for op in &layer.candidates {
            let decision = PruneDecision {
                layer: j,
                op: op.clone(),
                p: p(op),
            };
            if doomed.contains(&op) {
                next = next.prune_operation(j, op)?;
                report.removed.push(decision);
            } else {
                report.kept.push(decision);
            }
        }
    }
    Ok((next, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub valid: bool,
    pub violations: Vec<String>,
    pub size_before: String,
    pub size_after: String,
    pub log10_size_before: f64,
    pub log10_size_after: f64,
    pub log10_reduction: f64,
}

/// Re-checks the layer invariants of a pruned space against its parent and
/// reports the size change.
pub fn structural_constraint_check(before: &SearchSpace, after: &SearchSpace) -> Diagnostics {
    let mut violations = Vec::new();
    if !after.is_subspace_of(before) {
        violations.push("pruned space is not a sub-space of its parent".to_string());
    }
    for layer in after.layers() {
        if layer.candidates.is_empty() {
            violations.push(format!("layer {} is empty", layer.index));
        }
        for id in &layer.candidates {
            match after.operation(id) {
                None => violations.push(format!("layer {} references unknown `{id}`", layer.index)),
                Some(op) => {
                    if op.is_identity && !layer.allows_identity {
                        violations.push(format!("layer {} holds a forbidden identity", layer.index));
                    }
                    if layer.fixed_expansion_one && !op.is_identity && op.expansion != Some(1) {
                        violations.push(format!(
                            "layer {} is expansion-fixed but holds `{id}`",
                            layer.index
                        ));
                    }
                }
            }
        }
    }
    let log10_size_before = before.log10_size();
    let log10_size_after = after.log10_size();
    Diagnostics {
        valid: violations.is_empty(),
        violations,
        size_before: before.size().to_string(),
        size_after: after.size().to_string(),
        log10_size_before,
        log10_size_after,
        log10_reduction: log10_size_before - log10_size_after,
    }
}
