//! The progressive M-stage driver: initial training, then repeated
//! search → estimate → prune → rebind/finetune, then a terminal search.
//!
//! With an output directory every stage is persisted before the next one
//! starts:
//!
//! ```text
//! <out>/stages/stage-<k>.json   StageReport
//! <out>/fronts/stage-<k>.csv    search archive rows
//! <out>/checkpoint.json         RunState after the last finished stage
//! <out>/summary.json            best architectures (final stage only)
//! <out>/tau.csv                 ranking consistency per stage
//! <out>/timing.json             wall-clock per stage (not reproducible)
//! ```

mod baseline;
mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use baseline::{random_search_baseline, RandomSearchSummary};
pub use config::{default_schedule, FinetuneStep, PipelineConfig, SearchKind};

use crate::analysis::{front_tau, spread_sample, write_tau_table, TauEstimate, TauRow};
use crate::error::{Error, Result};
use crate::evolution::{ces_search_with, spos_search_with, Individual, Problem, SearchResult};
use crate::latency::{synth_latency_table, LatencyTable};
use crate::oracle::{CacheStats, Oracle, OracleSnapshot};
use crate::par::Execution;
use crate::pruning::{
    estimate_distributions, prune_below_threshold, select_counting_set, structural_constraint_check,
    Diagnostics, LayerDistribution, PruneReport,
};
use crate::space::{render_scientific, Architecture, SearchSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    InitialTraining,
    SearchAndPrune,
    FinalSearch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub archive_size: usize,
    pub evaluations: CacheStats,
    /// Rank-1 members of the final population, sorted by latency.
    pub front: Vec<Individual>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestArchitecture {
    pub architecture: Architecture,
    pub accuracy: f64,
    pub latency_ms: f64,
    /// Ground-truth re-score (evaluation-phase analog); synthetic backends only.
    pub true_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    pub kind: StageKind,
    pub input_size: String,
    pub input_log10_size: f64,
    pub output_size: String,
    pub output_log10_size: f64,
    pub search: Option<SearchSummary>,
    pub distributions: Option<Vec<LayerDistribution>>,
    pub prune: Option<PruneReport>,
    pub diagnostics: Option<Diagnostics>,
    /// Ranking consistency of the searched supernet on a front sample.
    pub tau: Option<TauEstimate>,
    /// Mean |supernet - truth| over the same sample.
    pub mean_abs_error: Option<f64>,
    pub training: Option<FinetuneStep>,
    pub oracle_version: u64,
    pub oracle_epochs: u64,
    pub best: Vec<BestArchitecture>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub best: Vec<BestArchitecture>,
    pub reports: Vec<StageReport>,
    pub final_space: SearchSpace,
}

/// Everything needed to continue a run after the last finished stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunState {
    pub config_hash: String,
    pub completed_stages: usize,
    pub space: SearchSpace,
    pub oracle: OracleSnapshot,
    pub rng: ChaCha8Rng,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    out_dir: Option<PathBuf>,
    exec: Execution,
}

/// Runs the whole pipeline in memory.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    Pipeline::new(cfg.clone())?.run()
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline {
            cfg,
            out_dir: None,
            exec: Execution::default(),
        })
    }

    pub fn with_output(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    /// Initial space and latency table the run starts from.
    pub fn setup(&self) -> Result<(SearchSpace, LatencyTable)> {
        let space = SearchSpace::build(&self.cfg.space)?;
        let table = match &self.cfg.lut {
            Some(path) => LatencyTable::load(path)?,
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0x4c55_545f_5345_4544);
                synth_latency_table(&space, &self.cfg.cost_model, &mut rng)
            }
        };
        table.check_coverage(&space)?;
        Ok((space, table))
    }

    pub fn run(&self) -> Result<PipelineOutcome> {
        self.run_until(None)
            .map(|o| o.expect("an unbounded run always finishes"))
    }

    /// Runs from scratch, stopping after stage `stop_after` when given.
    /// Returns `None` if the run stopped early.
    pub fn run_until(&self, stop_after: Option<usize>) -> Result<Option<PipelineOutcome>> {
        let (space, table) = self.setup()?;
        let mut oracle = Oracle::new(self.cfg.oracle.clone(), &space)?;
        let rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);

        // Stage 1: initial supernet training.
        let started = Instant::now();
        let training = self.cfg.finetune_schedule[0];
        oracle.train(training.epochs)?;
        let report = StageReport {
            stage: 1,
            kind: StageKind::InitialTraining,
            input_size: space.size().to_string(),
            input_log10_size: space.log10_size(),
            output_size: space.size().to_string(),
            output_log10_size: space.log10_size(),
            search: None,
            distributions: None,
            prune: None,
            diagnostics: None,
            tau: None,
            mean_abs_error: None,
            training: Some(training),
            oracle_version: oracle.version(),
            oracle_epochs: oracle.epochs(),
            best: Vec::new(),
        };
        let state = RunState {
            config_hash: self.cfg.hash(),
            completed_stages: 1,
            space,
            oracle: oracle.snapshot(),
            rng,
        };
        self.persist(&report, None, &state, started)?;
        self.drive(state, oracle, &table, vec![report], stop_after)
    }

    /// Continues from `<out>/checkpoint.json`.
    pub fn resume(&self) -> Result<PipelineOutcome> {
        self.resume_until(None)
            .map(|o| o.expect("an unbounded run always finishes"))
    }

    pub fn resume_until(&self, stop_after: Option<usize>) -> Result<Option<PipelineOutcome>> {
        let dir = self
            .out_dir
            .as_ref()
            .ok_or_else(|| Error::Config("resume needs an output directory".into()))?;
        let path = dir.join("checkpoint.json");
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        let state: RunState = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if state.config_hash != self.cfg.hash() {
            return Err(Error::Checkpoint(format!(
                "config hash mismatch: checkpoint {} vs config {}",
                state.config_hash,
                self.cfg.hash()
            )));
        }
        if state.completed_stages < 1 || state.completed_stages > self.cfg.stages {
            return Err(Error::Checkpoint(format!(
                "checkpoint claims {} completed stages of {}",
                state.completed_stages, self.cfg.stages
            )));
        }
        let mut reports = Vec::with_capacity(self.cfg.stages);
        for k in 1..=state.completed_stages {
            let path = stage_path(dir, k);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
            let report: StageReport = serde_json::from_str(&text)
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
            reports.push(report);
        }
        let (initial, table) = self.setup()?;
        if !state.space.is_subspace_of(&initial) {
            return Err(Error::Checkpoint("checkpoint space is not a sub-space of the configured one".into()));
        }
        let oracle = Oracle::restore(self.cfg.oracle.clone(), &state.oracle)?;
        self.drive(state, oracle, &table, reports, stop_after)
    }

    fn search(&self, problem: &Problem<'_>, rng: &mut ChaCha8Rng) -> Result<SearchResult> {
        match self.cfg.search {
            SearchKind::Ces => ces_search_with(problem, &self.cfg.ces, rng),
            SearchKind::Spos => spos_search_with(problem, &self.cfg.ces, rng),
        }
    }

    fn drive(
        &self,
        mut state: RunState,
        mut oracle: Oracle,
        table: &LatencyTable,
        mut reports: Vec<StageReport>,
        stop_after: Option<usize>,
    ) -> Result<Option<PipelineOutcome>> {
        let m = self.cfg.stages;
        while state.completed_stages < m {
            if stop_after.is_some_and(|s| state.completed_stages >= s) {
                return Ok(None);
            }
            let k = state.completed_stages + 1;
            let started = Instant::now();
            let space = state.space.clone();
            let problem = Problem::new(&space, table, &self.cfg.band, &oracle).with_execution(self.exec);
            let result = self.search(&problem, &mut state.rng).map_err(|e| match e {
                Error::InfeasibleBand { .. } => {
                    log::error!("stage {k}: {e}");
                    e
                }
                other => other,
            })?;
            let front = sorted_front(&result);
            let (tau, mean_abs_error) = self.consistency(&oracle, &front)?;
            let search = SearchSummary {
                archive_size: result.archive.len(),
                evaluations: result.oracle_stats,
                front,
            };

            let report = if k < m {
                let counting = select_counting_set(&result, self.cfg.rank_cutoff, self.cfg.counting_source)?;
                let dists = estimate_distributions(&counting, &space)?;
                let (pruned, prune) =
                    prune_below_threshold(&space, &dists, self.cfg.threshold, self.cfg.rank_cutoff)?;
                let diagnostics = structural_constraint_check(&space, &pruned);
                let training = self.cfg.finetune_schedule[k - 1];
                oracle.rebind_space(&pruned)?;
                oracle.finetune(training.epochs)?;
                log::info!(
                    "stage {k}: pruned {} ops, size {} -> {}",
                    prune.removed.len(),
                    render_scientific(&space.size(), 3),
                    render_scientific(&pruned.size(), 3)
                );
                state.space = pruned;
                StageReport {
                    stage: k,
                    kind: StageKind::SearchAndPrune,
                    input_size: space.size().to_string(),
                    input_log10_size: space.log10_size(),
                    output_size: state.space.size().to_string(),
                    output_log10_size: state.space.log10_size(),
                    search: Some(search),
                    distributions: Some(dists),
                    prune: Some(prune),
                    diagnostics: Some(diagnostics),
                    tau,
                    mean_abs_error,
                    training: Some(training),
                    oracle_version: oracle.version(),
                    oracle_epochs: oracle.epochs(),
                    best: Vec::new(),
                }
            } else {
                let best = result
                    .top_by_accuracy(self.cfg.top_n)
                    .into_iter()
                    .map(|ind| {
                        let true_accuracy = if oracle.has_truth() {
                            Some(oracle.true_accuracy(&ind.architecture)?)
                        } else {
                            None
                        };
                        Ok(BestArchitecture {
                            architecture: ind.architecture,
                            accuracy: ind.accuracy,
                            latency_ms: ind.latency_ms,
                            true_accuracy,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                StageReport {
                    stage: k,
                    kind: StageKind::FinalSearch,
                    input_size: space.size().to_string(),
                    input_log10_size: space.log10_size(),
                    output_size: space.size().to_string(),
                    output_log10_size: space.log10_size(),
                    search: Some(search),
                    distributions: None,
                    prune: None,
                    diagnostics: None,
                    tau,
                    mean_abs_error,
                    training: None,
                    oracle_version: oracle.version(),
                    oracle_epochs: oracle.epochs(),
                    best,
                }
            };
            state.completed_stages = k;
            state.oracle = oracle.snapshot();
            self.persist(&report, Some(&result), &state, started)?;
            reports.push(report);
        }

        let last = reports.last().expect("at least one stage");
        let outcome = PipelineOutcome {
            best: last.best.clone(),
            reports,
            final_space: state.space.clone(),
        };
        if let Some(dir) = &self.out_dir {
            write_json(&dir.join("summary.json"), &outcome.best)?;
            let path = dir.join("tau.csv");
            let mut buf = Vec::new();
            write_tau_table(&tau_rows(&outcome.reports), &mut buf).map_err(|e| Error::io(&path, e))?;
            std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        }
        Ok(Some(outcome))
    }

    fn consistency(&self, oracle: &Oracle, front: &[Individual]) -> Result<(Option<TauEstimate>, Option<f64>)> {
        if !oracle.has_truth() || front.is_empty() {
            return Ok((None, None));
        }
        let tau = front_tau(front, self.cfg.tau_sample, |i| oracle.true_accuracy(&i.architecture))?;
        let (sample, _) = spread_sample(front, self.cfg.tau_sample);
        let mut err = 0.0;
        for ind in &sample {
            err += (ind.accuracy - oracle.true_accuracy(&ind.architecture)?).abs();
        }
        Ok((Some(tau), Some(err / sample.len() as f64)))
    }

    fn persist(
        &self,
        report: &StageReport,
        result: Option<&SearchResult>,
        state: &RunState,
        started: Instant,
    ) -> Result<()> {
        let Some(dir) = &self.out_dir else {
            return Ok(());
        };
        let k = report.stage;
        write_json(&stage_path(dir, k), report)?;
        if let Some(result) = result {
            let path = dir.join("fronts").join(format!("stage-{k}.csv"));
            create_parent(&path)?;
            let mut buf = Vec::new();
            result
                .write_csv(&mut buf)
                .map_err(|e| Error::io(&path, e))?;
            std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
        }
        // Checkpoint last: a stage counts as done only once its report exists.
        write_json(&dir.join("checkpoint.json"), state)?;

        let timing_path = dir.join("timing.json");
        let mut timing: BTreeMap<String, f64> = std::fs::read_to_string(&timing_path)
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .unwrap_or_default();
        timing.insert(format!("stage-{k}"), started.elapsed().as_secs_f64());
        write_json(&timing_path, &timing)
    }
}

/// One row per searched stage: τ on that stage's front, against the size
/// of the space that was searched.
pub fn tau_rows(reports: &[StageReport]) -> Vec<TauRow> {
    reports
        .iter()
        .filter_map(|r| {
            r.tau.as_ref().map(|t| TauRow {
                stage: r.stage,
                tau: t.tau,
                sample_size: t.sample_size,
                log10_size: r.input_log10_size,
            })
        })
        .collect()
}

fn sorted_front(result: &SearchResult) -> Vec<Individual> {
    let mut front: Vec<Individual> = result.population.iter().filter(|i| i.rank == 1).cloned().collect();
    front.sort_by(|a, b| {
        a.latency_ms
            .total_cmp(&b.latency_ms)
            .then_with(|| a.architecture.cmp(&b.architecture))
    });
    front
}

pub fn stage_path(dir: &Path, k: usize) -> PathBuf {
    dir.join("stages").join(format!("stage-{k}.json"))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    create_parent(path)?;
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    // Write-then-rename so an interrupted run never leaves half a file.
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests;
