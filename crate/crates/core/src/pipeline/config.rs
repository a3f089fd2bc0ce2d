use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::CesConfig;
use crate::latency::{CostModel, LatencyBand};
use crate::oracle::{BackendKind, OracleConfig};
use crate::pruning::CountingSource;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneStep {
    pub epochs: u64,
    /// Learning-rate analog; recorded, not used by the local backends.
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    #[default]
    Ces,
    Spos,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Total number of progressive stages `M`; `M = 2` is the unpruned
    /// baseline, `M = 3` prunes once.
    pub stages: usize,
    /// Probability threshold: candidates with `p <= threshold` are pruned.
    pub threshold: f64,
    /// Architectures with nondomination rank strictly below this are counted.
    pub rank_cutoff: usize,
    pub counting_source: CountingSource,
    pub band: LatencyBand,
    pub ces: CesConfig,
    pub search: SearchKind,
    pub oracle: OracleConfig,
    /// Built-in profile name or path to a JSON profile.
    pub space: String,
    /// LUT file; when absent a table is synthesized from `cost_model`.
    pub lut: Option<PathBuf>,
    pub cost_model: CostModel,
    /// One entry per stage before the last: initial training, then each
    /// finetune after pruning.
    pub finetune_schedule: Vec<FinetuneStep>,
    pub seed: u64,
    /// Number of best architectures returned by the final stage.
    pub top_n: usize,
    /// Front sample size for the ranking-consistency estimate.
    pub tau_sample: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stages: 4,
            threshold: 0.01,
            rank_cutoff: 10,
            counting_source: CountingSource::Combined,
            band: LatencyBand {
                lat_min: 60.0,
                lat_max: 70.0,
            },
            ces: CesConfig::default(),
            search: SearchKind::Ces,
            oracle: OracleConfig::supernet(0, 0.002),
            space: "basic".into(),
            lut: None,
            cost_model: CostModel::default(),
            finetune_schedule: default_schedule(4),
            seed: 0,
            top_n: 5,
            tau_sample: 30,
        }
    }
}

/// 120 epochs at lr 0.5 for the initial supernet, then 80 and 40 epochs at
/// 0.1 for the pruned ones. Longer runs repeat the last step.
pub fn default_schedule(stages: usize) -> Vec<FinetuneStep> {
    let steps = [
        FinetuneStep { epochs: 120, lr: 0.5 },
        FinetuneStep { epochs: 80, lr: 0.1 },
        FinetuneStep { epochs: 40, lr: 0.1 },
    ];
    (0..stages.saturating_sub(1))
        .map(|i| steps[i.min(steps.len() - 1)])
        .collect()
}

impl PipelineConfig {
    /// Preset for the large profile: band [50, 100] ms and a LUT whose
    /// uniform mean sits mid-band.
    pub fn large() -> Self {
        PipelineConfig {
            space: "large".into(),
            band: LatencyBand {
                lat_min: 50.0,
                lat_max: 100.0,
            },
            cost_model: CostModel {
                target_mean_ms: Some(75.0),
                ..CostModel::default()
            },
            ..Self::default()
        }
    }

    /// Same config with `stages` and a matching default schedule.
    pub fn with_stages(mut self, stages: usize) -> Self {
        self.stages = stages;
        self.finetune_schedule = default_schedule(stages);
        self
    }

    /// Seeds the run, the search and the oracle together.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.oracle.seed = seed;
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages < 2 {
            return Err(Error::Config(format!("stages = {} must be >= 2", self.stages)));
        }
        if self.finetune_schedule.len() != self.stages - 1 {
            return Err(Error::Config(format!(
                "finetune_schedule has {} entries, expected stages - 1 = {}",
                self.finetune_schedule.len(),
                self.stages - 1
            )));
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold = {} outside [0, 1)", self.threshold)));
        }
        if self.rank_cutoff < 2 {
            return Err(Error::Config("rank_cutoff must be >= 2 to count any front".into()));
        }
        if self.top_n < 1 {
            return Err(Error::Config("top_n must be >= 1".into()));
        }
        if self.oracle.backend == BackendKind::External && self.oracle.external.is_none() {
            return Err(Error::Config("external backend needs an `external` section".into()));
        }
        LatencyBand::new(self.band.lat_min, self.band.lat_max)?;
        self.ces.validate()
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        PipelineConfig::default().validate().unwrap();
        PipelineConfig::large().validate().unwrap();
        PipelineConfig::default().with_stages(2).validate().unwrap();
    }

    #[test]
    fn schedule_matches_stage_count() {
        assert_eq!(default_schedule(4).iter().map(|s| s.epochs).collect::<Vec<_>>(), vec![120, 80, 40]);
        assert_eq!(default_schedule(2).len(), 1);
        let mut cfg = PipelineConfig {
            stages: 3,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.stages = 1;
        cfg.finetune_schedule.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let b = PipelineConfig::default().with_seed(1);
        assert_eq!(a.hash(), PipelineConfig::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(r#"{"stages": 3, "finetune_schedule": [{"epochs": 10, "lr": 0.5}, {"epochs": 5, "lr": 0.1}]}"#).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.threshold, 0.01);
        let back: PipelineConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
