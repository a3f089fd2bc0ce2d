//! Accuracy objective with three interchangeable backends.
//!
//! * `synthetic`: deterministic ground truth from a hashed landscape.
//! * `supernet`: ground truth plus weight-coupling noise whose per-layer
//!   scale grows with the number of candidates in that layer and decays with
//!   accumulated training epochs.
//! * `external`: an out-of-process evaluator speaking the wire protocol in
//!   [`external`].
//!
//! Every accuracy query goes through a per-version cache. The version
//! advances on each [`Oracle::finetune`] and [`Oracle::rebind_space`], which
//! also drops the cache.

pub mod external;
pub mod landscape;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use external::{ExternalClient, ExternalConfig, Transport};
pub use landscape::{capacity, Landscape, LandscapeParams};

use crate::error::{Error, Result};
use crate::hashing::{key, normal};
use crate::latency::LatencyTable;
use crate::par::Execution;
use crate::space::{Architecture, SearchSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    SyntheticTruth,
    SupernetSim,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Synthetic,
    Supernet,
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub backend: BackendKind,
    pub seed: u64,
    /// Coupling-noise scale per extra candidate in a layer.
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    /// Epoch constant of the noise decay `1 / (1 + epochs / tau_decay)`.
    #[serde(default = "default_tau_decay")]
    pub tau_decay: f64,
    #[serde(default)]
    pub landscape: LandscapeParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalConfig>,
}

fn default_sigma0() -> f64 {
    0.002
}

fn default_tau_decay() -> f64 {
    80.0
}

impl OracleConfig {
    pub fn synthetic(seed: u64) -> Self {
        OracleConfig {
            backend: BackendKind::Synthetic,
            seed,
            sigma0: 0.0,
            tau_decay: default_tau_decay(),
            landscape: LandscapeParams::default(),
            external: None,
        }
    }

    pub fn supernet(seed: u64, sigma0: f64) -> Self {
        OracleConfig {
            backend: BackendKind::Supernet,
            sigma0,
            ..Self::synthetic(seed)
        }
    }
}

/// One scored architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub architecture: Architecture,
    pub accuracy: f64,
    pub latency_ms: f64,
    pub source: Source,
}

/// Serializable part of the oracle state, enough to resume a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSnapshot {
    pub version: u64,
    pub epochs: u64,
    pub space: SearchSpace,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub queries: u64,
    pub hits: u64,
    pub misses: u64,
}

impl CacheStats {
    pub fn since(&self, earlier: &CacheStats) -> CacheStats {
        CacheStats {
            queries: self.queries - earlier.queries,
            hits: self.hits - earlier.hits,
            misses: self.misses - earlier.misses,
        }
    }
}

pub struct Oracle {
    cfg: OracleConfig,
    landscape: Landscape,
    client: Option<ExternalClient>,
    space: SearchSpace,
    sigma: Vec<f64>,
    epochs: u64,
    version: u64,
    cache: RwLock<HashMap<Architecture, f64>>,
    queries: AtomicU64,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl std::fmt::Debug for Oracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Oracle")
            .field("backend", &self.cfg.backend)
            .field("seed", &self.cfg.seed)
            .field("version", &self.version)
            .field("epochs", &self.epochs)
            .finish_non_exhaustive()
    }
}

impl Oracle {
    /// Binds a fresh (untrained) oracle to `space`.
    pub fn new(cfg: OracleConfig, space: &SearchSpace) -> Result<Self> {
        if !(cfg.sigma0 >= 0.0 && cfg.sigma0.is_finite()) {
            return Err(Error::Config(format!("sigma0 = {} must be >= 0", cfg.sigma0)));
        }
        if cfg.tau_decay.is_nan() || cfg.tau_decay <= 0.0 {
            return Err(Error::Config(format!("tau_decay = {} must be > 0", cfg.tau_decay)));
        }
        let client = match cfg.backend {
            BackendKind::External => {
                let ext = cfg.external.as_ref().ok_or_else(|| {
                    Error::Config("external backend needs an `external` section".into())
                })?;
                let client = ExternalClient::connect(ext)?;
                client.directive(
                    "hello",
                    json!({ "seed": cfg.seed, "profile": space }),
                )?;
                Some(client)
            }
            _ => None,
        };
        let landscape = Landscape::new(cfg.seed, cfg.landscape.clone());
        let mut oracle = Oracle {
            cfg,
            landscape,
            client,
            space: space.clone(),
            sigma: Vec::new(),
            epochs: 0,
            version: 0,
            cache: RwLock::new(HashMap::new()),
            queries: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        };
        oracle.recompute_sigma();
        Ok(oracle)
    }

    /// Rebuilds an oracle from a checkpoint snapshot.
    pub fn restore(cfg: OracleConfig, snapshot: &OracleSnapshot) -> Result<Self> {
        let mut oracle = Oracle::new(cfg, &snapshot.space)?;
        oracle.version = snapshot.version;
        oracle.epochs = snapshot.epochs;
        oracle.recompute_sigma();
        if let Some(client) = &oracle.client {
            client.directive(
                "restore",
                json!({ "version": snapshot.version, "epochs": snapshot.epochs }),
            )?;
        }
        Ok(oracle)
    }

    pub fn snapshot(&self) -> OracleSnapshot {
        OracleSnapshot {
            version: self.version,
            epochs: self.epochs,
            space: self.space.clone(),
        }
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    pub fn backend(&self) -> BackendKind {
        self.cfg.backend
    }

    pub fn source(&self) -> Source {
        match self.cfg.backend {
            BackendKind::Synthetic => Source::SyntheticTruth,
            BackendKind::Supernet => Source::SupernetSim,
            BackendKind::External => Source::External,
        }
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn epochs(&self) -> u64 {
        self.epochs
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    /// Whether ground truth is available for re-scoring.
    pub fn has_truth(&self) -> bool {
        self.cfg.backend != BackendKind::External
    }

    pub fn decay(&self) -> f64 {
        1.0 / (1.0 + self.epochs as f64 / self.cfg.tau_decay)
    }

    fn recompute_sigma(&mut self) {
        let decay = self.decay();
        self.sigma = self
            .space
            .layers()
            .iter()
            .map(|l| self.cfg.sigma0 * (l.candidates.len() - 1) as f64 * decay)
            .collect();
    }

    fn advance(&mut self) {
        self.version += 1;
        self.cache.get_mut().expect("cache lock").clear();
        self.recompute_sigma();
    }

    /// Initial supernet training; same local effect as [`Oracle::finetune`].
    pub fn train(&mut self, epochs: u64) -> Result<()> {
        if let Some(client) = &self.client {
            client.directive("train", json!({ "epochs": epochs }))?;
        }
        self.epochs += epochs;
        self.advance();
        Ok(())
    }

    /// Accumulates `epochs` of (fine-)training and starts a new state version.
    pub fn finetune(&mut self, epochs: u64) -> Result<()> {
        if let Some(client) = &self.client {
            client.directive("finetune", json!({ "epochs": epochs }))?;
        }
        self.epochs += epochs;
        self.advance();
        Ok(())
    }

    /// Binds a pruned sub-space. The ground-truth landscape is inherited
    /// unchanged; only the coupling noise scale follows the new layer sizes.
    pub fn rebind_space(&mut self, pruned: &SearchSpace) -> Result<()> {
        if pruned.num_layers() != self.space.num_layers() {
            return Err(Error::LengthMismatch {
                expected: self.space.num_layers(),
                got: pruned.num_layers(),
            });
        }
        for (mine, theirs) in self.space.layers().iter().zip(pruned.layers()) {
            if let Some(extra) = theirs.candidates.iter().find(|c| !mine.candidates.contains(c)) {
                return Err(Error::NotASubspace(format!("{extra} (layer {})", theirs.index)));
            }
        }
        if let Some(client) = &self.client {
            client.directive("rebind", json!({ "profile": pruned }))?;
        }
        self.space = pruned.clone();
        self.advance();
        Ok(())
    }

    fn truth(&self, arch: &Architecture) -> Result<f64> {
        self.landscape
            .accuracy(arch, |id| self.space.operation(id))
            .ok_or_else(|| Error::OpAbsent {
                layer: arch
                    .choices
                    .iter()
                    .position(|c| self.space.operation(c).is_none())
                    .unwrap_or(0),
                op: arch
                    .choices
                    .iter()
                    .find(|c| self.space.operation(c).is_none())
                    .cloned()
                    .unwrap_or_default(),
            })
    }

    /// Stand-alone (ground-truth) accuracy. Not cached, never counted.
    pub fn true_accuracy(&self, arch: &Architecture) -> Result<f64> {
        if !self.has_truth() {
            return Err(Error::WrongBackend("true accuracy needs a synthetic backend"));
        }
        self.check_len(arch)?;
        self.truth(arch)
    }

    /// Coupling noise of `arch` at the current state version.
    pub fn coupling_noise(&self, arch: &Architecture) -> f64 {
        let arch_key = arch.to_string();
        let version = self.version.to_string();
        self.sigma
            .iter()
            .enumerate()
            .filter(|(_, s)| **s > 0.0)
            .map(|(j, s)| s * normal(key(self.cfg.seed, &["eps", &version, &j.to_string(), &arch_key])))
            .sum()
    }

    fn supernet_uncached(&self, arch: &Architecture) -> Result<f64> {
        Ok((self.truth(arch)? + self.coupling_noise(arch)).clamp(0.0, 1.0))
    }

    /// Supernet-predicted accuracy (uncached; use [`Oracle::accuracy`] in
    /// search loops).
    pub fn supernet_accuracy(&self, arch: &Architecture) -> Result<f64> {
        if self.cfg.backend != BackendKind::Supernet {
            return Err(Error::WrongBackend("supernet accuracy needs the supernet backend"));
        }
        self.check_len(arch)?;
        self.supernet_uncached(arch)
    }

    fn check_len(&self, arch: &Architecture) -> Result<()> {
        if arch.len() != self.space.num_layers() {
            return Err(Error::LengthMismatch {
                expected: self.space.num_layers(),
                got: arch.len(),
            });
        }
        Ok(())
    }

    /// Accuracy from the active backend, through the cache.
    pub fn accuracy(&self, arch: &Architecture) -> Result<f64> {
        if let Some(&acc) = self.cache.read().expect("cache lock").get(arch) {
            self.queries.fetch_add(1, Ordering::Relaxed);
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(acc);
        }
        self.check_len(arch)?;
        let acc = match self.cfg.backend {
            BackendKind::Synthetic => self.truth(arch)?,
            BackendKind::Supernet => self.supernet_uncached(arch)?,
            BackendKind::External => self.client.as_ref().expect("external client").accuracy(arch)?,
        };
        let mut cache = self.cache.write().expect("cache lock");
        self.queries.fetch_add(1, Ordering::Relaxed);
        // A concurrent caller may have inserted first; its value is identical
        // for the local backends, and the first one wins for external ones.
        match cache.get(arch) {
            Some(&existing) => {
                self.hits.fetch_add(1, Ordering::Relaxed);
                Ok(existing)
            }
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                cache.insert(arch.clone(), acc);
                Ok(acc)
            }
        }
    }

    pub fn evaluate(&self, table: &LatencyTable, arch: &Architecture) -> Result<Evaluation> {
        let latency_ms = table.predict(arch)?;
        let accuracy = self.accuracy(arch)?;
        Ok(Evaluation {
            architecture: arch.clone(),
            accuracy,
            latency_ms,
            source: self.source(),
        })
    }

    /// Evaluates a batch; output order follows input order whatever the
    /// execution mode.
    pub fn evaluate_batch(
        &self,
        table: &LatencyTable,
        archs: &[Architecture],
        exec: Execution,
    ) -> Result<Vec<Evaluation>> {
        exec.try_map(archs, |a| self.evaluate(table, a))
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            queries: self.queries.load(Ordering::Relaxed),
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }
}
