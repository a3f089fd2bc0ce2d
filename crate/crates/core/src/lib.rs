//! Progressive search-space design for one-shot NAS.
//!
//! A layer-wise operation space is searched with constrained NSGA-II
//! against an accuracy oracle and a latency lookup table. Operations that
//! rarely appear among low-rank architectures are pruned, the oracle is
//! finetuned on the smaller space, and the cycle repeats.

pub mod analysis;
pub mod error;
pub mod evolution;
pub mod hashing;
pub mod latency;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod pruning;
pub mod space;

pub use error::{Error, Result};
pub use evolution::{ces_search, spos_search, CesConfig, Individual, Problem, SearchResult};
pub use latency::{LatencyBand, LatencyTable};
pub use oracle::{Evaluation, Oracle, OracleConfig};
pub use par::Execution;
pub use pipeline::{run_pipeline, Pipeline, PipelineConfig, PipelineOutcome, StageReport};
pub use space::{Architecture, SearchSpace};
