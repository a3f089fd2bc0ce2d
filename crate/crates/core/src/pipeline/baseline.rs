use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::mean_std;
use crate::error::{Error, Result};
use crate::latency::{LatencyBand, LatencyTable};
use crate::oracle::{Evaluation, Oracle};
use crate::space::SearchSpace;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSearchSummary {
    pub samples: Vec<Evaluation>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Ground-truth mean; synthetic backends only.
    pub mean_true_accuracy: Option<f64>,
    pub mean_latency_ms: f64,
}

/// Draws `n` feasible architectures uniformly (with replacement) and
/// evaluates them.
pub fn random_search_baseline<R: Rng + ?Sized>(
    space: &SearchSpace,
    table: &LatencyTable,
    band: &LatencyBand,
    oracle: &Oracle,
    n: usize,
    rng: &mut R,
) -> Result<RandomSearchSummary> {
    if n < 1 {
        return Err(Error::Config("random search needs n >= 1".into()));
    }
    table.check_coverage(space)?;
    let mut samples = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while samples.len() < n {
        if attempts == 1000 * n {
            let (achievable_min, achievable_max) = table.bounds(space)?;
            return Err(Error::InfeasibleBand {
                lat_min: band.lat_min,
                lat_max: band.lat_max,
                achievable_min,
                achievable_max,
            });
        }
        attempts += 1;
        let arch = space.sample_uniform(rng);
        if table.is_feasible(band, &arch)? {
            samples.push(oracle.evaluate(table, &arch)?);
        }
    }
    let acc: Vec<f64> = samples.iter().map(|e| e.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&acc);
    let mean_true_accuracy = if oracle.has_truth() {
        let truth = samples
            .iter()
            .map(|e| oracle.true_accuracy(&e.architecture))
            .collect::<Result<Vec<f64>>>()?;
        Some(mean_std(&truth).0)
    } else {
        None
    };
    let lat: Vec<f64> = samples.iter().map(|e| e.latency_ms).collect();
    Ok(RandomSearchSummary {
        mean_accuracy,
        std_accuracy,
        mean_true_accuracy,
        mean_latency_ms: mean_std(&lat).0,
        samples,
    })
}
