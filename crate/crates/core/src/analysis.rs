//! Ranking, front and distribution metrics plus plot-ready emitters.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{dominates, Individual, Objectives};
use crate::oracle::Evaluation;
use crate::pruning::LayerDistribution;

/// Pair counts behind tau-b, all exact integers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TauCounts {
    pub pairs: u64,
    /// Pairs tied in the first coordinate.
    pub ties_x: u64,
    /// Pairs tied in the second coordinate.
    pub ties_y: u64,
    /// Concordant minus discordant pairs.
    pub score: i64,
}

impl TauCounts {
    pub fn tau_b(&self) -> Result<f64> {
        let nx = self.pairs - self.ties_x;
        let ny = self.pairs - self.ties_y;
        if nx == 0 || ny == 0 {
            return Err(Error::TauUndefined("a coordinate has zero variance"));
        }
        Ok(self.score as f64 / ((nx as f64) * (ny as f64)).sqrt())
    }
}

/// Kendall's tau-b between `x` and `y` in O(n log n).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64> {
    kendall_counts(x, y)?.tau_b()
}

/// Knight's algorithm: sort by (x, y), count x-ties and joint ties, then
/// count discordant pairs as merge-sort inversions of y.
pub fn kendall_counts(x: &[f64], y: &[f64]) -> Result<TauCounts> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} scores", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::TauUndefined("need at least two pairs"));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::TauUndefined("NaN score"));
    }
    let pairs = (n as u64) * (n as u64 - 1) / 2;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));

    let tie_pairs = |run: u64| run * run.saturating_sub(1) / 2;
    let mut ties_x = 0u64;
    let mut ties_xy = 0u64;
    let mut run_x = 1u64;
    let mut run_xy = 1u64;
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                ties_xy += tie_pairs(run_xy);
                run_xy = 1;
            }
        } else {
            ties_x += tie_pairs(run_x);
            ties_xy += tie_pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    ties_x += tie_pairs(run_x);
    ties_xy += tie_pairs(run_xy);

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = ys.clone();
    let swaps = merge_count(&mut ys, &mut buf);

    let mut ties_y = 0u64;
    let mut run_y = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run_y += 1;
        } else {
            ties_y += tie_pairs(run_y);
            run_y = 1;
        }
    }
    ties_y += tie_pairs(run_y);

    let score = pairs as i64 - ties_x as i64 - ties_y as i64 + ties_xy as i64 - 2 * swaps as i64;
    Ok(TauCounts {
        pairs,
        ties_x,
        ties_y,
        score,
    })
}

/// Sorts `v` ascending and returns the number of strict inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Non-dominated members of `evals`, first occurrence of each architecture,
/// in input order.
pub fn pareto_front(evals: &[Evaluation]) -> Result<Vec<Evaluation>> {
    if evals.is_empty() {
        return Err(Error::Empty("no evaluations"));
    }
    let mut seen = HashSet::new();
    let unique: Vec<&Evaluation> = evals
        .iter()
        .filter(|e| seen.insert(&e.architecture))
        .collect();
    Ok(unique
        .iter()
        .filter(|e| !unique.iter().any(|o| dominates(o, e)))
        .map(|e| (*e).clone())
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpStat {
    pub layer: usize,
    pub op: String,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceSummary {
    pub per_op: Vec<OpStat>,
    /// Mean of the per-op variances.
    pub mean_variance: f64,
}

/// Per-(layer, op) sample mean and unbiased variance of the estimated
/// probabilities across repeated runs.
pub fn distribution_variance(runs: &[Vec<LayerDistribution>]) -> Result<VarianceSummary> {
    if runs.len() < 2 {
        return Err(Error::ShapeMismatch("need at least two runs".into()));
    }
    let shape = &runs[0];
    for (r, run) in runs.iter().enumerate().skip(1) {
        if run.len() != shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "run {r} has {} layers, run 0 has {}",
                run.len(),
                shape.len()
            )));
        }
        for (a, b) in shape.iter().zip(run) {
            if a.layer != b.layer || !a.probs.keys().eq(b.probs.keys()) {
                return Err(Error::ShapeMismatch(format!(
                    "run {r} layer {} has a different operation set",
                    b.layer
                )));
            }
        }
    }
    let k = runs.len() as f64;
    let mut per_op = Vec::new();
    for (j, layer) in shape.iter().enumerate() {
        for op in layer.probs.keys() {
            let values: Vec<f64> = runs.iter().map(|run| run[j].probs[op]).collect();
            // Deviations from the first run make identical runs exactly zero.
            let d: Vec<f64> = values.iter().map(|v| v - values[0]).collect();
            let shift = d.iter().sum::<f64>() / k;
            let mean = values[0] + shift;
            let variance = (d.iter().map(|x| x * x).sum::<f64>() - k * shift * shift) / (k - 1.0);
            let variance = variance.max(0.0);
            per_op.push(OpStat {
                layer: layer.layer,
                op: op.clone(),
                mean,
                variance,
            });
        }
    }
    let mean_variance = per_op.iter().map(|s| s.variance).sum::<f64>() / per_op.len().max(1) as f64;
    Ok(VarianceSummary {
        per_op,
        mean_variance,
    })
}

/// Up to `n` members of `front` at equal index spacing after sorting by
/// latency. The flag is set when the front had fewer than `n` members.
pub fn spread_sample<T: Objectives + Clone>(front: &[T], n: usize) -> (Vec<T>, bool) {
    let mut sorted: Vec<&T> = front.iter().collect();
    sorted.sort_by(|a, b| a.latency_ms().total_cmp(&b.latency_ms()));
    if sorted.len() <= n {
        return (sorted.into_iter().cloned().collect(), front.len() < n);
    }
    if n == 1 {
        return (vec![sorted[0].clone()], false);
    }
    let last = (sorted.len() - 1) as f64;
    let picks = (0..n).map(|i| {
        let pos = (i as f64 * last / (n - 1) as f64).round() as usize;
        sorted[pos].clone()
    });
    (picks.collect(), false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub tau: Option<f64>,
    pub sample_size: usize,
    /// The front was smaller than the requested sample.
    pub short_front: bool,
}

/// Kendall tau between predicted and ground-truth accuracy over a spread
/// sample of `front`.
pub fn front_tau(
    front: &[Individual],
    n: usize,
    truth: impl Fn(&Individual) -> Result<f64>,
) -> Result<TauEstimate> {
    let (sample, short_front) = spread_sample(front, n);
    let predicted: Vec<f64> = sample.iter().map(|i| i.accuracy).collect();
    let actual = sample.iter().map(truth).collect::<Result<Vec<f64>>>()?;
    let tau = match kendall_tau(&predicted, &actual) {
        Ok(t) => Some(t),
        Err(Error::TauUndefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(TauEstimate {
        tau,
        sample_size: sample.len(),
        short_front,
    })
}

/// Operation-by-layer probability matrix: one row per operation (catalog
/// order), one column per layer; operations absent from a layer are empty.
pub fn write_distribution_matrix(dists: &[LayerDistribution], mut out: impl Write) -> std::io::Result<()> {
    let ops: std::collections::BTreeSet<&String> = dists.iter().flat_map(|d| d.probs.keys()).collect();
    write!(out, "op")?;
    for d in dists {
        write!(out, ",layer{}", d.layer)?;
    }
    writeln!(out)?;
    for op in ops {
        write!(out, "{op}")?;
        for d in dists {
            match d.probs.get(op) {
                Some(p) => write!(out, ",{p:.6}")?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub stage: usize,
    pub tau: Option<f64>,
    pub sample_size: usize,
    pub log10_size: f64,
}

pub fn write_tau_table(rows: &[TauRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "stage,tau,sample_size,log10_size")?;
    for r in rows {
        let tau = r.tau.map(|t| format!("{t:.4}")).unwrap_or_default();
        writeln!(out, "{},{},{},{:.3}", r.stage, tau, r.sample_size, r.log10_size)?;
    }
    Ok(())
}

pub fn write_front_scatter<T: Objectives>(points: &[T], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "latency_ms,accuracy")?;
    for p in points {
        writeln!(out, "{:.4},{:.6}", p.latency_ms(), p.accuracy())?;
    }
    Ok(())
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One-sided exact sign-test p-value for `wins` successes out of `trials`
/// under p = 1/2.
pub fn sign_test_p(wins: usize, trials: usize) -> f64 {
    let mut tail = 0.0;
    let mut coef = 1.0f64;
    for k in 0..=trials {
        if k > 0 {
            coef = coef * (trials - k + 1) as f64 / k as f64;
        }
        if k >= wins {
            tail += coef;
        }
    }
    tail / 2f64.powi(trials as i32)
}

/// Collates per-layer probabilities into an ordered map keyed by
/// `(layer, op)`.
pub fn flatten(dists: &[LayerDistribution]) -> BTreeMap<(usize, String), f64> {
    dists
        .iter()
        .flat_map(|d| d.probs.iter().map(move |(op, p)| ((d.layer, op.clone()), *p)))
        .collect()
}
