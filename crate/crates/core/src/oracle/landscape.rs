use serde::{Deserialize, Serialize};

use crate::hashing::{key, normal, unit};
use crate::space::{Architecture, Operation};

/// Parameters of the synthetic ground-truth accuracy surface.
///
/// The raw score of an architecture is
///
/// ```text
/// sum_j [capacity_weight * imp_j * cap(op_j) + unary_weight * u_j(op_j)]
///   + sum_j pair_weight * v_j(op_j, op_{j+1})
/// ```
///
/// averaged over layers and squashed logistically into `[floor, floor + span]`.
/// `imp_j`, `u_j` and `v_j` are keyed hashes of the seed, so the surface does
/// not depend on which space it is queried through.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandscapeParams {
    pub capacity_weight: f64,
    pub unary_weight: f64,
    pub pair_weight: f64,
    pub center: f64,
    pub temperature: f64,
    pub floor: f64,
    pub span: f64,
}

impl Default for LandscapeParams {
    fn default() -> Self {
        LandscapeParams {
            capacity_weight: 1.0,
            unary_weight: 0.35,
            pair_weight: 0.15,
            center: 0.75,
            temperature: 0.25,
            floor: 0.3,
            span: 0.5,
        }
    }
}

/// Saturating capacity of an operation in `[0, 1]`; identity is 0.
pub fn capacity(op: &Operation) -> f64 {
    match (op.kernel, op.expansion) {
        (Some(k), Some(e)) => {
            let units = f64::from(e) * f64::from(k).powi(2) / 9.0;
            let top: f64 = 6.0 * 49.0 / 9.0;
            (1.0 + units).ln() / (1.0 + top).ln()
        }
        _ => 0.0,
    }
}

#[derive(Clone, Debug)]
pub struct Landscape {
    seed: u64,
    params: LandscapeParams,
}

impl Landscape {
    pub fn new(seed: u64, params: LandscapeParams) -> Self {
        Landscape { seed, params }
    }

    pub fn params(&self) -> &LandscapeParams {
        &self.params
    }

    pub fn importance(&self, layer: usize) -> f64 {
        0.5 + unit(key(self.seed, &["imp", &layer.to_string()]))
    }

    pub fn unary(&self, layer: usize, op: &Operation) -> f64 {
        self.params.capacity_weight * self.importance(layer) * capacity(op)
            + self.params.unary_weight * normal(key(self.seed, &["u", &layer.to_string(), &op.id]))
    }

    /// Interaction between layer `layer` and `layer + 1`.
    pub fn pair(&self, layer: usize, a: &str, b: &str) -> f64 {
        self.params.pair_weight * normal(key(self.seed, &["v", &layer.to_string(), a, b]))
    }

    /// Raw (pre-squash) score, averaged per layer.
    pub fn raw_score<'a>(
        &self,
        arch: &Architecture,
        lookup: impl Fn(&str) -> Option<&'a Operation>,
    ) -> Option<f64> {
        let mut total = 0.0;
        for (j, id) in arch.choices.iter().enumerate() {
            total += self.unary(j, lookup(id)?);
        }
        for (j, w) in arch.choices.windows(2).enumerate() {
            total += self.pair(j, &w[0], &w[1]);
        }
        Some(total / arch.len().max(1) as f64)
    }

    pub fn squash(&self, raw: f64) -> f64 {
        let p = &self.params;
        let z = (raw - p.center) / p.temperature;
        p.floor + p.span / (1.0 + (-z).exp())
    }

    pub fn accuracy<'a>(
        &self,
        arch: &Architecture,
        lookup: impl Fn(&str) -> Option<&'a Operation>,
    ) -> Option<f64> {
        self.raw_score(arch, lookup).map(|r| self.squash(r))
    }
}
