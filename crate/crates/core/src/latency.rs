//! Lookup-table latency predictor and the feasibility band.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Architecture, SearchSpace};

/// Per-(layer, operation) latency entries in milliseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LutFile", into = "LutFile")]
pub struct LatencyTable {
    pub device: String,
    pub resolution: u32,
    /// Constant cost of the non-searchable stem and head.
    pub fixed_overhead_ms: f64,
    entries: Vec<BTreeMap<String, f64>>,
}

#[derive(Serialize, Deserialize)]
struct LutFile {
    device: String,
    resolution: u32,
    #[serde(default)]
    fixed_overhead_ms: f64,
    entries: Vec<LutEntry>,
}

#[derive(Serialize, Deserialize)]
struct LutEntry {
    layer: usize,
    op: String,
    ms: f64,
}

impl TryFrom<LutFile> for LatencyTable {
    type Error = Error;

    fn try_from(file: LutFile) -> Result<Self> {
        let mut table = LatencyTable::new(file.device, file.resolution);
        table.fixed_overhead_ms = file.fixed_overhead_ms;
        if !(file.fixed_overhead_ms >= 0.0 && file.fixed_overhead_ms.is_finite()) {
            return Err(Error::InvalidLatencyTable(format!(
                "fixed_overhead_ms = {}",
                file.fixed_overhead_ms
            )));
        }
        for e in file.entries {
            if table.get(e.layer, &e.op).is_some() {
                return Err(Error::InvalidLatencyTable(format!(
                    "duplicate entry for layer {} op `{}`",
                    e.layer, e.op
                )));
            }
            table.insert(e.layer, e.op, e.ms)?;
        }
        Ok(table)
    }
}

impl From<LatencyTable> for LutFile {
    fn from(t: LatencyTable) -> Self {
        LutFile {
            device: t.device,
            resolution: t.resolution,
            fixed_overhead_ms: t.fixed_overhead_ms,
            entries: t
                .entries
                .into_iter()
                .enumerate()
                .flat_map(|(layer, row)| {
                    row.into_iter().map(move |(op, ms)| LutEntry { layer, op, ms })
                })
                .collect(),
        }
    }
}

impl LatencyTable {
    pub fn new(device: impl Into<String>, resolution: u32) -> Self {
        LatencyTable {
            device: device.into(),
            resolution,
            fixed_overhead_ms: 0.0,
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, layer: usize, op: impl Into<String>, ms: f64) -> Result<()> {
        let op = op.into();
        if !(ms >= 0.0 && ms.is_finite()) {
            return Err(Error::InvalidLatencyTable(format!(
                "layer {layer} op `{op}` has latency {ms}"
            )));
        }
        if self.entries.len() <= layer {
            self.entries.resize_with(layer + 1, BTreeMap::new);
        }
        self.entries[layer].insert(op, ms);
        Ok(())
    }

    pub fn get(&self, layer: usize, op: &str) -> Option<f64> {
        self.entries.get(layer)?.get(op).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_pretty()).map_err(|e| Error::io(path, e))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Checks that every (layer, candidate) of `space` has an entry.
    pub fn check_coverage(&self, space: &SearchSpace) -> Result<()> {
        for layer in space.layers() {
            for op in &layer.candidates {
                if self.get(layer.index, op).is_none() {
                    return Err(Error::MissingLatency {
                        layer: layer.index,
                        op: op.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Sum of the per-layer entries plus the fixed overhead.
    pub fn predict(&self, arch: &Architecture) -> Result<f64> {
        let mut total = self.fixed_overhead_ms;
        for (layer, op) in arch.choices.iter().enumerate() {
            total += self.get(layer, op).ok_or_else(|| Error::MissingLatency {
                layer,
                op: op.clone(),
            })?;
        }
        Ok(total)
    }

    pub fn is_feasible(&self, band: &LatencyBand, arch: &Architecture) -> Result<bool> {
        Ok(band.contains(self.predict(arch)?))
    }

    /// Smallest and largest achievable latency in `space`, picking the
    /// cheapest / dearest candidate per layer.
    pub fn bounds(&self, space: &SearchSpace) -> Result<(f64, f64)> {
        let mut lo = self.fixed_overhead_ms;
        let mut hi = self.fixed_overhead_ms;
        for layer in space.layers() {
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for op in &layer.candidates {
                let ms = self.get(layer.index, op).ok_or_else(|| Error::MissingLatency {
                    layer: layer.index,
                    op: op.clone(),
                })?;
                min = min.min(ms);
                max = max.max(ms);
            }
            lo += min;
            hi += max;
        }
        Ok((lo, hi))
    }
}

/// Closed latency interval `[lat_min, lat_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBand")]
pub struct LatencyBand {
    pub lat_min: f64,
    pub lat_max: f64,
}

#[derive(Deserialize)]
struct RawBand {
    lat_min: f64,
    lat_max: f64,
}

impl TryFrom<RawBand> for LatencyBand {
    type Error = Error;

    fn try_from(raw: RawBand) -> Result<Self> {
        LatencyBand::new(raw.lat_min, raw.lat_max)
    }
}

impl LatencyBand {
    pub fn new(lat_min: f64, lat_max: f64) -> Result<Self> {
        // lat_max may be +inf for an unconstrained search.
        if !(lat_min >= 0.0 && lat_min.is_finite() && lat_min <= lat_max) {
            return Err(Error::InvalidBand { lat_min, lat_max });
        }
        Ok(LatencyBand { lat_min, lat_max })
    }

    pub fn unbounded() -> Self {
        LatencyBand {
            lat_min: 0.0,
            lat_max: f64::INFINITY,
        }
    }

    pub fn contains(&self, ms: f64) -> bool {
        self.lat_min <= ms && ms <= self.lat_max
    }
}

/// Desk-scale stand-in for on-device profiling: base cost grows with
/// kernel area and expansion, scaled per stage and jittered per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Cost of an op before the kernel/expansion term.
    pub base_ms: f64,
    /// Added per unit of `expansion * kernel^2 / 9`.
    pub per_unit_ms: f64,
    /// Multiplier per SBS stage, indexed by stage order; the last value is
    /// reused for any further stages.
    pub stage_scale: Vec<f64>,
    /// Per-layer multiplicative jitter half-width (0.1 means ±10%).
    pub layer_jitter: f64,
    /// When set, the table is rescaled so a uniformly sampled architecture
    /// has this expected latency.
    pub target_mean_ms: Option<f64>,
    #[serde(default = "default_device")]
    pub device: String,
    #[serde(default = "default_resolution")]
    pub resolution: u32,
}

fn default_device() -> String {
    "synthetic".into()
}

fn default_resolution() -> u32 {
    224
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            base_ms: 0.4,
            per_unit_ms: 0.25,
            stage_scale: vec![1.6, 1.35, 1.0, 0.85, 0.9, 1.0, 1.2],
            layer_jitter: 0.1,
            target_mean_ms: Some(65.0),
            device: default_device(),
            resolution: default_resolution(),
        }
    }
}

impl CostModel {
    /// Monotone in both kernel and expansion.
    pub fn base_cost(&self, kernel: u8, expansion: u8) -> f64 {
        let units = f64::from(expansion) * f64::from(kernel).powi(2) / 9.0;
        self.base_ms + self.per_unit_ms * units
    }
}

/// Builds a full-coverage table for `space`; identity entries are 0.
pub fn synth_latency_table<R: Rng + ?Sized>(
    space: &SearchSpace,
    model: &CostModel,
    rng: &mut R,
) -> LatencyTable {
    let mut stage_of = BTreeMap::new();
    for layer in space.layers() {
        let next = stage_of.len();
        stage_of.entry(layer.stage_name.clone()).or_insert(next);
    }
    let mut raw: Vec<Vec<(String, f64)>> = Vec::with_capacity(space.num_layers());
    for layer in space.layers() {
        let stage = stage_of[&layer.stage_name];
        let scale = model
            .stage_scale
            .get(stage)
            .or(model.stage_scale.last())
            .copied()
            .unwrap_or(1.0);
        let jitter = 1.0 + model.layer_jitter * (2.0 * rng.gen::<f64>() - 1.0);
        let row = layer
            .candidates
            .iter()
            .map(|id| {
                let op = &space.catalog()[id];
                let ms = match (op.kernel, op.expansion) {
                    (Some(k), Some(e)) => scale * jitter * model.base_cost(k, e),
                    _ => 0.0,
                };
                (id.clone(), ms)
            })
            .collect();
        raw.push(row);
    }

    let factor = match model.target_mean_ms {
        Some(target) => {
            let mean: f64 = raw
                .iter()
                .map(|row| row.iter().map(|(_, ms)| ms).sum::<f64>() / row.len() as f64)
                .sum();
            if mean > 0.0 {
                target / mean
            } else {
                1.0
            }
        }
        None => 1.0,
    };

    let mut table = LatencyTable::new(model.device.clone(), model.resolution);
    for (layer, row) in raw.into_iter().enumerate() {
        for (op, ms) in row {
            table
                .insert(layer, op, ms * factor)
                .expect("synthetic latencies are finite and non-negative");
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{LayerSpec, Operation};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn three_layer() -> (SearchSpace, LatencyTable) {
        let mut catalog = BTreeMap::new();
        catalog.insert("IBConv_K3_E3".to_string(), Operation::conv(3, 3));
        catalog.insert("Identity".to_string(), Operation::identity());
        let layers = (0..3)
            .map(|j| LayerSpec {
                index: j,
                stage_name: "s".into(),
                allows_identity: true,
                fixed_expansion_one: false,
                candidates: vec!["IBConv_K3_E3".into(), "Identity".into()],
            })
            .collect();
        let space = SearchSpace::new(layers, catalog).unwrap();
        let mut table = LatencyTable::new("toy", 32);
        for (j, ms) in [1.5, 2.0, 3.25].into_iter().enumerate() {
            table.insert(j, "IBConv_K3_E3", ms).unwrap();
            table.insert(j, "Identity", 0.0).unwrap();
        }
        (space, table)
    }

    #[test]
    fn hand_sum() {
        let (_, table) = three_layer();
        let arch = Architecture::new(["IBConv_K3_E3"; 3]);
        assert_eq!(table.predict(&arch).unwrap(), 6.75);
        let idle = Architecture::new(["Identity"; 3]);
        assert_eq!(table.predict(&idle).unwrap(), 0.0);
    }

    #[test]
    fn one_layer_change_moves_prediction_by_entry_delta() {
        let (_, table) = three_layer();
        let a = Architecture::new(["IBConv_K3_E3"; 3]);
        let b = Architecture::new(["IBConv_K3_E3", "Identity", "IBConv_K3_E3"]);
        assert_eq!(table.predict(&a).unwrap() - table.predict(&b).unwrap(), 2.0);
    }

    #[test]
    fn missing_entry_is_an_error() {
        let (_, table) = three_layer();
        let arch = Architecture::new(["IBConv_K3_E3", "IBConv_K5_E3", "Identity"]);
        match table.predict(&arch) {
            Err(Error::MissingLatency { layer, op }) => {
                assert_eq!(layer, 1);
                assert_eq!(op, "IBConv_K5_E3");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn closed_band() {
        let band = LatencyBand::new(60.0, 70.0).unwrap();
        assert!(band.contains(70.0));
        assert!(band.contains(60.0));
        assert!(band.contains(69.85));
        assert!(!band.contains(54.05));
        assert!(LatencyBand::new(5.0, 4.0).is_err());
        assert!(LatencyBand::new(-1.0, 4.0).is_err());
    }

    #[test]
    fn synthetic_table_is_monotone_and_complete() {
        let space = SearchSpace::build("large").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let table = synth_latency_table(&space, &CostModel::default(), &mut rng);
        table.check_coverage(&space).unwrap();
        for layer in space.layers().iter().skip(1) {
            let j = layer.index;
            let at = |id: &str| table.get(j, id).unwrap();
            assert!(at("IBConv_K5_E6") >= at("IBConv_K3_E6"));
            assert!(at("IBConv_K3_E6") >= at("IBConv_K3_E3"));
            assert!(at("IBConv_K7_E1") >= at("IBConv_K5_E1"));
            if layer.allows_identity {
                assert_eq!(at("Identity"), 0.0);
            }
        }
    }

    #[test]
    fn synthetic_table_counts_and_determinism() {
        let space = SearchSpace::build("basic").unwrap();
        let make = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            synth_latency_table(&space, &CostModel::default(), &mut rng)
        };
        let table = make(5);
        assert_eq!(table.len(), 144);
        assert_eq!(table, make(5));
        assert_ne!(table, make(6));
    }

    #[test]
    fn target_mean_is_hit() {
        let space = SearchSpace::build("basic").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let table = synth_latency_table(&space, &CostModel::default(), &mut rng);
        let mean: f64 = space
            .layers()
            .iter()
            .map(|l| {
                l.candidates
                    .iter()
                    .map(|op| table.get(l.index, op).unwrap())
                    .sum::<f64>()
                    / l.candidates.len() as f64
            })
            .sum();
        assert!((mean - 65.0).abs() < 1e-9);
    }

    #[test]
    fn lut_file_round_trip_and_overhead() {
        let (space, mut table) = three_layer();
        table.fixed_overhead_ms = 4.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lut.json");
        table.save(&path).unwrap();
        let back = LatencyTable::load(&path).unwrap();
        assert_eq!(back, table);
        let arch = Architecture::new(["IBConv_K3_E3"; 3]);
        assert_eq!(back.predict(&arch).unwrap(), 10.75);
        assert_eq!(back.bounds(&space).unwrap(), (4.0, 10.75));
    }

    #[test]
    fn negative_entries_rejected() {
        let text = r#"{"device":"d","resolution":1,"entries":[{"layer":0,"op":"x","ms":-1.0}]}"#;
        assert!(serde_json::from_str::<LatencyTable>(text).is_err());
    }
}
