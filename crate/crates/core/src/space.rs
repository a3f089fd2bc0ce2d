//! Layer-wise discrete operation search space.
//!
//! A [`SearchSpace`] is an ordered list of layers, each holding its own
//! candidate operation menu. The built-in `basic` and `large` profiles follow
//! the MobileNetV2-style supernet: seven SBS stages with 1+4+4+4+4+4+1 blocks,
//! the first block expansion-fixed, and identity forbidden in the first block
//! of every stage.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IDENTITY: &str = "Identity";

/// One candidate block choice for a layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<u8>,
    #[serde(default)]
    pub is_identity: bool,
}

impl Operation {
    pub fn conv(kernel: u8, expansion: u8) -> Self {
        Operation {
            id: format!("IBConv_K{kernel}_E{expansion}"),
            kernel: Some(kernel),
            expansion: Some(expansion),
            is_identity: false,
        }
    }

    pub fn identity() -> Self {
        Operation {
            id: IDENTITY.to_string(),
            kernel: None,
            expansion: None,
            is_identity: true,
        }
    }

    fn check(&self) -> Result<()> {
        let shaped = self.kernel.is_some() && self.expansion.is_some();
        let bare = self.kernel.is_none() && self.expansion.is_none();
        if self.is_identity && !bare {
            return Err(Error::MalformedProfile(format!(
                "identity operation `{}` must not carry kernel/expansion",
                self.id
            )));
        }
        if !self.is_identity && !shaped {
            return Err(Error::MalformedProfile(format!(
                "operation `{}` needs both kernel and expansion",
                self.id
            )));
        }
        if let Some(k) = self.kernel {
            if ![3, 5, 7].contains(&k) {
                return Err(Error::MalformedProfile(format!(
                    "operation `{}` has kernel {k}, expected 3, 5 or 7",
                    self.id
                )));
            }
        }
        if let Some(e) = self.expansion {
            if !(1..=6).contains(&e) {
                return Err(Error::MalformedProfile(format!(
                    "operation `{}` has expansion {e}, expected 1..=6",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Ordering key within a layer: ascending kernel, then expansion, identity last.
    fn order_key(&self) -> (bool, u8, u8, &str) {
        (
            self.is_identity,
            self.kernel.unwrap_or(0),
            self.expansion.unwrap_or(0),
            &self.id,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub index: usize,
    #[serde(rename = "stage")]
    pub stage_name: String,
    pub allows_identity: bool,
    pub fixed_expansion_one: bool,
    pub candidates: Vec<String>,
}

/// One concrete operation choice per layer.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Architecture {
    pub choices: Vec<String>,
}

impl Architecture {
    pub fn new<S: Into<String>>(choices: impl IntoIterator<Item = S>) -> Self {
        Architecture {
            choices: choices.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.choices.join("|"))
    }
}

/// On-disk profile layout. Layer indices are implied by position.
#[derive(Serialize, Deserialize)]
struct ProfileFile {
    layers: Vec<ProfileLayer>,
    catalog: BTreeMap<String, CatalogEntry>,
}

#[derive(Serialize, Deserialize)]
struct ProfileLayer {
    stage: String,
    allows_identity: bool,
    fixed_expansion_one: bool,
    candidates: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CatalogEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expansion: Option<u8>,
    #[serde(default)]
    is_identity: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ProfileFile", into = "ProfileFile")]
pub struct SearchSpace {
    layers: Vec<LayerSpec>,
    catalog: BTreeMap<String, Operation>,
}

impl TryFrom<ProfileFile> for SearchSpace {
    type Error = Error;

    fn try_from(file: ProfileFile) -> Result<Self> {
        let catalog = file
            .catalog
            .into_iter()
            .map(|(id, e)| {
                let op = Operation {
                    id: id.clone(),
                    kernel: e.kernel,
                    expansion: e.expansion,
                    is_identity: e.is_identity,
                };
                (id, op)
            })
            .collect();
        let layers = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(index, l)| LayerSpec {
                index,
                stage_name: l.stage,
                allows_identity: l.allows_identity,
                fixed_expansion_one: l.fixed_expansion_one,
                candidates: l.candidates,
            })
            .collect();
        SearchSpace::new(layers, catalog)
    }
}

impl From<SearchSpace> for ProfileFile {
    fn from(space: SearchSpace) -> Self {
        ProfileFile {
            layers: space
                .layers
                .into_iter()
                .map(|l| ProfileLayer {
                    stage: l.stage_name,
                    allows_identity: l.allows_identity,
                    fixed_expansion_one: l.fixed_expansion_one,
                    candidates: l.candidates,
                })
                .collect(),
            catalog: space
                .catalog
                .into_values()
                .map(|op| {
                    (
                        op.id,
                        CatalogEntry {
                            kernel: op.kernel,
                            expansion: op.expansion,
                            is_identity: op.is_identity,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// Block counts of the searchable SBS stages.
const STAGE_REPEATS: [usize; 7] = [1, 4, 4, 4, 4, 4, 1];

impl SearchSpace {
    /// Validates every layer invariant and puts each candidate list into
    /// canonical order.
    pub fn new(mut layers: Vec<LayerSpec>, catalog: BTreeMap<String, Operation>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::MalformedProfile("profile has no layers".into()));
        }
        for (id, op) in &catalog {
            if *id != op.id {
                return Err(Error::MalformedProfile(format!(
                    "catalog key `{id}` does not match operation id `{}`",
                    op.id
                )));
            }
            op.check()?;
        }
        for (index, layer) in layers.iter_mut().enumerate() {
            layer.index = index;
            if layer.candidates.is_empty() {
                return Err(Error::EmptyLayer { layer: index });
            }
            let mut seen = std::collections::BTreeSet::new();
            for id in &layer.candidates {
                let op = catalog.get(id).ok_or_else(|| {
                    Error::MalformedProfile(format!(
                        "layer {index} references unknown operation `{id}`"
                    ))
                })?;
                if !seen.insert(id.as_str()) {
                    return Err(Error::MalformedProfile(format!(
                        "layer {index} lists `{id}` twice"
                    )));
                }
                if op.is_identity && !layer.allows_identity {
                    return Err(Error::MalformedProfile(format!(
                        "layer {index} forbids identity but lists `{id}`"
                    )));
                }
                if layer.fixed_expansion_one && !op.is_identity && op.expansion != Some(1) {
                    return Err(Error::MalformedProfile(format!(
                        "layer {index} is expansion-fixed but lists `{id}`"
                    )));
                }
            }
            layer
                .candidates
                .sort_by(|a, b| catalog[a].order_key().cmp(&catalog[b].order_key()));
        }
        Ok(SearchSpace { layers, catalog })
    }

    /// Builds one of the embedded profiles (`basic`, `large`) or loads a
    /// JSON profile when `profile` names an existing file.
    pub fn build(profile: &str) -> Result<Self> {
        match profile {
            "basic" => Ok(Self::builtin(&[3, 6], true)),
            "large" => Ok(Self::builtin(&[1, 2, 3, 4, 5, 6], true)),
            other if Path::new(other).is_file() => Self::from_file(other),
            other => Err(Error::UnknownProfile(other.to_string())),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedProfile(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("space serializes")
    }

    fn builtin(expansions: &[u8], with_identity: bool) -> Self {
        let kernels = [3u8, 5, 7];
        let mut catalog = BTreeMap::new();
        let mut menu = Vec::new();
        for &k in &kernels {
            for &e in expansions {
                let op = Operation::conv(k, e);
                menu.push(op.id.clone());
                catalog.insert(op.id.clone(), op);
            }
        }
        let mut fixed = Vec::new();
        for &k in &kernels {
            let op = Operation::conv(k, 1);
            fixed.push(op.id.clone());
            catalog.insert(op.id.clone(), op);
        }
        if with_identity {
            catalog.insert(IDENTITY.to_string(), Operation::identity());
        }

        let mut layers = Vec::new();
        for (stage, &repeats) in STAGE_REPEATS.iter().enumerate() {
            for block in 0..repeats {
                let fixed_expansion_one = stage == 0;
                let allows_identity = with_identity && block > 0;
                let mut candidates = if fixed_expansion_one {
                    fixed.clone()
                } else {
                    menu.clone()
                };
                if allows_identity {
                    candidates.push(IDENTITY.to_string());
                }
                layers.push(LayerSpec {
                    index: layers.len(),
                    stage_name: format!("SBS{}", stage + 1),
                    allows_identity,
                    fixed_expansion_one,
                    candidates,
                });
            }
        }
        SearchSpace::new(layers, catalog).expect("built-in profile is valid")
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> Option<&LayerSpec> {
        self.layers.get(index)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn catalog(&self) -> &BTreeMap<String, Operation> {
        &self.catalog
    }

    pub fn operation(&self, id: &str) -> Option<&Operation> {
        self.catalog.get(id)
    }

    /// Exact number of architectures.
    pub fn size(&self) -> BigUint {
        self.layers
            .iter()
            .fold(BigUint::one(), |acc, l| acc * BigUint::from(l.candidates.len()))
    }

    pub fn log10_size(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| (l.candidates.len() as f64).log10())
            .sum()
    }

    pub fn total_candidates(&self) -> usize {
        self.layers.iter().map(|l| l.candidates.len()).sum()
    }

    pub fn validate(&self, arch: &Architecture) -> Result<bool> {
        if arch.len() != self.layers.len() {
            return Err(Error::LengthMismatch {
                expected: self.layers.len(),
                got: arch.len(),
            });
        }
        Ok(self
            .layers
            .iter()
            .zip(&arch.choices)
            .all(|(layer, choice)| layer.candidates.contains(choice)))
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Architecture {
        Architecture {
            choices: self
                .layers
                .iter()
                .map(|l| l.candidates[rng.gen_range(0..l.candidates.len())].clone())
                .collect(),
        }
    }

    /// Returns a copy of the space with `op_id` removed from `layer`.
    pub fn prune_operation(&self, layer: usize, op_id: &str) -> Result<SearchSpace> {
        let spec = self.layers.get(layer).ok_or(Error::LayerOutOfRange {
            layer,
            layers: self.layers.len(),
        })?;
        let pos = spec
            .candidates
            .iter()
            .position(|c| c == op_id)
            .ok_or_else(|| Error::OpAbsent {
                layer,
                op: op_id.to_string(),
            })?;
        if spec.candidates.len() == 1 {
            return Err(Error::PruningFloor {
                layer,
                op: op_id.to_string(),
            });
        }
        let mut next = self.clone();
        next.layers[layer].candidates.remove(pos);
        Ok(next)
    }

    /// True when every layer's candidates are a subset of `other`'s.
    pub fn is_subspace_of(&self, other: &SearchSpace) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(mine, theirs)| {
                mine.candidates
                    .iter()
                    .all(|c| theirs.candidates.contains(c))
            })
    }

    pub fn candidate_index(&self, layer: usize, op_id: &str) -> Option<usize> {
        self.layers
            .get(layer)?
            .candidates
            .iter()
            .position(|c| c == op_id)
    }

    /// Enumerates every architecture in lexicographic candidate order.
    /// Only meant for toy spaces.
    pub fn enumerate(&self) -> impl Iterator<Item = Architecture> + '_ {
        let total = self.size().to_u64().unwrap_or(u64::MAX);
        (0..total).map(move |mut code| {
            let mut choices = vec![String::new(); self.layers.len()];
            for (j, layer) in self.layers.iter().enumerate().rev() {
                let n = layer.candidates.len() as u64;
                choices[j] = layer.candidates[(code % n) as usize].clone();
                code /= n;
            }
            Architecture { choices }
        })
    }
}

/// Renders a big integer as `d.dd×10^e` with `sig` significant figures,
/// rounding half away from zero.
pub fn render_scientific(value: &BigUint, sig: usize) -> String {
    let sig = sig.max(1);
    let digits = value.to_string();
    if digits.len() <= sig {
        let exp = digits.len() - 1;
        return format_mantissa(&digits, exp);
    }
    let head: BigUint = digits[..sig].parse().expect("decimal digits");
    let round_up = digits.as_bytes()[sig] >= b'5';
    let mut head = if round_up { head + 1u32 } else { head };
    let mut exp = digits.len() - 1;
    // 9.99 -> 10.0 carries into the exponent.
    if head.to_string().len() > sig {
        head /= 10u32;
        exp += 1;
    }
    format_mantissa(&head.to_string(), exp)
}

fn format_mantissa(digits: &str, exp: usize) -> String {
    let (lead, rest) = digits.split_at(1);
    if rest.is_empty() {
        format!("{lead}×10^{exp}")
    } else {
        format!("{lead}.{rest}×10^{exp}")
    }
}
