//! Discrete factor spaces, configurations and enumeration.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Maximum deviation of a quaternion embedding's norm from 1.
pub const QUATERNION_NORM_TOLERANCE: f64 = 1e-9;

/// Optional geometric metadata attached to a factor value.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedding {
    Vector(Vec<f64>),
    /// Unit quaternion stored as `[w, x, y, z]`.
    Quaternion([f64; 4]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorValue {
    pub id: String,
    pub label: Option<String>,
    pub embedding: Option<Embedding>,
}

impl FactorValue {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: None,
            embedding: None,
        }
    }

    pub fn with_vector(mut self, coords: Vec<f64>) -> Self {
        self.embedding = Some(Embedding::Vector(coords));
        self
    }

    pub fn with_quaternion(mut self, q: [f64; 4]) -> Self {
        self.embedding = Some(Embedding::Quaternion(q));
        self
    }
}

/// One axis of variation.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorDef {
    pub name: String,
    pub values: Vec<FactorValue>,
    pub base_index: usize,
}

impl FactorDef {
    pub fn new(name: impl Into<String>, values: Vec<FactorValue>, base_index: usize) -> Self {
        Self {
            name: name.into(),
            values,
            base_index,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.values.iter().position(|v| v.id == id)
    }

    pub fn base(&self) -> &FactorValue {
        &self.values[self.base_index]
    }
}

/// One value index per factor, in space order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FactorConfig(Vec<usize>);

impl FactorConfig {
    pub fn new(assignment: Vec<usize>) -> Self {
        Self(assignment)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn get(&self, factor: usize) -> usize {
        self.0[factor]
    }

    pub fn set(&mut self, factor: usize, value: usize) {
        self.0[factor] = value;
    }

    /// Number of factor positions where the two assignments differ.
    pub fn hamming(&self, other: &FactorConfig) -> Result<usize> {
        hamming_distance(self, other)
    }
}

impl fmt::Display for FactorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

pub fn hamming_distance(a: &FactorConfig, b: &FactorConfig) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::ConfigLength {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count())
}

/// Identifies the space a plan was generated from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceRef {
    pub name: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpace {
    pub name: String,
    factors: Vec<FactorDef>,
}

impl FactorSpace {
    /// Builds a space, checking every structural invariant.
    pub fn new(name: impl Into<String>, factors: Vec<FactorDef>) -> Result<Self> {
        let space = Self {
            name: name.into(),
            factors,
        };
        space.validate()?;
        Ok(space)
    }

    /// `n` factors named `f0..`, each with `k` values `v0..`, base value `v0`.
    pub fn uniform(n: usize, k: usize) -> Result<Self> {
        Self::with_counts(&vec![k; n])
    }

    pub fn with_counts(counts: &[usize]) -> Result<Self> {
        let factors = counts
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let values = (0..k).map(|j| FactorValue::new(format!("v{j}"))).collect();
                FactorDef::new(format!("f{i}"), values, 0)
            })
            .collect();
        let label = counts
            .iter()
            .map(|k| k.to_string())
            .collect::<Vec<_>>()
            .join("x");
        Self::new(format!("grid-{label}"), factors)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |path: String, reason: &str| Error::InvalidSpace {
            path,
            reason: reason.to_string(),
        };
        if self.factors.is_empty() {
            return Err(invalid("factors".into(), "factor list is empty"));
        }
        let mut names = HashSet::new();
        for (i, factor) in self.factors.iter().enumerate() {
            let path = format!("factors[{i}]({})", factor.name);
            if !names.insert(factor.name.as_str()) {
                return Err(invalid(path, "duplicate factor name"));
            }
            if factor.values.is_empty() {
                return Err(invalid(path, "factor has no values"));
            }
            if factor.base_index >= factor.values.len() {
                return Err(invalid(path, "base value index out of range"));
            }
            let mut ids = HashSet::new();
            for (j, value) in factor.values.iter().enumerate() {
                let vpath = format!("{path}.values[{j}]({})", value.id);
                if !ids.insert(value.id.as_str()) {
                    return Err(invalid(vpath, "duplicate value id"));
                }
                match &value.embedding {
                    Some(Embedding::Quaternion(q)) => {
                        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
                        if !((norm - 1.0).abs() <= QUATERNION_NORM_TOLERANCE) {
                            return Err(Error::NonUnitQuaternion {
                                value: value.id.clone(),
                                norm,
                            });
                        }
                    }
                    Some(Embedding::Vector(v)) if v.iter().any(|c| !c.is_finite()) => {
                        return Err(invalid(vpath, "embedding has non-finite component"));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn factors(&self) -> &[FactorDef] {
        &self.factors
    }

    pub fn factor(&self, index: usize) -> &FactorDef {
        &self.factors[index]
    }

    /// Number of factors.
    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn value_counts(&self) -> Vec<usize> {
        self.factors.iter().map(FactorDef::len).collect()
    }

    /// Shared value count when every factor has the same number of values.
    pub fn uniform_count(&self) -> Option<usize> {
        let k = self.factors[0].len();
        self.factors.iter().all(|f| f.len() == k).then_some(k)
    }

    pub fn total_values(&self) -> usize {
        self.factors.iter().map(FactorDef::len).sum()
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    /// |F^N|, the number of combinations.
    pub fn cardinality(&self) -> Result<usize> {
        self.factors
            .iter()
            .try_fold(1usize, |acc, f| acc.checked_mul(f.len()))
            .ok_or(Error::Overflow)
    }

    pub fn base_config(&self) -> FactorConfig {
        FactorConfig(self.factors.iter().map(|f| f.base_index).collect())
    }

    pub fn validate_config(&self, config: &FactorConfig) -> Result<()> {
        if config.len() != self.factors.len() {
            return Err(Error::ConfigLength {
                expected: self.factors.len(),
                found: config.len(),
            });
        }
        for (factor, &index) in self.factors.iter().zip(config.indices()) {
            if index >= factor.len() {
                return Err(Error::ValueOutOfRange {
                    factor: factor.name.clone(),
                    index,
                    count: factor.len(),
                });
            }
        }
        Ok(())
    }

    /// Mixed-radix decoding with the last factor least significant, so
    /// rank order coincides with [`FactorSpace::enumerate_all`] order.
    pub fn config_from_rank(&self, mut rank: usize) -> FactorConfig {
        let mut out = vec![0; self.factors.len()];
        for (slot, factor) in out.iter_mut().zip(&self.factors).rev() {
            *slot = rank % factor.len();
            rank /= factor.len();
        }
        FactorConfig(out)
    }

    pub fn rank_of(&self, config: &FactorConfig) -> usize {
        self.factors
            .iter()
            .zip(config.indices())
            .fold(0, |acc, (f, &v)| acc * f.len() + v)
    }

    /// Every combination in lexicographic order, last factor fastest.
    pub fn enumerate_all(&self) -> Result<ConfigIter<'_>> {
        self.cardinality()?;
        Ok(ConfigIter {
            space: self,
            next: Some(vec![0; self.factors.len()]),
        })
    }

    /// Maps a `{factor name: value id}` assignment onto indices.
    pub fn config_from_ids(&self, ids: &BTreeMap<String, String>) -> Result<FactorConfig> {
        for name in ids.keys() {
            if self.factor_index(name).is_none() {
                return Err(Error::UnknownFactor(name.clone()));
            }
        }
        let assignment = self
            .factors
            .iter()
            .map(|factor| {
                let id = ids
                    .get(&factor.name)
                    .ok_or_else(|| Error::MissingFactor(factor.name.clone()))?;
                factor.index_of(id).ok_or_else(|| Error::UnknownValue {
                    factor: factor.name.clone(),
                    value: id.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FactorConfig(assignment))
    }

    pub fn config_to_ids(&self, config: &FactorConfig) -> BTreeMap<String, String> {
        self.factors
            .iter()
            .zip(config.indices())
            .map(|(f, &v)| (f.name.clone(), f.values[v].id.clone()))
            .collect()
    }

    pub fn to_document(&self) -> SpaceDocument {
        SpaceDocument {
            name: self.name.clone(),
            factors: self
                .factors
                .iter()
                .map(|f| FactorDocument {
                    name: f.name.clone(),
                    base: f.base().id.clone(),
                    values: f
                        .values
                        .iter()
                        .map(|v| {
                            let (embedding, quaternion) = match &v.embedding {
                                None => (None, None),
                                Some(Embedding::Vector(e)) => (Some(e.clone()), None),
                                Some(Embedding::Quaternion(q)) => (None, Some(*q)),
                            };
                            ValueDocument {
                                id: v.id.clone(),
                                label: v.label.clone(),
                                embedding,
                                quaternion,
                            }
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.to_document())
            .expect("space document always serializes");
        text.push('\n');
        text
    }

    /// Name plus a content hash of the canonical document.
    pub fn space_ref(&self) -> SpaceRef {
        let canonical =
            serde_json::to_vec(&self.to_document()).expect("space document always serializes");
        let digest = Sha256::digest(&canonical);
        SpaceRef {
            name: self.name.clone(),
            hash: hex::encode(&digest[..8]),
        }
    }

    /// Restricts every factor to the given value indices (kept in original
    /// order). Each list must contain that factor's base index.
    pub fn restrict(&self, keep: &[Vec<usize>]) -> Result<FactorSpace> {
        let factors = self
            .factors
            .iter()
            .zip(keep)
            .map(|(f, idx)| {
                let mut idx = idx.clone();
                idx.sort_unstable();
                idx.dedup();
                let base_index = idx.iter().position(|&i| i == f.base_index).ok_or_else(|| {
                    Error::InvalidSpace {
                        path: f.name.clone(),
                        reason: "restriction drops the base value".into(),
                    }
                })?;
                Ok(FactorDef {
                    name: f.name.clone(),
                    values: idx.iter().map(|&i| f.values[i].clone()).collect(),
                    base_index,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FactorSpace::new(self.name.clone(), factors)
    }
}

/// Odometer iterator over every configuration of a space.
pub struct ConfigIter<'a> {
    space: &'a FactorSpace,
    next: Option<Vec<usize>>,
}

impl Iterator for ConfigIter<'_> {
    type Item = FactorConfig;

    fn next(&mut self) -> Option<FactorConfig> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for (pos, factor) in self.space.factors.iter().enumerate().rev() {
            succ[pos] += 1;
            if succ[pos] < factor.len() {
                self.next = Some(succ);
                break;
            }
            succ[pos] = 0;
        }
        Some(FactorConfig(current))
    }
}

/// JSON encoding of a factor space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDocument {
    pub name: String,
    pub factors: Vec<FactorDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDocument {
    pub name: String,
    pub base: String,
    pub values: Vec<ValueDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueDocument {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quaternion: Option<[f64; 4]>,
}

impl SpaceDocument {
    pub fn into_space(self) -> Result<FactorSpace> {
        let factors = self
            .factors
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                let path = format!("factors[{i}]({})", f.name);
                let values = f
                    .values
                    .into_iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let embedding = match (v.embedding, v.quaternion) {
                            (Some(_), Some(_)) => {
                                return Err(Error::InvalidSpace {
                                    path: format!("{path}.values[{j}]({})", v.id),
                                    reason: "both embedding and quaternion given".into(),
                                })
                            }
                            (Some(e), None) => Some(Embedding::Vector(e)),
                            (None, Some(q)) => Some(Embedding::Quaternion(q)),
                            (None, None) => None,
                        };
                        Ok(FactorValue {
                            id: v.id,
                            label: v.label,
                            embedding,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let base_index =
                    values
                        .iter()
                        .position(|v| v.id == f.base)
                        .ok_or_else(|| Error::InvalidSpace {
                            path: format!("{path}.base"),
                            reason: format!("base `{}` is not one of the values", f.base),
                        })?;
                Ok(FactorDef {
                    name: f.name,
                    values,
                    base_index,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FactorSpace::new(self.name, factors)
    }
}

/// Parses and validates a JSON factor-space document.
pub fn parse_space(text: &str) -> Result<FactorSpace> {
    let doc: SpaceDocument = serde_json::from_str(text)?;
    doc.into_space()
}
