//! Episode manifests and the reports computed from them.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{FactorConfig, FactorSpace};

/// Noted on every tier report: success-based similarity mixes how close a
/// value is to the base with how hard the value is on its own.
pub const SIMILARITY_CAVEAT: &str =
    "success-rate similarity also reflects how difficult each value is in isolation";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub config: FactorConfig,
    pub success: bool,
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeLine {
    pub episode_id: String,
    pub config: BTreeMap<String, String>,
    pub success: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, String>,
}

impl EpisodeRecord {
    pub fn to_line(&self, space: &FactorSpace) -> EpisodeLine {
        EpisodeLine {
            episode_id: self.episode_id.clone(),
            config: space.config_to_ids(&self.config),
            success: self.success,
            tags: self.tags.clone(),
        }
    }
}

/// Parses a JSON-lines manifest. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn ingest_manifest(text: &str, space: &FactorSpace) -> Result<Vec<EpisodeRecord>> {
    let mut ids = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let wrap = |reason: String| Error::Manifest { line, reason };
        let parsed: EpisodeLine =
            serde_json::from_str(raw).map_err(|e| wrap(e.to_string()))?;
        let config = space
            .config_from_ids(&parsed.config)
            .map_err(|e| wrap(e.to_string()))?;
        if !ids.insert(parsed.episode_id.clone()) {
            return Err(Error::DuplicateEpisode(parsed.episode_id));
        }
        out.push(EpisodeRecord {
            episode_id: parsed.episode_id,
            config,
            success: parsed.success,
            tags: parsed.tags,
        });
    }
    Ok(out)
}

pub fn manifest_to_jsonl(records: &[EpisodeRecord], space: &FactorSpace) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(&r.to_line(space)).expect("episode serializes") + "\n")
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairCell {
    pub factors: (String, String),
    #[serde(skip)]
    pub pair: (usize, usize),
    pub successes: usize,
    pub evaluated: usize,
    /// Number of configs in the pair's grid (9 for four-value factors).
    pub grid_size: usize,
}

impl PairCell {
    pub fn is_complete(&self) -> bool {
        self.evaluated >= self.grid_size
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairwiseTable {
    pub cells: Vec<PairCell>,
    pub overall_successes: usize,
    /// Grid sizes summed over fully evaluated pairs.
    pub overall_denominator: usize,
    /// Episodes not on any pairwise grid.
    pub out_of_grid: Vec<String>,
}

/// The unordered pair of factors a config deviates from base on, if it
/// deviates on exactly two.
fn grid_pair(config: &FactorConfig, base: &FactorConfig) -> Option<(usize, usize)> {
    let off: Vec<usize> = config
        .indices()
        .iter()
        .zip(base.indices())
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, _)| i)
        .collect();
    (off.len() == 2).then(|| (off[0], off[1]))
}

pub fn pairwise_table(records: &[EpisodeRecord], space: &FactorSpace) -> PairwiseTable {
    let base = space.base_config();
    let mut cells: Vec<PairCell> = (0..space.num_factors())
        .tuple_combinations()
        .map(|(i, j)| PairCell {
            factors: (space.factor(i).name.clone(), space.factor(j).name.clone()),
            pair: (i, j),
            successes: 0,
            evaluated: 0,
            grid_size: (space.factor(i).len() - 1) * (space.factor(j).len() - 1),
        })
        .collect();
    let slot: BTreeMap<(usize, usize), usize> =
        cells.iter().enumerate().map(|(s, c)| (c.pair, s)).collect();
    let mut out_of_grid = Vec::new();
    for r in records {
        match grid_pair(&r.config, &base) {
            Some(pair) => {
                let cell = &mut cells[slot[&pair]];
                cell.evaluated += 1;
                cell.successes += usize::from(r.success);
            }
            None => out_of_grid.push(r.episode_id.clone()),
        }
    }
    PairwiseTable {
        overall_successes: cells.iter().map(|c| c.successes).sum(),
        overall_denominator: cells
            .iter()
            .filter(|c| c.is_complete())
            .map(|c| c.grid_size)
            .sum(),
        cells,
        out_of_grid,
    }
}

impl PairwiseTable {
    /// Upper-triangular layout: one row per factor except the last, one
    /// column per factor except the first, `x/n` cells above the diagonal.
    pub fn to_csv(&self, space: &FactorSpace) -> String {
        let names: Vec<&str> = space.factors().iter().map(|f| f.name.as_str()).collect();
        let n = names.len();
        let lookup: BTreeMap<(usize, usize), &PairCell> =
            self.cells.iter().map(|c| (c.pair, c)).collect();
        let mut out = String::from("factor");
        for name in names.iter().skip(1) {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..n.saturating_sub(1) {
            out.push_str(names[i]);
            for j in 1..n {
                out.push(',');
                if let Some(cell) = lookup.get(&(i, j)) {
                    out.push_str(&format!("{}/{}", cell.successes, cell.grid_size));
                    if !cell.is_complete() {
                        out.push_str(&format!(" (n={})", cell.evaluated));
                    }
                }
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "overall,{}/{}\n",
            self.overall_successes, self.overall_denominator
        ));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Tally {
    pub successes: usize,
    pub episodes: usize,
}

impl Tally {
    /// `None` when no episodes were recorded.
    pub fn rate(&self) -> Option<f64> {
        (self.episodes > 0).then(|| self.successes as f64 / self.episodes as f64)
    }
}

/// Per factor, one tally per value; the base value's slot is `None`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueRates {
    pub tallies: Vec<Vec<Option<Tally>>>,
}

/// Success tallies for every non-base value. An episode counts towards each
/// non-base value it contains.
pub fn per_value_success(records: &[EpisodeRecord], space: &FactorSpace) -> ValueRates {
    let mut tallies: Vec<Vec<Option<Tally>>> = space
        .factors()
        .iter()
        .map(|f| {
            (0..f.len())
                .map(|v| {
                    (v != f.base_index).then_some(Tally {
                        successes: 0,
                        episodes: 0,
                    })
                })
                .collect()
        })
        .collect();
    for r in records {
        for (factor, &v) in r.config.indices().iter().enumerate() {
            if let Some(t) = tallies[factor][v].as_mut() {
                t.episodes += 1;
                t.successes += usize::from(r.success);
            }
        }
    }
    ValueRates { tallies }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TierEntry {
    pub value: String,
    pub rate: f64,
    pub tier: usize,
    /// Shares its rate with another ranked value.
    pub tie: bool,
    /// Ranked past the last tier and folded into it.
    pub overflow: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorTiers {
    pub factor: String,
    pub entries: Vec<TierEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TierReport {
    pub num_tiers: usize,
    pub factors: Vec<FactorTiers>,
    /// Values left out because no episode contained them.
    pub warnings: Vec<String>,
    /// Tag values present in the manifest the rates came from.
    pub provenance: BTreeMap<String, BTreeSet<String>>,
    pub caveat: &'static str,
}

/// Ranks non-base values by descending rate into tiers `1..=num_tiers`
/// (tier 1 closest to base). Values beyond the last tier share it.
pub fn tier_values(rates: &ValueRates, space: &FactorSpace, num_tiers: usize) -> TierReport {
    let raw: Vec<Vec<Option<f64>>> = rates
        .tallies
        .iter()
        .map(|f| f.iter().map(|t| t.and_then(|t| t.rate())).collect())
        .collect();
    tier_rates(&raw, space, num_tiers)
}

/// Same as [`tier_values`] on bare rates, one slot per value. Base slots are
/// ignored and `None` marks a value without episodes.
pub fn tier_rates(rates: &[Vec<Option<f64>>], space: &FactorSpace, num_tiers: usize) -> TierReport {
    let num_tiers = num_tiers.max(1);
    let mut warnings = Vec::new();
    let factors = space
        .factors()
        .iter()
        .zip(rates)
        .map(|(factor, slots)| {
            let mut ranked: Vec<(usize, f64)> = Vec::new();
            for (v, rate) in slots.iter().enumerate() {
                if v == factor.base_index {
                    continue;
                }
                match rate {
                    Some(rate) => ranked.push((v, *rate)),
                    None => warnings.push(format!(
                        "{}: value `{}` has no episodes and is not tiered",
                        factor.name, factor.values[v].id
                    )),
                }
            }
            // stable: equal rates keep value order
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
            let entries = ranked
                .iter()
                .enumerate()
                .map(|(pos, &(v, rate))| TierEntry {
                    value: factor.values[v].id.clone(),
                    rate,
                    tier: (pos + 1).min(num_tiers),
                    tie: ranked.iter().filter(|&&(_, other)| other == rate).count() > 1,
                    overflow: pos >= num_tiers,
                })
                .collect();
            FactorTiers {
                factor: factor.name.clone(),
                entries,
            }
        })
        .collect();
    TierReport {
        num_tiers,
        factors,
        warnings,
        provenance: BTreeMap::new(),
        caveat: SIMILARITY_CAVEAT,
    }
}

/// Every tag key with the set of values it takes across the records.
pub fn manifest_provenance(records: &[EpisodeRecord]) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for r in records {
        for (k, v) in &r.tags {
            out.entry(k.clone()).or_default().insert(v.clone());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueRate {
    pub successes: usize,
    pub episodes: usize,
    pub rate: Option<f64>,
}

/// Serializable per-value rates keyed by factor name then value id.
pub fn rates_document(
    rates: &ValueRates,
    space: &FactorSpace,
) -> BTreeMap<String, BTreeMap<String, ValueRate>> {
    space
        .factors()
        .iter()
        .zip(&rates.tallies)
        .map(|(f, tallies)| {
            let values = tallies
                .iter()
                .enumerate()
                .filter_map(|(v, t)| {
                    t.map(|t| {
                        let rate = ValueRate {
                            successes: t.successes,
                            episodes: t.episodes,
                            rate: t.rate(),
                        };
                        (f.values[v].id.clone(), rate)
                    })
                })
                .collect();
            (f.name.clone(), values)
        })
        .collect()
}
