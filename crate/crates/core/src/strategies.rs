//! Collection-plan generation for the seven data collection strategies.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::budgeting::{allocate_demos, configs_for_budget, declared_cost, hamming_cost};
use crate::error::{Error, Result};
use crate::space::{FactorConfig, FactorSpace, SpaceRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Every combination, in enumeration order.
    Complete,
    /// Uniform combinations drawn without replacement.
    Random,
    /// Varies only the given factor; the rest stay at base.
    SingleFactor(usize),
    /// Every factor value used exactly once, all factors changing together.
    Diagonal,
    /// One-factor-at-a-time sweeps out of the base combination.
    L,
    /// Cycles through the factors, changing one at a time and keeping the rest.
    Stair,
    /// Base combination only.
    NoVariation,
}

impl Strategy {
    /// Strategies charged `N` changes per new entry rather than one.
    pub fn resamples_all_factors(self) -> bool {
        matches!(self, Strategy::Diagonal | Strategy::Random)
    }

    /// Declared change cost of every entry after the first.
    pub fn step_cost(self, num_factors: usize) -> usize {
        if self.resamples_all_factors() {
            num_factors
        } else {
            1
        }
    }

    pub const ALL_FIXED: [Strategy; 6] = [
        Strategy::Complete,
        Strategy::Random,
        Strategy::Diagonal,
        Strategy::L,
        Strategy::Stair,
        Strategy::NoVariation,
    ];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Complete => f.write_str("complete"),
            Strategy::Random => f.write_str("random"),
            Strategy::SingleFactor(i) => write!(f, "single_factor:{i}"),
            Strategy::Diagonal => f.write_str("diagonal"),
            Strategy::L => f.write_str("l"),
            Strategy::Stair => f.write_str("stair"),
            Strategy::NoVariation => f.write_str("no_variation"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        if let Some(rest) = norm.strip_prefix("single_factor") {
            let index = rest
                .strip_prefix(':')
                .ok_or_else(|| format!("`{s}`: single_factor needs a factor index, e.g. single_factor:0"))?;
            return index
                .parse()
                .map(Strategy::SingleFactor)
                .map_err(|_| format!("`{s}`: bad factor index"));
        }
        match norm.as_str() {
            "complete" => Ok(Strategy::Complete),
            "random" => Ok(Strategy::Random),
            "diagonal" => Ok(Strategy::Diagonal),
            "l" => Ok(Strategy::L),
            "stair" => Ok(Strategy::Stair),
            "no_variation" | "novariation" => Ok(Strategy::NoVariation),
            _ => Err(format!("unknown strategy `{s}`")),
        }
    }
}

impl Serialize for Strategy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlanParams {
    /// Number of draws for [`Strategy::Random`]; defaults to the whole space.
    pub num_configs: Option<usize>,
    pub dedupe: bool,
}

impl Default for PlanParams {
    fn default() -> Self {
        Self {
            num_configs: None,
            dedupe: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanEntry {
    pub config: FactorConfig,
    pub demos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollectionPlan {
    pub strategy: Strategy,
    pub entries: Vec<PlanEntry>,
    pub seed: u64,
    pub space_ref: SpaceRef,
    pub deduped: bool,
    /// Change budget the plan was truncated to, if any.
    pub budget: Option<usize>,
    pub base: FactorConfig,
}

impl CollectionPlan {
    pub fn num_factors(&self) -> usize {
        self.base.len()
    }

    pub fn configs(&self) -> impl Iterator<Item = &FactorConfig> {
        self.entries.iter().map(|e| &e.config)
    }

    pub fn total_demos(&self) -> usize {
        self.entries.iter().map(|e| e.demos).sum()
    }

    /// Distinct configs in first-occurrence order.
    pub fn unique_configs(&self) -> Vec<FactorConfig> {
        let mut seen = HashSet::new();
        self.configs()
            .filter(|c| seen.insert(*c))
            .cloned()
            .collect()
    }

    pub fn to_document(&self, space: &FactorSpace) -> PlanDocument {
        PlanDocument {
            strategy: self.strategy.to_string(),
            seed: self.seed,
            space: self.space_ref.clone(),
            budget: self.budget,
            deduped: self.deduped,
            base: Some(space.config_to_ids(&self.base)),
            entries: self
                .entries
                .iter()
                .map(|e| EntryDocument {
                    config: space.config_to_ids(&e.config),
                    demos: e.demos,
                })
                .collect(),
            declared_cost: declared_cost(self).ok().map(|l| l.declared_total),
            hamming_cost: hamming_cost(self).unwrap_or(0),
        }
    }
}

/// Generates the full plan for `strategy`.
pub fn generate_plan(
    space: &FactorSpace,
    strategy: Strategy,
    params: PlanParams,
    total_demos: usize,
    seed: u64,
) -> Result<CollectionPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut configs = match strategy {
        Strategy::Random => {
            let total = space.cardinality()?;
            random_without_replacement(space, params.num_configs.unwrap_or(total), &mut rng)?
        }
        _ => full_sequence(space, strategy, None, &mut rng)?,
    };
    if params.dedupe {
        configs = dedupe(configs);
    }
    assemble(space, strategy, configs, total_demos, seed, params.dedupe, None)
}

/// The first `configs_for_budget` entries of the seeded, deduplicated
/// strategy sequence.
pub fn plan_at_rate(
    space: &FactorSpace,
    strategy: Strategy,
    change_budget: usize,
    total_demos: usize,
    seed: u64,
) -> Result<CollectionPlan> {
    let count = configs_for_budget(strategy, space, change_budget)?;
    if count == 0 {
        return Err(Error::BudgetTooSmall {
            budget: change_budget,
            minimum: space.num_factors(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let configs = match strategy {
        Strategy::Random => random_without_replacement(space, count, &mut rng)?,
        Strategy::Complete => full_sequence(space, strategy, Some(count), &mut rng)?,
        _ => {
            let mut all = dedupe(full_sequence(space, strategy, None, &mut rng)?);
            all.truncate(count);
            all
        }
    };
    assemble(space, strategy, configs, total_demos, seed, true, Some(change_budget))
}

fn assemble(
    space: &FactorSpace,
    strategy: Strategy,
    configs: Vec<FactorConfig>,
    total_demos: usize,
    seed: u64,
    deduped: bool,
    budget: Option<usize>,
) -> Result<CollectionPlan> {
    let demos = allocate_demos(configs.len(), total_demos)?;
    Ok(CollectionPlan {
        strategy,
        entries: configs
            .into_iter()
            .zip(demos)
            .map(|(config, demos)| PlanEntry { config, demos })
            .collect(),
        seed,
        space_ref: space.space_ref(),
        deduped,
        budget,
        base: space.base_config(),
    })
}

fn dedupe(configs: Vec<FactorConfig>) -> Vec<FactorConfig> {
    let mut seen = HashSet::with_capacity(configs.len());
    configs.into_iter().filter(|c| seen.insert(c.clone())).collect()
}

/// Value order for one factor: base first, the rest shuffled.
fn base_first_order(len: usize, base: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut rest: Vec<usize> = (0..len).filter(|&v| v != base).collect();
    rest.shuffle(rng);
    std::iter::once(base).chain(rest).collect()
}

fn free_order(len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order
}

/// Raw (not deduplicated) sequence for every strategy except Random.
fn full_sequence(
    space: &FactorSpace,
    strategy: Strategy,
    limit: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FactorConfig>> {
    let base = space.base_config();
    let factors = space.factors();
    let pinned = |rng: &mut ChaCha8Rng| -> Vec<Vec<usize>> {
        factors
            .iter()
            .map(|f| base_first_order(f.len(), f.base_index, rng))
            .collect()
    };
    let out = match strategy {
        Strategy::Complete => {
            let iter = space.enumerate_all()?;
            match limit {
                Some(n) => iter.take(n).collect(),
                None => iter.collect(),
            }
        }
        Strategy::Random => unreachable!("random plans are drawn separately"),
        Strategy::NoVariation => vec![base],
        Strategy::SingleFactor(i) => {
            if i >= space.num_factors() {
                return Err(Error::FactorIndex {
                    index: i,
                    count: space.num_factors(),
                });
            }
            let factor = space.factor(i);
            base_first_order(factor.len(), factor.base_index, rng)
                .into_iter()
                .map(|v| {
                    let mut c = base.clone();
                    c.set(i, v);
                    c
                })
                .collect()
        }
        Strategy::Diagonal => {
            let k = space.uniform_count().ok_or_else(|| Error::UnequalValueCounts {
                strategy: strategy.to_string(),
            })?;
            let orders: Vec<_> = factors.iter().map(|f| free_order(f.len(), rng)).collect();
            (0..k)
                .map(|j| FactorConfig::new(orders.iter().map(|o| o[j]).collect()))
                .collect()
        }
        Strategy::L => {
            let orders = pinned(rng);
            let mut out = Vec::new();
            for (i, order) in orders.iter().enumerate() {
                let mut f = base.clone();
                for &v in order {
                    f.set(i, v);
                    out.push(f.clone());
                }
            }
            out
        }
        Strategy::Stair => {
            let orders = pinned(rng);
            let rounds = orders.iter().map(Vec::len).max().unwrap_or(0);
            let mut f = base;
            let mut out = Vec::new();
            for j in 0..rounds {
                for (i, order) in orders.iter().enumerate() {
                    if let Some(&v) = order.get(j) {
                        f.set(i, v);
                        out.push(f.clone());
                    }
                }
            }
            out
        }
    };
    Ok(out)
}

/// Seeded rejection sampling against a seen-set.
fn random_without_replacement(
    space: &FactorSpace,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FactorConfig>> {
    let available = space.cardinality()?;
    if count > available {
        return Err(Error::NotEnoughConfigs {
            requested: count,
            available,
        });
    }
    let counts = space.value_counts();
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let draw = FactorConfig::new(counts.iter().map(|&k| rng.gen_range(0..k)).collect());
        if seen.insert(draw.clone()) {
            out.push(draw);
        }
    }
    Ok(out)
}

/// JSON encoding of a plan. Also used for evaluation grids, whose
/// `strategy` is not one of the collection strategies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDocument {
    pub strategy: String,
    pub seed: u64,
    pub space: SpaceRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default)]
    pub deduped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<BTreeMap<String, String>>,
    pub entries: Vec<EntryDocument>,
    pub declared_cost: Option<usize>,
    pub hamming_cost: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryDocument {
    pub config: BTreeMap<String, String>,
    pub demos: usize,
}

impl PlanDocument {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("plan document always serializes");
        text.push('\n');
        text
    }

    pub fn parse_strategy(&self) -> Result<Strategy> {
        self.strategy
            .parse()
            .map_err(|e| Error::PlanDocument(format!("not a collection plan: {e}")))
    }

    /// Resolves the document against the space it was generated for.
    pub fn to_plan(&self, space: &FactorSpace) -> Result<CollectionPlan> {
        let strategy = self.parse_strategy()?;
        let expected = space.space_ref();
        if self.space != expected {
            return Err(Error::PlanDocument(format!(
                "plan was generated for space {}#{}, got {}#{}",
                self.space.name, self.space.hash, expected.name, expected.hash
            )));
        }
        let entries = self
            .entries
            .iter()
            .map(|e| {
                Ok(PlanEntry {
                    config: space.config_from_ids(&e.config)?,
                    demos: e.demos,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CollectionPlan {
            strategy,
            entries,
            seed: self.seed,
            space_ref: self.space.clone(),
            deduped: self.deduped,
            budget: self.budget,
            base: space.base_config(),
        })
    }

    /// Resolves the document without its space. Factors are ordered by name
    /// and value indices follow first appearance, which preserves every
    /// count the cost model needs.
    pub fn to_detached_plan(&self) -> Result<CollectionPlan> {
        let strategy = self.parse_strategy()?;
        let first = self.entries.first().ok_or(Error::EmptyPlan)?;
        let names: Vec<&String> = first.config.keys().collect();
        let mut value_maps: Vec<HashMap<String, usize>> = vec![HashMap::new(); names.len()];
        let mut index_config = |config: &BTreeMap<String, String>| -> Result<FactorConfig> {
            if config.len() != names.len() || !config.keys().zip(&names).all(|(a, b)| a == *b) {
                return Err(Error::PlanDocument("entries name different factors".into()));
            }
            Ok(FactorConfig::new(
                config
                    .values()
                    .zip(value_maps.iter_mut())
                    .map(|(id, map)| {
                        let next = map.len();
                        *map.entry(id.clone()).or_insert(next)
                    })
                    .collect(),
            ))
        };
        let base = match &self.base {
            Some(b) => index_config(b)?,
            None => index_config(&first.config)?,
        };
        let entries = self
            .entries
            .iter()
            .map(|e| {
                Ok(PlanEntry {
                    config: index_config(&e.config)?,
                    demos: e.demos,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CollectionPlan {
            strategy,
            entries,
            seed: self.seed,
            space_ref: self.space.clone(),
            deduped: self.deduped,
            budget: self.budget,
            base,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(space: &FactorSpace, strategy: Strategy, demos: usize, seed: u64) -> CollectionPlan {
        generate_plan(space, strategy, PlanParams::default(), demos, seed).unwrap()
    }

    #[test]
    fn stair_on_robot_space_gives_sixteen_by_ten() {
        let space = FactorSpace::uniform(5, 4).unwrap();
        let p = plan(&space, Strategy::Stair, 160, 7);
        assert_eq!(p.entries.len(), 16);
        assert!(p.entries.iter().all(|e| e.demos == 10));
        assert_eq!(p.entries[0].config, space.base_config());
    }

    #[test]
    fn no_variation_is_single_base_entry() {
        let space = FactorSpace::with_counts(&[3, 5, 2]).unwrap();
        let p = plan(&space, Strategy::NoVariation, 160, 1);
        assert_eq!(p.entries, vec![PlanEntry { config: space.base_config(), demos: 160 }]);
    }

    #[test]
    fn diagonal_two_by_three_uses_each_value_once() {
        let space = FactorSpace::uniform(2, 3).unwrap();
        for seed in 0..20 {
            let p = plan(&space, Strategy::Diagonal, 30, seed);
            assert_eq!(p.entries.len(), 3);
            for factor in 0..2 {
                let mut vals: Vec<_> = p.configs().map(|c| c.get(factor)).collect();
                vals.sort_unstable();
                assert_eq!(vals, vec![0, 1, 2]);
            }
        }
    }

    #[test]
    fn diagonal_rejects_unequal_counts() {
        let space = FactorSpace::with_counts(&[3, 4]).unwrap();
        let err = generate_plan(&space, Strategy::Diagonal, PlanParams::default(), 10, 0);
        assert!(matches!(err, Err(Error::UnequalValueCounts { .. })));
    }

    #[test]
    fn random_errors_and_distinctness() {
        let space = FactorSpace::uniform(2, 3).unwrap();
        let too_many = PlanParams { num_configs: Some(10), dedupe: true };
        assert!(matches!(
            generate_plan(&space, Strategy::Random, too_many, 100, 0),
            Err(Error::NotEnoughConfigs { .. })
        ));
        let p = plan(&space, Strategy::Random, 90, 3);
        assert_eq!(p.unique_configs().len(), 9);
    }

    #[test]
    fn demos_fewer_than_entries() {
        let space = FactorSpace::uniform(5, 4).unwrap();
        assert!(matches!(
            generate_plan(&space, Strategy::Stair, PlanParams::default(), 15, 0),
            Err(Error::InsufficientDemos { .. })
        ));
    }

    #[test]
    fn single_factor_checks_index() {
        let space = FactorSpace::uniform(2, 4).unwrap();
        assert!(matches!(
            generate_plan(&space, Strategy::SingleFactor(2), PlanParams::default(), 10, 0),
            Err(Error::FactorIndex { .. })
        ));
        let p = plan(&space, Strategy::SingleFactor(1), 8, 0);
        assert_eq!(p.entries.len(), 4);
        assert!(p.configs().all(|c| c.get(0) == 0));
    }

    #[test]
    fn raw_stair_keeps_base_copies() {
        let space = FactorSpace::uniform(5, 4).unwrap();
        let raw = PlanParams { num_configs: None, dedupe: false };
        let p = generate_plan(&space, Strategy::Stair, raw, 200, 0).unwrap();
        assert_eq!(p.entries.len(), 20);
        assert!(p.entries[..5].iter().all(|e| e.config == space.base_config()));
    }

    #[test]
    fn plan_at_rate_examples() {
        let space = FactorSpace::uniform(2, 10).unwrap();
        let l = plan_at_rate(&space, Strategy::L, 20, 100, 0).unwrap();
        assert_eq!(l.entries.len(), 19);
        for factor in 0..2 {
            let vals: HashSet<_> = l.configs().map(|c| c.get(factor)).collect();
            assert_eq!(vals.len(), 10);
        }
        let r = plan_at_rate(&space, Strategy::Random, 10, 100, 0).unwrap();
        assert_eq!(r.entries.len(), 5);
        assert_eq!(r.unique_configs().len(), 5);

        let five = FactorSpace::uniform(5, 10).unwrap();
        let d = plan_at_rate(&five, Strategy::Diagonal, 50, 1000, 4).unwrap();
        assert_eq!(d.entries.len(), 10);

        assert!(matches!(
            plan_at_rate(&five, Strategy::L, 4, 1000, 0),
            Err(Error::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL_FIXED.into_iter().chain([Strategy::SingleFactor(3)]) {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("single_factor".parse::<Strategy>().is_err());
        assert!("zigzag".parse::<Strategy>().is_err());
        assert_eq!("No-Variation".parse::<Strategy>().unwrap(), Strategy::NoVariation);
    }

    #[test]
    fn document_round_trip_with_and_without_space() {
        let space = FactorSpace::uniform(3, 4).unwrap();
        let p = plan(&space, Strategy::L, 100, 11);
        let doc = p.to_document(&space);
        let parsed = PlanDocument::parse(&doc.to_json()).unwrap();
        assert_eq!(parsed.to_plan(&space).unwrap(), p);

        let detached = parsed.to_detached_plan().unwrap();
        assert_eq!(hamming_cost(&detached).unwrap(), hamming_cost(&p).unwrap());
        assert_eq!(
            declared_cost(&detached).unwrap().declared_total,
            declared_cost(&p).unwrap().declared_total
        );

        let other = FactorSpace::uniform(3, 5).unwrap();
        assert!(parsed.to_plan(&other).is_err());
    }
}
