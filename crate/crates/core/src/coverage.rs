//! Coverage statistics, compositional sets and evaluation grids.

use std::collections::{BTreeSet, HashSet};

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::{hamming_distance, FactorConfig, FactorSpace};
use crate::strategies::{EntryDocument, PlanDocument};

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    /// Fraction of each factor's values that appear in some config.
    pub per_factor_value_coverage: Vec<f64>,
    pub values_seen: Vec<BTreeSet<usize>>,
    pub combos_seen: BTreeSet<FactorConfig>,
    /// Fraction of (factor pair, value pair) cells seen, over pairs `i < j`.
    /// `None` for single-factor spaces.
    pub pair_coverage: Option<f64>,
    pub compositional_count: usize,
    pub total_combos: usize,
}

fn validate_all<'a>(
    space: &FactorSpace,
    configs: impl IntoIterator<Item = &'a FactorConfig>,
) -> Result<()> {
    configs
        .into_iter()
        .try_for_each(|c| space.validate_config(c))
}

fn seen_values<'a>(
    space: &FactorSpace,
    configs: impl IntoIterator<Item = &'a FactorConfig>,
) -> Vec<BTreeSet<usize>> {
    let mut seen = vec![BTreeSet::new(); space.num_factors()];
    for config in configs {
        for (set, &v) in seen.iter_mut().zip(config.indices()) {
            set.insert(v);
        }
    }
    seen
}

pub fn coverage_report(configs: &[FactorConfig], space: &FactorSpace) -> Result<CoverageReport> {
    validate_all(space, configs)?;
    let values_seen = seen_values(space, configs);
    let combos_seen: BTreeSet<FactorConfig> = configs.iter().cloned().collect();
    let per_factor_value_coverage = values_seen
        .iter()
        .zip(space.factors())
        .map(|(s, f)| s.len() as f64 / f.len() as f64)
        .collect();

    let counts = space.value_counts();
    let n = counts.len();
    let pair_coverage = (n >= 2).then(|| {
        let mut cells = HashSet::new();
        for config in &combos_seen {
            let idx = config.indices();
            for (i, j) in (0..n).tuple_combinations() {
                cells.insert((i, j, idx[i], idx[j]));
            }
        }
        let total: usize = (0..n)
            .tuple_combinations()
            .map(|(i, j)| counts[i] * counts[j])
            .sum();
        cells.len() as f64 / total as f64
    });

    let product = values_seen
        .iter()
        .try_fold(1usize, |acc, s| acc.checked_mul(s.len()))
        .ok_or(Error::Overflow)?;
    Ok(CoverageReport {
        per_factor_value_coverage,
        values_seen,
        compositional_count: product - combos_seen.len(),
        combos_seen,
        pair_coverage,
        total_combos: space.cardinality()?,
    })
}

/// Unseen combinations built only from individually seen values.
pub fn compositional_set(
    configs: &[FactorConfig],
    space: &FactorSpace,
) -> Result<BTreeSet<FactorConfig>> {
    validate_all(space, configs)?;
    let seen: HashSet<&FactorConfig> = configs.iter().collect();
    let values = seen_values(space, configs);
    if values.iter().any(BTreeSet::is_empty) {
        return Ok(BTreeSet::new());
    }
    Ok(values
        .iter()
        .map(|s| s.iter().copied())
        .multi_cartesian_product()
        .map(FactorConfig::new)
        .filter(|c| !seen.contains(c))
        .collect())
}

/// Non-base values for factors `i` and `j`, base everywhere else; row-major
/// over factor `i`'s value order.
pub fn pairwise_grid(space: &FactorSpace, pair: (usize, usize)) -> Result<Vec<FactorConfig>> {
    let (i, j) = pair;
    let n = space.num_factors();
    if i == j || i >= n || j >= n {
        return Err(Error::InvalidPair(i, j));
    }
    let base = space.base_config();
    let non_base = |f: usize| {
        let factor = space.factor(f);
        (0..factor.len()).filter(move |&v| v != factor.base_index)
    };
    Ok(non_base(i)
        .cartesian_product(non_base(j).collect::<Vec<_>>())
        .map(|(vi, vj)| {
            let mut c = base.clone();
            c.set(i, vi);
            c.set(j, vj);
            c
        })
        .collect())
}

/// Every unordered pair `i < j` with its grid.
pub fn all_pairwise_grids(space: &FactorSpace) -> Vec<((usize, usize), Vec<FactorConfig>)> {
    (0..space.num_factors())
        .tuple_combinations()
        .map(|pair| (pair, pairwise_grid(space, pair).expect("pair is valid")))
        .collect()
}

/// All combinations when `n` covers the space, else `n` distinct uniform draws.
pub fn eval_sample(space: &FactorSpace, n: usize, seed: u64) -> Result<Vec<FactorConfig>> {
    let total = space.cardinality()?;
    if n >= total {
        return Ok(space.enumerate_all()?.collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, total, n)
        .into_iter()
        .map(|rank| space.config_from_rank(rank))
        .collect())
}

/// Wraps evaluation configs in the plan file format, one demo each, so the
/// session runner can step through them.
pub fn evaluation_document(
    space: &FactorSpace,
    kind: &str,
    seed: u64,
    configs: &[FactorConfig],
) -> PlanDocument {
    let hamming_cost = configs
        .windows(2)
        .map(|w| hamming_distance(&w[0], &w[1]).unwrap_or(0))
        .sum::<usize>()
        + if configs.is_empty() { 0 } else { space.num_factors() };
    PlanDocument {
        strategy: kind.to_string(),
        seed,
        space: space.space_ref(),
        budget: None,
        deduped: true,
        base: Some(space.config_to_ids(&space.base_config())),
        entries: configs
            .iter()
            .map(|c| EntryDocument {
                config: space.config_to_ids(c),
                demos: 1,
            })
            .collect(),
        declared_cost: None,
        hamming_cost,
    }
}

/// Serializable view of a [`CoverageReport`] with value ids instead of indices.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageDocument {
    pub space: String,
    pub factors: Vec<FactorCoverage>,
    pub combos_seen: usize,
    pub pair_coverage: Option<f64>,
    pub compositional_count: usize,
    pub total_combos: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorCoverage {
    pub factor: String,
    pub values_total: usize,
    pub values_seen: usize,
    pub coverage: f64,
    pub seen: Vec<String>,
}

impl CoverageReport {
    pub fn to_document(&self, space: &FactorSpace) -> CoverageDocument {
        CoverageDocument {
            space: space.name.clone(),
            factors: space
                .factors()
                .iter()
                .zip(&self.values_seen)
                .zip(&self.per_factor_value_coverage)
                .map(|((f, seen), &coverage)| FactorCoverage {
                    factor: f.name.clone(),
                    values_total: f.len(),
                    values_seen: seen.len(),
                    coverage,
                    seen: seen.iter().map(|&v| f.values[v].id.clone()).collect(),
                })
                .collect(),
            combos_seen: self.combos_seen.len(),
            pair_coverage: self.pair_coverage,
            compositional_count: self.compositional_count,
            total_combos: self.total_combos,
        }
    }
}

impl CoverageDocument {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("coverage serializes");
        text.push('\n');
        text
    }
}
