//! Parametric generalization oracle and plan scoring.
//!
//! The oracle stands in for a trained policy. A combination seen verbatim
//! succeeds with `p_exact`; an unseen combination starts from `p_compose`,
//! loses a factor of `p_unseen_value` per value never seen in the plan, and
//! is multiplied by the configured penalty for each factor pair whose value
//! pair never co-occurred. The functional form is a modelling choice, not a
//! measured quantity.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Probability, Real};
use crate::space::{hamming_distance, FactorConfig, FactorSpace};
use crate::strategies::{plan_at_rate, CollectionPlan, Strategy};

/// Largest space `EvalMode::Exact` will enumerate.
pub const EXACT_EVAL_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationModel<P> {
    pub p_exact: P,
    pub p_compose: P,
    /// Multiplier applied once per factor value absent from the plan.
    pub p_unseen_value: P,
    /// Keyed by factor pair `(i, j)` with `i < j`.
    pub pair_penalty: BTreeMap<(usize, usize), P>,
    /// `m0` in the `d / (d + m0)` demo-count scaling.
    pub demo_saturation: Option<P>,
}

fn unit_interval<P: Probability>(name: &str, value: &P) -> Result<()> {
    if *value < P::zero() || *value > P::one() {
        return Err(Error::InvalidModel(format!("{name} = {value:?} is outside [0, 1]")));
    }
    Ok(())
}

impl<P: Probability> GeneralizationModel<P> {
    pub fn new(p_exact: P, p_compose: P, p_unseen_value: P) -> Result<Self> {
        unit_interval("p_exact", &p_exact)?;
        unit_interval("p_compose", &p_compose)?;
        unit_interval("p_unseen_value", &p_unseen_value)?;
        Ok(Self {
            p_exact,
            p_compose,
            p_unseen_value,
            pair_penalty: BTreeMap::new(),
            demo_saturation: None,
        })
    }

    pub fn with_pair_penalty(mut self, i: usize, j: usize, multiplier: P) -> Result<Self> {
        if i == j {
            return Err(Error::InvalidPair(i, j));
        }
        unit_interval("pair penalty", &multiplier)?;
        self.pair_penalty.insert((i.min(j), i.max(j)), multiplier);
        Ok(self)
    }

    pub fn with_demo_saturation(mut self, m0: P) -> Result<Self> {
        if m0 < P::zero() {
            return Err(Error::InvalidModel("demo_saturation must be nonnegative".into()));
        }
        self.demo_saturation = Some(m0);
        Ok(self)
    }

    /// Penalizes every pair of the named factors, e.g. physical factors that
    /// compose poorly with each other.
    pub fn with_factor_group_penalty(
        mut self,
        space: &FactorSpace,
        factors: &[String],
        multiplier: P,
    ) -> Result<Self> {
        let idx = factors
            .iter()
            .map(|name| space.factor_index(name).ok_or_else(|| Error::UnknownFactor(name.clone())))
            .collect::<Result<Vec<_>>>()?;
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                self = self.with_pair_penalty(i, j, multiplier.clone())?;
            }
        }
        Ok(self)
    }

    /// Soft checks that do not make the model unusable.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.p_exact < self.p_compose {
            out.push("p_exact is below p_compose".to_string());
        }
        if self.p_compose < self.p_unseen_value {
            out.push("p_compose is below p_unseen_value".to_string());
        }
        if self.demo_saturation.is_some() {
            out.push("demo_saturation is a placeholder scaling, not a fitted model".to_string());
        }
        out
    }

    fn saturation(&self, demos: usize) -> P {
        match &self.demo_saturation {
            None => P::one(),
            Some(m0) => {
                let d = P::from_count(demos);
                let denom = d.clone() + m0.clone();
                if denom == P::zero() {
                    P::zero()
                } else {
                    d / denom
                }
            }
        }
    }
}

/// Which parts of the factor space a plan has exposed.
#[derive(Debug, Clone)]
pub struct PlanIndex {
    demos: HashMap<FactorConfig, usize>,
    /// Distinct configs with summed demos, in first-occurrence order.
    distinct: Vec<(FactorConfig, usize)>,
    /// Per factor, indexed by value; values past the end were never seen.
    values_seen: Vec<Vec<bool>>,
    pairs_seen: HashSet<(usize, usize, usize, usize)>,
}

impl PlanIndex {
    pub fn new(plan: &CollectionPlan) -> Self {
        let n = plan.num_factors();
        let mut demos: HashMap<FactorConfig, usize> = HashMap::new();
        let mut order = Vec::new();
        let mut values_seen: Vec<Vec<bool>> = vec![Vec::new(); n];
        let mut pairs_seen = HashSet::new();
        for entry in &plan.entries {
            let c = &entry.config;
            match demos.get_mut(c) {
                Some(d) => *d += entry.demos,
                None => {
                    demos.insert(c.clone(), entry.demos);
                    order.push(c.clone());
                }
            }
            for (i, &v) in c.indices().iter().enumerate() {
                if values_seen[i].len() <= v {
                    values_seen[i].resize(v + 1, false);
                }
                values_seen[i][v] = true;
                for (j, &w) in c.indices().iter().enumerate().skip(i + 1) {
                    pairs_seen.insert((i, j, v, w));
                }
            }
        }
        let distinct = order
            .into_iter()
            .map(|c| {
                let d = demos[&c];
                (c, d)
            })
            .collect();
        Self {
            demos,
            distinct,
            values_seen,
            pairs_seen,
        }
    }

    pub fn contains(&self, config: &FactorConfig) -> bool {
        self.demos.contains_key(config)
    }

    pub fn unseen_values(&self, config: &FactorConfig) -> usize {
        config
            .indices()
            .iter()
            .zip(&self.values_seen)
            .filter(|(&v, seen)| !seen.get(v).copied().unwrap_or(false))
            .count()
    }

    /// Unseen combination whose values were all seen individually.
    pub fn is_compositional(&self, config: &FactorConfig) -> bool {
        self.classify(config) == (false, 0)
    }

    /// Whether the config is in the plan, and how many of its values are not.
    fn classify(&self, config: &FactorConfig) -> (bool, usize) {
        let unseen = self.unseen_values(config);
        (unseen == 0 && self.contains(config), unseen)
    }

    /// Values of each factor (below `counts[i]`) that the plan shows.
    fn seen_counts(&self, counts: &[usize]) -> Vec<usize> {
        self.values_seen
            .iter()
            .zip(counts)
            .map(|(seen, &k)| seen.iter().take(k).filter(|&&s| s).count())
            .collect()
    }

    fn pair_seen(&self, (i, j): (usize, usize), config: &FactorConfig) -> bool {
        self.pairs_seen
            .contains(&(i, j, config.get(i), config.get(j)))
    }

    /// Demos at the closest covered config (first occurrence wins ties).
    fn nearest_demos(&self, config: &FactorConfig) -> usize {
        if let Some(&d) = self.demos.get(config) {
            return d;
        }
        self.distinct
            .iter()
            .min_by_key(|(c, _)| hamming_distance(c, config).unwrap_or(usize::MAX))
            .map_or(0, |(_, d)| *d)
    }

    pub fn distinct_count(&self) -> usize {
        self.distinct.len()
    }
}

/// A model bound to one plan.
pub struct Oracle<'a, P> {
    model: &'a GeneralizationModel<P>,
    index: PlanIndex,
}

impl<'a, P: Probability> Oracle<'a, P> {
    pub fn new(model: &'a GeneralizationModel<P>, plan: &CollectionPlan) -> Result<Self> {
        if plan.entries.is_empty() {
            return Err(Error::EmptyPlan);
        }
        Ok(Self {
            model,
            index: PlanIndex::new(plan),
        })
    }

    pub fn index(&self) -> &PlanIndex {
        &self.index
    }

    pub fn success_prob(&self, config: &FactorConfig) -> P {
        self.classified_prob(config, self.index.classify(config))
    }

    fn classified_prob(&self, config: &FactorConfig, (seen, unseen): (bool, usize)) -> P {
        let m = self.model;
        let base = if seen {
            m.p_exact.clone()
        } else {
            let mut p = m.p_compose.clone() * m.p_unseen_value.pow_count(unseen);
            for (&pair, mult) in &m.pair_penalty {
                if !self.index.pair_seen(pair, config) {
                    p = p * mult.clone();
                }
            }
            p
        };
        if m.demo_saturation.is_some() {
            base * m.saturation(self.index.nearest_demos(config))
        } else {
            base
        }
    }
}

pub fn success_prob<P: Probability>(
    model: &GeneralizationModel<P>,
    plan: &CollectionPlan,
    space: &FactorSpace,
    config: &FactorConfig,
) -> Result<P> {
    space.validate_config(config)?;
    Ok(Oracle::new(model, plan)?.success_prob(config))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult<P> {
    pub strategy: Strategy,
    pub change_budget: Option<usize>,
    pub expected_success: P,
    /// Mean over the compositional set; `None` when that set is empty.
    pub compositional_success: Option<P>,
    pub method: Method,
    /// Configs enumerated or samples drawn.
    pub replicates: usize,
    pub standard_error: Option<P>,
}

/// Mean success over every combination; works for any [`Probability`],
/// including exact rationals.
pub fn expected_exact<P: Probability>(
    model: &GeneralizationModel<P>,
    plan: &CollectionPlan,
    space: &FactorSpace,
) -> Result<EvaluationResult<P>> {
    let size = space.cardinality()?;
    if size > EXACT_EVAL_LIMIT {
        return Err(Error::SpaceTooLarge {
            size,
            limit: EXACT_EVAL_LIMIT,
        });
    }
    plan.configs().try_for_each(|c| space.validate_config(c))?;
    let oracle = Oracle::new(model, plan)?;
    let (total, comp_total, comp_count) =
        if model.pair_penalty.is_empty() && model.demo_saturation.is_none() {
            sum_by_unseen_count(&oracle, space)
        } else {
            sum_by_enumeration(&oracle, space)?
        };
    Ok(EvaluationResult {
        strategy: plan.strategy,
        change_budget: plan.budget,
        expected_success: total / P::from_count(size),
        compositional_success: (comp_count > 0).then(|| comp_total / P::from_count(comp_count)),
        method: Method::Exact,
        replicates: size,
        standard_error: None,
    })
}

/// Totals over every config: (sum of success, sum over the compositional
/// set, size of the compositional set).
fn sum_by_enumeration<P: Probability>(oracle: &Oracle<'_, P>, space: &FactorSpace) -> Result<(P, P, usize)> {
    let mut total = P::zero();
    let mut comp_total = P::zero();
    let mut comp_count = 0usize;
    for config in space.enumerate_all()? {
        let class = oracle.index.classify(&config);
        let p = oracle.classified_prob(&config, class);
        if class == (false, 0) {
            comp_total = comp_total + p.clone();
            comp_count += 1;
        }
        total = total + p;
    }
    Ok((total, comp_total, comp_count))
}

/// Same totals without enumerating. With no pair penalties or saturation a
/// config's success depends only on whether the plan holds it and how many
/// of its values are unseen, so counting configs per unseen-value count
/// (coefficients of prod_i (s_i + (k_i - s_i) x)) is enough.
fn sum_by_unseen_count<P: Probability>(oracle: &Oracle<'_, P>, space: &FactorSpace) -> (P, P, usize) {
    let counts = space.value_counts();
    let seen = oracle.index.seen_counts(&counts);
    let mut by_unseen = vec![1usize];
    for (&k, &s) in counts.iter().zip(&seen) {
        let mut next = vec![0usize; by_unseen.len() + 1];
        for (u, &c) in by_unseen.iter().enumerate() {
            next[u] += c * s;
            next[u + 1] += c * (k - s);
        }
        by_unseen = next;
    }
    let m = oracle.model;
    let in_plan = oracle.index.distinct_count();
    let comp_count = by_unseen[0] - in_plan;
    let comp_total = P::from_count(comp_count) * m.p_compose.clone();
    let mut total = P::from_count(in_plan) * m.p_exact.clone() + comp_total.clone();
    for (u, &c) in by_unseen.iter().enumerate().skip(1) {
        if c > 0 {
            total = total + P::from_count(c) * m.p_compose.clone() * m.p_unseen_value.pow_count(u);
        }
    }
    (total, comp_total, comp_count)
}

/// Mean success over `samples` uniform draws (with replacement).
pub fn expected_monte_carlo<T: Real>(
    model: &GeneralizationModel<T>,
    plan: &CollectionPlan,
    space: &FactorSpace,
    samples: usize,
    seed: u64,
) -> Result<EvaluationResult<T>> {
    if samples < 2 {
        return Err(Error::InvalidModel("monte carlo needs at least 2 samples".into()));
    }
    plan.configs().try_for_each(|c| space.validate_config(c))?;
    let oracle = Oracle::new(model, plan)?;
    let counts = space.value_counts();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = Vec::with_capacity(samples);
    let mut comp = Vec::new();
    for _ in 0..samples {
        let config = FactorConfig::new(counts.iter().map(|&k| rng.gen_range(0..k)).collect());
        let class = oracle.index.classify(&config);
        let p = oracle.classified_prob(&config, class);
        if class == (false, 0) {
            comp.push(p);
        }
        draws.push(p);
    }
    let (mean, se) = mean_and_stderr(&draws);
    Ok(EvaluationResult {
        strategy: plan.strategy,
        change_budget: plan.budget,
        expected_success: mean,
        compositional_success: (!comp.is_empty()).then(|| mean_and_stderr(&comp).0),
        method: Method::MonteCarlo,
        replicates: samples,
        standard_error: se,
    })
}

pub fn expected_objective<T: Real>(
    model: &GeneralizationModel<T>,
    plan: &CollectionPlan,
    space: &FactorSpace,
    mode: EvalMode,
) -> Result<EvaluationResult<T>> {
    match mode {
        EvalMode::Exact => expected_exact(model, plan, space),
        EvalMode::MonteCarlo { samples, seed } => {
            expected_monte_carlo(model, plan, space, samples, seed)
        }
    }
}

/// Sample mean and standard error of the mean (`None` for fewer than two
/// values).
pub fn mean_and_stderr<T: Real>(values: &[T]) -> (T, Option<T>) {
    let n = T::from_count(values.len());
    let mean = values.iter().fold(T::zero(), |acc, &v| acc + v) / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let ss = values
        .iter()
        .fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean));
    let var = ss / (n - T::one());
    (mean, Some((var / n).sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow<T> {
    pub strategy: Strategy,
    pub budget: usize,
    pub seed_count: usize,
    pub mean: T,
    pub stderr: Option<T>,
    pub compositional_mean: Option<T>,
}

/// How each comparison cell is scored. Monte Carlo cells draw from
/// `seed ^ cell_index`, so results do not depend on scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareMode {
    Exact,
    MonteCarlo { samples: usize },
}

#[derive(Debug, Clone)]
pub struct Comparison<'a, T> {
    pub space: &'a FactorSpace,
    pub model: &'a GeneralizationModel<T>,
    pub budgets: &'a [usize],
    pub total_demos: usize,
    pub strategies: &'a [Strategy],
    pub seeds: &'a [u64],
    pub mode: CompareMode,
}

/// Runs every (strategy, budget, seed) cell and aggregates across seeds.
/// Rows are sorted by strategy, then budget.
pub fn compare_strategies<T: Real>(cmp: &Comparison<'_, T>) -> Result<Vec<ComparisonRow<T>>> {
    if cmp.seeds.is_empty() {
        return Err(Error::InvalidModel("at least one seed is required".into()));
    }
    let strategies: BTreeSet<Strategy> = cmp.strategies.iter().copied().collect();
    let budgets: BTreeSet<usize> = cmp.budgets.iter().copied().collect();
    let cells: Vec<(Strategy, usize, u64)> = strategies
        .iter()
        .flat_map(|&s| {
            budgets
                .iter()
                .flat_map(move |&b| cmp.seeds.iter().map(move |&seed| (s, b, seed)))
        })
        .collect();

    let results = cells
        .par_iter()
        .enumerate()
        .map(|(index, &(strategy, budget, seed))| {
            let plan = plan_at_rate(cmp.space, strategy, budget, cmp.total_demos, seed)?;
            let mode = match cmp.mode {
                CompareMode::Exact => EvalMode::Exact,
                CompareMode::MonteCarlo { samples } => EvalMode::MonteCarlo {
                    samples,
                    seed: seed ^ index as u64,
                },
            };
            expected_objective(cmp.model, &plan, cmp.space, mode)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(results
        .chunks(cmp.seeds.len())
        .zip(cells.chunks(cmp.seeds.len()))
        .map(|(group, cell)| {
            let means: Vec<T> = group.iter().map(|r| r.expected_success).collect();
            let comps: Vec<T> = group.iter().filter_map(|r| r.compositional_success).collect();
            let (mean, stderr) = mean_and_stderr(&means);
            ComparisonRow {
                strategy: cell[0].0,
                budget: cell[0].1,
                seed_count: group.len(),
                mean,
                stderr,
                compositional_mean: (!comps.is_empty()).then(|| mean_and_stderr(&comps).0),
            }
        })
        .collect())
}

/// JSON model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub p_exact: f64,
    pub p_compose: f64,
    pub p_unseen_value: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pair_penalty: Vec<PairPenaltyDocument>,
    /// Factors whose mutual pairs get `physical_pair_multiplier`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub physical_factors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_pair_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo_saturation: Option<f64>,
    /// Silences the ordering warnings.
    #[serde(default)]
    pub allow_unordered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairPenaltyDocument {
    pub factors: [String; 2],
    pub multiplier: f64,
}

impl ModelDocument {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Builds the model plus any warnings worth surfacing.
    pub fn into_model<P: Probability>(
        &self,
        space: &FactorSpace,
    ) -> Result<(GeneralizationModel<P>, Vec<String>)> {
        let conv = |name: &str, x: f64| {
            P::from_float(x).ok_or_else(|| Error::InvalidModel(format!("{name} is not finite")))
        };
        let mut model = GeneralizationModel::new(
            conv("p_exact", self.p_exact)?,
            conv("p_compose", self.p_compose)?,
            conv("p_unseen_value", self.p_unseen_value)?,
        )?;
        if !self.physical_factors.is_empty() {
            let mult = self.physical_pair_multiplier.ok_or_else(|| {
                Error::InvalidModel("physical_factors needs physical_pair_multiplier".into())
            })?;
            model = model.with_factor_group_penalty(
                space,
                &self.physical_factors,
                conv("physical_pair_multiplier", mult)?,
            )?;
        }
        for pen in &self.pair_penalty {
            let idx = |name: &String| {
                space
                    .factor_index(name)
                    .ok_or_else(|| Error::UnknownFactor(name.clone()))
            };
            model = model.with_pair_penalty(
                idx(&pen.factors[0])?,
                idx(&pen.factors[1])?,
                conv("pair multiplier", pen.multiplier)?,
            )?;
        }
        if let Some(m0) = self.demo_saturation {
            model = model.with_demo_saturation(conv("demo_saturation", m0)?)?;
        }
        let mut warnings = model.warnings();
        if self.allow_unordered {
            warnings.retain(|w| !w.contains(" is below "));
        }
        Ok((model, warnings))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::{generate_plan, PlanEntry, PlanParams};
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn full(space: &FactorSpace, strategy: Strategy) -> CollectionPlan {
        generate_plan(space, strategy, PlanParams::default(), 1000, 2).unwrap()
    }

    #[test]
    fn exact_hit_returns_p_exact() {
        let space = FactorSpace::uniform(3, 3).unwrap();
        let plan = full(&space, Strategy::Stair);
        let model = GeneralizationModel::new(0.9, 0.5, 0.1).unwrap();
        let p = success_prob(&model, &plan, &space, &space.base_config()).unwrap();
        assert_eq!(p, 0.9);
    }

    #[test]
    fn degenerate_model_zero_off_plan() {
        let space = FactorSpace::uniform(2, 3).unwrap();
        let plan = full(&space, Strategy::Diagonal);
        let model = GeneralizationModel::new(1.0, 0.0, 0.0).unwrap();
        let oracle = Oracle::new(&model, &plan).unwrap();
        for c in space.enumerate_all().unwrap() {
            let expected = if plan.configs().any(|p| *p == c) { 1.0 } else { 0.0 };
            assert_eq!(oracle.success_prob(&c), expected);
        }
    }

    #[test]
    fn case_ladder_on_partial_l() {
        // N=2, k=3, L truncated so the last value of factor 1 is unseen
        let space = FactorSpace::uniform(2, 3).unwrap();
        let mut plan = full(&space, Strategy::L);
        plan.entries.truncate(4);
        let index = PlanIndex::new(&plan);
        let model = GeneralizationModel::new(1.0f64, 0.6, 0.2).unwrap();
        let oracle = Oracle::new(&model, &plan).unwrap();
        let mut saw_compose = false;
        let mut saw_missing = false;
        for c in space.enumerate_all().unwrap() {
            let p = oracle.success_prob(&c);
            if index.contains(&c) {
                assert_eq!(p, 1.0);
            } else if index.unseen_values(&c) == 0 {
                assert_eq!(p, 0.6);
                saw_compose = true;
            } else if index.unseen_values(&c) == 1 {
                assert!((p - 0.12f64).abs() < 1e-15);
                saw_missing = true;
            }
        }
        assert!(saw_compose && saw_missing);
    }

    #[test]
    fn pair_penalty_applies_to_unseen_pairs_only() {
        let space = FactorSpace::uniform(3, 2).unwrap();
        let plan = full(&space, Strategy::L);
        let model = GeneralizationModel::new(1.0, 0.8, 0.5)
            .unwrap()
            .with_pair_penalty(1, 0, 0.5)
            .unwrap();
        let oracle = Oracle::new(&model, &plan).unwrap();
        // (1,1,0) never appears in an L plan: values seen, pair (0,1) unseen
        let both = FactorConfig::new(vec![1, 1, 0]);
        assert_eq!(oracle.success_prob(&both), 0.4);
        // (1,0,1): pair (0,1) = (1,0) was seen
        let other = FactorConfig::new(vec![1, 0, 1]);
        assert_eq!(oracle.success_prob(&other), 0.8);
    }

    #[test]
    fn saturation_scales_by_demos() {
        let space = FactorSpace::uniform(2, 2).unwrap();
        let mut plan = full(&space, Strategy::NoVariation);
        plan.entries = vec![PlanEntry { config: space.base_config(), demos: 30 }];
        let model = GeneralizationModel::new(1.0, 0.5, 1.0)
            .unwrap()
            .with_demo_saturation(10.0)
            .unwrap();
        let oracle = Oracle::new(&model, &plan).unwrap();
        assert_eq!(oracle.success_prob(&space.base_config()), 0.75);
        assert_eq!(oracle.success_prob(&FactorConfig::new(vec![1, 1])), 0.5 * 0.75);
    }

    #[test]
    fn model_validation() {
        assert!(GeneralizationModel::new(1.2, 0.5, 0.1).is_err());
        assert!(GeneralizationModel::new(0.5, -0.1, 0.1).is_err());
        let m = GeneralizationModel::new(0.5, 0.8, 0.9).unwrap();
        assert_eq!(m.warnings().len(), 2);
        assert!(m.clone().with_pair_penalty(1, 1, 0.5).is_err());
        assert!(m.with_demo_saturation(-1.0).is_err());
    }

    #[test]
    fn exact_examples() {
        let space = FactorSpace::uniform(2, 4).unwrap();
        let stair = full(&space, Strategy::Stair);
        let all_one = GeneralizationModel::new(1.0, 1.0, 0.3).unwrap();
        let r = expected_exact(&all_one, &stair, &space).unwrap();
        assert_eq!(r.expected_success, 1.0);
        assert_eq!(r.compositional_success, Some(1.0));
        assert_eq!(r.standard_error, None);

        let verbatim = GeneralizationModel::new(1.0, 0.0, 0.0).unwrap();
        let r = expected_exact(&verbatim, &stair, &space).unwrap();
        assert_eq!(r.expected_success, stair.unique_configs().len() as f64 / 16.0);
        assert_eq!(r.compositional_success, Some(0.0));

        let nv = full(&space, Strategy::NoVariation);
        let r = expected_exact(&all_one, &nv, &space).unwrap();
        assert_eq!(r.compositional_success, None);
    }

    #[test]
    fn rational_evaluation_is_exact() {
        let space = FactorSpace::uniform(3, 3).unwrap();
        let plan = full(&space, Strategy::L);
        let q = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
        let model = GeneralizationModel::new(q(1, 1), q(0, 1), q(0, 1)).unwrap();
        let r = expected_exact(&model, &plan, &space).unwrap();
        assert_eq!(r.expected_success, q(7, 27));

        let model = GeneralizationModel::new(q(9, 10), q(3, 5), q(1, 3)).unwrap();
        let exact = expected_exact(&model, &plan, &space).unwrap();
        let float_model = GeneralizationModel::new(0.9, 0.6, 1.0 / 3.0).unwrap();
        let float = expected_exact(&float_model, &plan, &space).unwrap();
        assert!((exact.expected_success.as_f64() - float.expected_success).abs() < 1e-12);
    }

    #[test]
    fn exact_size_cap() {
        let space = FactorSpace::uniform(7, 10).unwrap();
        let plan = full(&space, Strategy::NoVariation);
        let model = GeneralizationModel::new(1.0, 0.5, 0.5).unwrap();
        assert!(matches!(
            expected_exact(&model, &plan, &space),
            Err(Error::SpaceTooLarge { .. })
        ));
        // monte carlo still works
        let r = expected_monte_carlo(&model, &plan, &space, 1000, 3).unwrap();
        assert!(r.standard_error.is_some());
    }

    #[test]
    fn stderr_formula() {
        let (m, se) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        // sample variance 5/3, se = sqrt(5/12)
        assert!((se.unwrap() - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_stderr(&[0.4]).1, None);
    }

    #[test]
    fn single_cell_matches_direct_call() {
        let space = FactorSpace::uniform(2, 5).unwrap();
        let model = GeneralizationModel::new(0.95, 0.8, 0.1).unwrap();
        let rows = compare_strategies(&Comparison {
            space: &space,
            model: &model,
            budgets: &[6],
            total_demos: 100,
            strategies: &[Strategy::Stair],
            seeds: &[4],
            mode: CompareMode::Exact,
        })
        .unwrap();
        assert_eq!(rows.len(), 1);
        let plan = plan_at_rate(&space, Strategy::Stair, 6, 100, 4).unwrap();
        let direct = expected_exact(&model, &plan, &space).unwrap();
        assert_eq!(rows[0].mean, direct.expected_success);
        assert_eq!(rows[0].compositional_mean, direct.compositional_success);
        assert_eq!(rows[0].stderr, None);
    }

    #[test]
    fn model_document() {
        let space = FactorSpace::uniform(3, 2).unwrap();
        let doc = ModelDocument::parse(
            r#"{"p_exact":0.9,"p_compose":0.7,"p_unseen_value":0.2,
                "physical_factors":["f0","f2"],"physical_pair_multiplier":0.5,
                "pair_penalty":[{"factors":["f1","f2"],"multiplier":0.8}]}"#,
        )
        .unwrap();
        let (model, warnings) = doc.into_model::<f64>(&space).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(model.pair_penalty.get(&(0, 2)), Some(&0.5));
        assert_eq!(model.pair_penalty.get(&(1, 2)), Some(&0.8));

        let bad = ModelDocument::parse(r#"{"p_exact":0.9,"p_compose":0.7,"p_unseen_value":0.2,"physical_factors":["zz"],"physical_pair_multiplier":0.5}"#).unwrap();
        assert!(matches!(bad.into_model::<f64>(&space), Err(Error::UnknownFactor(_))));
        assert!(ModelDocument::parse(r#"{"p_exact":0.9}"#).is_err());
    }
}
