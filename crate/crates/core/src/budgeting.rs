//! Factor-change accounting and demonstration allocation.
//!
//! Declared cost follows the fixed convention: the first entry costs one
//! change per factor, and every later entry costs one change for
//! single-factor-step strategies or `N` changes for strategies that resample
//! all factors. Hamming cost counts the changes actually needed to move
//! between consecutive entries.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::{hamming_distance, FactorSpace};
use crate::strategies::{CollectionPlan, Strategy};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostLedger {
    pub initial_changes: usize,
    /// Declared cost of each entry after the first.
    pub per_entry_changes: Vec<usize>,
    pub declared_total: usize,
    pub hamming_total: usize,
    /// For Complete plans, the entry count itself (one change per
    /// combination). The convention total exceeds it by N - 1.
    pub nominal_total: Option<usize>,
}

pub fn declared_cost(plan: &CollectionPlan) -> Result<CostLedger> {
    if plan.entries.is_empty() {
        return Err(Error::EmptyPlan);
    }
    let n = plan.num_factors();
    let step = plan.strategy.step_cost(n);
    let per_entry_changes = vec![step; plan.entries.len() - 1];
    let declared_total = n + per_entry_changes.iter().sum::<usize>();
    Ok(CostLedger {
        initial_changes: n,
        per_entry_changes,
        declared_total,
        hamming_total: hamming_cost(plan)?,
        nominal_total: (plan.strategy == Strategy::Complete).then_some(plan.entries.len()),
    })
}

pub fn hamming_cost(plan: &CollectionPlan) -> Result<usize> {
    if plan.entries.is_empty() {
        return Err(Error::EmptyPlan);
    }
    plan.entries
        .windows(2)
        .try_fold(plan.num_factors(), |acc, pair| {
            Ok(acc + hamming_distance(&pair[0].config, &pair[1].config)?)
        })
}

/// Largest entry count a strategy can produce on `space` (deduplicated).
pub fn max_entries(strategy: Strategy, space: &FactorSpace) -> Result<usize> {
    Ok(match strategy {
        Strategy::Complete | Strategy::Random => space.cardinality()?,
        Strategy::SingleFactor(i) => {
            if i >= space.num_factors() {
                return Err(Error::FactorIndex {
                    index: i,
                    count: space.num_factors(),
                });
            }
            space.factor(i).len()
        }
        Strategy::Diagonal => space
            .uniform_count()
            .ok_or_else(|| Error::UnequalValueCounts {
                strategy: strategy.to_string(),
            })?,
        Strategy::L | Strategy::Stair => {
            1 + space.factors().iter().map(|f| f.len() - 1).sum::<usize>()
        }
        Strategy::NoVariation => 1,
    })
}

/// Number of entries whose declared cost fits in `change_budget`.
pub fn configs_for_budget(
    strategy: Strategy,
    space: &FactorSpace,
    change_budget: usize,
) -> Result<usize> {
    let n = space.num_factors();
    if change_budget < n {
        return Err(Error::BudgetTooSmall {
            budget: change_budget,
            minimum: n,
        });
    }
    let affordable = (change_budget - n) / strategy.step_cost(n) + 1;
    Ok(affordable.min(max_entries(strategy, space)?))
}

/// Even split with the remainder on the last entry.
pub fn allocate_demos(num_entries: usize, total_demos: usize) -> Result<Vec<usize>> {
    if num_entries == 0 {
        return Err(Error::EmptyPlan);
    }
    if total_demos < num_entries {
        return Err(Error::InsufficientDemos {
            demos: total_demos,
            entries: num_entries,
        });
    }
    let each = total_demos / num_entries;
    let mut out = vec![each; num_entries];
    out[num_entries - 1] += total_demos % num_entries;
    Ok(out)
}

/// One row of the cost CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostRow {
    pub strategy: String,
    pub entries: usize,
    pub declared_total: usize,
    pub hamming_total: usize,
    pub budget: Option<usize>,
}

impl CostRow {
    pub fn for_plan(plan: &CollectionPlan) -> Result<Self> {
        let ledger = declared_cost(plan)?;
        Ok(Self {
            strategy: plan.strategy.to_string(),
            entries: plan.entries.len(),
            declared_total: ledger.declared_total,
            hamming_total: ledger.hamming_total,
            budget: plan.budget,
        })
    }
}
