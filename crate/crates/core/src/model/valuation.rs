use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Subset of at most 32 items, bit `j` set when item `j` is present.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemSet(pub u32);

impl ItemSet {
    pub const EMPTY: ItemSet = ItemSet(0);

    pub fn full(items: usize) -> Self {
        if items >= 32 {
            ItemSet(u32::MAX)
        } else {
            ItemSet((1u32 << items) - 1)
        }
    }

    pub fn from_items(items: &[usize]) -> Self {
        ItemSet(items.iter().fold(0, |acc, &j| acc | (1 << j)))
    }

    pub fn contains(self, item: usize) -> bool {
        self.0 >> item & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: ItemSet) -> ItemSet {
        ItemSet(self.0 | other.0)
    }

    pub fn intersects(self, other: ItemSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset_of(self, other: ItemSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn insert(&mut self, item: usize) {
        self.0 |= 1 << item;
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..32).filter(move |j| bits >> j & 1 == 1)
    }
}

impl fmt::Debug for ItemSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Combinatorial-auction valuation over `weights.len()` items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetValuation {
    Additive { weights: Vec<f64> },
    UnitDemand { weights: Vec<f64> },
    BudgetAdditive { weights: Vec<f64>, budget: f64 },
    Xos { clauses: Vec<Vec<f64>> },
}

fn clause_sum(clause: &[f64], set: ItemSet) -> f64 {
    set.iter().filter_map(|j| clause.get(j)).sum()
}

impl SetValuation {
    pub fn items(&self) -> usize {
        match self {
            SetValuation::Additive { weights }
            | SetValuation::UnitDemand { weights }
            | SetValuation::BudgetAdditive { weights, .. } => weights.len(),
            SetValuation::Xos { clauses } => clauses.iter().map(Vec::len).max().unwrap_or(0),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SetValuation::Additive { .. } => "additive",
            SetValuation::UnitDemand { .. } => "unit-demand",
            SetValuation::BudgetAdditive { .. } => "budget-additive",
            SetValuation::Xos { .. } => "xos",
        }
    }

    pub fn value(&self, set: ItemSet) -> f64 {
        match self {
            SetValuation::Additive { weights } => clause_sum(weights, set),
            SetValuation::UnitDemand { weights } => {
                set.iter().filter_map(|j| weights.get(j).copied()).fold(0.0, f64::max)
            }
            SetValuation::BudgetAdditive { weights, budget } => clause_sum(weights, set).min(*budget),
            SetValuation::Xos { clauses } => clauses.iter().map(|c| clause_sum(c, set)).fold(0.0, f64::max),
        }
    }

    /// Additive clauses whose pointwise maximum is this valuation, when it
    /// is XOS. Additive valuations have one clause; unit-demand valuations
    /// have one single-item clause per item.
    pub fn clauses(&self) -> Result<Vec<Vec<f64>>> {
        match self {
            SetValuation::Additive { weights } => Ok(vec![weights.clone()]),
            SetValuation::UnitDemand { weights } => Ok((0..weights.len())
                .map(|j| {
                    let mut clause = vec![0.0; weights.len()];
                    clause[j] = weights[j];
                    clause
                })
                .collect()),
            SetValuation::Xos { clauses } => Ok(clauses.clone()),
            SetValuation::BudgetAdditive { .. } => Err(Error::NotXos),
        }
    }

    /// Supporting additive vector for `set`: the lowest-index maximizing
    /// clause, zeroed outside `set`. Its sum equals `self.value(set)`.
    pub fn supporting_vector(&self, set: ItemSet) -> Result<Vec<f64>> {
        let items = self.items();
        let mut best: Option<(f64, Vec<f64>)> = None;
        match self {
            SetValuation::UnitDemand { weights } => {
                let mut support = vec![0.0; items];
                let winner = set.iter().filter(|&j| j < items).fold(None::<usize>, |b, j| match b {
                    Some(k) if weights[k] >= weights[j] => Some(k),
                    _ => Some(j),
                });
                if let Some(j) = winner {
                    support[j] = weights[j];
                }
                return Ok(support);
            }
            _ => {
                for clause in self.clauses()? {
                    let total = clause_sum(&clause, set);
                    if best.as_ref().is_none_or(|(b, _)| total > *b) {
                        best = Some((total, clause));
                    }
                }
            }
        }
        let clause = best.map(|(_, c)| c).unwrap_or_default();
        Ok((0..items)
            .map(|j| {
                if set.contains(j) {
                    clause.get(j).copied().unwrap_or(0.0)
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn is_xos(&self) -> bool {
        !matches!(self, SetValuation::BudgetAdditive { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0);
        let fine = match self {
            SetValuation::Additive { weights } | SetValuation::UnitDemand { weights } => ok(weights),
            SetValuation::BudgetAdditive { weights, budget } => ok(weights) && budget.is_finite() && *budget >= 0.0,
            SetValuation::Xos { clauses } => !clauses.is_empty() && clauses.iter().all(|c| ok(c)),
        };
        if fine {
            Ok(())
        } else {
            Err(Error::InvalidInstance(format!(
                "{} valuation has negative, non-finite or missing parameters",
                self.kind()
            )))
        }
    }
}

/// Random valuation generators for experiments and tests. Weights are
/// multiples of 1/4 in `[0, max_weight]` so that sums stay exact in `f64`.
pub mod generate {
    use super::*;

    fn quarter<R: Rng + ?Sized>(rng: &mut R, max_weight: u32) -> f64 {
        rng.gen_range(0..=4 * max_weight) as f64 / 4.0
    }

    fn weights<R: Rng + ?Sized>(rng: &mut R, items: usize, max_weight: u32) -> Vec<f64> {
        (0..items).map(|_| quarter(rng, max_weight)).collect()
    }

    pub fn additive<R: Rng + ?Sized>(rng: &mut R, items: usize, max_weight: u32) -> SetValuation {
        SetValuation::Additive {
            weights: weights(rng, items, max_weight),
        }
    }

    pub fn unit_demand<R: Rng + ?Sized>(rng: &mut R, items: usize, max_weight: u32) -> SetValuation {
        SetValuation::UnitDemand {
            weights: weights(rng, items, max_weight),
        }
    }

    pub fn budget_additive<R: Rng + ?Sized>(rng: &mut R, items: usize, max_weight: u32) -> SetValuation {
        let weights = weights(rng, items, max_weight);
        let total: f64 = weights.iter().sum();
        let budget = (total * rng.gen_range(0.3..0.9) * 4.0).round() / 4.0;
        SetValuation::BudgetAdditive { weights, budget }
    }

    pub fn xos<R: Rng + ?Sized>(rng: &mut R, items: usize, clauses: usize, max_weight: u32) -> SetValuation {
        SetValuation::Xos {
            clauses: (0..clauses.max(1)).map(|_| weights(rng, items, max_weight)).collect(),
        }
    }
}
