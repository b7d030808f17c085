//! Multi-parameter Bayesian instances: per-agent service sets, a feasibility
//! predicate over joint allocations, finite valuation supports and
//! independent priors.

pub mod file;
mod valuation;

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use valuation::{generate, ItemSet, SetValuation};

/// One service index per agent.
pub type Allocation = Vec<usize>;

pub const PROBABILITY_TOLERANCE: f64 = 1e-12;
pub const MAX_ITEMS: usize = 20;

/// Valuation of a single support point, mapping a service index to a value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Valuation {
    Table { values: Vec<f64> },
    Set(SetValuation),
}

impl Valuation {
    pub fn table(values: Vec<f64>) -> Self {
        Valuation::Table { values }
    }

    pub fn value(&self, service: usize) -> f64 {
        match self {
            Valuation::Table { values } => values.get(service).copied().unwrap_or(0.0),
            Valuation::Set(v) => v.value(ItemSet(service as u32)),
        }
    }

    pub fn as_set(&self) -> Option<&SetValuation> {
        match self {
            Valuation::Set(v) => Some(v),
            Valuation::Table { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Feasibility {
    /// Every joint allocation is feasible.
    #[serde(rename = "matroid-free", alias = "unrestricted")]
    Unrestricted,
    /// Services are item bitmasks; the chosen sets must be pairwise disjoint.
    Partition { items: usize },
    /// Only the listed joint allocations are feasible.
    Explicit { allocations: Vec<Allocation> },
}

/// Realized type index per agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValuationProfile(pub Vec<usize>);

impl Deref for ValuationProfile {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismInstance {
    services: Vec<usize>,
    null_service: Option<usize>,
    feasibility: Feasibility,
    valuations: Vec<Vec<Valuation>>,
    priors: Vec<Vec<f64>>,
}

impl MechanismInstance {
    /// Validates and builds an instance. Ragged supports are padded with
    /// zero-probability copies of the agent's last support point so that
    /// every agent has the same support size.
    pub fn build(
        services: Vec<usize>,
        null_service: Option<usize>,
        feasibility: Feasibility,
        mut valuations: Vec<Vec<Valuation>>,
        mut priors: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = valuations.len();
        if n == 0 {
            return Err(Error::InvalidInstance("no agents".into()));
        }
        if priors.len() != n {
            return Err(Error::InvalidInstance(format!(
                "{} prior vectors for {n} agents",
                priors.len()
            )));
        }
        let services = match &feasibility {
            Feasibility::Partition { items } => {
                if *items > MAX_ITEMS {
                    return Err(Error::TooManyItems {
                        items: *items,
                        limit: MAX_ITEMS,
                    });
                }
                vec![1usize << items; n]
            }
            _ if services.len() == 1 && n > 1 => vec![services[0]; n],
            _ => services,
        };
        let null_service = match &feasibility {
            Feasibility::Partition { .. } => Some(0),
            _ => null_service,
        };
        if services.len() != n {
            return Err(Error::InvalidInstance(format!(
                "{} service counts for {n} agents",
                services.len()
            )));
        }
        if services.contains(&0) {
            return Err(Error::InvalidInstance("agent with no services".into()));
        }
        if let Some(null) = null_service {
            if services.iter().any(|&k| null >= k) {
                return Err(Error::InvalidInstance("null service index out of range".into()));
            }
        }

        for (i, (support, prior)) in valuations.iter().zip(&priors).enumerate() {
            if support.is_empty() || prior.is_empty() {
                return Err(Error::EmptySupport { agent: i });
            }
            if support.len() != prior.len() {
                return Err(Error::InvalidInstance(format!(
                    "agent {i}: {} support points but {} probabilities",
                    support.len(),
                    prior.len()
                )));
            }
            if prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidInstance(format!("agent {i}: negative probability")));
            }
            let sum: f64 = prior.iter().sum();
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(Error::ProbabilitySumMismatch { agent: i, sum });
            }
            for valuation in support {
                match valuation {
                    Valuation::Table { values } => {
                        if matches!(feasibility, Feasibility::Partition { .. }) {
                            return Err(Error::InvalidInstance("partition instances need set valuations".into()));
                        }
                        if values.len() != services[i] {
                            return Err(Error::InvalidInstance(format!(
                                "agent {i}: valuation table has {} entries for {} services",
                                values.len(),
                                services[i]
                            )));
                        }
                        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                            return Err(Error::InvalidInstance(format!(
                                "agent {i}: values must be finite and non-negative"
                            )));
                        }
                    }
                    Valuation::Set(v) => {
                        v.validate()?;
                        match feasibility {
                            Feasibility::Partition { items } if v.items() <= items => {}
                            _ => {
                                return Err(Error::InvalidInstance(format!(
                                    "agent {i}: set valuation over {} items does not match the instance",
                                    v.items()
                                )))
                            }
                        }
                    }
                }
                if let Some(null) = null_service {
                    if valuation.value(null) != 0.0 {
                        return Err(Error::InvalidInstance(format!(
                            "agent {i}: null service must have value 0"
                        )));
                    }
                }
            }
        }

        match &feasibility {
            Feasibility::Explicit { allocations } => {
                if allocations.is_empty() {
                    return Err(Error::InfeasibleInstance);
                }
                for a in allocations {
                    if a.len() != n || a.iter().zip(&services).any(|(&s, &k)| s >= k) {
                        return Err(Error::InvalidInstance(format!(
                            "explicit allocation {a:?} out of range"
                        )));
                    }
                }
            }
            Feasibility::Unrestricted | Feasibility::Partition { .. } => {}
        }

        let ell = valuations.iter().map(Vec::len).max().unwrap_or(0);
        for (support, prior) in valuations.iter_mut().zip(priors.iter_mut()) {
            let last = support.last().cloned().expect("non-empty support");
            support.resize(ell, last);
            prior.resize(ell, 0.0);
        }

        Ok(MechanismInstance {
            services,
            null_service,
            feasibility,
            valuations,
            priors,
        })
    }

    pub fn agents(&self) -> usize {
        self.valuations.len()
    }

    /// Common support size.
    pub fn types(&self) -> usize {
        self.valuations[0].len()
    }

    pub fn services(&self, agent: usize) -> usize {
        self.services[agent]
    }

    pub fn null_service(&self) -> Option<usize> {
        self.null_service
    }

    pub fn feasibility(&self) -> &Feasibility {
        &self.feasibility
    }

    pub fn prior(&self, agent: usize) -> &[f64] {
        &self.priors[agent]
    }

    pub fn priors(&self) -> &[Vec<f64>] {
        &self.priors
    }

    pub fn valuation(&self, agent: usize, type_index: usize) -> &Valuation {
        &self.valuations[agent][type_index]
    }

    pub fn value(&self, agent: usize, type_index: usize, service: usize) -> f64 {
        self.valuations[agent][type_index].value(service)
    }

    /// Number of items when the instance is a combinatorial auction.
    pub fn items(&self) -> Option<usize> {
        match self.feasibility {
            Feasibility::Partition { items } => Some(items),
            _ => None,
        }
    }

    pub fn v_max(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, support) in self.valuations.iter().enumerate() {
            for valuation in support {
                let top = match valuation {
                    Valuation::Table { values } => values.iter().copied().fold(0.0, f64::max),
                    // monotone, so the full set is the maximum
                    Valuation::Set(v) => v.value(ItemSet::full(v.items())),
                };
                debug_assert!(self.services[i] > 0);
                best = best.max(top);
            }
        }
        best
    }

    /// Smallest positive prior probability over all agents and types.
    pub fn granularity(&self) -> f64 {
        self.priors
            .iter()
            .flatten()
            .copied()
            .filter(|&p| p > 0.0)
            .fold(1.0, f64::min)
    }

    pub fn is_feasible(&self, allocation: &[usize]) -> bool {
        if allocation.len() != self.agents() || allocation.iter().zip(&self.services).any(|(&s, &k)| s >= k) {
            return false;
        }
        match &self.feasibility {
            Feasibility::Unrestricted => true,
            Feasibility::Partition { .. } => {
                let mut taken = 0u32;
                for &s in allocation {
                    if taken & s as u32 != 0 {
                        return false;
                    }
                    taken |= s as u32;
                }
                true
            }
            Feasibility::Explicit { allocations } => allocations.iter().any(|a| a == allocation),
        }
    }

    /// The all-null allocation, when a null service exists and it is feasible.
    pub fn null_allocation(&self) -> Option<Allocation> {
        let null = self.null_service?;
        let a = vec![null; self.agents()];
        self.is_feasible(&a).then_some(a)
    }

    /// Whether replacing any agent's service by the null service keeps a
    /// feasible allocation feasible.
    pub fn is_downward_closed(&self) -> bool {
        let Some(null) = self.null_service else {
            return false;
        };
        match &self.feasibility {
            Feasibility::Unrestricted | Feasibility::Partition { .. } => true,
            Feasibility::Explicit { allocations } => allocations.iter().all(|a| {
                (0..a.len()).all(|i| {
                    let mut b = a.clone();
                    b[i] = null;
                    allocations.contains(&b)
                })
            }),
        }
    }

    /// Number of feasible joint allocations that `feasible_allocations`
    /// would enumerate (for partition instances, item-to-agent maps).
    pub fn allocation_space(&self) -> u128 {
        match &self.feasibility {
            Feasibility::Unrestricted => self.services.iter().map(|&k| k as u128).product(),
            Feasibility::Partition { items } => (self.agents() as u128 + 1).pow(*items as u32),
            Feasibility::Explicit { allocations } => allocations.len() as u128,
        }
    }

    /// All feasible joint allocations in a fixed order, refusing when there
    /// are more than `limit`.
    pub fn feasible_allocations(&self, limit: u128) -> Result<Vec<Allocation>> {
        let required = self.allocation_space();
        if required > limit {
            return Err(Error::EnumerationTooLarge { required, limit });
        }
        let n = self.agents();
        Ok(match &self.feasibility {
            Feasibility::Unrestricted => Odometer::new(self.services.clone()).collect(),
            Feasibility::Partition { items } => Odometer::new(vec![n + 1; *items])
                .map(|owners| {
                    let mut a = vec![0usize; n];
                    for (j, &owner) in owners.iter().enumerate() {
                        if owner < n {
                            a[owner] |= 1 << j;
                        }
                    }
                    a
                })
                .collect(),
            Feasibility::Explicit { allocations } => allocations.clone(),
        })
    }

    pub fn sample_profile<R: Rng + ?Sized>(&self, rng: &mut R) -> ValuationProfile {
        ValuationProfile(self.priors.iter().map(|f| sample_index(f, rng)).collect())
    }

    pub fn profile_probability(&self, profile: &[usize]) -> f64 {
        profile.iter().enumerate().map(|(i, &t)| self.priors[i][t]).product()
    }

    /// Every type profile with positive probability, paired with that
    /// probability, in lexicographic order.
    pub fn profiles(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        Odometer::new(vec![self.types(); self.agents()]).filter_map(move |profile| {
            let p = self.profile_probability(&profile);
            (p > 0.0).then_some((profile, p))
        })
    }

    /// Profiles of every agent except `agent`, with the slot for `agent`
    /// filled by `fixed`.
    pub fn opponent_profiles(&self, agent: usize, fixed: usize) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        let mut radices = vec![self.types(); self.agents()];
        radices[agent] = 1;
        Odometer::new(radices).filter_map(move |mut profile| {
            profile[agent] = fixed;
            let p: f64 = profile
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != agent)
                .map(|(j, &t)| self.priors[j][t])
                .product();
            (p > 0.0).then_some((profile, p))
        })
    }

    pub fn with_priors(&self, priors: Vec<Vec<f64>>) -> Result<Self> {
        MechanismInstance::build(
            self.services.clone(),
            self.null_service,
            self.feasibility.clone(),
            self.valuations.clone(),
            priors,
        )
    }

    pub fn scaled_agent(&self, agent: usize, factor: f64) -> Result<Self> {
        let mut valuations = self.valuations.clone();
        for v in &mut valuations[agent] {
            *v = match v {
                Valuation::Table { values } => Valuation::table(values.iter().map(|x| x * factor).collect()),
                Valuation::Set(_) => {
                    return Err(Error::InvalidInstance("scaling supports table valuations only".into()))
                }
            };
        }
        MechanismInstance::build(
            self.services.clone(),
            self.null_service,
            self.feasibility.clone(),
            valuations,
            self.priors.clone(),
        )
    }
}

/// Draws an index with probability proportional to `weights`.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if target < w {
                return k;
            }
            target -= w;
            last_positive = k;
        }
    }
    last_positive
}

/// Mixed-radix counter over `0..radix[0] × 0..radix[1] × …`, last digit fastest.
#[derive(Clone, Debug)]
pub struct Odometer {
    radices: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Odometer {
    pub fn new(radices: Vec<usize>) -> Self {
        let next = (!radices.contains(&0)).then(|| vec![0; radices.len()]);
        Odometer { radices, next }
    }
}

impl Iterator for Odometer {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut following = current.clone();
        let mut k = following.len();
        loop {
            if k == 0 {
                break;
            }
            k -= 1;
            following[k] += 1;
            if following[k] < self.radices[k] {
                self.next = Some(following);
                break;
            }
            following[k] = 0;
        }
        Some(current)
    }
}
