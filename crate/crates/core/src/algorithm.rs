//! Allocation algorithms: maps from a type profile to a feasible allocation.
//!
//! Randomized algorithms that can list their outcome distribution exactly
//! return it from [`AllocationAlgorithm::distribution`]; the verifiers use it
//! to integrate over the algorithm's randomness instead of sampling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{sample_index, Allocation, Feasibility, MechanismInstance, Odometer};

/// Largest feasible set enumerated when an algorithm needs the full list.
pub const ALLOCATION_LIMIT: u128 = 1 << 22;

pub trait AllocationAlgorithm: Send + Sync {
    fn name(&self) -> String;

    fn is_deterministic(&self) -> bool;

    fn allocate(&self, instance: &MechanismInstance, profile: &[usize], rng: &mut dyn RngCore) -> Allocation;

    /// Outcome lottery on `profile` as `(probability, allocation)` pairs, or
    /// `None` when the randomness domain is not finite and explicit.
    fn distribution(&self, instance: &MechanismInstance, profile: &[usize]) -> Option<Vec<(f64, Allocation)>> {
        if self.is_deterministic() {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            Some(vec![(1.0, self.allocate(instance, profile, &mut rng))])
        } else {
            None
        }
    }
}

fn welfare(instance: &MechanismInstance, profile: &[usize], allocation: &[usize]) -> f64 {
    allocation
        .iter()
        .enumerate()
        .map(|(i, &s)| instance.value(i, profile[i], s))
        .sum()
}

/// Agents pick in a fixed order; each takes a most valuable service that can
/// still be completed to a feasible allocation. Ties go to the lowest
/// service index.
#[derive(Clone, Debug)]
pub struct SerialDictator {
    order: Vec<usize>,
    feasible: Option<Vec<Allocation>>,
}

impl SerialDictator {
    pub fn new(instance: &MechanismInstance) -> Result<Self> {
        Self::with_order(instance, (0..instance.agents()).collect())
    }

    pub fn with_order(instance: &MechanismInstance, order: Vec<usize>) -> Result<Self> {
        let feasible = match instance.feasibility() {
            Feasibility::Partition { .. } => None,
            _ => Some(instance.feasible_allocations(ALLOCATION_LIMIT)?),
        };
        Ok(SerialDictator { order, feasible })
    }

    fn pick(&self, instance: &MechanismInstance, profile: &[usize], order: &[usize]) -> Allocation {
        let n = instance.agents();
        match &self.feasible {
            None => {
                let items = instance.items().unwrap_or(0);
                let mut free = (1usize << items) - 1;
                let mut allocation = vec![0usize; n];
                for &i in order {
                    let mut best = (0usize, instance.value(i, profile[i], 0));
                    let mut set = free;
                    // Walk the submasks of the free items in increasing order.
                    let mut sub = 0usize;
                    loop {
                        let v = instance.value(i, profile[i], sub);
                        if v > best.1 || (v == best.1 && sub < best.0) {
                            best = (sub, v);
                        }
                        if sub == set {
                            break;
                        }
                        sub = (sub.wrapping_sub(set)) & set;
                    }
                    set = best.0;
                    allocation[i] = set;
                    free &= !set;
                }
                allocation
            }
            Some(feasible) => {
                let mut candidates: Vec<&Allocation> = feasible.iter().collect();
                for &i in order {
                    let best = candidates
                        .iter()
                        .map(|a| instance.value(i, profile[i], a[i]))
                        .fold(f64::NEG_INFINITY, f64::max);
                    let service = candidates
                        .iter()
                        .filter(|a| instance.value(i, profile[i], a[i]) == best)
                        .map(|a| a[i])
                        .min()
                        .expect("feasible set is non-empty");
                    candidates.retain(|a| a[i] == service);
                }
                candidates[0].clone()
            }
        }
    }
}

impl AllocationAlgorithm for SerialDictator {
    fn name(&self) -> String {
        "serial-dictator".into()
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn allocate(&self, instance: &MechanismInstance, profile: &[usize], _rng: &mut dyn RngCore) -> Allocation {
        self.pick(instance, profile, &self.order)
    }
}

/// Serial dictatorship under a uniformly random order.
#[derive(Clone, Debug)]
pub struct RandomSerialDictator {
    inner: SerialDictator,
    orders: Vec<Vec<usize>>,
}

impl RandomSerialDictator {
    pub fn new(instance: &MechanismInstance) -> Result<Self> {
        let n = instance.agents();
        let orders: Vec<Vec<usize>> = Odometer::new(vec![n; n])
            .filter(|o| {
                let mut seen = vec![false; n];
                o.iter().all(|&i| !std::mem::replace(&mut seen[i], true))
            })
            .collect();
        Ok(RandomSerialDictator {
            inner: SerialDictator::new(instance)?,
            orders,
        })
    }
}

impl AllocationAlgorithm for RandomSerialDictator {
    fn name(&self) -> String {
        "random-serial-dictator".into()
    }

    fn is_deterministic(&self) -> bool {
        self.orders.len() == 1
    }

    fn allocate(&self, instance: &MechanismInstance, profile: &[usize], rng: &mut dyn RngCore) -> Allocation {
        let order = &self.orders[rng.gen_range(0..self.orders.len())];
        self.inner.pick(instance, profile, order)
    }

    fn distribution(&self, instance: &MechanismInstance, profile: &[usize]) -> Option<Vec<(f64, Allocation)>> {
        let weight = 1.0 / self.orders.len() as f64;
        Some(
            self.orders
                .iter()
                .map(|o| (weight, self.inner.pick(instance, profile, o)))
                .collect(),
        )
    }
}

/// Always returns the same allocation.
#[derive(Clone, Debug)]
pub struct Constant {
    allocation: Allocation,
}

impl Constant {
    pub fn new(instance: &MechanismInstance, allocation: Allocation) -> Result<Self> {
        if !instance.is_feasible(&allocation) {
            return Err(Error::InvalidInstance(format!(
                "constant allocation {allocation:?} is infeasible"
            )));
        }
        Ok(Constant { allocation })
    }

    /// The all-null allocation.
    pub fn null(instance: &MechanismInstance) -> Result<Self> {
        let allocation = instance.null_allocation().ok_or(Error::NotDownwardClosed)?;
        Ok(Constant { allocation })
    }
}

impl AllocationAlgorithm for Constant {
    fn name(&self) -> String {
        "constant".into()
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn allocate(&self, _instance: &MechanismInstance, _profile: &[usize], _rng: &mut dyn RngCore) -> Allocation {
        self.allocation.clone()
    }
}

/// Welfare-maximizing allocation on the reported profile, first in
/// enumeration order among ties.
#[derive(Clone, Debug)]
pub struct OptimalBruteforce {
    feasible: Option<Vec<Allocation>>,
}

impl OptimalBruteforce {
    pub fn new(instance: &MechanismInstance) -> Result<Self> {
        let feasible = match instance.feasibility() {
            Feasibility::Partition { .. } => None,
            _ => Some(instance.feasible_allocations(ALLOCATION_LIMIT)?),
        };
        Ok(OptimalBruteforce { feasible })
    }

    pub fn best(&self, instance: &MechanismInstance, profile: &[usize]) -> (f64, Allocation) {
        match &self.feasible {
            Some(feasible) => {
                let mut best: Option<(f64, &Allocation)> = None;
                for a in feasible {
                    let w = welfare(instance, profile, a);
                    if best.is_none_or(|(b, _)| w > b) {
                        best = Some((w, a));
                    }
                }
                let (w, a) = best.expect("feasible set is non-empty");
                (w, a.clone())
            }
            None => partition_optimum(instance, profile),
        }
    }
}

/// Subset dynamic program over items: `table[i][mask]` is the best welfare
/// of giving the items in `mask` to agents `0..i`.
fn partition_optimum(instance: &MechanismInstance, profile: &[usize]) -> (f64, Allocation) {
    let n = instance.agents();
    let full = (1usize << instance.items().unwrap_or(0)) - 1;
    let mut table = vec![vec![0.0f64; full + 1]; n + 1];
    let mut choice = vec![vec![0usize; full + 1]; n + 1];
    for i in 0..n {
        for mask in 0..=full {
            let mut best = f64::NEG_INFINITY;
            let mut pick = 0usize;
            let mut sub = 0usize;
            loop {
                let w = table[i][mask & !sub] + instance.value(i, profile[i], sub);
                if w > best {
                    best = w;
                    pick = sub;
                }
                if sub == mask {
                    break;
                }
                sub = (sub.wrapping_sub(mask)) & mask;
            }
            table[i + 1][mask] = best;
            choice[i + 1][mask] = pick;
        }
    }
    let mut allocation = vec![0usize; n];
    let mut mask = full;
    for i in (0..n).rev() {
        allocation[i] = choice[i + 1][mask];
        mask &= !allocation[i];
    }
    (table[n][full], allocation)
}

impl AllocationAlgorithm for OptimalBruteforce {
    fn name(&self) -> String {
        "optimal-bruteforce".into()
    }

    fn is_deterministic(&self) -> bool {
        true
    }

    fn allocate(&self, instance: &MechanismInstance, profile: &[usize], _rng: &mut dyn RngCore) -> Allocation {
        self.best(instance, profile).1
    }
}

/// Serves each agent independently with a probability that depends only on
/// its own report. Services are `0` (null) and `1` (served).
#[derive(Clone, Debug)]
pub struct TypeLottery {
    serve: Vec<Vec<f64>>,
}

impl TypeLottery {
    pub fn new(instance: &MechanismInstance, serve: Vec<Vec<f64>>) -> Result<Self> {
        let shaped = serve.len() == instance.agents()
            && serve.iter().all(|row| row.len() == instance.types())
            && (0..instance.agents()).all(|i| instance.services(i) == 2)
            && matches!(instance.feasibility(), Feasibility::Unrestricted);
        if !shaped {
            return Err(Error::NotSingleParameter("lottery needs two services per agent".into()));
        }
        if serve.iter().flatten().any(|&y| !(0.0..=1.0).contains(&y)) {
            return Err(Error::InvalidInstance("serve probabilities must lie in [0, 1]".into()));
        }
        Ok(TypeLottery { serve })
    }
}

impl AllocationAlgorithm for TypeLottery {
    fn name(&self) -> String {
        "type-lottery".into()
    }

    fn is_deterministic(&self) -> bool {
        self.serve.iter().flatten().all(|&y| y == 0.0 || y == 1.0)
    }

    fn allocate(&self, _instance: &MechanismInstance, profile: &[usize], rng: &mut dyn RngCore) -> Allocation {
        profile
            .iter()
            .enumerate()
            .map(|(i, &t)| usize::from(rng.gen::<f64>() < self.serve[i][t]))
            .collect()
    }

    fn distribution(&self, _instance: &MechanismInstance, profile: &[usize]) -> Option<Vec<(f64, Allocation)>> {
        let n = profile.len();
        let mut out = Vec::new();
        for allocation in Odometer::new(vec![2; n]) {
            let p: f64 = allocation
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let y = self.serve[i][profile[i]];
                    if s == 1 {
                        y
                    } else {
                        1.0 - y
                    }
                })
                .product();
            if p > 0.0 {
                out.push((p, allocation));
            }
        }
        Some(out)
    }
}

/// Draws an allocation from an explicit lottery.
pub fn sample_outcome(lottery: &[(f64, Allocation)], rng: &mut dyn RngCore) -> Allocation {
    let weights: Vec<f64> = lottery.iter().map(|(p, _)| *p).collect();
    lottery[sample_index(&weights, rng)].1.clone()
}
