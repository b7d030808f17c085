//! Combinatorial auctions: the Bayesian configuration LP over
//! `(agent, type, bundle)` columns, sparsity filtering, independent rounding
//! of tentative bundles, and conflict resolution.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::algorithm::AllocationAlgorithm;
use crate::error::{Error, Result};
use crate::model::{Allocation, ItemSet, MechanismInstance, Odometer, MAX_ITEMS};
use crate::simplex::LinearProgram;

/// Refuse LPs with more columns than this.
pub const COLUMN_LIMIT: usize = 200_000;
/// Cap on the size of an explicitly enumerated outcome lottery.
pub const LOTTERY_LIMIT: usize = 100_000;
/// LP values below this are read as zero.
const ZERO: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaEntry {
    pub agent: usize,
    pub type_index: usize,
    pub set: ItemSet,
    pub x: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaFractionalSolution {
    pub agents: usize,
    pub items: usize,
    pub types: usize,
    /// Non-zero entries ordered by agent, type, then bundle.
    pub entries: Vec<CaEntry>,
    pub objective: f64,
}

impl CaFractionalSolution {
    pub fn nonzeros(&self) -> usize {
        self.entries.len()
    }

    pub fn row(&self, agent: usize, type_index: usize) -> impl Iterator<Item = &CaEntry> {
        self.entries
            .iter()
            .filter(move |e| e.agent == agent && e.type_index == type_index)
    }

    /// `Σ f_i(t) v_i^t(S) x_{i,t,S}` on `instance`.
    pub fn value(&self, instance: &MechanismInstance) -> f64 {
        self.entries
            .iter()
            .map(|e| {
                instance.prior(e.agent)[e.type_index] * instance.value(e.agent, e.type_index, e.set.0 as usize) * e.x
            })
            .sum()
    }

    /// Largest violation of the item and row constraints.
    pub fn worst_violation(&self, instance: &MechanismInstance) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.items {
            let load: f64 = self
                .entries
                .iter()
                .filter(|e| e.set.contains(j))
                .map(|e| instance.prior(e.agent)[e.type_index] * e.x)
                .sum();
            worst = worst.max(load - 1.0);
        }
        for i in 0..self.agents {
            for t in 0..self.types {
                let row: f64 = self.row(i, t).map(|e| e.x).sum();
                worst = worst.max(row - 1.0);
            }
        }
        for e in &self.entries {
            worst = worst.max(-e.x);
        }
        worst
    }

    /// `q_i(j) = Σ_t f_i(t) Σ_{S ∋ j} x_{i,t,S}`: probability that agent `i`
    /// tentatively claims item `j` when its type is drawn from the prior.
    pub fn claim_probabilities(&self, instance: &MechanismInstance) -> Vec<Vec<f64>> {
        let mut q = vec![vec![0.0; self.items]; self.agents];
        for e in &self.entries {
            for j in e.set.iter() {
                q[e.agent][j] += instance.prior(e.agent)[e.type_index] * e.x;
            }
        }
        q
    }
}

fn items_of(instance: &MechanismInstance) -> Result<usize> {
    let items = instance
        .items()
        .ok_or_else(|| Error::InvalidInstance("combinatorial auctions need partition feasibility".into()))?;
    if items > MAX_ITEMS {
        return Err(Error::TooManyItems {
            items,
            limit: MAX_ITEMS,
        });
    }
    Ok(items)
}

/// Optimal basic solution of the configuration LP. Columns with zero
/// objective coefficient are left out.
pub fn solve_ca_lp(instance: &MechanismInstance) -> Result<CaFractionalSolution> {
    let items = items_of(instance)?;
    let n = instance.agents();
    let l = instance.types();
    let bundles = (1usize << items) - 1;
    let required = n * l * bundles;
    if required > COLUMN_LIMIT {
        return Err(Error::EnumerationTooLarge {
            required: required as u128,
            limit: COLUMN_LIMIT as u128,
        });
    }

    let mut columns: Vec<(usize, usize, ItemSet, f64)> = Vec::new();
    for i in 0..n {
        for t in 0..l {
            let f = instance.prior(i)[t];
            if f <= 0.0 {
                continue;
            }
            for mask in 1..=bundles {
                let v = instance.value(i, t, mask);
                if v > 0.0 {
                    columns.push((i, t, ItemSet(mask as u32), f * v));
                }
            }
        }
    }

    let mut lp = LinearProgram::new(columns.iter().map(|c| c.3).collect());
    for j in 0..items {
        let row = columns
            .iter()
            .map(|&(i, t, set, _)| if set.contains(j) { instance.prior(i)[t] } else { 0.0 })
            .collect();
        lp.add_row(row, 1.0);
    }
    for i in 0..n {
        for t in 0..l {
            if columns.iter().any(|c| c.0 == i && c.1 == t) {
                let row = columns
                    .iter()
                    .map(|c| if c.0 == i && c.1 == t { 1.0 } else { 0.0 })
                    .collect();
                lp.add_row(row, 1.0);
            }
        }
    }
    let solved = lp.solve()?;

    let entries: Vec<CaEntry> = columns
        .iter()
        .zip(&solved.x)
        .filter(|(_, &x)| x > ZERO)
        .map(|(&(agent, type_index, set, _), &x)| CaEntry {
            agent,
            type_index,
            set,
            x,
        })
        .collect();
    let mut solution = CaFractionalSolution {
        agents: n,
        items,
        types: l,
        entries,
        objective: 0.0,
    };
    solution.objective = solution.value(instance);
    Ok(solution)
}

/// Drops entries strictly below `ε/(nmℓ)`.
pub fn filter_solution(
    solution: &CaFractionalSolution,
    instance: &MechanismInstance,
    epsilon: f64,
) -> Result<CaFractionalSolution> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let threshold = filter_threshold(solution, epsilon);
    let mut filtered = solution.clone();
    filtered.entries.retain(|e| e.x >= threshold);
    filtered.objective = filtered.value(instance);
    Ok(filtered)
}

pub fn filter_threshold(solution: &CaFractionalSolution, epsilon: f64) -> f64 {
    epsilon / (solution.agents * solution.items.max(1) * solution.types) as f64
}

/// Independently per agent, picks bundle `S` with probability
/// `x̂_{i,t_i,S}` and the empty set with the leftover probability.
pub fn round_tentative(solution: &CaFractionalSolution, reports: &[usize], rng: &mut dyn RngCore) -> Vec<ItemSet> {
    reports
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut target = rng.gen::<f64>();
            for e in solution.row(i, t) {
                if target < e.x {
                    return e.set;
                }
                target -= e.x;
            }
            ItemSet::EMPTY
        })
        .collect()
}

/// `(probability, bundle)` lottery of one agent's tentative set.
fn tentative_lottery(solution: &CaFractionalSolution, agent: usize, t: usize) -> Vec<(f64, ItemSet)> {
    let mut out: Vec<(f64, ItemSet)> = solution.row(agent, t).map(|e| (e.x, e.set)).collect();
    let rest = 1.0 - out.iter().map(|(p, _)| p).sum::<f64>();
    if rest > ZERO {
        out.push((rest, ItemSet::EMPTY));
    }
    out
}

fn claimants(tentative: &[ItemSet], item: usize) -> Vec<usize> {
    (0..tentative.len()).filter(|&i| tentative[i].contains(item)).collect()
}

fn award(tentative: &[ItemSet], winners: &[(usize, usize)]) -> Vec<ItemSet> {
    let mut out = tentative.to_vec();
    for &(item, winner) in winners {
        for (i, set) in out.iter_mut().enumerate() {
            if i != winner && set.contains(item) {
                set.0 &= !(1u32 << item);
            }
        }
    }
    out
}

/// Each contested item goes to the claimant with the largest weight on it
/// in the supporting clause of its tentative bundle; ties to the lowest
/// index.
pub fn resolve_conflicts_xos(
    tentative: &[ItemSet],
    instance: &MechanismInstance,
    reports: &[usize],
) -> Result<Vec<ItemSet>> {
    let items = items_of(instance)?;
    let support: Vec<Vec<f64>> = tentative
        .iter()
        .enumerate()
        .map(|(i, &set)| {
            instance
                .valuation(i, reports[i])
                .as_set()
                .ok_or(Error::NotXos)?
                .supporting_vector(set)
        })
        .collect::<Result<_>>()?;
    let mut winners = Vec::new();
    for j in 0..items {
        let claim = claimants(tentative, j);
        if claim.len() > 1 {
            let mut best = claim[0];
            for &i in &claim[1..] {
                if support[i][j] > support[best][j] {
                    best = i;
                }
            }
            winners.push((j, best));
        }
    }
    Ok(award(tentative, &winners))
}

/// Each contested item goes to a uniformly random claimant.
pub fn resolve_conflicts_uniform(tentative: &[ItemSet], items: usize, rng: &mut dyn RngCore) -> Vec<ItemSet> {
    let mut winners = Vec::new();
    for j in 0..items {
        let claim = claimants(tentative, j);
        if claim.len() > 1 {
            winners.push((j, claim[rng.gen_range(0..claim.len())]));
        }
    }
    award(tentative, &winners)
}

/// Winner lottery of fair contention resolution for one item. With claim
/// probabilities `q` and claimant set `A`, claimant `i` wins with
/// probability `(Σ_{k∈A∖i} q_k/(|A|−1) + Σ_{k∉A} q_k/|A|) / Σ_k q_k`.
pub fn fair_winner_weights(claim: &[usize], q: &[f64]) -> Vec<f64> {
    if claim.len() == 1 {
        return vec![1.0];
    }
    let total: f64 = q.iter().sum();
    let inside: f64 = claim.iter().map(|&k| q[k]).sum();
    let outside = total - inside;
    let a = claim.len() as f64;
    claim
        .iter()
        .map(|&i| ((inside - q[i]) / (a - 1.0) + outside / a) / total)
        .collect()
}

/// Fair contention resolution: conditioned on claiming an item, every
/// agent wins it with probability `(1 − Π_k(1 − q_k))/Σ_k q_k`, at least
/// `1 − 1/e` when `Σ_k q_k ≤ 1`. `claims[i][j]` is the marginal claim
/// probability of agent `i` on item `j`.
pub fn resolve_conflicts_fair(
    tentative: &[ItemSet],
    claims: &[Vec<f64>],
    items: usize,
    rng: &mut dyn RngCore,
) -> Vec<ItemSet> {
    let mut winners = Vec::new();
    for j in 0..items {
        let claim = claimants(tentative, j);
        if claim.len() > 1 {
            let q: Vec<f64> = claims.iter().map(|row| row[j]).collect();
            let weights = fair_winner_weights(&claim, &q);
            let mut target = rng.gen::<f64>();
            let mut pick = *claim.last().expect("contested");
            for (&i, &w) in claim.iter().zip(&weights) {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            winners.push((j, pick));
        }
    }
    award(tentative, &winners)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolver {
    /// Fair contention resolution.
    Fair,
    /// Largest supporting-clause weight wins.
    HighestSupport,
    Uniform,
}

impl Resolver {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "fair" | "xos" => Ok(Resolver::Fair),
            "highest-support" => Ok(Resolver::HighestSupport),
            "uniform" => Ok(Resolver::Uniform),
            other => Err(Error::Unknown {
                kind: "resolver",
                name: other.into(),
            }),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Resolver::Fair => "fair",
            Resolver::HighestSupport => "highest-support",
            Resolver::Uniform => "uniform",
        }
    }
}

/// LP rounding as an allocation algorithm.
#[derive(Clone, Debug)]
pub struct CaAlgorithm {
    lp: CaFractionalSolution,
    filtered: CaFractionalSolution,
    claims: Vec<Vec<f64>>,
    resolver: Resolver,
    epsilon: f64,
}

impl CaAlgorithm {
    pub fn new(instance: &MechanismInstance, epsilon: f64, resolver: Resolver) -> Result<Self> {
        let lp = solve_ca_lp(instance)?;
        Self::from_solution(instance, lp, epsilon, resolver)
    }

    pub fn from_solution(
        instance: &MechanismInstance,
        lp: CaFractionalSolution,
        epsilon: f64,
        resolver: Resolver,
    ) -> Result<Self> {
        let filtered = filter_solution(&lp, instance, epsilon)?;
        if resolver == Resolver::HighestSupport {
            for i in 0..instance.agents() {
                for t in 0..instance.types() {
                    let xos = instance.valuation(i, t).as_set().is_some_and(|v| v.is_xos());
                    if !xos {
                        return Err(Error::NotXos);
                    }
                }
            }
        }
        let claims = filtered.claim_probabilities(instance);
        Ok(CaAlgorithm {
            lp,
            filtered,
            claims,
            resolver,
            epsilon,
        })
    }

    pub fn lp(&self) -> &CaFractionalSolution {
        &self.lp
    }

    pub fn filtered(&self) -> &CaFractionalSolution {
        &self.filtered
    }

    pub fn claims(&self) -> &[Vec<f64>] {
        &self.claims
    }

    pub fn resolver(&self) -> Resolver {
        self.resolver
    }

    /// `√(4nmℓ/ε)`, the std/mean bound used for interim estimation.
    pub fn variance_ratio_bound(&self) -> f64 {
        let s = &self.filtered;
        (4.0 * (s.agents * s.items * s.types) as f64 / self.epsilon).sqrt()
    }

    pub fn tentative(&self, reports: &[usize], rng: &mut dyn RngCore) -> Vec<ItemSet> {
        round_tentative(&self.filtered, reports, rng)
    }

    pub fn resolve(
        &self,
        instance: &MechanismInstance,
        reports: &[usize],
        tentative: &[ItemSet],
        rng: &mut dyn RngCore,
    ) -> Vec<ItemSet> {
        let items = self.filtered.items;
        match self.resolver {
            Resolver::Fair => resolve_conflicts_fair(tentative, &self.claims, items, rng),
            Resolver::Uniform => resolve_conflicts_uniform(tentative, items, rng),
            Resolver::HighestSupport => {
                resolve_conflicts_xos(tentative, instance, reports).expect("checked to be XOS at construction")
            }
        }
    }

    /// Winner lotteries `(item, [(probability, winner)])` of the contested
    /// items in `tentative`.
    fn winner_lotteries(
        &self,
        instance: &MechanismInstance,
        reports: &[usize],
        tentative: &[ItemSet],
    ) -> Vec<(usize, Vec<(f64, usize)>)> {
        let items = self.filtered.items;
        let decided = match self.resolver {
            Resolver::HighestSupport => {
                Some(resolve_conflicts_xos(tentative, instance, reports).expect("checked to be XOS at construction"))
            }
            _ => None,
        };
        let mut out = Vec::new();
        for j in 0..items {
            let claim = claimants(tentative, j);
            if claim.len() < 2 {
                continue;
            }
            let lottery = match (&decided, self.resolver) {
                (Some(sets), _) => {
                    let winner = claim
                        .iter()
                        .copied()
                        .find(|&i| sets[i].contains(j))
                        .expect("one winner");
                    vec![(1.0, winner)]
                }
                (None, Resolver::Uniform) => claim.iter().map(|&i| (1.0 / claim.len() as f64, i)).collect(),
                (None, _) => {
                    let q: Vec<f64> = self.claims.iter().map(|row| row[j]).collect();
                    fair_winner_weights(&claim, &q)
                        .into_iter()
                        .zip(claim.iter().copied())
                        .collect()
                }
            };
            out.push((j, lottery));
        }
        out
    }
}

impl AllocationAlgorithm for CaAlgorithm {
    fn name(&self) -> String {
        format!("ca-lp-round({})", self.resolver.name())
    }

    fn is_deterministic(&self) -> bool {
        let rows_fixed = (0..self.filtered.agents).all(|i| {
            (0..self.filtered.types).all(|t| {
                let row: Vec<&CaEntry> = self.filtered.row(i, t).collect();
                row.is_empty() || (row.len() == 1 && row[0].x >= 1.0 - ZERO)
            })
        });
        let no_contest = (0..self.filtered.items).all(|j| {
            let claimers: Vec<usize> = self
                .filtered
                .entries
                .iter()
                .filter(|e| e.set.contains(j))
                .map(|e| e.agent)
                .collect();
            claimers.windows(2).all(|w| w[0] == w[1])
        });
        rows_fixed && (no_contest || self.resolver == Resolver::HighestSupport)
    }

    fn allocate(&self, instance: &MechanismInstance, profile: &[usize], rng: &mut dyn RngCore) -> Allocation {
        let tentative = self.tentative(profile, rng);
        self.resolve(instance, profile, &tentative, rng)
            .into_iter()
            .map(|s| s.0 as usize)
            .collect()
    }

    fn distribution(&self, instance: &MechanismInstance, profile: &[usize]) -> Option<Vec<(f64, Allocation)>> {
        let rows: Vec<Vec<(f64, ItemSet)>> = profile
            .iter()
            .enumerate()
            .map(|(i, &t)| tentative_lottery(&self.filtered, i, t))
            .collect();
        let mut out: Vec<(f64, Allocation)> = Vec::new();
        for pick in Odometer::new(rows.iter().map(Vec::len).collect()) {
            let p: f64 = pick.iter().enumerate().map(|(i, &k)| rows[i][k].0).product();
            let tentative: Vec<ItemSet> = pick.iter().enumerate().map(|(i, &k)| rows[i][k].1).collect();
            let lotteries = self.winner_lotteries(instance, profile, &tentative);
            for choice in Odometer::new(lotteries.iter().map(|(_, l)| l.len()).collect()) {
                let mut q = p;
                let mut winners = Vec::with_capacity(lotteries.len());
                for ((item, lottery), &k) in lotteries.iter().zip(&choice) {
                    q *= lottery[k].0;
                    winners.push((*item, lottery[k].1));
                }
                if q <= 0.0 {
                    continue;
                }
                let allocation = award(&tentative, &winners).into_iter().map(|s| s.0 as usize).collect();
                out.push((q, allocation));
                if out.len() > LOTTERY_LIMIT {
                    return None;
                }
            }
        }
        Some(out)
    }
}
