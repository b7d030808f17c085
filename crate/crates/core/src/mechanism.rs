//! Mechanisms: maps from reported profiles to an allocation plus prices.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::algorithm::AllocationAlgorithm;
use crate::error::{Error, Result};
use crate::model::{sample_index, Allocation, MechanismInstance};

/// What the mechanism did with one agent's report.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub reported: usize,
    /// Type handed to the allocation algorithm.
    pub manipulated: usize,
    pub served: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub allocation: Allocation,
    pub prices: Vec<f64>,
    pub trace: Vec<TraceEntry>,
}

impl Outcome {
    fn direct(allocation: Allocation, prices: Vec<f64>, reports: &[usize]) -> Self {
        let trace = reports
            .iter()
            .map(|&r| TraceEntry {
                reported: r,
                manipulated: r,
                served: true,
            })
            .collect();
        Outcome {
            allocation,
            prices,
            trace,
        }
    }
}

pub trait Mechanism: Send + Sync {
    fn name(&self) -> String;

    /// Exact outcome lottery on `reports`; fails with `NotEnumerable` when
    /// the mechanism's randomness is not explicit.
    fn outcome_distribution(&self, instance: &MechanismInstance, reports: &[usize]) -> Result<Vec<(f64, Outcome)>>;

    fn run(&self, instance: &MechanismInstance, reports: &[usize], rng: &mut dyn RngCore) -> Result<Outcome>;
}

/// Runs an allocation algorithm and charges nothing.
pub struct AlgorithmMechanism<'a> {
    pub algorithm: &'a dyn AllocationAlgorithm,
}

impl Mechanism for AlgorithmMechanism<'_> {
    fn name(&self) -> String {
        self.algorithm.name()
    }

    fn outcome_distribution(&self, instance: &MechanismInstance, reports: &[usize]) -> Result<Vec<(f64, Outcome)>> {
        let lottery = self
            .algorithm
            .distribution(instance, reports)
            .ok_or_else(|| Error::NotEnumerable(self.algorithm.name()))?;
        Ok(lottery
            .into_iter()
            .map(|(p, a)| (p, Outcome::direct(a, vec![0.0; reports.len()], reports)))
            .collect())
    }

    fn run(&self, instance: &MechanismInstance, reports: &[usize], rng: &mut dyn RngCore) -> Result<Outcome> {
        let allocation = self.algorithm.allocate(instance, reports, rng);
        Ok(Outcome::direct(allocation, vec![0.0; reports.len()], reports))
    }
}

/// Fixed allocation and fixed prices, whatever the reports.
#[derive(Clone, Debug)]
pub struct ReportIgnoring {
    pub allocation: Allocation,
    pub prices: Vec<f64>,
}

impl Mechanism for ReportIgnoring {
    fn name(&self) -> String {
        "report-ignoring".into()
    }

    fn outcome_distribution(&self, _instance: &MechanismInstance, reports: &[usize]) -> Result<Vec<(f64, Outcome)>> {
        Ok(vec![(
            1.0,
            Outcome::direct(self.allocation.clone(), self.prices.clone(), reports),
        )])
    }

    fn run(&self, _instance: &MechanismInstance, reports: &[usize], _rng: &mut dyn RngCore) -> Result<Outcome> {
        Ok(Outcome::direct(self.allocation.clone(), self.prices.clone(), reports))
    }
}

/// Offers `service` at `price` to the agents in index order. An agent buys
/// when its reported value covers the price and the sale keeps the
/// allocation feasible; everyone else gets the null service.
#[derive(Clone, Debug)]
pub struct PostedPrice {
    pub service: usize,
    pub price: f64,
}

impl PostedPrice {
    fn outcome(&self, instance: &MechanismInstance, reports: &[usize]) -> Result<Outcome> {
        let mut allocation = instance.null_allocation().ok_or(Error::NotDownwardClosed)?;
        let mut prices = vec![0.0; reports.len()];
        for (i, &t) in reports.iter().enumerate() {
            if instance.value(i, t, self.service) < self.price {
                continue;
            }
            let previous = std::mem::replace(&mut allocation[i], self.service);
            if instance.is_feasible(&allocation) {
                prices[i] = self.price;
            } else {
                allocation[i] = previous;
            }
        }
        Ok(Outcome::direct(allocation, prices, reports))
    }
}

impl Mechanism for PostedPrice {
    fn name(&self) -> String {
        "posted-price".into()
    }

    fn outcome_distribution(&self, instance: &MechanismInstance, reports: &[usize]) -> Result<Vec<(f64, Outcome)>> {
        Ok(vec![(1.0, self.outcome(instance, reports)?)])
    }

    fn run(&self, instance: &MechanismInstance, reports: &[usize], _rng: &mut dyn RngCore) -> Result<Outcome> {
        self.outcome(instance, reports)
    }
}

/// Samples one outcome from an explicit lottery.
pub fn sample_lottery(lottery: Vec<(f64, Outcome)>, rng: &mut dyn RngCore) -> Outcome {
    let weights: Vec<f64> = lottery.iter().map(|(p, _)| *p).collect();
    let pick = sample_index(&weights, rng);
    lottery.into_iter().nth(pick).expect("index in range").1
}
