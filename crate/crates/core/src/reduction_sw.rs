//! Welfare-preserving reduction: solve each agent's induced assignment
//! problem once, then at run time resample every report through the optimal
//! fractional assignment, run the algorithm on the resampled profile, and
//! charge envy-free prices scaled by the realized value.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::algorithm::AllocationAlgorithm;
use crate::assignment::{check_envy_free, solve_welfare_lp, AssignmentSolution};
use crate::error::{Error, Result};
use crate::interim::{interim_table, InterimMode, InterimTable};
use crate::mechanism::{sample_lottery, Mechanism, Outcome, TraceEntry};
use crate::model::{MechanismInstance, Odometer};

/// Mass below this is treated as zero when turning rows into lotteries.
const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentTables {
    pub prior: Vec<f64>,
    /// `ŵ^{st}`
    pub values: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub prices: Vec<f64>,
    /// Unallocated supply `y^t` of each product.
    pub leftover: Vec<f64>,
}

/// One possible resampling of a report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branch {
    pub probability: f64,
    pub manipulated: usize,
    pub served: bool,
}

impl AgentTables {
    pub fn new(prior: Vec<f64>, values: Vec<Vec<f64>>, solution: &AssignmentSolution<f64>) -> Self {
        let l = prior.len();
        let leftover = (0..l)
            .map(|t| {
                let used: f64 = (0..l).map(|s| solution.x[s][t]).sum();
                let y = prior[t] - used;
                if y > MASS_TOLERANCE {
                    y
                } else {
                    0.0
                }
            })
            .collect();
        AgentTables {
            prior,
            values,
            x: solution.x.clone(),
            prices: solution.p.clone(),
            leftover,
        }
    }

    pub fn total_leftover(&self) -> f64 {
        self.leftover.iter().sum()
    }

    /// Resampling lottery for report `s`: product `t` is served with
    /// probability `x^{st}/f(s)`; the remaining mass goes unserved with a
    /// type drawn in proportion to the leftover supply.
    pub fn branches(&self, agent: usize, s: usize) -> Result<Vec<Branch>> {
        let f = self.prior[s];
        if f <= 0.0 {
            return Err(Error::ZeroProbabilityType { agent, type_index: s });
        }
        let row_total: f64 = self.x[s].iter().sum();
        let unserved = 1.0 - row_total / f;
        let leftover = self.total_leftover();
        let mut out = Vec::new();
        if unserved > MASS_TOLERANCE && leftover > 0.0 {
            for (t, &x) in self.x[s].iter().enumerate() {
                if x > 0.0 {
                    out.push(Branch {
                        probability: x / f,
                        manipulated: t,
                        served: true,
                    });
                }
            }
            for (t, &y) in self.leftover.iter().enumerate() {
                if y > 0.0 {
                    out.push(Branch {
                        probability: unserved * y / leftover,
                        manipulated: t,
                        served: false,
                    });
                }
            }
        } else {
            for (t, &x) in self.x[s].iter().enumerate() {
                if x > 0.0 {
                    out.push(Branch {
                        probability: x / row_total,
                        manipulated: t,
                        served: true,
                    });
                }
            }
        }
        if out.is_empty() {
            return Err(Error::NumericFailure(format!(
                "agent {agent} type {s} has an empty resampling row"
            )));
        }
        Ok(out)
    }

    /// `p^t · v / ŵ^{st}`, or 0 when `ŵ^{st} = 0`.
    pub fn price(&self, s: usize, t: usize, realized: f64) -> f64 {
        let w = self.values[s][t];
        if w <= 0.0 {
            0.0
        } else {
            self.prices[t] * realized / w
        }
    }

    /// `Σ x^{st} ŵ^{st}`
    pub fn welfare(&self) -> f64 {
        self.x
            .iter()
            .zip(&self.values)
            .map(|(xr, wr)| xr.iter().zip(wr).map(|(x, w)| x * w).sum::<f64>())
            .sum()
    }

    /// `Σ f(s) ŵ^{ss}`
    pub fn identity_welfare(&self) -> f64 {
        self.prior.iter().enumerate().map(|(s, f)| f * self.values[s][s]).sum()
    }

    /// `Σ x^{st} p^t`
    pub fn revenue(&self) -> f64 {
        self.x
            .iter()
            .map(|row| row.iter().zip(&self.prices).map(|(x, p)| x * p).sum::<f64>())
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionTables {
    pub agents: Vec<AgentTables>,
    pub mode: InterimMode,
}

impl ReductionTables {
    pub fn agent(&self, agent: usize) -> &AgentTables {
        &self.agents[agent]
    }
}

pub fn precompute(
    instance: &MechanismInstance,
    algorithm: &dyn AllocationAlgorithm,
    mode: InterimMode,
    seed: u64,
) -> Result<ReductionTables> {
    let table = interim_table(instance, algorithm, mode, seed)?;
    tables_from_interim(instance, &table)
}

/// Solves every agent's induced problem on the given (possibly estimated)
/// interim values.
pub fn tables_from_interim(instance: &MechanismInstance, table: &InterimTable) -> Result<ReductionTables> {
    let mut agents = Vec::with_capacity(instance.agents());
    for i in 0..instance.agents() {
        let problem = table.induced_problem(instance, i)?;
        let solution = solve_welfare_lp(&problem)?;
        let envy = check_envy_free(&problem, &solution);
        if !envy.ok {
            return Err(Error::NumericFailure(format!(
                "agent {i}: prices violate envy-freeness by {}",
                envy.worst_violation
            )));
        }
        agents.push(AgentTables::new(
            instance.prior(i).to_vec(),
            table.values[i].clone(),
            &solution,
        ));
    }
    Ok(ReductionTables {
        agents,
        mode: table.mode,
    })
}

pub fn decouple(tables: &ReductionTables, agent: usize, s: usize, rng: &mut dyn RngCore) -> Result<usize> {
    Ok(draw_branch(&tables.agents[agent].branches(agent, s)?, rng).manipulated)
}

pub fn price(tables: &ReductionTables, agent: usize, s: usize, t: usize, realized: f64) -> f64 {
    tables.agents[agent].price(s, t, realized)
}

pub(crate) fn draw_branch(branches: &[Branch], rng: &mut dyn RngCore) -> Branch {
    let mut target = rng.gen::<f64>() * branches.iter().map(|b| b.probability).sum::<f64>();
    for b in branches {
        if target < b.probability {
            return *b;
        }
        target -= b.probability;
    }
    *branches.last().expect("non-empty lottery")
}

pub fn run_mechanism(
    tables: &ReductionTables,
    instance: &MechanismInstance,
    algorithm: &dyn AllocationAlgorithm,
    reports: &[usize],
    rng: &mut dyn RngCore,
) -> Result<Outcome> {
    DecoupledMechanism { tables, algorithm }.run(instance, reports, rng)
}

/// The reduction as a [`Mechanism`]. Agents whose resampling lands on the
/// unserved branch (only possible with leftover supply) get the null service
/// and pay nothing.
pub struct DecoupledMechanism<'a> {
    pub tables: &'a ReductionTables,
    pub algorithm: &'a dyn AllocationAlgorithm,
}

impl DecoupledMechanism<'_> {
    fn finish(
        &self,
        instance: &MechanismInstance,
        reports: &[usize],
        chosen: &[Branch],
        tentative: &[usize],
    ) -> Result<Outcome> {
        let n = reports.len();
        let mut allocation = Vec::with_capacity(n);
        let mut prices = Vec::with_capacity(n);
        let mut trace = Vec::with_capacity(n);
        for i in 0..n {
            let b = chosen[i];
            let s = reports[i];
            trace.push(TraceEntry {
                reported: s,
                manipulated: b.manipulated,
                served: b.served,
            });
            if b.served {
                let service = tentative[i];
                allocation.push(service);
                prices.push(self.tables.agents[i].price(s, b.manipulated, instance.value(i, s, service)));
            } else {
                allocation.push(instance.null_service().ok_or(Error::NotDownwardClosed)?);
                prices.push(0.0);
            }
        }
        Ok(Outcome {
            allocation,
            prices,
            trace,
        })
    }
}

impl Mechanism for DecoupledMechanism<'_> {
    fn name(&self) -> String {
        format!("decoupled({})", self.algorithm.name())
    }

    fn outcome_distribution(&self, instance: &MechanismInstance, reports: &[usize]) -> Result<Vec<(f64, Outcome)>> {
        let lotteries: Vec<Vec<Branch>> = reports
            .iter()
            .enumerate()
            .map(|(i, &s)| self.tables.agents[i].branches(i, s))
            .collect::<Result<_>>()?;
        let mut out = Vec::new();
        for pick in Odometer::new(lotteries.iter().map(Vec::len).collect()) {
            let chosen: Vec<Branch> = pick.iter().enumerate().map(|(i, &k)| lotteries[i][k]).collect();
            let weight: f64 = chosen.iter().map(|b| b.probability).product();
            if weight <= 0.0 {
                continue;
            }
            let manipulated: Vec<usize> = chosen.iter().map(|b| b.manipulated).collect();
            let lottery = self
                .algorithm
                .distribution(instance, &manipulated)
                .ok_or_else(|| Error::NotEnumerable(self.algorithm.name()))?;
            for (q, tentative) in lottery {
                out.push((weight * q, self.finish(instance, reports, &chosen, &tentative)?));
            }
        }
        Ok(out)
    }

    fn run(&self, instance: &MechanismInstance, reports: &[usize], rng: &mut dyn RngCore) -> Result<Outcome> {
        let mut chosen = Vec::with_capacity(reports.len());
        for (i, &s) in reports.iter().enumerate() {
            chosen.push(draw_branch(&self.tables.agents[i].branches(i, s)?, rng));
        }
        let manipulated: Vec<usize> = chosen.iter().map(|b| b.manipulated).collect();
        let tentative = self.algorithm.allocate(instance, &manipulated, rng);
        self.finish(instance, reports, &chosen, &tentative)
    }
}

/// Exact outcome lottery sampled once; handy when only `run` semantics are
/// needed from an enumerable mechanism.
pub fn sample_exact(
    mechanism: &dyn Mechanism,
    instance: &MechanismInstance,
    reports: &[usize],
    rng: &mut dyn RngCore,
) -> Result<Outcome> {
    Ok(sample_lottery(mechanism.outcome_distribution(instance, reports)?, rng))
}
