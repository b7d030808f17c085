//! Revenue and residual-surplus reductions for downward-closed instances.
//!
//! Each agent's induced problem is solved by a reserve ladder: a family of
//! variants where dummy participants at geometrically spaced values
//! `u_max/2^k` act as reserve prices. The best projected solution need not
//! clear the market; reports that land on unallocated mass are left unserved.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::algorithm::AllocationAlgorithm;
use crate::assignment::{
    solve_welfare_lp, solve_welfare_lp_with, welfare, AssignmentProblem, AssignmentSolution, DualSelection,
};
use crate::error::{Error, Result};
use crate::interim::{interim_table, InterimMode, InterimTable};
use crate::mechanism::{Mechanism, Outcome};
use crate::model::{Feasibility, MechanismInstance, Valuation};
use crate::reduction_sw::{draw_branch, AgentTables, DecoupledMechanism, ReductionTables};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LadderObjective {
    Revenue,
    Surplus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelReport<T = f64> {
    pub level: usize,
    pub reserve: T,
    pub revenue: T,
    pub residual_surplus: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LadderResult<T = f64> {
    pub solution: AssignmentSolution<T>,
    pub u_max: T,
    /// `None` for the degenerate all-zero case.
    pub chosen_level: Option<usize>,
    pub levels: Vec<LevelReport<T>>,
}

impl<T: Scalar> LadderResult<T> {
    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U + Copy) -> LadderResult<U> {
        LadderResult {
            solution: self.solution.map(f),
            u_max: f(&self.u_max),
            chosen_level: self.chosen_level,
            levels: self
                .levels
                .iter()
                .map(|l| LevelReport {
                    level: l.level,
                    reserve: f(&l.reserve),
                    revenue: f(&l.revenue),
                    residual_surplus: f(&l.residual_surplus),
                })
                .collect(),
        }
    }
}

/// `K = ⌈log₂(1/δ)⌉`, at least one level.
pub fn ladder_levels(delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidInstance(format!("granularity {delta} outside (0, 1]")));
    }
    let mut k = 0usize;
    while 0.5f64.powi(k as i32) > delta * (1.0 + 1e-12) {
        k += 1;
    }
    Ok(k.max(1))
}

/// Reserve ladder with one dummy buyer per product (`C_R`), keeping the
/// level with the largest revenue.
pub fn reserve_ladder_revenue<T: Scalar>(problem: &AssignmentProblem<T>, delta: f64) -> Result<LadderResult<T>> {
    ladder(problem, delta, LadderObjective::Revenue)
}

/// Reserve ladder with one dummy product per buyer (`C_RS`), keeping the
/// level with the largest residual surplus.
pub fn reserve_ladder_surplus<T: Scalar>(problem: &AssignmentProblem<T>, delta: f64) -> Result<LadderResult<T>> {
    ladder(problem, delta, LadderObjective::Surplus)
}

pub fn reserve_ladder<T: Scalar>(
    problem: &AssignmentProblem<T>,
    delta: f64,
    objective: LadderObjective,
) -> Result<LadderResult<T>> {
    ladder(problem, delta, objective)
}

fn ladder<T: Scalar>(
    problem: &AssignmentProblem<T>,
    delta: f64,
    objective: LadderObjective,
) -> Result<LadderResult<T>> {
    let levels = ladder_levels(delta)?;
    let buyers = problem.buyers();
    let products = problem.products();
    let optimum = solve_welfare_lp(problem)?;
    let mut u_max = T::zero();
    for s in 0..buyers {
        for t in 0..products {
            if optimum.x[s][t].is_positive_tol() {
                u_max = T::max_of(u_max, problem.value(s, t).clone());
            }
        }
    }
    if !u_max.is_positive_tol() {
        return Ok(LadderResult {
            solution: AssignmentSolution::zero(buyers, products),
            u_max,
            chosen_level: None,
            levels: Vec::new(),
        });
    }

    let slack = T::one() + T::from_f64_exact(delta);
    let two = T::one() + T::one();
    let mut reserve = u_max.clone();
    let mut reports = Vec::with_capacity(levels);
    let mut best: Option<(T, usize, AssignmentSolution<T>)> = None;
    for k in 1..=levels {
        reserve = reserve / two.clone();
        let projected = match objective {
            LadderObjective::Revenue => {
                let largest = problem.supplies().iter().cloned().fold(T::one(), T::max_of);
                let variant = with_dummy_buyers(problem, &reserve, slack.clone() * largest)?;
                let solution = solve_welfare_lp_with(&variant, DualSelection::SellerOptimal)?;
                project(problem, &solution)
            }
            LadderObjective::Surplus => {
                let largest = problem.demands().iter().cloned().fold(T::one(), T::max_of);
                let variant = with_dummy_products(problem, &reserve, slack.clone() * largest)?;
                let solution = solve_welfare_lp_with(&variant, DualSelection::BuyerOptimal)?;
                let mut projected = project(problem, &solution);
                let dummy_used = solution
                    .x
                    .iter()
                    .any(|row| row[products..].iter().any(|x| x.is_positive_tol()));
                if dummy_used {
                    lift_prices(&mut projected, &reserve);
                }
                projected
            }
        };
        let revenue = projected.revenue();
        let surplus = projected.residual_surplus(problem);
        let score = match objective {
            LadderObjective::Revenue => revenue.clone(),
            LadderObjective::Surplus => surplus.clone(),
        };
        reports.push(LevelReport {
            level: k,
            reserve: reserve.clone(),
            revenue,
            residual_surplus: surplus,
        });
        if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
            best = Some((score, k, projected));
        }
    }
    let (_, level, solution) = best.expect("at least one level");
    Ok(LadderResult {
        solution,
        u_max,
        chosen_level: Some(level),
        levels: reports,
    })
}

fn with_dummy_buyers<T: Scalar>(
    problem: &AssignmentProblem<T>,
    reserve: &T,
    demand: T,
) -> Result<AssignmentProblem<T>> {
    let products = problem.products();
    let mut demands = problem.demands().to_vec();
    let mut values = problem.values().to_vec();
    for t in 0..products {
        demands.push(demand.clone());
        values.push(
            (0..products)
                .map(|k| if k == t { reserve.clone() } else { T::zero() })
                .collect(),
        );
    }
    AssignmentProblem::new(demands, problem.supplies().to_vec(), values)
}

fn with_dummy_products<T: Scalar>(
    problem: &AssignmentProblem<T>,
    reserve: &T,
    supply: T,
) -> Result<AssignmentProblem<T>> {
    let buyers = problem.buyers();
    let mut supplies = problem.supplies().to_vec();
    supplies.extend((0..buyers).map(|_| supply.clone()));
    let values = problem
        .values()
        .iter()
        .enumerate()
        .map(|(s, row)| {
            let mut row = row.clone();
            row.extend((0..buyers).map(|b| if b == s { reserve.clone() } else { T::zero() }));
            row
        })
        .collect();
    AssignmentProblem::new(problem.demands().to_vec(), supplies, values)
}

/// Restriction of a variant's solution to the original buyers and products.
fn project<T: Scalar>(problem: &AssignmentProblem<T>, solution: &AssignmentSolution<T>) -> AssignmentSolution<T> {
    let buyers = problem.buyers();
    let products = problem.products();
    let x: Vec<Vec<T>> = solution.x[..buyers]
        .iter()
        .map(|row| row[..products].to_vec())
        .collect();
    let objective = welfare(problem, &x);
    AssignmentSolution {
        x,
        u: solution.u[..buyers].to_vec(),
        p: solution.p[..products].to_vec(),
        objective,
    }
}

/// Raises every price by `reserve`. Buyers that took their dummy product
/// are left unserved, so their utility must drop to zero.
fn lift_prices<T: Scalar>(solution: &mut AssignmentSolution<T>, reserve: &T) {
    for p in &mut solution.p {
        *p = p.clone() + reserve.clone();
    }
    for u in &mut solution.u {
        *u = u.clone() - reserve.clone();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaTables {
    pub tables: ReductionTables,
    pub objective: LadderObjective,
    pub delta: f64,
    pub ladders: Vec<LadderResult<f64>>,
}

impl MetaTables {
    pub fn mechanism<'a>(&'a self, algorithm: &'a dyn AllocationAlgorithm) -> DecoupledMechanism<'a> {
        DecoupledMechanism {
            tables: &self.tables,
            algorithm,
        }
    }

    /// `Σ_i Σ_{s,t} x_i^{st} p_i^t`
    pub fn predicted_revenue(&self) -> f64 {
        self.tables.agents.iter().map(AgentTables::revenue).sum()
    }

    /// `Σ_i Σ_{s,t} x_i^{st} (ŵ_i^{st} − p_i^t)`
    pub fn predicted_surplus(&self) -> f64 {
        self.tables.agents.iter().map(|a| a.welfare() - a.revenue()).sum()
    }
}

pub fn meta_precompute(
    instance: &MechanismInstance,
    algorithm: &dyn AllocationAlgorithm,
    objective: LadderObjective,
    mode: InterimMode,
    seed: u64,
) -> Result<MetaTables> {
    if !instance.is_downward_closed() {
        return Err(Error::NotDownwardClosed);
    }
    let table = interim_table(instance, algorithm, mode, seed)?;
    meta_tables_from_interim(instance, &table, objective)
}

pub fn meta_tables_from_interim(
    instance: &MechanismInstance,
    table: &InterimTable,
    objective: LadderObjective,
) -> Result<MetaTables> {
    if !instance.is_downward_closed() {
        return Err(Error::NotDownwardClosed);
    }
    let delta = instance.granularity();
    let mut agents = Vec::with_capacity(instance.agents());
    let mut ladders = Vec::with_capacity(instance.agents());
    for i in 0..instance.agents() {
        let problem = table.induced_problem(instance, i)?.to_exact();
        let result = reserve_ladder(&problem, delta, objective)?;
        let result = result.map(|v| v.to_f64_lossy());
        agents.push(AgentTables::new(
            instance.prior(i).to_vec(),
            table.values[i].clone(),
            &result.solution,
        ));
        ladders.push(result);
    }
    Ok(MetaTables {
        tables: ReductionTables {
            agents,
            mode: table.mode,
        },
        objective,
        delta,
        ladders,
    })
}

/// Manipulated type and whether the agent is served.
pub fn meta_decouple(tables: &MetaTables, agent: usize, s: usize, rng: &mut dyn RngCore) -> Result<(usize, bool)> {
    let branch = draw_branch(&tables.tables.agents[agent].branches(agent, s)?, rng);
    Ok((branch.manipulated, branch.served))
}

pub fn run_meta_mechanism(
    tables: &MetaTables,
    instance: &MechanismInstance,
    algorithm: &dyn AllocationAlgorithm,
    reports: &[usize],
    rng: &mut dyn RngCore,
) -> Result<Outcome> {
    tables.mechanism(algorithm).run(instance, reports, rng)
}

/// One agent, one item. Type `k` (for `k = 1..=levels`) values the item at
/// `2^k` with probability `2^{-k}`; the last type values it at 0 with the
/// remaining probability `2^{-levels}`.
pub fn lower_bound_instance(levels: usize) -> Result<MechanismInstance> {
    if levels == 0 || levels > 30 {
        return Err(Error::InvalidInstance(format!(
            "lower-bound levels {levels} outside 1..=30"
        )));
    }
    let mut valuations = Vec::with_capacity(levels + 1);
    let mut prior = Vec::with_capacity(levels + 1);
    for k in 1..=levels {
        valuations.push(Valuation::table(vec![0.0, 2f64.powi(k as i32)]));
        prior.push(0.5f64.powi(k as i32));
    }
    valuations.push(Valuation::table(vec![0.0, 0.0]));
    prior.push(0.5f64.powi(levels as i32));
    MechanismInstance::build(
        vec![2],
        Some(0),
        Feasibility::Unrestricted,
        vec![valuations],
        vec![prior],
    )
}
