//! Brute-force certification: interim utilities, incentive compatibility,
//! individual rationality and expected performance by full enumeration over
//! type profiles and each mechanism's explicit randomness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::{AllocationAlgorithm, OptimalBruteforce};
use crate::assignment::{solve_welfare_lp, AssignmentProblem};
use crate::error::{Error, Result};
use crate::interim::ENUMERATION_LIMIT;
use crate::mechanism::{Mechanism, Outcome};
use crate::model::{Feasibility, MechanismInstance};
use crate::reduction_sw::AgentTables;
use crate::rng::stream;
use crate::scalar::{Rational, Scalar};

/// Slack used by every pass/fail flag in this module.
pub const CHECK_TOLERANCE: f64 = 1e-9;

/// `U_i(s → t)`: expected utility of true type `s` reporting `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterimUtilities {
    pub values: Vec<Vec<Vec<f64>>>,
    /// `reportable[i][t]` is false for zero-probability types.
    pub reportable: Vec<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IrReport {
    pub ok: bool,
    pub worst_violation: f64,
    pub realizations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IncentiveReport {
    /// `r_i^{st} = U_i(s→t) − U_i(s→s)`; zero on unreportable pairs.
    pub regret: Vec<Vec<Vec<f64>>>,
    pub max_regret: f64,
    pub epsilon: f64,
    pub bic_ok: bool,
    pub ir: Option<IrReport>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub welfare: f64,
    pub revenue: f64,
    pub residual_surplus: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerformanceEstimate {
    pub mean: Performance,
    pub standard_error: Performance,
    pub samples: usize,
}

type ProfileLottery = (Vec<usize>, f64, Vec<(f64, Outcome)>);
type Lotteries = Vec<ProfileLottery>;

/// Outcome lottery of every positive-probability profile, checked against
/// the evaluation budget.
fn enumerate(instance: &MechanismInstance, mechanism: &dyn Mechanism) -> Result<Lotteries> {
    let profiles: Vec<(Vec<usize>, f64)> = instance.profiles().collect();
    if profiles.len() as u128 > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            required: profiles.len() as u128,
            limit: ENUMERATION_LIMIT,
        });
    }
    let lotteries: Vec<Result<ProfileLottery>> = profiles
        .into_par_iter()
        .map(|(profile, p)| {
            let lottery = mechanism.outcome_distribution(instance, &profile)?;
            Ok((profile, p, lottery))
        })
        .collect();
    let lotteries: Lotteries = lotteries.into_iter().collect::<Result<_>>()?;
    let total: u128 = lotteries.iter().map(|(_, _, l)| l.len() as u128).sum();
    if total > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            required: total,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(lotteries)
}

pub fn interim_utilities(instance: &MechanismInstance, mechanism: &dyn Mechanism) -> Result<InterimUtilities> {
    let n = instance.agents();
    let l = instance.types();
    let mut values = vec![vec![vec![0.0; l]; l]; n];
    for (profile, p, lottery) in enumerate(instance, mechanism)? {
        for (q, outcome) in &lottery {
            for i in 0..n {
                let t = profile[i];
                let weight = p / instance.prior(i)[t] * q;
                let service = outcome.allocation[i];
                for s in 0..l {
                    values[i][s][t] += weight * (instance.value(i, s, service) - outcome.prices[i]);
                }
            }
        }
    }
    let reportable = instance
        .priors()
        .iter()
        .map(|f| f.iter().map(|&x| x > 0.0).collect())
        .collect();
    Ok(InterimUtilities { values, reportable })
}

pub fn check_bic(utilities: &InterimUtilities, epsilon: f64) -> IncentiveReport {
    let mut max_regret = 0.0f64;
    let regret: Vec<Vec<Vec<f64>>> = utilities
        .values
        .iter()
        .zip(&utilities.reportable)
        .map(|(u, ok)| {
            let l = u.len();
            (0..l)
                .map(|s| {
                    (0..l)
                        .map(|t| {
                            if !ok[s] || !ok[t] {
                                return 0.0;
                            }
                            let r = u[s][t] - u[s][s];
                            max_regret = max_regret.max(r);
                            r
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    IncentiveReport {
        regret,
        max_regret,
        epsilon,
        bic_ok: max_regret <= epsilon + CHECK_TOLERANCE,
        ir: None,
    }
}

/// Sweeps every truthful realization and reports the most negative utility.
pub fn check_ir(instance: &MechanismInstance, mechanism: &dyn Mechanism) -> Result<IrReport> {
    let mut worst = 0.0f64;
    let mut realizations = 0usize;
    for (profile, _, lottery) in enumerate(instance, mechanism)? {
        for (q, outcome) in &lottery {
            if *q <= 0.0 {
                continue;
            }
            realizations += 1;
            for (i, &t) in profile.iter().enumerate() {
                let utility = instance.value(i, t, outcome.allocation[i]) - outcome.prices[i];
                worst = worst.max(-utility);
            }
        }
    }
    Ok(IrReport {
        ok: worst <= CHECK_TOLERANCE,
        worst_violation: worst,
        realizations,
    })
}

/// BIC and IR in one report.
pub fn certify(instance: &MechanismInstance, mechanism: &dyn Mechanism, epsilon: f64) -> Result<IncentiveReport> {
    let utilities = interim_utilities(instance, mechanism)?;
    let mut report = check_bic(&utilities, epsilon);
    report.ir = Some(check_ir(instance, mechanism)?);
    Ok(report)
}

/// Exact expected welfare, revenue and residual surplus under truthful
/// reports.
pub fn performance(instance: &MechanismInstance, mechanism: &dyn Mechanism) -> Result<Performance> {
    let mut perf = Performance::default();
    for (profile, p, lottery) in enumerate(instance, mechanism)? {
        for (q, outcome) in &lottery {
            for (i, &t) in profile.iter().enumerate() {
                let v = instance.value(i, t, outcome.allocation[i]);
                perf.welfare += p * q * v;
                perf.revenue += p * q * outcome.prices[i];
                perf.residual_surplus += p * q * (v - outcome.prices[i]);
            }
        }
    }
    Ok(perf)
}

/// Monte Carlo estimate with standard errors; sample `k` uses its own
/// stream derived from `seed`.
pub fn performance_monte_carlo(
    instance: &MechanismInstance,
    mechanism: &dyn Mechanism,
    samples: usize,
    seed: u64,
) -> Result<PerformanceEstimate> {
    let draws: Vec<Result<[f64; 3]>> = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, &[k as u64]);
            let profile = instance.sample_profile(&mut rng);
            let outcome = mechanism.run(instance, &profile, &mut rng)?;
            let mut row = [0.0; 3];
            for (i, &t) in profile.iter().enumerate() {
                let v = instance.value(i, t, outcome.allocation[i]);
                row[0] += v;
                row[1] += outcome.prices[i];
                row[2] += v - outcome.prices[i];
            }
            Ok(row)
        })
        .collect();
    let draws: Vec<[f64; 3]> = draws.into_iter().collect::<Result<_>>()?;
    let stat = |k: usize| mean_and_error(draws.iter().map(|r| r[k]));
    let (w, ew) = stat(0);
    let (r, er) = stat(1);
    let (s, es) = stat(2);
    Ok(PerformanceEstimate {
        mean: Performance {
            welfare: w,
            revenue: r,
            residual_surplus: s,
        },
        standard_error: Performance {
            welfare: ew,
            revenue: er,
            residual_surplus: es,
        },
        samples,
    })
}

/// Sample mean and its standard error.
pub fn mean_and_error(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let values: Vec<f64> = values.collect();
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Expected optimal welfare over the prior.
pub fn optimal_welfare(instance: &MechanismInstance) -> Result<f64> {
    let profiles = (instance.types() as u128).pow(instance.agents() as u32);
    let per_profile = match instance.feasibility() {
        Feasibility::Partition { items } => instance.agents() as u128 * 3u128.pow(*items as u32),
        _ => instance.allocation_space(),
    };
    let required = profiles * per_profile;
    if required > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            required,
            limit: ENUMERATION_LIMIT,
        });
    }
    let opt = OptimalBruteforce::new(instance)?;
    let terms: Vec<f64> = instance
        .profiles()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(profile, p)| p * opt.best(instance, &profile).0)
        .collect();
    Ok(terms.into_iter().sum())
}

/// Utilities predicted from the tables alone:
/// `U(s→t) = Σ_r (x^{tr}/f(t))·(w^{sr} − p^r)`, with `w` the exact interim
/// values.
pub fn table_prediction(tables: &AgentTables, exact_values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let l = tables.prior.len();
    (0..l)
        .map(|s| {
            (0..l)
                .map(|t| {
                    let f = tables.prior[t];
                    if f <= 0.0 {
                        return 0.0;
                    }
                    (0..l)
                        .map(|r| {
                            let w = tables.values[t][r];
                            let charge = if w > 0.0 {
                                tables.prices[r] * exact_values[t][r] / w
                            } else {
                                0.0
                            };
                            tables.x[t][r] / f * (exact_values[s][r] - charge)
                        })
                        .sum()
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MyersonAgent {
    /// `y^t`: probability of being served when reporting `t`.
    pub serve: Vec<f64>,
    pub monotone: bool,
    /// The identity allocation attains the optimum of the induced problem.
    pub identity_optimal: bool,
    /// The solver itself returned the identity allocation.
    pub solver_identity: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MyersonReport {
    pub agents: Vec<MyersonAgent>,
}

impl MyersonReport {
    /// Identity optimality and monotonicity agree for every agent.
    pub fn consistent(&self) -> bool {
        self.agents.iter().all(|a| a.identity_optimal == a.monotone)
    }
}

/// Single-parameter instances: two services per agent (null `0`, served
/// `1`) and served values strictly decreasing in the type index. Checks, in
/// exact arithmetic, that the identity allocation solves each induced
/// problem exactly when the serve probabilities are non-increasing.
pub fn myerson_monotone_check(
    instance: &MechanismInstance,
    algorithm: &dyn AllocationAlgorithm,
) -> Result<MyersonReport> {
    let n = instance.agents();
    let l = instance.types();
    if instance.null_service() != Some(0) {
        return Err(Error::NotSingleParameter("service 0 must be the null service".into()));
    }
    let mut agents = Vec::with_capacity(n);
    for i in 0..n {
        if instance.services(i) != 2 {
            return Err(Error::NotSingleParameter(format!(
                "agent {i} has {} services",
                instance.services(i)
            )));
        }
        let v: Vec<f64> = (0..l).map(|s| instance.value(i, s, 1)).collect();
        if v.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::NotSingleParameter(format!(
                "agent {i} values are not strictly decreasing"
            )));
        }
        if instance.prior(i).iter().any(|&f| f <= 0.0) {
            return Err(Error::NotSingleParameter(format!(
                "agent {i} has a zero-probability type"
            )));
        }

        let mut serve = vec![0.0; l];
        for (t, y) in serve.iter_mut().enumerate() {
            for (profile, weight) in instance.opponent_profiles(i, t) {
                let lottery = algorithm
                    .distribution(instance, &profile)
                    .ok_or_else(|| Error::NotEnumerable(algorithm.name()))?;
                for (q, allocation) in lottery {
                    if allocation[i] == 1 {
                        *y += weight * q;
                    }
                }
            }
        }

        let f: Vec<Rational> = instance.prior(i).iter().map(Scalar::to_rational).collect();
        let vr: Vec<Rational> = v.iter().map(Scalar::to_rational).collect();
        let yr: Vec<Rational> = serve.iter().map(Scalar::to_rational).collect();
        let w: Vec<Vec<Rational>> = vr.iter().map(|vs| yr.iter().map(|yt| vs * yt).collect()).collect();
        let problem = AssignmentProblem::new(f.clone(), f.clone(), w.clone())?;
        let solution = solve_welfare_lp(&problem)?;
        let identity = (0..l).fold(Rational::from_integer(0.into()), |acc, s| acc + &f[s] * &w[s][s]);
        let solver_identity =
            (0..l).all(|s| (0..l).all(|t| s == t || solution.x[s][t] == Rational::from_integer(0.into())));

        agents.push(MyersonAgent {
            monotone: serve.windows(2).all(|y| y[0] >= y[1]),
            identity_optimal: identity == solution.objective,
            solver_identity,
            serve,
        });
    }
    Ok(MyersonReport { agents })
}
