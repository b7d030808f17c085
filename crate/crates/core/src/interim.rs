//! Interim value tables `w_i^{st}`: the expected value a true type `s` of
//! agent `i` gets from the service allocated when it reports `t`, with the
//! other agents drawn from their priors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithm::AllocationAlgorithm;
use crate::assignment::AssignmentProblem;
use crate::error::{Error, Result};
use crate::model::MechanismInstance;
use crate::rng::stream;

/// Evaluation budget for exact enumeration.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum InterimMode {
    Exact,
    /// Relative error target `ε`, with `c` bounding std/mean of every entry.
    Relative {
        epsilon: f64,
        c: f64,
    },
    /// Additive error target `ε·v_max`.
    Absolute {
        epsilon: f64,
    },
}

impl InterimMode {
    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            InterimMode::Exact => None,
            InterimMode::Relative { epsilon, .. } | InterimMode::Absolute { epsilon } => Some(epsilon),
        }
    }

    pub fn label(&self) -> String {
        match self {
            InterimMode::Exact => "exact".into(),
            InterimMode::Relative { epsilon, c } => format!("relative(eps={epsilon},c={c})"),
            InterimMode::Absolute { epsilon } => format!("absolute(eps={epsilon})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterimTable {
    /// `values[i][s][t]`
    pub values: Vec<Vec<Vec<f64>>>,
    pub mode: InterimMode,
    /// Samples behind every entry; zero for exact tables.
    pub samples_per_entry: usize,
}

impl InterimTable {
    pub fn agent(&self, agent: usize) -> &[Vec<f64>] {
        &self.values[agent]
    }

    /// Induced assignment problem of `agent`: buyers are true types,
    /// products are reported types, both weighted by the prior.
    pub fn induced_problem(&self, instance: &MechanismInstance, agent: usize) -> Result<AssignmentProblem<f64>> {
        induced_problem(instance, agent, &self.values[agent])
    }
}

pub fn induced_problem(
    instance: &MechanismInstance,
    agent: usize,
    values: &[Vec<f64>],
) -> Result<AssignmentProblem<f64>> {
    let prior = instance.prior(agent).to_vec();
    AssignmentProblem::new(prior.clone(), prior, values.to_vec())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

/// `N = ⌈4c² ln(nℓ²/ε)/ε²⌉`
pub fn relative_sample_count(agents: usize, types: usize, epsilon: f64, c: f64) -> Result<usize> {
    check_epsilon(epsilon)?;
    let n = (agents * types * types) as f64;
    Ok((4.0 * c * c * (n / epsilon).ln() / (epsilon * epsilon)).ceil() as usize)
}

/// `N' = ⌈4 ln(nℓ²/ε)/ε²⌉`
pub fn absolute_sample_count(agents: usize, types: usize, epsilon: f64) -> Result<usize> {
    relative_sample_count(agents, types, epsilon, 1.0)
}

/// Exact expectation over opponent profiles and the algorithm's explicit
/// outcome lottery.
/// Partial value sums of one chunk of profiles and its evaluation count.
type Partial = (Vec<Vec<Vec<f64>>>, u128);

pub fn exact_interim(instance: &MechanismInstance, algorithm: &dyn AllocationAlgorithm) -> Result<InterimTable> {
    let n = instance.agents();
    let l = instance.types();
    let profiles = (l as u128).pow(n as u32);
    let required = profiles * (n * l) as u128;
    if required > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            required,
            limit: ENUMERATION_LIMIT,
        });
    }
    let all: Vec<Vec<usize>> = crate::model::Odometer::new(vec![l; n]).collect();

    let partial = |chunk: &[Vec<usize>]| -> Result<(Vec<Vec<Vec<f64>>>, u128)> {
        let mut acc = vec![vec![vec![0.0; l]; l]; n];
        let mut evaluations = 0u128;
        for profile in chunk {
            let weights: Vec<f64> = (0..n)
                .map(|i| {
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| instance.prior(j)[profile[j]])
                        .product()
                })
                .collect();
            if weights.iter().all(|&w| w == 0.0) {
                continue;
            }
            let lottery = algorithm
                .distribution(instance, profile)
                .ok_or_else(|| Error::NotEnumerable(algorithm.name()))?;
            evaluations += lottery.len() as u128;
            for (q, allocation) in &lottery {
                for i in 0..n {
                    if weights[i] == 0.0 {
                        continue;
                    }
                    let t = profile[i];
                    for s in 0..l {
                        acc[i][s][t] += weights[i] * q * instance.value(i, s, allocation[i]);
                    }
                }
            }
        }
        Ok((acc, evaluations))
    };

    let chunk = (all.len() / 64).max(16);
    let parts: Vec<Result<Partial>> = all.par_chunks(chunk).map(partial).collect();
    let mut values = vec![vec![vec![0.0; l]; l]; n];
    let mut evaluations = 0u128;
    for part in parts {
        let (acc, count) = part?;
        evaluations += count;
        for i in 0..n {
            for s in 0..l {
                for t in 0..l {
                    values[i][s][t] += acc[i][s][t];
                }
            }
        }
    }
    if evaluations * (n * l) as u128 > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            required: evaluations * (n * l) as u128,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(InterimTable {
        values,
        mode: InterimMode::Exact,
        samples_per_entry: 0,
    })
}

pub fn estimate_interim_relative(
    instance: &MechanismInstance,
    algorithm: &dyn AllocationAlgorithm,
    epsilon: f64,
    c: f64,
    seed: u64,
) -> Result<InterimTable> {
    let samples = relative_sample_count(instance.agents(), instance.types(), epsilon, c)?;
    let values = sample_means(instance, algorithm, samples, seed);
    Ok(InterimTable {
        values,
        mode: InterimMode::Relative { epsilon, c },
        samples_per_entry: samples,
    })
}

pub fn estimate_interim_absolute(
    instance: &MechanismInstance,
    algorithm: &dyn AllocationAlgorithm,
    epsilon: f64,
    seed: u64,
) -> Result<InterimTable> {
    let samples = absolute_sample_count(instance.agents(), instance.types(), epsilon)?;
    let values = sample_means(instance, algorithm, samples, seed);
    Ok(InterimTable {
        values,
        mode: InterimMode::Absolute { epsilon },
        samples_per_entry: samples,
    })
}

pub fn interim_table(
    instance: &MechanismInstance,
    algorithm: &dyn AllocationAlgorithm,
    mode: InterimMode,
    seed: u64,
) -> Result<InterimTable> {
    match mode {
        InterimMode::Exact => exact_interim(instance, algorithm),
        InterimMode::Relative { epsilon, c } => estimate_interim_relative(instance, algorithm, epsilon, c, seed),
        InterimMode::Absolute { epsilon } => estimate_interim_absolute(instance, algorithm, epsilon, seed),
    }
}

/// For each `(i, t)`, draws `samples` runs with agent `i` reporting `t` and
/// everyone else drawn from the prior, and scores the received service under
/// every true type `s`. Sample `k` of entry `(i, t)` uses its own stream, so
/// the result does not depend on the number of worker threads.
fn sample_means(
    instance: &MechanismInstance,
    algorithm: &dyn AllocationAlgorithm,
    samples: usize,
    seed: u64,
) -> Vec<Vec<Vec<f64>>> {
    let n = instance.agents();
    let l = instance.types();
    let entries: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..l).map(move |t| (i, t))).collect();
    let columns: Vec<Vec<f64>> = entries
        .par_iter()
        .map(|&(i, t)| {
            let mut totals = vec![0.0; l];
            for k in 0..samples {
                let mut rng = stream(seed, &[i as u64, t as u64, k as u64]);
                let mut profile = instance.sample_profile(&mut rng).0;
                profile[i] = t;
                let service = algorithm.allocate(instance, &profile, &mut rng)[i];
                for (s, total) in totals.iter_mut().enumerate() {
                    *total += instance.value(i, s, service);
                }
            }
            totals.into_iter().map(|x| x / samples.max(1) as f64).collect()
        })
        .collect();
    let mut values = vec![vec![vec![0.0; l]; l]; n];
    for ((i, t), column) in entries.into_iter().zip(columns) {
        for s in 0..l {
            values[i][s][t] = column[s];
        }
    }
    values
}
