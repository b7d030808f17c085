//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

mod common;

use std::process::Command;
use std::time::Instant;

use bicforge::algorithm::{AllocationAlgorithm, OptimalBruteforce};
use bicforge::assignment::{check_certificate, check_envy_free, solve_welfare_lp, AssignmentProblem};
use bicforge::ca::{CaAlgorithm, Resolver};
use bicforge::interim::{
    absolute_sample_count, estimate_interim_absolute, estimate_interim_relative, exact_interim, relative_sample_count,
    InterimMode, InterimTable,
};
use bicforge::mechanism::AlgorithmMechanism;
use bicforge::model::generate;
use bicforge::model::{Feasibility, MechanismInstance, Valuation};
use bicforge::reduction_rr::{lower_bound_instance, meta_tables_from_interim, reserve_ladder_revenue, LadderObjective};
use bicforge::reduction_sw::{tables_from_interim, DecoupledMechanism};
use bicforge::rng::{derive_seed, stream};
use bicforge::scalar::{Rational, Scalar};
use bicforge::verify::{certify, myerson_monotone_check, optimal_welfare, performance};
use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{Binomial, DiscreteCDF};

use common::*;

const TOL: f64 = 1e-9;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Verdict {
    let results: Vec<Result<bool, String>> = (0..500u64)
        .into_par_iter()
        .map(|k| {
            let mut r = rng(derive_seed(1, &[k]));
            let problem = if k % 2 == 0 {
                transport_instance(&mut r, 5)
            } else {
                balanced_transport_instance(&mut r, 5)
            };
            let solution = solve_welfare_lp(&problem).map_err(|e| format!("instance {k}: {e}"))?;
            let cert = check_certificate(&problem, &solution);
            let envy = check_envy_free(&problem, &solution);
            let oracle = vertex_oracle(&problem);
            if !cert.certified() || !envy.ok {
                return Err(format!("instance {k}: certificate {cert:?}, envy-free {}", envy.ok));
            }
            if solution.objective != oracle || objective_of(&problem, &solution.x) != oracle {
                return Err(format!(
                    "instance {k}: objective {} vs oracle {oracle}",
                    solution.objective
                ));
            }
            Ok(cert.market_clearing)
        })
        .collect();
    let clearing = results.iter().filter(|r| matches!(r, Ok(true))).count();
    let failures: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    verdict(
        failures.is_empty(),
        format!(
            "500 instances ({clearing} market-clearing), {} failures {:?}",
            failures.len(),
            failures.first()
        ),
    )
}

struct Case {
    instance: MechanismInstance,
    algorithm: Box<dyn AllocationAlgorithm>,
    exact: InterimTable,
    algorithm_welfare: f64,
}

/// Shared suite: n ≤ 3, ℓ ≤ 4, values in [0, 1] on a quarter grid.
fn exact_suite() -> Vec<Case> {
    (0..100u64)
        .map(|k| {
            let mut r = rng(derive_seed(2, &[k]));
            let n = r.gen_range(1..=3);
            let l = r.gen_range(1..=4);
            let instance = table_instance(&mut r, n, l, 1);
            let algorithm = small_algorithm(&mut r, &instance);
            let exact = exact_interim(&instance, algorithm.as_ref()).unwrap();
            let algorithm_welfare = performance(
                &instance,
                &AlgorithmMechanism {
                    algorithm: algorithm.as_ref(),
                },
            )
            .unwrap()
            .welfare;
            Case {
                instance,
                algorithm,
                exact,
                algorithm_welfare,
            }
        })
        .collect()
}

fn criterion_2(suite: &[Case]) -> Verdict {
    let mut worst_regret = 0.0f64;
    let mut worst_gap = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for (k, case) in suite.iter().enumerate() {
        let tables = tables_from_interim(&case.instance, &case.exact).unwrap();
        let mech = DecoupledMechanism {
            tables: &tables,
            algorithm: case.algorithm.as_ref(),
        };
        let report = certify(&case.instance, &mech, TOL).unwrap();
        let welfare = performance(&case.instance, &mech).unwrap().welfare;
        worst_regret = worst_regret.max(report.max_regret);
        worst_gap = worst_gap.max(case.algorithm_welfare - welfare);
        let ir = report.ir.as_ref().map(|r| r.ok).unwrap_or(false);
        if report.max_regret > TOL || !ir || welfare < case.algorithm_welfare - TOL {
            failures.push(k);
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "100 instances, max regret {worst_regret:.3e}, max SW shortfall {worst_gap:.3e}, failures {failures:?}"
        ),
    )
}

fn sign_patterns(case: &Case) -> Vec<Vec<Vec<Vec<f64>>>> {
    let shape = &case.exact.values;
    let pattern = |f: &dyn Fn(usize, usize, usize) -> f64| -> Vec<Vec<Vec<f64>>> {
        shape
            .iter()
            .enumerate()
            .map(|(i, rows)| {
                rows.iter()
                    .enumerate()
                    .map(|(s, row)| (0..row.len()).map(|t| f(i, s, t)).collect())
                    .collect()
            })
            .collect()
    };
    let mut out = vec![
        pattern(&|_, _, _| 1.0),
        pattern(&|_, _, _| -1.0),
        pattern(&|_, s, t| if s == t { 1.0 } else { -1.0 }),
        pattern(&|_, s, t| if s == t { -1.0 } else { 1.0 }),
        pattern(&|_, s, t| if t > s { 1.0 } else { -1.0 }),
        pattern(&|_, s, t| if t < s { 1.0 } else { -1.0 }),
    ];
    for r in 0..4u64 {
        let mut g = rng(derive_seed(3, &[r]));
        out.push(
            pattern(&|_, _, _| 0.0)
                .into_iter()
                .map(|a| {
                    a.into_iter()
                        .map(|row| {
                            row.into_iter()
                                .map(|_| if g.gen_bool(0.5) { 1.0 } else { -1.0 })
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        );
    }
    out
}

fn criterion_3(suite: &[Case]) -> Verdict {
    let mut worst = [0.0f64; 2];
    let mut failures = Vec::new();
    for (k, case) in suite.iter().enumerate() {
        let n = case.instance.agents() as f64;
        let v_max = case.instance.v_max();
        for epsilon in [0.01, 0.05, 0.1] {
            for (p, signs) in sign_patterns(case).iter().enumerate() {
                for (relative, mode) in [
                    (true, InterimMode::Relative { epsilon, c: 1.0 }),
                    (false, InterimMode::Absolute { epsilon }),
                ] {
                    let values: Vec<Vec<Vec<f64>>> = case
                        .exact
                        .values
                        .iter()
                        .zip(signs)
                        .map(|(rows, srows)| {
                            rows.iter()
                                .zip(srows)
                                .map(|(row, srow)| {
                                    row.iter()
                                        .zip(srow)
                                        .map(|(&w, &sg)| {
                                            if relative {
                                                w * (1.0 + sg * epsilon)
                                            } else {
                                                (w + sg * epsilon).max(0.0)
                                            }
                                        })
                                        .collect()
                                })
                                .collect()
                        })
                        .collect();
                    let table = InterimTable {
                        values,
                        mode,
                        samples_per_entry: 0,
                    };
                    let tables = tables_from_interim(&case.instance, &table).unwrap();
                    let mech = DecoupledMechanism {
                        tables: &tables,
                        algorithm: case.algorithm.as_ref(),
                    };
                    let report = certify(&case.instance, &mech, 0.0).unwrap();
                    let welfare = performance(&case.instance, &mech).unwrap().welfare;
                    let (regret_bound, welfare_floor) = if relative {
                        (4.0 * epsilon * v_max, (1.0 - 2.0 * epsilon) * case.algorithm_welfare)
                    } else {
                        (4.0 * epsilon, case.algorithm_welfare - 2.0 * n * epsilon)
                    };
                    let slot = usize::from(!relative);
                    if regret_bound > 0.0 {
                        worst[slot] = worst[slot].max(report.max_regret / regret_bound);
                    }
                    let ir = report.ir.as_ref().map(|r| r.ok).unwrap_or(false);
                    if report.max_regret > regret_bound + TOL || welfare < welfare_floor - TOL || !ir {
                        failures.push((k, epsilon, p, relative));
                    }
                }
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "regret/bound max: relative {:.3}, additive {:.3}; {} failures {:?}",
            worst[0],
            worst[1],
            failures.len(),
            failures.first()
        ),
    )
}

/// Exact mean and std/mean of every per-sample interim value
/// `v_i^s(A(t, b_{-i}))`.
fn entry_moments(instance: &MechanismInstance, algorithm: &dyn AllocationAlgorithm) -> (Vec<Vec<Vec<f64>>>, f64) {
    let n = instance.agents();
    let l = instance.types();
    let mut worst_ratio = 0.0f64;
    let mut means = vec![vec![vec![0.0; l]; l]; n];
    for i in 0..n {
        for t in 0..l {
            let mut first = vec![0.0; l];
            let mut second = vec![0.0; l];
            for (profile, weight) in instance.opponent_profiles(i, t) {
                for (q, allocation) in algorithm.distribution(instance, &profile).unwrap() {
                    for s in 0..l {
                        let v = instance.value(i, s, allocation[i]);
                        first[s] += weight * q * v;
                        second[s] += weight * q * v * v;
                    }
                }
            }
            for s in 0..l {
                means[i][s][t] = first[s];
                if first[s] > 1e-12 {
                    let var = (second[s] - first[s] * first[s]).max(0.0);
                    worst_ratio = worst_ratio.max(var.sqrt() / first[s]);
                }
            }
        }
    }
    (means, worst_ratio)
}

fn binomial_ok(successes: u64, runs: u64, p: f64) -> (bool, f64) {
    let dist = Binomial::new(p, runs).unwrap();
    let p_value = if successes == 0 {
        dist.cdf(0)
    } else {
        dist.cdf(successes)
    };
    (p_value >= 0.01, p_value)
}

fn criterion_4() -> Verdict {
    let runs = 200u64;
    let mut lines = Vec::new();
    let mut pass = true;
    for k in 0..3u64 {
        let mut r = rng(derive_seed(4, &[k]));
        let instance = table_instance(&mut r, 2, 3, 2);
        let algorithm: Box<dyn AllocationAlgorithm> =
            Box::new(bicforge::algorithm::RandomSerialDictator::new(&instance).unwrap());
        let (exact, ratio) = entry_moments(&instance, algorithm.as_ref());
        let c = ratio.max(0.5);
        let v_max = instance.v_max();
        for epsilon in [0.1, 0.05] {
            for relative in [true, false] {
                let hits: u64 = (0..runs)
                    .into_par_iter()
                    .map(|run| {
                        let seed = derive_seed(5, &[k, run, relative as u64, (epsilon * 1000.0) as u64]);
                        let table = if relative {
                            estimate_interim_relative(&instance, algorithm.as_ref(), epsilon, c, seed).unwrap()
                        } else {
                            estimate_interim_absolute(&instance, algorithm.as_ref(), epsilon, seed).unwrap()
                        };
                        let inside = table
                            .values
                            .iter()
                            .flatten()
                            .flatten()
                            .zip(exact.iter().flatten().flatten())
                            .all(|(&est, &w)| {
                                if relative {
                                    (est - w).abs() <= epsilon * w + 1e-12
                                } else {
                                    (est - w).abs() <= epsilon * v_max + 1e-12
                                }
                            });
                        u64::from(inside)
                    })
                    .sum();
                let (ok, p_value) = binomial_ok(hits, runs, 1.0 - epsilon);
                pass &= ok;
                let samples = if relative {
                    relative_sample_count(instance.agents(), instance.types(), epsilon, c).unwrap()
                } else {
                    absolute_sample_count(instance.agents(), instance.types(), epsilon).unwrap()
                };
                lines.push(format!(
                    "{}{}@{epsilon}: {hits}/{runs} (N={samples}, p={p_value:.2})",
                    if relative { "rel" } else { "abs" },
                    k
                ));
            }
        }
    }
    verdict(pass, lines.join(", "))
}

fn criterion_5() -> Verdict {
    let mut pass = true;
    let mut lines = Vec::new();
    for levels in 2..=6usize {
        let instance = lower_bound_instance(levels).unwrap();
        let opt = optimal_welfare(&instance).unwrap();
        let algorithm = OptimalBruteforce::new(&instance).unwrap();
        let sw_a = performance(&instance, &AlgorithmMechanism { algorithm: &algorithm })
            .unwrap()
            .welfare;
        let table = exact_interim(&instance, &algorithm).unwrap();
        let mut parts = vec![format!("K={levels} OPT={opt}")];
        pass &= opt == levels as f64;
        for objective in [LadderObjective::Revenue, LadderObjective::Surplus] {
            let meta = meta_tables_from_interim(&instance, &table, objective).unwrap();
            let mech = meta.mechanism(&algorithm);
            let report = certify(&instance, &mech, TOL).unwrap();
            let perf = performance(&instance, &mech).unwrap();
            let achieved = match objective {
                LadderObjective::Revenue => perf.revenue,
                LadderObjective::Surplus => perf.residual_surplus,
            };
            let bound = sw_a / (2.0 * levels as f64);
            let ir = report.ir.as_ref().map(|r| r.ok).unwrap_or(false);
            pass &= achieved >= bound - TOL && report.max_regret <= TOL && ir;
            parts.push(format!("{objective:?}={achieved:.4}>={bound:.4}"));
        }
        lines.push(parts.join(" "));
    }
    verdict(pass, lines.join("; "))
}

fn criterion_6() -> Verdict {
    let mut failures = Vec::new();
    let mut worst = f64::INFINITY;
    let mut count = 0usize;
    let mut k = 0u64;
    while count < 200 {
        let mut r = rng(derive_seed(6, &[k]));
        k += 1;
        let n = r.gen_range(1..=3);
        let l = r.gen_range(2..=4);
        let instance = table_instance(&mut r, n, l, 3);
        let algorithm = small_algorithm(&mut r, &instance);
        let table = exact_interim(&instance, algorithm.as_ref()).unwrap();
        let agent = r.gen_range(0..n);
        let problem: AssignmentProblem<Rational> = table.induced_problem(&instance, agent).unwrap().to_exact();
        let optimum = solve_welfare_lp(&problem).unwrap().objective;
        let ladder = reserve_ladder_revenue(&problem, instance.granularity()).unwrap();
        let total = ladder.levels.iter().fold(Rational::zero(), |acc, lv| acc + &lv.revenue);
        let half = optimum.clone() / Rational::from_integer(2.into());
        if total < half {
            failures.push(count);
        }
        if !optimum.is_zero() {
            worst = worst.min((total / optimum).to_f64_lossy());
        }
        count += 1;
    }
    verdict(
        failures.is_empty(),
        format!("200 problems, min Σrevenue/welfare {worst:.4}, failures {failures:?}"),
    )
}

fn xos_instance(seed: u64) -> MechanismInstance {
    let mut r = rng(seed);
    let n = r.gen_range(2..=4);
    let m = r.gen_range(2..=8);
    let l = r.gen_range(1..=3);
    let valuations: Vec<Vec<Valuation>> = (0..n)
        .map(|_| {
            (0..l)
                .map(|_| {
                    let clauses = r.gen_range(1..=3);
                    Valuation::Set(generate::xos(&mut r, m, clauses, 4))
                })
                .collect()
        })
        .collect();
    let priors = (0..n).map(|_| dyadic_prior(&mut r, l, 8)).collect();
    MechanismInstance::build(vec![], Some(0), Feasibility::Partition { items: m }, valuations, priors).unwrap()
}

fn resolver_ratios(instance: &MechanismInstance, ca: &CaAlgorithm, seeds: u64, base: u64) -> Vec<(f64, f64, f64)> {
    let n = instance.agents();
    let factor = 1.0 - (-1.0f64).exp();
    let rows: Vec<Vec<(f64, f64)>> = (0..seeds)
        .into_par_iter()
        .map(|k| {
            let mut g = stream(base, &[k]);
            let profile = instance.sample_profile(&mut g);
            let tentative = ca.tentative(&profile, &mut g);
            let fin = ca.resolve(instance, &profile, &tentative, &mut g);
            (0..n)
                .map(|i| {
                    let v = instance.valuation(i, profile[i]).as_set().unwrap();
                    (v.value(fin[i]), v.value(tentative[i]))
                })
                .collect()
        })
        .collect();
    (0..n)
        .map(|i| {
            let finals: Vec<f64> = rows.iter().map(|r| r[i].0).collect();
            let tents: Vec<f64> = rows.iter().map(|r| r[i].1).collect();
            let (mf, _) = bicforge::verify::mean_and_error(finals.iter().copied());
            let (mt, _) = bicforge::verify::mean_and_error(tents.iter().copied());
            let (_, se) = bicforge::verify::mean_and_error(finals.iter().zip(&tents).map(|(a, b)| a - factor * b));
            (mf, mt, se)
        })
        .collect()
}

fn criterion_7() -> Verdict {
    let epsilon = 0.1;
    let factor = 1.0 - (-1.0f64).exp();
    let mut pass = true;
    let mut notes = Vec::new();
    let mut worst_fair = f64::INFINITY;
    let mut worst_other = [f64::INFINITY; 2];
    let mut worst_ratio = 0.0f64;
    for k in 0..8u64 {
        let instance = xos_instance(derive_seed(7, &[k]));
        let n = instance.agents();
        let m = instance.items().unwrap();
        let l = instance.types();
        let opt = optimal_welfare(&instance).unwrap();
        let fair = CaAlgorithm::new(&instance, epsilon, Resolver::Fair).unwrap();
        let lp_star = fair.lp().objective;
        let filtered = fair.filtered().value(&instance);
        let nonzeros = fair.lp().nonzeros();
        let ok_lp = lp_star >= opt - 1e-7 && filtered >= (1.0 - epsilon) * lp_star - 1e-7 && nonzeros <= n * m * l;
        if !ok_lp {
            notes.push(format!(
                "inst {k}: LP*={lp_star} OPT={opt} filtered={filtered} nnz={nonzeros}"
            ));
        }
        pass &= ok_lp;

        let seeds = 100_000;
        for (a, (mf, mt, se)) in resolver_ratios(&instance, &fair, seeds, derive_seed(8, &[k]))
            .into_iter()
            .enumerate()
        {
            if mt > 0.0 {
                worst_fair = worst_fair.min(mf / mt);
                if mf - factor * mt < -3.0 * se {
                    pass = false;
                    notes.push(format!("inst {k} agent {a}: fair {mf:.4} vs {:.4}", factor * mt));
                }
            }
        }
        for (slot, resolver) in [Resolver::HighestSupport, Resolver::Uniform].into_iter().enumerate() {
            let ca = CaAlgorithm::from_solution(&instance, fair.lp().clone(), epsilon, resolver).unwrap();
            for (mf, mt, _) in resolver_ratios(&instance, &ca, seeds / 10, derive_seed(9, &[k])) {
                if mt > 0.0 {
                    worst_other[slot] = worst_other[slot].min(mf / mt);
                }
            }
        }

        let bound = fair.variance_ratio_bound();
        let samples = 4000u64;
        for i in 0..n {
            for t in 0..l {
                let draws: Vec<Vec<f64>> = (0..samples)
                    .into_par_iter()
                    .map(|s| {
                        let mut g = stream(derive_seed(10, &[k, i as u64, t as u64]), &[s]);
                        let mut profile = instance.sample_profile(&mut g).0;
                        profile[i] = t;
                        let allocation = fair.allocate(&instance, &profile, &mut g);
                        (0..l).map(|sv| instance.value(i, sv, allocation[i])).collect()
                    })
                    .collect();
                for sv in 0..l {
                    let (mean, se) = bicforge::verify::mean_and_error(draws.iter().map(|d| d[sv]));
                    if mean > 0.0 {
                        let ratio = se * (samples as f64).sqrt() / mean;
                        worst_ratio = worst_ratio.max(ratio / bound);
                        if ratio > bound {
                            pass = false;
                            notes.push(format!("inst {k}: std/mean {ratio:.3} > {bound:.3}"));
                        }
                    }
                }
            }
        }
    }
    verdict(
        pass,
        format!(
            "8 XOS instances; min fair ratio {worst_fair:.4} (target {factor:.4}); measured only: highest-support {:.4}, uniform {:.4}; max (std/mean)/bound {worst_ratio:.3} {}",
            worst_other[0],
            worst_other[1],
            notes.join("; ")
        ),
    )
}

/// Identity allocation is optimal iff its welfare equals the exhaustive
/// optimum of the induced problem.
fn identity_optimal(prior: &[f64], values: &[f64], serve: &[f64]) -> bool {
    let l = prior.len();
    let f: Vec<Rational> = prior.iter().map(|&p| Rational::from_f64_exact(p)).collect();
    let w: Vec<Vec<Rational>> = (0..l)
        .map(|s| (0..l).map(|t| Rational::from_f64_exact(values[s] * serve[t])).collect())
        .collect();
    let identity: Rational = (0..l).map(|s| &f[s] * &w[s][s]).fold(Rational::zero(), |a, b| a + b);
    let problem = AssignmentProblem::new(f.clone(), f, w).unwrap();
    vertex_oracle(&problem) == identity
}

fn criterion_8() -> Verdict {
    let results: Vec<Result<(), String>> = (0..500u64)
        .into_par_iter()
        .map(|k| {
            let mut r = rng(derive_seed(11, &[k]));
            let n = r.gen_range(1..=3);
            let l = r.gen_range(2..=4);
            let instance = single_parameter_instance(&mut r, n, l);
            let monotone = r.gen_bool(0.5);
            let serve = serve_table(&mut r, n, l, monotone);
            let algorithm = lottery(&instance, serve.clone());
            let report = myerson_monotone_check(&instance, &algorithm).map_err(|e| format!("{k}: {e}"))?;
            if !report.consistent() {
                return Err(format!("{k}: inconsistent {report:?}"));
            }
            for (i, agent) in report.agents.iter().enumerate() {
                let values: Vec<f64> = (0..l).map(|s| instance.value(i, s, 1)).collect();
                let oracle_monotone = serve[i].windows(2).all(|w| w[0] >= w[1]);
                let oracle_identity = identity_optimal(instance.prior(i), &values, &serve[i]);
                if oracle_monotone != oracle_identity
                    || agent.monotone != oracle_monotone
                    || agent.identity_optimal != oracle_identity
                {
                    return Err(format!(
                        "{k} agent {i}: monotone {oracle_monotone} identity {oracle_identity} report {agent:?}"
                    ));
                }
            }
            Ok(())
        })
        .collect();
    let failures: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    verdict(
        failures.is_empty(),
        format!("500 instances, {} failures {:?}", failures.len(), failures.first()),
    )
}

fn run_cli(args: &[&str], threads: &str, cache_dir: &std::path::Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_bicforge"))
        .args(args)
        .env("BICFORGE_THREADS", threads)
        .env("BICFORGE_CACHE_DIR", cache_dir)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn criterion_9() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data");
    let cache = dir.path().join("cache");
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "instance": format!("{data}/two_by_two.json"),
            "algorithm": "random-serial-dictator",
            "mode": "relative",
            "epsilon": 0.1,
            "c": 2.0,
            "seed": 11,
            "replications": 6,
            "samples": 3000,
        })
        .to_string(),
    )
    .unwrap();
    let mut outputs = Vec::new();
    for (run, threads) in ["1", "4", "1"].iter().enumerate() {
        let out = dir.path().join(format!("run{run}"));
        let out_s = out.to_str().unwrap();
        let ok_run = run_cli(&["run", "--config", config.to_str().unwrap()], threads, &cache);
        let ok_ca = run_cli(
            &[
                "ca-experiment",
                "--instance",
                &format!("{data}/ca_small.json"),
                "--epsilon",
                "0.1",
                "--mode",
                "absolute",
                "--seed",
                "5",
                "--replications",
                "3",
                "--out",
                out_s,
            ],
            threads,
            &cache,
        );
        let ok_rr = run_cli(
            &[
                "reduce-rr",
                "--instance",
                &format!("{data}/two_by_two.json"),
                "--out",
                &format!("{out_s}/rr"),
                "--no-cache",
            ],
            threads,
            &cache,
        );
        if !(ok_run && ok_ca && ok_rr) {
            return verdict(false, format!("run {run}: CLI failed ({ok_run}, {ok_ca}, {ok_rr})"));
        }
        let metrics = std::fs::read(dir.path().join("metrics.csv")).unwrap_or_default();
        let _ = std::fs::remove_file(dir.path().join("metrics.csv"));
        outputs.push((
            metrics,
            std::fs::read(out.join("ca.csv")).unwrap(),
            std::fs::read(out.join("rr/metrics.csv")).unwrap(),
            std::fs::read(out.join("rr/ladder.csv")).unwrap(),
        ));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    verdict(
        same && !outputs[0].1.is_empty(),
        "3 runs (threads 1, 4, 1 with warm cache): CSV bytes identical",
    )
}

fn main() {
    let mut all = true;
    let mut report = |name: &str, start: Instant, v: Verdict| {
        all &= v.pass;
        println!(
            "criterion {name}: {} ({:.1}s) {}",
            if v.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            v.detail
        );
    };
    let t = Instant::now();
    report("1", t, criterion_1());
    let t = Instant::now();
    let suite = exact_suite();
    report("2", t, criterion_2(&suite));
    let t = Instant::now();
    report("3", t, criterion_3(&suite));
    let t = Instant::now();
    report("4", t, criterion_4());
    let t = Instant::now();
    report("5", t, criterion_5());
    let t = Instant::now();
    report("6", t, criterion_6());
    let t = Instant::now();
    report("7", t, criterion_7());
    let t = Instant::now();
    report("8", t, criterion_8());
    let t = Instant::now();
    report("9", t, criterion_9());
    if !all {
        std::process::exit(1);
    }
}
