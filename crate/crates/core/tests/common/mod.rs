#![allow(dead_code)]

use bicforge::algorithm::{
    AllocationAlgorithm, Constant, OptimalBruteforce, RandomSerialDictator, SerialDictator, TypeLottery,
};
use bicforge::assignment::AssignmentProblem;
use bicforge::model::{Feasibility, MechanismInstance, Valuation};
use bicforge::scalar::{rational, Rational};
use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random split of `parts` units of `1/parts` into `l` positive pieces.
pub fn dyadic_prior<R: Rng>(rng: &mut R, l: usize, parts: u32) -> Vec<f64> {
    let mut cuts: Vec<u32> = (1..parts).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<u32> = cuts[..l - 1].to_vec();
    cuts.sort_unstable();
    let mut prior = Vec::with_capacity(l);
    let mut last = 0;
    for c in cuts.into_iter().chain(std::iter::once(parts)) {
        prior.push((c - last) as f64 / parts as f64);
        last = c;
    }
    prior
}

pub fn quarter<R: Rng>(rng: &mut R, max: u32) -> f64 {
    rng.gen_range(0..=4 * max) as f64 / 4.0
}

/// Table-valued instance with a null service 0, `2..=3` services per agent,
/// dyadic priors and values on a quarter grid no larger than `max_value`.
/// Feasibility is unrestricted or an explicit downward-closed family.
pub fn table_instance<R: Rng>(rng: &mut R, n: usize, l: usize, max_value: u32) -> MechanismInstance {
    let services: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=3)).collect();
    let valuations: Vec<Vec<Valuation>> = services
        .iter()
        .map(|&k| {
            (0..l)
                .map(|_| {
                    let mut v = vec![0.0];
                    v.extend((1..k).map(|_| quarter(rng, max_value)));
                    Valuation::table(v)
                })
                .collect()
        })
        .collect();
    let priors = (0..n).map(|_| dyadic_prior(rng, l, 16)).collect();
    let feasibility = if rng.gen_bool(0.5) {
        Feasibility::Unrestricted
    } else {
        let mut allocations = Vec::new();
        let mut odometer = vec![0usize; n];
        loop {
            let served = odometer.iter().filter(|&&s| s != 0).count();
            if served <= 1 || rng.gen_bool(0.3) {
                allocations.push(odometer.clone());
            }
            let mut i = 0;
            while i < n {
                odometer[i] += 1;
                if odometer[i] < services[i] {
                    break;
                }
                odometer[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
        }
        let closed: Vec<Vec<usize>> = allocations
            .iter()
            .filter(|a| {
                (0..n).all(|i| {
                    let mut b = (*a).clone();
                    b[i] = 0;
                    allocations.contains(&b)
                })
            })
            .cloned()
            .collect();
        Feasibility::Explicit { allocations: closed }
    };
    MechanismInstance::build(services, Some(0), feasibility, valuations, priors).expect("valid instance")
}

/// A small algorithm with explicit randomness.
pub fn small_algorithm<R: Rng>(rng: &mut R, instance: &MechanismInstance) -> Box<dyn AllocationAlgorithm> {
    let n = instance.agents();
    match rng.gen_range(0..4) {
        0 => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            Box::new(SerialDictator::with_order(instance, order).unwrap())
        }
        1 => Box::new(RandomSerialDictator::new(instance).unwrap()),
        2 => Box::new(OptimalBruteforce::new(instance).unwrap()),
        _ => {
            let allocations = instance.feasible_allocations(1 << 20).unwrap();
            let pick = allocations[rng.gen_range(0..allocations.len())].clone();
            Box::new(Constant::new(instance, pick).unwrap())
        }
    }
}

/// Single-parameter instance: services `[φ, serve]`, strictly decreasing
/// served values and positive dyadic priors.
pub fn single_parameter_instance<R: Rng>(rng: &mut R, n: usize, l: usize) -> MechanismInstance {
    let valuations = (0..n)
        .map(|_| {
            let mut vals: Vec<u32> = (1..=32).collect();
            vals.shuffle(rng);
            let mut vals = vals[..l].to_vec();
            vals.sort_unstable_by(|a, b| b.cmp(a));
            vals.into_iter()
                .map(|v| Valuation::table(vec![0.0, v as f64 / 4.0]))
                .collect()
        })
        .collect();
    let priors = (0..n).map(|_| dyadic_prior(rng, l, 16)).collect();
    MechanismInstance::build(vec![2], Some(0), Feasibility::Unrestricted, valuations, priors).unwrap()
}

/// Serve probabilities on a 1/8 grid; monotone (non-increasing in the
/// type index) for every agent when `monotone`, otherwise arbitrary.
pub fn serve_table<R: Rng>(rng: &mut R, n: usize, l: usize, monotone: bool) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let mut row: Vec<f64> = (0..l).map(|_| rng.gen_range(0..=8) as f64 / 8.0).collect();
            if monotone {
                row.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap());
            }
            row
        })
        .collect()
}

pub fn lottery(instance: &MechanismInstance, serve: Vec<Vec<f64>>) -> TypeLottery {
    TypeLottery::new(instance, serve).unwrap()
}

fn random_rational<R: Rng>(rng: &mut R, max_num: i64, dens: &[i64]) -> Rational {
    let den = dens[rng.gen_range(0..dens.len())];
    rational(rng.gen_range(0..=max_num * den), den)
}

/// Transportation instance with up to `max_side` buyers and products and
/// small rational data.
pub fn transport_instance<R: Rng>(rng: &mut R, max_side: usize) -> AssignmentProblem<Rational> {
    let l = rng.gen_range(1..=max_side);
    let m = rng.gen_range(1..=max_side);
    let mass_dens = [1, 2, 3, 4, 5, 6, 7, 8];
    let value_dens = [1, 2, 3, 4];
    let demands = (0..l).map(|_| random_rational(rng, 2, &mass_dens)).collect();
    let supplies = (0..m).map(|_| random_rational(rng, 2, &mass_dens)).collect();
    let values = (0..l)
        .map(|_| (0..m).map(|_| random_rational(rng, 10, &value_dens)).collect())
        .collect();
    AssignmentProblem::new(demands, supplies, values).unwrap()
}

/// Square instance whose supplies are a permutation of its demands, the
/// shape of an induced problem.
pub fn balanced_transport_instance<R: Rng>(rng: &mut R, max_side: usize) -> AssignmentProblem<Rational> {
    let l = rng.gen_range(1..=max_side);
    let mass_dens = [1, 2, 3, 4, 5, 6, 7, 8];
    let value_dens = [1, 2, 3, 4];
    let demands: Vec<Rational> = (0..l).map(|_| random_rational(rng, 2, &mass_dens)).collect();
    let mut supplies = demands.clone();
    supplies.shuffle(rng);
    let values = (0..l)
        .map(|_| (0..l).map(|_| random_rational(rng, 10, &value_dens)).collect())
        .collect();
    AssignmentProblem::new(demands, supplies, values).unwrap()
}

fn common_denominator<'a>(values: impl Iterator<Item = &'a Rational>) -> BigInt {
    values.fold(BigInt::from(1), |acc, v| acc.lcm(v.denom()))
}

fn scaled(v: &Rational, d: &BigInt) -> i64 {
    (v * Rational::from_integer(d.clone()))
        .to_integer()
        .to_i64()
        .expect("small data")
}

/// Exhaustive basic-solution oracle for `max Σ w x` subject to row sums
/// `≤ demands`, column sums `≤ supplies`, `x ≥ 0`.
///
/// Bases of the slack-augmented constraint matrix are rooted spanning
/// forests of the complete bipartite graph on buyers and products: every
/// tree keeps exactly one slack, at its root, and every other node is
/// tight. Trees are independent, so the search enumerates every spanning
/// tree and root of every node subset, keeps the best feasible one per
/// subset, and combines subsets by a partition DP. Flows are computed by
/// peeling leaves in integer arithmetic after scaling the data.
pub fn vertex_oracle(problem: &AssignmentProblem<Rational>) -> Rational {
    let l = problem.buyers();
    let m = problem.products();
    let dm = common_denominator(problem.demands().iter().chain(problem.supplies()));
    let dw = common_denominator(problem.values().iter().flatten());
    let mut b: Vec<i64> = problem.demands().iter().map(|v| scaled(v, &dm)).collect();
    b.extend(problem.supplies().iter().map(|v| scaled(v, &dm)));
    let nodes = l + m;
    let mut w = [[0i64; MAX_NODES]; MAX_NODES];
    for s in 0..l {
        for t in 0..m {
            let v = scaled(&problem.values()[s][t], &dw);
            w[s][l + t] = v;
            w[l + t][s] = v;
        }
    }
    let full = (1usize << nodes) - 1;
    let mut tree_best = vec![None; full + 1];
    for (mask, slot) in tree_best.iter_mut().enumerate().skip(1) {
        let members: Vec<usize> = (0..nodes).filter(|&v| mask >> v & 1 == 1).collect();
        *slot = best_tree(&members, l, &b, &w);
    }
    let mut best = vec![None::<i64>; full + 1];
    best[0] = Some(0);
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        let mut value = None;
        loop {
            let tree = sub | low;
            if let (Some(a), Some(c)) = (tree_best[tree], best[mask ^ tree]) {
                value = Some(value.map_or(a + c, |v: i64| v.max(a + c)));
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        best[mask] = value;
    }
    Rational::new(BigInt::from(best[full].expect("zero is feasible")), dm * dw)
}

const MAX_NODES: usize = 16;

/// Best objective over spanning trees of `members` (bipartite edges only)
/// and roots, `None` when no basis on this node set is feasible.
fn best_tree(members: &[usize], l: usize, b: &[i64], w: &[[i64; MAX_NODES]; MAX_NODES]) -> Option<i64> {
    let k = members.len();
    if k == 1 {
        return (b[members[0]] >= 0).then_some(0);
    }
    let buyers = members.iter().filter(|&&v| v < l).count();
    if buyers == 0 || buyers == k {
        return None;
    }
    let mut parent = vec![usize::MAX; k];
    let mut best = None;
    enumerate_trees(1, members, l, &mut parent, &mut |parent| {
        if let Some(v) = best_root(parent, members, l, b, w) {
            best = Some(best.map_or(v, |x: i64| x.max(v)));
        }
    });
    best
}

/// Parent functions over local indices with local node 0 as the root:
/// each is exactly one spanning tree.
fn enumerate_trees(v: usize, members: &[usize], l: usize, parent: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
    let k = members.len();
    if v == k {
        visit(parent);
        return;
    }
    for u in 0..k {
        if (members[u] < l) == (members[v] < l) {
            continue;
        }
        let mut x = u;
        let mut cycle = false;
        loop {
            if x == v {
                cycle = true;
                break;
            }
            if x == 0 || parent[x] == usize::MAX {
                break;
            }
            x = parent[x];
        }
        if !cycle {
            parent[v] = u;
            enumerate_trees(v + 1, members, l, parent, visit);
        }
    }
    parent[v] = usize::MAX;
}

/// Best feasible root of one tree. With `D(A) = Σ_{buyers in A} b −
/// Σ_{products in A} b` and `σ(v) = ±1` for buyers/products, the edge from
/// `v` to its parent carries `σ(v)·D(subtree of v)` when the root lies
/// above it and `σ(parent)·(D(T) − D(subtree of v))` otherwise; the root
/// `r` keeps slack `σ(r)·D(T)`. Objective and violations are re-rooted
/// along tree edges.
fn best_root(
    parent: &[usize],
    members: &[usize],
    l: usize,
    b: &[i64],
    w: &[[i64; MAX_NODES]; MAX_NODES],
) -> Option<i64> {
    let k = members.len();
    let sigma = |v: usize| if members[v] < l { 1i64 } else { -1 };
    let mut children = [[0usize; MAX_NODES]; MAX_NODES];
    let mut count = [0usize; MAX_NODES];
    for v in 1..k {
        let u = parent[v];
        children[u][count[u]] = v;
        count[u] += 1;
    }
    let mut order = [0usize; MAX_NODES];
    let mut len = 1;
    let mut head = 0;
    while head < len {
        let v = order[head];
        head += 1;
        for &c in &children[v][..count[v]] {
            order[len] = c;
            len += 1;
        }
    }
    let mut d = [0i64; MAX_NODES];
    for &v in order[..k].iter().rev() {
        d[v] += sigma(v) * b[members[v]];
        if v != 0 {
            d[parent[v]] += d[v];
        }
    }
    let total = d[0];
    let mut up = [0i64; MAX_NODES];
    let mut down = [0i64; MAX_NODES];
    let mut objective = [0i64; MAX_NODES];
    let mut bad = [0i32; MAX_NODES];
    for v in 1..k {
        up[v] = sigma(v) * d[v];
        down[v] = sigma(parent[v]) * (total - d[v]);
        objective[0] += w[members[v]][members[parent[v]]] * up[v];
        bad[0] += i32::from(up[v] < 0);
    }
    let mut best = None;
    for &v in &order[..k] {
        if v != 0 {
            let p = parent[v];
            let edge = w[members[v]][members[p]];
            objective[v] = objective[p] - edge * up[v] + edge * down[v];
            bad[v] = bad[p] - i32::from(up[v] < 0) + i32::from(down[v] < 0);
        }
        if bad[v] == 0 && sigma(v) * total >= 0 {
            best = Some(best.map_or(objective[v], |x: i64| x.max(objective[v])));
        }
    }
    best
}

/// Exact objective of `x` under the problem's values.
pub fn objective_of(problem: &AssignmentProblem<Rational>, x: &[Vec<Rational>]) -> Rational {
    let mut total = Rational::zero();
    for (row, xs) in problem.values().iter().zip(x) {
        for (w, v) in row.iter().zip(xs) {
            total += w * v;
        }
    }
    total
}
