//! Envy-free prices for a fixed optimal allocation.
//!
//! Dual feasibility and complementary slackness with respect to `x` are all
//! difference constraints over the utilities `u`, the negated prices `-p` and
//! a zero node, so a shortest-path computation yields the extreme optimal
//! duals: the greatest solution (buyer-optimal, smallest prices) or the least
//! one (seller-optimal, largest prices).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{AssignmentProblem, DualSelection};

struct Constraint<T> {
    from: usize,
    to: usize,
    /// value[to] - value[from] <= bound
    bound: T,
}

pub(crate) fn envy_free_duals<T: Scalar>(
    problem: &AssignmentProblem<T>,
    x: &[Vec<T>],
    selection: DualSelection,
) -> Result<(Vec<T>, Vec<T>)> {
    let buyers = problem.buyers();
    let products = problem.products();
    let zero = 0;
    let buyer = |s: usize| 1 + s;
    let product = |t: usize| 1 + buyers + t;
    let count = 1 + buyers + products;

    let mut constraints = Vec::new();
    for s in 0..buyers {
        for t in 0..products {
            let w = problem.value(s, t).clone();
            // u_s + p_t >= w
            constraints.push(Constraint {
                from: buyer(s),
                to: product(t),
                bound: -w.clone(),
            });
            if x[s][t].is_positive_tol() {
                // u_s + p_t <= w
                constraints.push(Constraint {
                    from: product(t),
                    to: buyer(s),
                    bound: w,
                });
            }
        }
        // u_s >= 0
        constraints.push(Constraint {
            from: buyer(s),
            to: zero,
            bound: T::zero(),
        });
        let row = x[s].iter().fold(T::zero(), |a, b| a + b.clone());
        if problem.demands()[s].gt_tol(&row) {
            // u_s <= 0 on a row with leftover demand
            constraints.push(Constraint {
                from: zero,
                to: buyer(s),
                bound: T::zero(),
            });
        }
    }
    for t in 0..products {
        // p_t >= 0
        constraints.push(Constraint {
            from: zero,
            to: product(t),
            bound: T::zero(),
        });
        let col = (0..buyers).fold(T::zero(), |a, s| a + x[s][t].clone());
        if problem.supplies()[t].gt_tol(&col) {
            // p_t <= 0 on a product with leftover supply
            constraints.push(Constraint {
                from: product(t),
                to: zero,
                bound: T::zero(),
            });
        }
    }

    let values: Vec<Option<T>> = match selection {
        DualSelection::BuyerOptimal => shortest_from_zero(count, &constraints, false)?,
        DualSelection::SellerOptimal => shortest_from_zero(count, &constraints, true)?
            .into_iter()
            .map(|d| d.map(|v| -v))
            .collect(),
    };

    let mut u: Vec<Option<T>> = (0..buyers).map(|s| values[buyer(s)].clone()).collect();
    let mut p: Vec<Option<T>> = (0..products).map(|t| values[product(t)].clone().map(|v| -v)).collect();

    // Variables left unbounded in the chosen direction get the tightest value
    // their remaining constraints allow.
    if p.iter().any(Option::is_none) {
        for t in 0..products {
            if p[t].is_none() {
                let need = (0..buyers)
                    .map(|s| problem.value(s, t).clone() - u[s].clone().expect("buyer bounded"))
                    .fold(T::zero(), T::max_of);
                p[t] = Some(need);
            }
        }
    }
    if u.iter().any(Option::is_none) {
        for s in 0..buyers {
            if u[s].is_none() {
                let need = (0..products)
                    .map(|t| problem.value(s, t).clone() - p[t].clone().expect("product bounded"))
                    .fold(T::zero(), T::max_of);
                u[s] = Some(need);
            }
        }
    }
    Ok((
        u.into_iter().map(|v| v.expect("filled")).collect(),
        p.into_iter().map(|v| v.expect("filled")).collect(),
    ))
}

/// Bellman-Ford from node 0. With `reversed`, every constraint is read in
/// the negated variables, which turns the greatest solution into the least.
fn shortest_from_zero<T: Scalar>(
    count: usize,
    constraints: &[Constraint<T>],
    reversed: bool,
) -> Result<Vec<Option<T>>> {
    let mut dist: Vec<Option<T>> = vec![None; count];
    dist[0] = Some(T::zero());
    let arcs: Vec<(usize, usize, &T)> = constraints
        .iter()
        .map(|c| {
            if reversed {
                (c.to, c.from, &c.bound)
            } else {
                (c.from, c.to, &c.bound)
            }
        })
        .collect();
    for round in 0..=count {
        let mut changed = false;
        for &(from, to, bound) in &arcs {
            let Some(base) = dist[from].clone() else { continue };
            let candidate = base + bound.clone();
            let better = match &dist[to] {
                None => true,
                Some(d) => d.gt_tol(&candidate),
            };
            if better {
                if round == count {
                    return Err(Error::NumericFailure(
                        "no envy-free prices support this allocation".into(),
                    ));
                }
                dist[to] = Some(candidate);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(dist)
}
