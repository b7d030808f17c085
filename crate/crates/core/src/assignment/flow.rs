//! Successive shortest paths on the bipartite transportation network, with
//! Dijkstra over reduced costs kept non-negative by node potentials.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::AssignmentProblem;

/// Welfare-maximizing allocation of `problem`. Imbalance between total
/// demand and total supply is absorbed by a zero-value slack product or
/// slack buyer, so the returned allocation saturates the shorter side.
pub(crate) fn max_welfare_allocation<T: Scalar>(problem: &AssignmentProblem<T>) -> Result<Vec<Vec<T>>> {
    let buyers = problem.buyers();
    let products = problem.products();
    let mut demands = problem.demands().to_vec();
    let mut supplies = problem.supplies().to_vec();
    let mut values: Vec<Vec<T>> = problem.values().to_vec();

    let total_demand = demands.iter().fold(T::zero(), |a, b| a + b.clone());
    let total_supply = supplies.iter().fold(T::zero(), |a, b| a + b.clone());
    if total_demand.gt_tol(&total_supply) {
        supplies.push(total_demand - total_supply);
        for row in &mut values {
            row.push(T::zero());
        }
    } else if total_supply.gt_tol(&total_demand) {
        demands.push(total_supply - total_demand);
        values.push(vec![T::zero(); supplies.len()]);
    }

    let flow = Network::new(demands, supplies, values).run()?;
    Ok(flow
        .into_iter()
        .take(buyers)
        .map(|row| row.into_iter().take(products).collect())
        .collect())
}

struct Network<T> {
    demands: Vec<T>,
    supplies: Vec<T>,
    values: Vec<Vec<T>>,
    flow: Vec<Vec<T>>,
    left_demand: Vec<T>,
    left_supply: Vec<T>,
    /// buyers, then products, then source, then sink
    potential: Vec<T>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Node {
    Buyer(usize),
    Product(usize),
    Source,
    Sink,
}

impl<T: Scalar> Network<T> {
    fn new(demands: Vec<T>, supplies: Vec<T>, values: Vec<Vec<T>>) -> Self {
        let b = demands.len();
        let p = supplies.len();
        let mut potential = vec![T::zero(); b + p + 2];
        for t in 0..p {
            let top = (0..b).map(|s| values[s][t].clone()).fold(T::zero(), T::max_of);
            potential[b + t] = -top;
        }
        potential[b + p + 1] = (0..p).map(|t| potential[b + t].clone()).fold(T::zero(), T::min_of);
        Network {
            left_demand: demands.clone(),
            left_supply: supplies.clone(),
            flow: vec![vec![T::zero(); p]; b],
            demands,
            supplies,
            values,
            potential,
        }
    }

    fn index(&self, node: Node) -> usize {
        let b = self.demands.len();
        let p = self.supplies.len();
        match node {
            Node::Buyer(s) => s,
            Node::Product(t) => b + t,
            Node::Source => b + p,
            Node::Sink => b + p + 1,
        }
    }

    fn node(&self, index: usize) -> Node {
        let b = self.demands.len();
        let p = self.supplies.len();
        if index < b {
            Node::Buyer(index)
        } else if index < b + p {
            Node::Product(index - b)
        } else if index == b + p {
            Node::Source
        } else {
            Node::Sink
        }
    }

    /// Residual arcs leaving `from` with their reduced costs.
    fn arcs(&self, from: Node) -> Vec<(Node, T)> {
        let pot = |n: Node| self.potential[self.index(n)].clone();
        let mut out = Vec::new();
        match from {
            Node::Source => {
                for s in 0..self.demands.len() {
                    if self.left_demand[s].is_positive_tol() {
                        out.push((Node::Buyer(s), pot(Node::Source) - pot(Node::Buyer(s))));
                    }
                }
            }
            Node::Buyer(s) => {
                for t in 0..self.supplies.len() {
                    let cost = -self.values[s][t].clone();
                    out.push((Node::Product(t), cost + pot(from) - pot(Node::Product(t))));
                }
            }
            Node::Product(t) => {
                for s in 0..self.demands.len() {
                    if self.flow[s][t].is_positive_tol() {
                        let cost = self.values[s][t].clone();
                        out.push((Node::Buyer(s), cost + pot(from) - pot(Node::Buyer(s))));
                    }
                }
                if self.left_supply[t].is_positive_tol() {
                    out.push((Node::Sink, pot(from) - pot(Node::Sink)));
                }
            }
            Node::Sink => {}
        }
        out
    }

    /// Dense Dijkstra from the source. Ties go to the lowest node index.
    fn shortest_paths(&self) -> (Vec<Option<T>>, Vec<Option<usize>>) {
        let count = self.potential.len();
        let mut dist: Vec<Option<T>> = vec![None; count];
        let mut prev: Vec<Option<usize>> = vec![None; count];
        let mut done = vec![false; count];
        dist[self.index(Node::Source)] = Some(T::zero());
        loop {
            let mut pick: Option<usize> = None;
            for v in 0..count {
                if done[v] {
                    continue;
                }
                if let Some(d) = &dist[v] {
                    if pick.is_none_or(|u| *d < *dist[u].as_ref().expect("picked")) {
                        pick = Some(v);
                    }
                }
            }
            let Some(u) = pick else { break };
            done[u] = true;
            let base = dist[u].clone().expect("reached");
            for (to, reduced) in self.arcs(self.node(u)) {
                let v = self.index(to);
                if done[v] {
                    continue;
                }
                // Float noise can leave reduced costs a hair below zero.
                let reduced = if T::is_exact() {
                    reduced
                } else {
                    T::max_of(reduced, T::zero())
                };
                let candidate = base.clone() + reduced;
                if dist[v].as_ref().is_none_or(|d| candidate < *d) {
                    dist[v] = Some(candidate);
                    prev[v] = Some(u);
                }
            }
        }
        (dist, prev)
    }

    fn remaining(&self) -> T {
        self.left_demand.iter().fold(T::zero(), |a, b| a + b.clone())
    }

    fn run(mut self) -> Result<Vec<Vec<T>>> {
        let nodes = self.potential.len();
        let limit = 64 * nodes * nodes + 1024;
        let source = self.index(Node::Source);
        let sink = self.index(Node::Sink);
        for _ in 0..limit {
            if !self.remaining().is_positive_tol() {
                return Ok(self.flow);
            }
            let (dist, prev) = self.shortest_paths();
            let Some(sink_dist) = dist[sink].clone() else {
                return Err(Error::NumericFailure(
                    "transportation network has supply left but no augmenting path".into(),
                ));
            };
            for v in 0..nodes {
                let d = dist[v].clone().unwrap_or_else(|| sink_dist.clone());
                let d = T::min_of(d, sink_dist.clone());
                self.potential[v] = self.potential[v].clone() + d;
            }

            let mut path = vec![sink];
            while let Some(p) = prev[*path.last().expect("path")] {
                path.push(p);
            }
            path.reverse();
            debug_assert_eq!(path[0], source);

            let mut amount: Option<T> = None;
            let mut shrink = |x: T| {
                amount = Some(match amount.take() {
                    Some(a) => T::min_of(a, x),
                    None => x,
                })
            };
            for pair in path.windows(2) {
                match (self.node(pair[0]), self.node(pair[1])) {
                    (Node::Source, Node::Buyer(s)) => shrink(self.left_demand[s].clone()),
                    (Node::Product(t), Node::Sink) => shrink(self.left_supply[t].clone()),
                    (Node::Product(t), Node::Buyer(s)) => shrink(self.flow[s][t].clone()),
                    _ => {}
                }
            }
            let amount = amount.expect("path has capacity-limited arcs");
            for pair in path.windows(2) {
                match (self.node(pair[0]), self.node(pair[1])) {
                    (Node::Source, Node::Buyer(s)) => {
                        self.left_demand[s] = self.left_demand[s].clone() - amount.clone()
                    }
                    (Node::Product(t), Node::Sink) => {
                        self.left_supply[t] = self.left_supply[t].clone() - amount.clone()
                    }
                    (Node::Buyer(s), Node::Product(t)) => self.flow[s][t] = self.flow[s][t].clone() + amount.clone(),
                    (Node::Product(t), Node::Buyer(s)) => self.flow[s][t] = self.flow[s][t].clone() - amount.clone(),
                    _ => unreachable!("arc kinds on an augmenting path"),
                }
            }
        }
        Err(Error::NumericFailure(
            "successive shortest paths did not terminate".into(),
        ))
    }
}
