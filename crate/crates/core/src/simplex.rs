//! Dense tableau simplex for `max cᵀx` subject to `Ax ≤ b`, `x ≥ 0`, `b ≥ 0`.
//!
//! Dantzig's rule with a switch to Bland's rule after a run of degenerate
//! pivots, so it terminates in exact arithmetic. The result is always a basic
//! solution.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub rows: Vec<Vec<T>>,
    pub bounds: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct LpSolution<T> {
    pub x: Vec<T>,
    pub objective: T,
    /// Index of the basic variable per row; indices `>= columns` are slacks.
    pub basis: Vec<usize>,
}

const DEGENERATE_RUN: usize = 50;

impl<T: Scalar> LinearProgram<T> {
    pub fn new(objective: Vec<T>) -> Self {
        LinearProgram {
            objective,
            rows: Vec::new(),
            bounds: Vec::new(),
        }
    }

    pub fn columns(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, coefficients: Vec<T>, bound: T) {
        debug_assert_eq!(coefficients.len(), self.columns());
        self.rows.push(coefficients);
        self.bounds.push(bound);
    }

    pub fn solve(&self) -> Result<LpSolution<T>> {
        let n = self.columns();
        let m = self.rows.len();
        if self.bounds.iter().any(|b| *b < T::zero()) {
            return Err(Error::NumericFailure(
                "simplex needs non-negative right-hand sides".into(),
            ));
        }
        let width = n + m + 1;
        let mut tableau: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        for (i, row) in self.rows.iter().enumerate() {
            let mut line = row.clone();
            line.extend((0..m).map(|k| if k == i { T::one() } else { T::zero() }));
            line.push(self.bounds[i].clone());
            tableau.push(line);
        }
        // Reduced-cost row holds -c so entering columns are the negative ones.
        let mut cost: Vec<T> = self.objective.iter().map(|c| -c.clone()).collect();
        cost.extend((0..=m).map(|_| T::zero()));
        tableau.push(cost);
        let mut basis: Vec<usize> = (n..n + m).collect();

        let limit = 10_000 + 200 * (n + m) * (m + 1);
        let mut degenerate = 0usize;
        for _ in 0..limit {
            let bland = degenerate >= DEGENERATE_RUN;
            let Some(enter) = entering(&tableau[m][..width - 1], bland) else {
                let mut x = vec![T::zero(); n];
                for (row, &var) in basis.iter().enumerate() {
                    if var < n {
                        x[var] = tableau[row][width - 1].clone();
                    }
                }
                let objective = self
                    .objective
                    .iter()
                    .zip(&x)
                    .fold(T::zero(), |acc, (c, v)| acc + c.clone() * v.clone());
                return Ok(LpSolution { x, objective, basis });
            };

            let mut leave: Option<(usize, T)> = None;
            for row in 0..m {
                let a = &tableau[row][enter];
                if !a.is_positive_tol() {
                    continue;
                }
                let ratio = tableau[row][width - 1].clone() / a.clone();
                let better = match &leave {
                    None => true,
                    Some((best_row, best)) => ratio < *best || (ratio == *best && basis[row] < basis[*best_row]),
                };
                if better {
                    leave = Some((row, ratio));
                }
            }
            let Some((pivot_row, ratio)) = leave else {
                return Err(Error::NumericFailure("linear program is unbounded".into()));
            };
            if ratio.is_positive_tol() {
                degenerate = 0;
            } else {
                degenerate += 1;
            }
            pivot(&mut tableau, pivot_row, enter);
            basis[pivot_row] = enter;
        }
        Err(Error::NumericFailure("simplex iteration limit reached".into()))
    }
}

fn entering<T: Scalar>(cost: &[T], bland: bool) -> Option<usize> {
    let neg = -T::tolerance();
    if bland {
        return cost.iter().position(|c| *c < neg);
    }
    let mut best: Option<usize> = None;
    for (j, c) in cost.iter().enumerate() {
        if *c < neg && best.is_none_or(|b| *c < cost[b]) {
            best = Some(j);
        }
    }
    best
}

fn pivot<T: Scalar>(tableau: &mut [Vec<T>], row: usize, col: usize) {
    let factor = tableau[row][col].clone();
    for v in tableau[row].iter_mut() {
        *v = v.clone() / factor.clone();
    }
    let pivot_row = tableau[row].clone();
    for (r, line) in tableau.iter_mut().enumerate() {
        if r == row {
            continue;
        }
        let scale = line[col].clone();
        if scale.is_zero() {
            continue;
        }
        for (v, p) in line.iter_mut().zip(&pivot_row) {
            if !p.is_zero() {
                *v = v.clone() - scale.clone() * p.clone();
            }
        }
        if !T::is_exact() {
            line[col] = T::zero();
        }
    }
}
