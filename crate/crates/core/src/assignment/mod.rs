//! Fractional assignment (transportation) problems: welfare-maximizing
//! allocations, envy-free prices, and certificate checks.
//!
//! Everything is generic over [`Scalar`]. The `f64` entry points solve in
//! exact rational arithmetic when the matrix has at most
//! [`EXACT_CELL_LIMIT`] cells and convert the result back.

mod dual;
mod flow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};

pub const EXACT_CELL_LIMIT: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentProblem<T = f64> {
    demands: Vec<T>,
    supplies: Vec<T>,
    values: Vec<Vec<T>>,
}

impl<T: Scalar> AssignmentProblem<T> {
    pub fn new(demands: Vec<T>, supplies: Vec<T>, values: Vec<Vec<T>>) -> Result<Self> {
        if values.len() != demands.len() {
            return Err(Error::InvalidInstance(format!(
                "{} value rows for {} buyers",
                values.len(),
                demands.len()
            )));
        }
        if let Some(row) = values.iter().find(|row| row.len() != supplies.len()) {
            return Err(Error::InvalidInstance(format!(
                "value row of length {} for {} products",
                row.len(),
                supplies.len()
            )));
        }
        let negative = demands
            .iter()
            .chain(&supplies)
            .chain(values.iter().flatten())
            .any(|v| *v < T::zero());
        if negative {
            return Err(Error::InvalidInstance("negative demand, supply or value".into()));
        }
        Ok(AssignmentProblem {
            demands,
            supplies,
            values,
        })
    }

    pub fn buyers(&self) -> usize {
        self.demands.len()
    }

    pub fn products(&self) -> usize {
        self.supplies.len()
    }

    pub fn demands(&self) -> &[T] {
        &self.demands
    }

    pub fn supplies(&self) -> &[T] {
        &self.supplies
    }

    pub fn values(&self) -> &[Vec<T>] {
        &self.values
    }

    pub fn value(&self, buyer: usize, product: usize) -> &T {
        &self.values[buyer][product]
    }

    pub fn is_balanced(&self) -> bool {
        sum(&self.demands).approx_eq(&sum(&self.supplies))
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> AssignmentProblem<U> {
        AssignmentProblem {
            demands: self.demands.iter().map(&f).collect(),
            supplies: self.supplies.iter().map(&f).collect(),
            values: self.values.iter().map(|row| row.iter().map(&f).collect()).collect(),
        }
    }

    pub fn to_exact(&self) -> AssignmentProblem<Rational> {
        self.map(T::to_rational)
    }

    /// Copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: &T) -> Self {
        AssignmentProblem {
            demands: self.demands.clone(),
            supplies: self.supplies.clone(),
            values: self
                .values
                .iter()
                .map(|row| row.iter().map(|v| v.clone() * factor.clone()).collect())
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSolution<T = f64> {
    pub x: Vec<Vec<T>>,
    pub u: Vec<T>,
    pub p: Vec<T>,
    pub objective: T,
}

impl<T: Scalar> AssignmentSolution<T> {
    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> AssignmentSolution<U> {
        AssignmentSolution {
            x: self.x.iter().map(|row| row.iter().map(&f).collect()).collect(),
            u: self.u.iter().map(&f).collect(),
            p: self.p.iter().map(&f).collect(),
            objective: f(&self.objective),
        }
    }

    /// All-zero allocation and duals.
    pub fn zero(buyers: usize, products: usize) -> Self {
        AssignmentSolution {
            x: vec![vec![T::zero(); products]; buyers],
            u: vec![T::zero(); buyers],
            p: vec![T::zero(); products],
            objective: T::zero(),
        }
    }

    /// `Σ x^{st} p^t`
    pub fn revenue(&self) -> T {
        let mut total = T::zero();
        for row in &self.x {
            for (x, p) in row.iter().zip(&self.p) {
                total = total + x.clone() * p.clone();
            }
        }
        total
    }

    /// `Σ x^{st} (w^{st} - p^t)`
    pub fn residual_surplus(&self, problem: &AssignmentProblem<T>) -> T {
        welfare(problem, &self.x) - self.revenue()
    }
}

/// `Σ x^{st} w^{st}`
pub fn welfare<T: Scalar>(problem: &AssignmentProblem<T>, x: &[Vec<T>]) -> T {
    let mut total = T::zero();
    for (row, values) in x.iter().zip(problem.values()) {
        for (x, w) in row.iter().zip(values) {
            total = total + x.clone() * w.clone();
        }
    }
    total
}

fn sum<T: Scalar>(values: &[T]) -> T {
    values.iter().fold(T::zero(), |a, b| a + b.clone())
}

/// Which extreme point of the optimal dual face to return.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualSelection {
    /// Smallest envy-free prices.
    #[default]
    BuyerOptimal,
    /// Largest envy-free prices.
    SellerOptimal,
}

/// Welfare-maximizing allocation with buyer-optimal envy-free prices.
pub fn solve_welfare_lp<T: Scalar>(problem: &AssignmentProblem<T>) -> Result<AssignmentSolution<T>> {
    solve_welfare_lp_with(problem, DualSelection::default())
}

pub fn solve_welfare_lp_with<T: Scalar>(
    problem: &AssignmentProblem<T>,
    selection: DualSelection,
) -> Result<AssignmentSolution<T>> {
    if T::is_exact() {
        return solve_in(problem, selection);
    }
    let exact = || -> Result<AssignmentSolution<T>> {
        let solution = solve_in(&problem.to_exact(), selection)?;
        Ok(solution.map(T::from_rational))
    };
    if problem.buyers() * problem.products() <= EXACT_CELL_LIMIT {
        return exact();
    }
    match solve_in(problem, selection) {
        Ok(solution) => Ok(solution),
        Err(err) => {
            log::warn!("floating-point assignment solve failed ({err}); retrying exactly");
            exact()
        }
    }
}

fn solve_in<T: Scalar>(problem: &AssignmentProblem<T>, selection: DualSelection) -> Result<AssignmentSolution<T>> {
    let x = flow::max_welfare_allocation(problem)?;
    let (u, p) = dual::envy_free_duals(problem, &x, selection)?;
    let objective = welfare(problem, &x);
    let solution = AssignmentSolution { x, u, p, objective };
    let certificate = check_certificate(problem, &solution);
    if !(certificate.primal_ok && certificate.dual_ok && certificate.cs_ok) {
        return Err(Error::NumericFailure(format!(
            "certificate check failed: {certificate:?}"
        )));
    }
    Ok(solution)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvyFreeReport<T = f64> {
    pub ok: bool,
    pub worst_violation: T,
}

/// Envy-freeness of `(x, p)`: each positively assigned buyer holds a
/// utility-maximizing product at non-negative utility.
pub fn check_envy_free<T: Scalar>(
    problem: &AssignmentProblem<T>,
    solution: &AssignmentSolution<T>,
) -> EnvyFreeReport<T> {
    let mut worst = T::zero();
    for s in 0..problem.buyers() {
        let utility = |t: usize| problem.value(s, t).clone() - solution.p[t].clone();
        let best = (0..problem.products()).map(utility).reduce(T::max_of);
        for t in 0..problem.products() {
            if !solution.x[s][t].is_positive_tol() {
                continue;
            }
            let held = utility(t);
            let best = best.clone().expect("product exists when x is positive");
            worst = T::max_of(worst, best - held.clone());
            worst = T::max_of(worst, -held);
        }
    }
    EnvyFreeReport {
        ok: worst <= T::tolerance(),
        worst_violation: worst,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CertificateReport {
    pub primal_ok: bool,
    pub dual_ok: bool,
    pub cs_ok: bool,
    pub market_clearing: bool,
}

impl CertificateReport {
    /// Primal feasibility, dual feasibility and complementary slackness:
    /// the solution is optimal.
    pub fn certified(&self) -> bool {
        self.primal_ok && self.dual_ok && self.cs_ok
    }

    /// Optimal and market clearing.
    pub fn all(&self) -> bool {
        self.primal_ok && self.dual_ok && self.cs_ok && self.market_clearing
    }
}

pub fn check_certificate<T: Scalar>(
    problem: &AssignmentProblem<T>,
    solution: &AssignmentSolution<T>,
) -> CertificateReport {
    let buyers = problem.buyers();
    let products = problem.products();
    let shaped = solution.x.len() == buyers
        && solution.x.iter().all(|row| row.len() == products)
        && solution.u.len() == buyers
        && solution.p.len() == products;
    if !shaped {
        return CertificateReport {
            primal_ok: false,
            dual_ok: false,
            cs_ok: false,
            market_clearing: false,
        };
    }
    let tol = T::tolerance();
    let rows: Vec<T> = solution.x.iter().map(|row| sum(row)).collect();
    let cols: Vec<T> = (0..products)
        .map(|t| (0..buyers).fold(T::zero(), |a, s| a + solution.x[s][t].clone()))
        .collect();

    let primal_ok = solution.x.iter().flatten().all(|x| *x >= -tol.clone())
        && rows.iter().zip(problem.demands()).all(|(r, a)| !r.gt_tol(a))
        && cols.iter().zip(problem.supplies()).all(|(c, b)| !c.gt_tol(b));

    let mut dual_ok = solution.u.iter().chain(&solution.p).all(|v| *v >= -tol.clone());
    let mut cs_ok = true;
    for s in 0..buyers {
        for t in 0..products {
            let reduced = solution.u[s].clone() + solution.p[t].clone() - problem.value(s, t).clone();
            if reduced < -tol.clone() {
                dual_ok = false;
            }
            if solution.x[s][t].is_positive_tol() && reduced.is_positive_tol() {
                cs_ok = false;
            }
        }
        if solution.u[s].is_positive_tol() && !rows[s].approx_eq(&problem.demands()[s]) {
            cs_ok = false;
        }
    }
    for t in 0..products {
        if solution.p[t].is_positive_tol() && !cols[t].approx_eq(&problem.supplies()[t]) {
            cs_ok = false;
        }
    }
    if !solution.objective.approx_eq(&welfare(problem, &solution.x)) {
        cs_ok = false;
    }

    let market_clearing = rows.iter().zip(problem.demands()).all(|(r, a)| r.approx_eq(a))
        && cols.iter().zip(problem.supplies()).all(|(c, b)| c.approx_eq(b));

    CertificateReport {
        primal_ok,
        dual_ok,
        cs_ok,
        market_clearing,
    }
}
