//! JSON instance files.
//!
//! ```json
//! {
//!   "agents": 2,
//!   "services": [2, 2],
//!   "null_service": 0,
//!   "feasibility": "matroid-free",
//!   "supports": [[[0, 4], [0, 1]], [[0, 3], [0, 2]]],
//!   "priors": [["1/2", "1/2"], [0.25, 0.75]]
//! }
//! ```
//!
//! `feasibility` is `"matroid-free"` (every joint allocation), `"partition"`
//! (combinatorial auction over `items` items, services are item bitmasks) or
//! `{"explicit": [[..], ..]}`. A support point is either a value table (a
//! list, or `{"values": [..]}`) or a set valuation tagged with `kind`
//! (`additive`, `unit-demand`, `budget-additive`, `xos`). Probabilities may
//! be numbers or exact strings such as `"1/3"`; with `"exact": true` they
//! must sum to exactly one.

use std::path::Path;

use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use super::{Allocation, Feasibility, MechanismInstance, Valuation};
use crate::assignment::AssignmentProblem;
use crate::error::{Error, Result};
use crate::scalar::{parse_rational, Rational, Scalar};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Float(f64),
    Text(String),
}

impl Number {
    pub fn to_rational(&self) -> Result<Rational> {
        match self {
            Number::Float(x) if x.is_finite() => Ok(Rational::from_f64_exact(*x)),
            Number::Float(x) => Err(Error::InvalidInstance(format!("non-finite number {x}"))),
            Number::Text(s) => {
                parse_rational(s).ok_or_else(|| Error::InvalidInstance(format!("cannot parse number `{s}`")))
            }
        }
    }

    pub fn to_f64(&self) -> Result<f64> {
        match self {
            Number::Float(x) => Ok(*x),
            Number::Text(_) => Ok(self.to_rational()?.to_f64().unwrap_or(f64::NAN)),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ServiceCounts {
    Uniform(usize),
    PerAgent(Vec<usize>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeasibilitySpec {
    Named(String),
    Explicit { explicit: Vec<Allocation> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SupportPoint {
    List(Vec<f64>),
    Valuation(Valuation),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssignmentSpec {
    pub demands: Vec<Number>,
    pub supplies: Vec<Number>,
    pub values: Vec<Vec<Number>>,
}

impl AssignmentSpec {
    pub fn to_problem<T: Scalar>(&self) -> Result<AssignmentProblem<T>> {
        let conv = |n: &Number| -> Result<T> { Ok(T::from_rational(&n.to_rational()?)) };
        let demands = self.demands.iter().map(conv).collect::<Result<_>>()?;
        let supplies = self.supplies.iter().map(conv).collect::<Result<_>>()?;
        let values = self
            .values
            .iter()
            .map(|row| row.iter().map(conv).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        AssignmentProblem::new(demands, supplies, values)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub services: Option<ServiceCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_service: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<FeasibilitySpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub supports: Vec<Vec<SupportPoint>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub priors: Vec<Vec<Number>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<AssignmentSpec>,
}

impl InstanceFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_instance(&self) -> Result<MechanismInstance> {
        if self.supports.is_empty() {
            return Err(Error::InvalidInstance("file has no `supports`".into()));
        }
        if let Some(n) = self.agents {
            if n != self.supports.len() {
                return Err(Error::InvalidInstance(format!(
                    "`agents` is {n} but {} supports are given",
                    self.supports.len()
                )));
            }
        }
        let feasibility = match &self.feasibility {
            None => match self.items {
                Some(items) => Feasibility::Partition { items },
                None => Feasibility::Unrestricted,
            },
            Some(FeasibilitySpec::Named(name)) => match name.as_str() {
                "partition" => Feasibility::Partition {
                    items: self
                        .items
                        .ok_or_else(|| Error::InvalidInstance("partition feasibility needs `items`".into()))?,
                },
                "matroid-free" | "unrestricted" => Feasibility::Unrestricted,
                other => {
                    return Err(Error::Unknown {
                        kind: "feasibility",
                        name: other.to_string(),
                    })
                }
            },
            Some(FeasibilitySpec::Explicit { explicit }) => Feasibility::Explicit {
                allocations: explicit.clone(),
            },
        };
        let valuations: Vec<Vec<Valuation>> = self
            .supports
            .iter()
            .map(|support| {
                support
                    .iter()
                    .map(|p| match p {
                        SupportPoint::List(values) => Valuation::table(values.clone()),
                        SupportPoint::Valuation(v) => v.clone(),
                    })
                    .collect()
            })
            .collect();
        let services = match &self.services {
            Some(ServiceCounts::Uniform(k)) => vec![*k],
            Some(ServiceCounts::PerAgent(ks)) => ks.clone(),
            None => valuations
                .iter()
                .map(|support| match support.first() {
                    Some(Valuation::Table { values }) => values.len(),
                    _ => 0,
                })
                .collect(),
        };
        let mut priors = Vec::with_capacity(self.priors.len());
        for (i, prior) in self.priors.iter().enumerate() {
            if self.exact {
                let exact: Vec<Rational> = prior.iter().map(Number::to_rational).collect::<Result<_>>()?;
                let sum = exact.iter().fold(Rational::from_integer(0.into()), |a, b| a + b);
                if !sum.is_one() {
                    return Err(Error::ProbabilitySumMismatch {
                        agent: i,
                        sum: sum.to_f64().unwrap_or(f64::NAN),
                    });
                }
                priors.push(exact.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect());
            } else {
                priors.push(prior.iter().map(Number::to_f64).collect::<Result<_>>()?);
            }
        }
        MechanismInstance::build(services, self.null_service, feasibility, valuations, priors)
    }

    pub fn from_instance(instance: &MechanismInstance) -> Self {
        let (feasibility, items) = match instance.feasibility() {
            Feasibility::Unrestricted => (FeasibilitySpec::Named("matroid-free".into()), None),
            Feasibility::Partition { items } => (FeasibilitySpec::Named("partition".into()), Some(*items)),
            Feasibility::Explicit { allocations } => (
                FeasibilitySpec::Explicit {
                    explicit: allocations.clone(),
                },
                None,
            ),
        };
        let n = instance.agents();
        InstanceFile {
            agents: Some(n),
            services: items
                .is_none()
                .then(|| ServiceCounts::PerAgent((0..n).map(|i| instance.services(i)).collect())),
            items,
            null_service: if items.is_some() { None } else { instance.null_service() },
            feasibility: Some(feasibility),
            supports: (0..n)
                .map(|i| {
                    (0..instance.types())
                        .map(|t| match instance.valuation(i, t) {
                            Valuation::Table { values } => SupportPoint::List(values.clone()),
                            v => SupportPoint::Valuation(v.clone()),
                        })
                        .collect()
                })
                .collect(),
            priors: instance
                .priors()
                .iter()
                .map(|f| f.iter().map(|&p| Number::Float(p)).collect())
                .collect(),
            exact: false,
            assignment: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
