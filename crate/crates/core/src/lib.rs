//! Planning, costing and evaluating data collection over a discrete space of
//! environment factors.
//!
//! The numeric parts are generic over the scalar type. Probabilities can be
//! evaluated in `f64`, `f32` or exactly with [`BigRational`]; the aliases
//! below cover the common cases.

pub mod analysis;
pub mod budgeting;
pub mod coverage;
pub mod error;
pub mod scalar;
pub mod session;
pub mod similarity;
pub mod simulator;
pub mod space;
pub mod strategies;

pub use num_rational::BigRational;

pub use error::{Error, Result};
pub use scalar::{Probability, Real};
pub use space::{parse_space, FactorConfig, FactorDef, FactorSpace, FactorValue};
pub use strategies::{generate_plan, plan_at_rate, CollectionPlan, PlanDocument, PlanParams, Strategy};

pub type Model = simulator::GeneralizationModel<f64>;
pub type ExactModel = simulator::GeneralizationModel<BigRational>;
pub type Evaluation = simulator::EvaluationResult<f64>;
pub type ExactEvaluation = simulator::EvaluationResult<BigRational>;
pub type ComparisonRow = simulator::ComparisonRow<f64>;
pub type Medoids = similarity::MedoidSelection<f64>;
pub type Distances = similarity::DistanceMatrix<f64>;
