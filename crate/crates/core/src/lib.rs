//! Causal imitation learning over discrete structural causal models.
//!
//! Given a causal diagram with an action node, a policy space and a latent
//! reward, the crate decides whether the expert's reward distribution can be
//! matched by a policy computed from observational data, and constructs that
//! policy when it exists. Every distribution can be cross-checked against an
//! exact discrete SCM engine.

pub mod criteria;
pub mod diagram;
pub mod enumerate;
pub mod experiments;
pub mod fixtures;
pub mod formats;
pub mod identify;
pub mod imitate;
pub mod par;
pub mod projection;
pub mod scm;
pub mod table;

pub use diagram::{node_set, CausalDiagram, DiagramBuilder, DiagramError, NodeSet, Observability, PolicySpace};
pub use identify::{c_components, evaluate, identify_atomic, identify_policy, EvalError, IdError, IdFormula};
pub use projection::project;
pub use table::{FactorTable, JointTable, Policy, TableError};
