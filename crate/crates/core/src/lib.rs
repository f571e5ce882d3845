//! Q-learning in partially observable environments, helped by deterministic
//! labeled MDPs learned from observation traces.

pub mod agent;
pub mod alergia;
pub mod belief;
pub mod dot;
pub mod env;
pub mod exec;
pub mod experiment;
pub mod model;
pub mod symbol;
pub mod trace;
pub mod value;

pub use model::{Dlmdp, Mdp, ModelError, Pomdp, StateId, TrackerState, Transition};
pub use symbol::Symbol;
