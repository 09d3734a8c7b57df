pub mod bench;
pub mod conductance;
pub mod error;
pub mod finite_time;
pub mod flow;
pub mod graph;
pub mod lift;
pub mod lp;
pub mod prob;
pub mod quantum;
pub mod spec;
pub mod systems;

pub use error::{Error, Result};
