//! Learned index over flow-transformed keys.
//!
//! Keys are expanded into a few base-θ features, pushed through a small
//! monotone normalizing flow that flattens their distribution, and merged
//! back into one float. An updatable learned index (AFLI) is built over the
//! transformed keys. The flow is only used when it does not worsen the tail
//! conflict degree of a linear model fitted to the keys.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod afli;
pub mod conflict;
pub mod framework;
pub mod harness;
pub mod keycodec;
pub mod numflow;
pub mod oracle;
pub mod workloads;

pub use afli::{Index, IndexConfig, IndexError, IndexStats, Key, Payload};
pub use conflict::{switch_decision, tail_conflict_of, LinearModel, SwitchDecision};
pub use framework::{nfl_bulkload, nfl_execute, FlowMode, NflConfig, NflError, NflIndex, Op, OpOutcome, RequestBatch};
pub use numflow::{load_flow_file, save_flow_file, train_flow, FlowConfig, FlowError, FlowParams};
pub use oracle::RefMap;
