//! Meta-learned hyper-parameter optimization for cell-level traffic
//! forecasting models.
//!
//! The crate is organized around one offline/online split:
//!
//! * offline — build a store of solved tuning tasks: grid-search every
//!   strategy on a set of base tasks ([`store`]), rank series
//!   characteristics by how much they narrow down the optimal
//!   hyper-parameters ([`meta`]), and fit two small networks on the
//!   accumulated knowledge (a task-distance model in [`knn`] and a fitness
//!   screener in [`screen`]);
//! * online — tune a new task with a genetic search seeded by the nearest
//!   stored tasks' optima and accelerated by the screener, which filters
//!   offspring so only a small fraction is actually trained ([`optim`]).
//!
//! Forecasting models and their training live in [`learner`]; the dense
//! numeric kernel with exact per-layer gradients is [`tensor`]; series
//! ingestion, imputation and windowing are in [`data`].

pub mod data;
pub mod error;
pub mod knn;
pub mod learner;
pub mod meta;
pub mod optim;
pub mod rng;
pub mod screen;
pub mod store;
pub mod tensor;

pub use error::{Error, Result};
