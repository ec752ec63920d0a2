//! Data-parallel linear SVM training with SGD and periodic model averaging.
//!
//! K workers each run plain hinge-loss SGD over a block of B local samples,
//! then sum their weight vectors with an all-reduce and divide by K. The
//! block size is the knob that trades convergence per sync against
//! communication cost.

pub mod cli;
pub mod comm;
pub mod dataset;
pub mod metrics;
pub mod sgd;
pub mod trainers;
