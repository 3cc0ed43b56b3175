//! Continual learning with a growing zoo of small multi-head networks.
//!
//! Each episode adds one network trained on the newest task plus a few past
//! tasks chosen by boosting-style weights; predictions for a task average the
//! class probabilities of every member that was trained on it.

pub mod error;
mod linalg;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod seed;
pub mod tasks;
pub mod tensor;
pub mod zoo;

pub use error::{Error, Result};
pub use nn::{HeadSpec, LayerSpec, Mode, MultiHeadNetwork, NetworkSpec};
pub use optim::{AugmentConfig, OptimConfig};
pub use tasks::{Example, TaskDataset, TaskStream};
pub use tensor::Tensor;
pub use zoo::{Learner, RunLog, Seeds, ZooConfig, ZooMember, ZooState};
