//! Minimal multi-head neural network engine.

pub mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod network;
mod spec;

pub use gradcheck::{grad_check, grad_check_report, relative_error, GradCheckReport};
pub use loss::{cross_entropy_scaled, softmax_cross_entropy, softmax_rows};
pub use network::{
    init_network, BatchCache, Gradients, Head, HeadGrad, Mode, MultiHeadNetwork, ParamInfo,
    BN_MOMENTUM,
};
pub use spec::{HeadSpec, LayerSpec, NetworkSpec};
