//! Minimal dense neural-network stack with exact analytic gradients.
//!
//! Everything runs in f64; every forward/backward pair is verified against
//! central finite differences in the test suite.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod lbfgs;
pub mod loss;
pub mod rng;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_coords};
pub use layers::{
    dropout_backward, dropout_train, log_softmax, relu, relu_backward, softmax, softmax_backward,
    BatchNorm, BnCache, DropoutMask, EncoderBlock, EncoderCache, EncoderGrads, Linear, Mode,
};
pub use lbfgs::{lbfgs_minimize, LbfgsConfig, LbfgsReport};
pub use loss::{cross_entropy, focal_loss};
pub use rng::{StreamKind, StreamRng};
pub use tensor::Tensor2;
