//! Dense arithmetic, probability primitives and a small ReLU MLP with
//! analytic gradients.

mod model;
pub(crate) mod prob;
mod tensor;

pub use model::{accuracy, predict, ModelParams};
pub use prob::{
    argmax, cross_entropy, kl_divergence, temp_softmax, ProbVector, PROB_FLOOR,
};
pub use tensor::Tensor2;
